"""Fleet configuration: the single source of truth for a run.

Configs are plain YAML trees; `load` -> `to_dict` -> `load` round-trips
exactly.  `validate_config` enforces every cross-field rule the engine
relies on (graph topology, observer/integrator time-scale separation,
reference speed positivity, RBF box coverage).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from . import graph as graph_mod
from . import references as refs_mod
from .control import ControllerGains
from .model import FrictionCoeffs, VehicleParams
from .observer import ObserverGains
from .rbf import build_lattice


@dataclass(frozen=True)
class RbfConfig:
    box_min: tuple[float, float] = (0.0, 0.0)
    box_max: tuple[float, float] = (4.0, 4.0)
    nodes_per_dim: tuple[int, int] = (5, 5)
    width: float = 0.7
    activation_threshold: float = 0.1


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_end: float = 25.0
    snapshot_interval: float = 0.1
    # consolidation window in seconds; None means [0.6 * t_end, t_end]
    consolidate_from: float | None = None
    consolidate_to: float | None = None
    output_dir: str = "runs/out"

    def consolidation_window(self) -> tuple[float, float]:
        t_a = 0.6 * self.t_end if self.consolidate_from is None else self.consolidate_from
        t_b = self.t_end if self.consolidate_to is None else self.consolidate_to
        return t_a, t_b


@dataclass(frozen=True)
class FleetConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    observer: ObserverGains = field(default_factory=ObserverGains)
    gains: ControllerGains = field(default_factory=ControllerGains)
    rbf: RbfConfig = field(default_factory=RbfConfig)
    graph: graph_mod.FleetGraph = field(
        default_factory=lambda: graph_mod.preset("cycle", 4)
    )
    graph_preset: str | None = "cycle"  # remembered for round-trip serialization
    references: tuple[refs_mod.ReferenceSpec, ...] = ()
    sim: SimConfig = field(default_factory=SimConfig)

    @property
    def n_agents(self) -> int:
        return self.graph.n

    def lattice(self):
        return build_lattice(
            self.rbf.box_min, self.rbf.box_max, self.rbf.nodes_per_dim, self.rbf.width
        )


def default_fleet_config(output_dir: str = "runs/learning") -> FleetConfig:
    """The shipped four-agent scenario: elliptical references on a ring graph."""
    references = (
        refs_mod.ReferenceSpec(amp_x=-1.0, amp_y=2.0, phase="sin-first"),
        refs_mod.ReferenceSpec(amp_x=2.0, amp_y=1.0, phase="cos-first"),
        refs_mod.ReferenceSpec(amp_x=-2.0, amp_y=3.0, phase="sin-first"),
        refs_mod.ReferenceSpec(amp_x=3.0, amp_y=2.0, phase="cos-first"),
    )
    return FleetConfig(references=references, sim=SimConfig(output_dir=output_dir))


# ---------------------------------------------------------------------------
# YAML (de)serialization


def _ref_to_dict(spec: refs_mod.ReferenceSpec) -> dict:
    if spec.kind == refs_mod.LISSAJOUS:
        return {
            "kind": spec.kind,
            "amp_x": spec.amp_x,
            "amp_y": spec.amp_y,
            "phase": spec.phase,
        }
    return {
        "kind": spec.kind,
        "sample_t": [float(v) for v in spec.sample_t],
        "sample_x": [float(v) for v in spec.sample_x],
        "sample_y": [float(v) for v in spec.sample_y],
    }


def _ref_from_dict(d: dict) -> refs_mod.ReferenceSpec:
    kind = d.get("kind", refs_mod.LISSAJOUS)
    if kind == refs_mod.LISSAJOUS:
        return refs_mod.ReferenceSpec(
            kind=kind,
            amp_x=float(d["amp_x"]),
            amp_y=float(d["amp_y"]),
            phase=d.get("phase", "sin-first"),
        )
    return refs_mod.ReferenceSpec(
        kind=kind,
        sample_t=np.asarray(d["sample_t"], dtype=float),
        sample_x=np.asarray(d["sample_x"], dtype=float),
        sample_y=np.asarray(d["sample_y"], dtype=float),
    )


def to_dict(cfg: FleetConfig) -> dict:
    v, f = cfg.vehicle, cfg.vehicle.friction
    if cfg.graph_preset is not None:
        graph_entry: dict = {"preset": cfg.graph_preset, "n": cfg.graph.n}
    else:
        graph_entry = {"adjacency": [[float(x) for x in row] for row in cfg.graph.adjacency]}
    d = {
        "vehicle": {
            "m": v.m,
            "inertia_c": v.inertia_c,
            "half_track": v.half_track,
            "wheel_radius": v.wheel_radius,
            "com_offset": v.com_offset,
            "friction": {"cv1": f.cv1, "cv2": f.cv2, "cw1": f.cw1, "cw2": f.cw2},
        },
        "observer": {"l1": cfg.observer.l1, "l2": cfg.observer.l2, "delta": cfg.observer.delta},
        "gains": {
            "kx": cfg.gains.kx,
            "ky": cfg.gains.ky,
            "ktheta": cfg.gains.ktheta,
            "ku": cfg.gains.ku,
            "gamma_big": cfg.gains.gamma_big,
            "gamma_small": cfg.gains.gamma_small,
            "beta": cfg.gains.beta,
            "tau_max": cfg.gains.tau_max,
        },
        "rbf": {
            "box_min": list(cfg.rbf.box_min),
            "box_max": list(cfg.rbf.box_max),
            "nodes_per_dim": list(cfg.rbf.nodes_per_dim),
            "width": cfg.rbf.width,
            "activation_threshold": cfg.rbf.activation_threshold,
        },
        "graph": graph_entry,
        "references": [_ref_to_dict(r) for r in cfg.references],
        "sim": {
            "dt": cfg.sim.dt,
            "t_end": cfg.sim.t_end,
            "snapshot_interval": cfg.sim.snapshot_interval,
            "consolidate_from": cfg.sim.consolidate_from,
            "consolidate_to": cfg.sim.consolidate_to,
            "output_dir": cfg.sim.output_dir,
        },
    }
    return d


def from_dict(d: dict) -> FleetConfig:
    fr = d["vehicle"].get("friction", {})
    vehicle = VehicleParams(
        m=float(d["vehicle"]["m"]),
        inertia_c=float(d["vehicle"]["inertia_c"]),
        half_track=float(d["vehicle"]["half_track"]),
        wheel_radius=float(d["vehicle"]["wheel_radius"]),
        com_offset=float(d["vehicle"].get("com_offset", 0.1)),
        friction=FrictionCoeffs(
            cv1=float(fr.get("cv1", 0.1)),
            cv2=float(fr.get("cv2", 0.05)),
            cw1=float(fr.get("cw1", 0.2)),
            cw2=float(fr.get("cw2", 0.1)),
        ),
    )
    o = d.get("observer", {})
    observer = ObserverGains(
        l1=float(o.get("l1", 1.0)), l2=float(o.get("l2", 1.0)), delta=float(o.get("delta", 0.01))
    )
    g = d.get("gains", {})
    gains = ControllerGains(
        kx=float(g.get("kx", 1.0)),
        ky=float(g.get("ky", 1.0)),
        ktheta=float(g.get("ktheta", 1.0)),
        ku=float(g.get("ku", 2.0)),
        gamma_big=float(g.get("gamma_big", 10.0)),
        gamma_small=float(g.get("gamma_small", 0.001)),
        beta=float(g.get("beta", 10.0)),
        tau_max=float(g.get("tau_max", 50.0)),
    )
    r = d.get("rbf", {})
    rbf = RbfConfig(
        box_min=tuple(float(x) for x in r.get("box_min", (0.0, 0.0))),
        box_max=tuple(float(x) for x in r.get("box_max", (4.0, 4.0))),
        nodes_per_dim=tuple(int(x) for x in r.get("nodes_per_dim", (5, 5))),
        width=float(r.get("width", 0.7)),
        activation_threshold=float(r.get("activation_threshold", 0.1)),
    )
    references = tuple(_ref_from_dict(rd) for rd in d.get("references", []))
    gd = d.get("graph", {})
    if "adjacency" in gd:
        fleet_graph = graph_mod.FleetGraph(adjacency=np.asarray(gd["adjacency"], dtype=float))
        preset_name = None
    else:
        preset_name = gd.get("preset", "cycle")
        n = int(gd.get("n", len(references)))
        fleet_graph = graph_mod.preset(preset_name, n, weight=float(gd.get("weight", 1.0)))
    s = d.get("sim", {})
    sim = SimConfig(
        dt=float(s.get("dt", 1e-3)),
        t_end=float(s.get("t_end", 25.0)),
        snapshot_interval=float(s.get("snapshot_interval", 0.1)),
        consolidate_from=None if s.get("consolidate_from") is None else float(s["consolidate_from"]),
        consolidate_to=None if s.get("consolidate_to") is None else float(s["consolidate_to"]),
        output_dir=str(s.get("output_dir", "runs/out")),
    )
    return FleetConfig(
        vehicle=vehicle,
        observer=observer,
        gains=gains,
        rbf=rbf,
        graph=fleet_graph,
        graph_preset=preset_name,
        references=references,
        sim=sim,
    )


def load(path) -> FleetConfig:
    with open(path, "r", encoding="utf-8") as fh:
        d = yaml.safe_load(fh)
    if not isinstance(d, dict):
        raise ValueError(f"config file {path} did not parse to a mapping")
    return from_dict(d)


def save(cfg: FleetConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(to_dict(cfg), fh, sort_keys=False)


# ---------------------------------------------------------------------------
# Validation


def validate_config(cfg: FleetConfig, mode: str = "learning") -> tuple[list[str], list[str]]:
    """Return (errors, warnings).  A config is runnable iff errors is empty."""
    errors: list[str] = []
    warnings: list[str] = []

    errors += cfg.vehicle.validate()
    errors += cfg.observer.validate()
    errors += cfg.gains.validate()

    graph_errs = graph_mod.validate(cfg.graph)
    if mode == "experience":
        # no communication in the experience phase; topology faults are advisory
        warnings += [f"(experience mode) {e}" for e in graph_errs]
    else:
        errors += graph_errs

    if len(cfg.references) != cfg.graph.n:
        errors.append(
            f"{len(cfg.references)} references for {cfg.graph.n} agents; need one per agent"
        )
    if cfg.sim.dt <= 0:
        errors.append(f"dt must be positive, got {cfg.sim.dt}")
    elif cfg.sim.dt > cfg.observer.delta / 10.0 + 1e-15:
        errors.append(
            f"dt={cfg.sim.dt} too coarse for observer delta={cfg.observer.delta}; "
            f"need dt <= delta/10 = {cfg.observer.delta / 10.0}"
        )
    if cfg.sim.t_end < 0:
        errors.append(f"t_end must be nonnegative, got {cfg.sim.t_end}")
    if cfg.sim.snapshot_interval < cfg.sim.dt:
        errors.append(
            f"snapshot_interval {cfg.sim.snapshot_interval} shorter than dt {cfg.sim.dt}"
        )
    t_a, t_b = cfg.sim.consolidation_window()
    if cfg.sim.t_end > 0 and not (0.0 <= t_a < t_b <= cfg.sim.t_end + 1e-12):
        errors.append(
            f"consolidation window [{t_a}, {t_b}] must lie inside [0, {cfg.sim.t_end}]"
        )

    try:
        lat = cfg.lattice()
    except ValueError as exc:
        errors.append(str(exc))
        lat = None

    for idx, spec in enumerate(cfg.references):
        ref_errs = refs_mod.validate_reference(spec)
        errors += [f"reference {idx}: {e}" for e in ref_errs]
        if ref_errs or lat is None:
            continue
        vmin, vmax, wmin, wmax = refs_mod.velocity_ranges(spec)
        lo = np.asarray(cfg.rbf.box_min)
        hi = np.asarray(cfg.rbf.box_max)
        spacing = (hi - lo) / (np.asarray(cfg.rbf.nodes_per_dim) - 1)
        rng_lo = np.array([vmin, wmin])
        rng_hi = np.array([vmax, wmax])
        if np.any(rng_lo < lo) or np.any(rng_hi > hi):
            errors.append(
                f"reference {idx}: (v, omega) range [{vmin:.3g},{vmax:.3g}]x"
                f"[{wmin:.3g},{wmax:.3g}] escapes the RBF box"
            )
        elif np.any(rng_lo - lo < spacing - 1e-12) or np.any(hi - rng_hi < spacing - 1e-12):
            # inside the box but within one lattice spacing of its edge
            warnings.append(
                f"reference {idx}: (v, omega) range is within one lattice spacing "
                f"of the RBF box edge; edge nodes may be weakly excited"
            )
    return errors, warnings

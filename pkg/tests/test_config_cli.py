import os

import numpy as np
import pytest
from dataclasses import replace

from cdlfleet import cli, config as config_mod, graph
from cdlfleet.rbf import WEIGHT_CSV_HEADER

from conftest import FLEET_CONFIG


@pytest.fixture()
def short_cfg_path(tmp_path):
    cfg = config_mod.default_fleet_config(output_dir=str(tmp_path / "out"))
    cfg = replace(cfg, sim=replace(cfg.sim, t_end=1.0, snapshot_interval=0.25))
    path = tmp_path / "short.yaml"
    config_mod.save(cfg, path)
    return str(path)


class TestConfigRoundTrip:
    def test_shipped_config_parses_to_defaults(self):
        cfg = config_mod.load(FLEET_CONFIG)
        ref = config_mod.default_fleet_config(output_dir="runs/learning")
        assert config_mod.to_dict(cfg) == config_mod.to_dict(ref)

    def test_parse_serialize_parse_identical(self, tmp_path):
        cfg = config_mod.load(FLEET_CONFIG)
        p2 = tmp_path / "copy.yaml"
        config_mod.save(cfg, p2)
        cfg2 = config_mod.load(p2)
        assert config_mod.to_dict(cfg) == config_mod.to_dict(cfg2)

    def test_explicit_adjacency_round_trip(self, tmp_path):
        cfg = config_mod.default_fleet_config()
        cfg = replace(cfg, graph=graph.preset("path", 4), graph_preset=None)
        p = tmp_path / "adj.yaml"
        config_mod.save(cfg, p)
        cfg2 = config_mod.load(p)
        np.testing.assert_array_equal(cfg2.graph.adjacency, cfg.graph.adjacency)


class TestValidateConfig:
    def test_shipped_config_clean(self, fleet_cfg):
        errors, _ = config_mod.validate_config(fleet_cfg)
        assert errors == []

    def test_disconnected_graph_named(self, fleet_cfg):
        a = np.zeros((4, 4))
        a[0, 1] = a[1, 0] = 1.0
        bad = replace(fleet_cfg, graph=graph.FleetGraph(adjacency=a), graph_preset=None)
        errors, _ = config_mod.validate_config(bad)
        assert any("connected" in e for e in errors)

    def test_disconnected_graph_warning_in_experience_mode(self, fleet_cfg):
        a = np.zeros((4, 4))
        bad = replace(fleet_cfg, graph=graph.FleetGraph(adjacency=a), graph_preset=None)
        errors, warnings = config_mod.validate_config(bad, mode="experience")
        assert not any("connected" in e for e in errors)
        assert any("connected" in w for w in warnings)

    def test_dt_delta_rule(self, fleet_cfg):
        bad = replace(fleet_cfg, sim=replace(fleet_cfg.sim, dt=0.01))
        errors, _ = config_mod.validate_config(bad)
        assert any("delta" in e for e in errors)

    def test_reference_count_mismatch(self, fleet_cfg):
        bad = replace(fleet_cfg, references=fleet_cfg.references[:3])
        errors, _ = config_mod.validate_config(bad)
        assert any("one per agent" in e for e in errors)

    def test_box_escape_is_error(self, fleet_cfg):
        bad = replace(fleet_cfg, rbf=replace(fleet_cfg.rbf, box_max=(1.5, 4.0)))
        errors, _ = config_mod.validate_config(bad)
        assert any("escapes" in e for e in errors)


class TestCliValidate:
    def test_shipped_config_ok(self, capsys):
        assert cli.main(["validate", "--config", str(FLEET_CONFIG)]) == 0
        out = capsys.readouterr().out
        assert "config ok" in out

    def test_violation_exit_code(self, tmp_path, capsys):
        cfg = config_mod.default_fleet_config()
        cfg = replace(cfg, sim=replace(cfg.sim, dt=0.01))
        p = tmp_path / "bad.yaml"
        config_mod.save(cfg, p)
        assert cli.main(["validate", "--config", str(p)]) == 1
        assert "violation" in capsys.readouterr().out

    def test_missing_file_is_io_error(self):
        assert cli.main(["validate", "--config", "/nonexistent.yaml"]) == 3

    def test_ill_formed_yaml(self, tmp_path):
        p = tmp_path / "broken.yaml"
        p.write_text("vehicle: [unclosed\n")
        assert cli.main(["validate", "--config", str(p)]) == 1

    def test_usage_error_exit_code(self):
        assert cli.main(["validate"]) == 1
        assert cli.main(["frobnicate"]) == 1


class TestCliLearnReplay:
    def test_learn_writes_artifacts(self, short_cfg_path, tmp_path):
        out = str(tmp_path / "runA")
        assert cli.main(["learn", "--config", short_cfg_path, "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "run_log.csv"))
        assert os.path.exists(os.path.join(out, "metrics.txt"))
        for i in range(4):
            assert os.path.exists(os.path.join(out, f"wbar_agent{i}.csv"))
        assert os.path.exists(os.path.join(out, "weights_agent0_t0.csv"))
        assert os.path.exists(os.path.join(out, "weights_agent0_t1000.csv"))
        metrics = dict(
            line.strip().split("=")
            for line in open(os.path.join(out, "metrics.txt"))
        )
        assert "consensus_diameter" in metrics

    def test_zero_length_run_log(self, tmp_path):
        cfg = config_mod.default_fleet_config(output_dir=str(tmp_path / "o"))
        cfg = replace(cfg, sim=replace(cfg.sim, t_end=0.0, consolidate_from=0.0,
                                       consolidate_to=0.0))
        p = tmp_path / "zero.yaml"
        config_mod.save(cfg, p)
        out = str(tmp_path / "runZ")
        assert cli.main(["learn", "--config", str(p), "--out", out]) == 0
        lines = open(os.path.join(out, "run_log.csv")).read().splitlines()
        assert len(lines) == 1 + 4  # header + one record per agent

    def test_divergence_exit_code(self, tmp_path):
        cfg = config_mod.default_fleet_config(output_dir=str(tmp_path / "o"))
        cfg = replace(cfg, gains=replace(cfg.gains, gamma_big=1e9),
                      sim=replace(cfg.sim, t_end=1.0))
        p = tmp_path / "div.yaml"
        config_mod.save(cfg, p)
        assert cli.main(["learn", "--config", str(p), "--out", str(tmp_path / "r")]) == 2

    def test_output_dir_env_override(self, short_cfg_path, tmp_path, monkeypatch):
        env_out = str(tmp_path / "env_out")
        monkeypatch.setenv("OUTPUT_DIR", env_out)
        assert cli.main(["learn", "--config", short_cfg_path]) == 0
        assert os.path.exists(os.path.join(env_out, "run_log.csv"))

    def test_replay_pipeline_and_errors(self, short_cfg_path, tmp_path, capsys):
        out = str(tmp_path / "learnrun")
        assert cli.main(["learn", "--config", short_cfg_path, "--out", out]) == 0

        # missing weights directory -> I/O error
        assert cli.main([
            "replay", "--config", short_cfg_path, "--weights", str(tmp_path / "nope"),
            "--out", str(tmp_path / "r1"),
        ]) == 3

        # malformed weights file -> schema error naming the column
        badw = tmp_path / "badw"
        badw.mkdir()
        for i in range(4):
            (badw / f"wbar_agent{i}.csv").write_text(
                "node_index,center_v,center_w,w_v\n0,0,0,1\n"
            )
        capsys.readouterr()
        assert cli.main([
            "replay", "--config", short_cfg_path, "--weights", str(badw),
            "--out", str(tmp_path / "r2"),
        ]) == 1
        assert "w_omega" in capsys.readouterr().err

        # valid replay with a permutation
        assert cli.main([
            "replay", "--config", short_cfg_path, "--weights", out,
            "--assignment", "2,0,1,3", "--out", str(tmp_path / "r3"),
        ]) == 0
        assert os.path.exists(os.path.join(str(tmp_path / "r3"), "run_log.csv"))

        # non-permutation assignment rejected
        assert cli.main([
            "replay", "--config", short_cfg_path, "--weights", out,
            "--assignment", "0,0,1,2", "--out", str(tmp_path / "r4"),
        ]) == 1


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("exp")
    cfg = config_mod.default_fleet_config(output_dir=str(tmp / "out"))
    cfg = replace(cfg, sim=replace(cfg.sim, t_end=1.0, snapshot_interval=0.25))
    p = tmp / "cfg.yaml"
    config_mod.save(cfg, p)
    out = str(tmp / "run")
    assert cli.main(["learn", "--config", str(p), "--out", out]) == 0
    return out


class TestCliExport:
    @pytest.mark.parametrize("what", ["tracking", "observer", "weights",
                                      "estimation", "trajectory2d"])
    def test_export_kinds(self, run_dir, what):
        assert cli.main(["export", run_dir, "--what", what]) == 0
        assert os.path.exists(os.path.join(run_dir, f"export_{what}.svg"))
        assert os.path.exists(os.path.join(run_dir, f"export_{what}.csv"))

    def test_unknown_kind(self, run_dir):
        assert cli.main(["export", run_dir, "--what", "hologram"]) == 1

    def test_empty_run_dir(self, tmp_path):
        assert cli.main(["export", str(tmp_path), "--what", "tracking"]) == 3

    def test_trajectory_csv_matches_reference_ellipses(self, run_dir):
        assert cli.main(["export", run_dir, "--what", "trajectory2d"]) == 0
        data = np.loadtxt(os.path.join(run_dir, "export_trajectory2d.csv"),
                          delimiter=",", skiprows=1)
        # agent 2's reference lies on the (2, 3) ellipse at every instant
        rows = data[data[:, 1] == 2]
        ellipse = (rows[:, 4] / 2.0) ** 2 + (rows[:, 5] / 3.0) ** 2
        np.testing.assert_allclose(ellipse, 1.0, atol=1e-6)
        # and agent 0's on the (1, 2) ellipse
        rows0 = data[data[:, 1] == 0]
        ellipse0 = rows0[:, 4] ** 2 + (rows0[:, 5] / 2.0) ** 2
        np.testing.assert_allclose(ellipse0, 1.0, atol=1e-6)


class TestWeightsCsvSchemaOnDisk:
    def test_written_header(self, short_cfg_path, tmp_path):
        out = str(tmp_path / "w")
        assert cli.main(["learn", "--config", short_cfg_path, "--out", out]) == 0
        first = open(os.path.join(out, "wbar_agent0.csv")).readline().strip()
        assert first == WEIGHT_CSV_HEADER

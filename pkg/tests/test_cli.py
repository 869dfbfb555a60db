import numpy as np
import pytest

from qlqr.cli import load_config, main, packaged_config
from qlqr.harness import ConfigError, read_log


class TestLoadConfig:
    def test_shipped_exp1_values(self):
        cfg = load_config(packaged_config("exp1.cfg"))
        assert (cfg.plant.m, cfg.plant.m_cart, cfg.plant.l, cfg.plant.g) == \
            (0.2, 0.5, 0.3, 9.8)
        assert np.array_equal(np.diag(cfg.weights.q), [100.0, 1.0, 10.0, 1.0])
        assert cfg.weights.r[0, 0] == 1.0
        assert cfg.learner.mu == 10.0
        assert cfg.learner.nu == 5e-3
        assert cfg.dt == 0.01
        assert cfg.duration == 60.0
        assert cfg.plant_mode == "nonlinear"
        assert cfg.fault is None

    def test_shipped_exp2_values(self):
        cfg = load_config(packaged_config("exp2.cfg"))
        assert cfg.fault is not None
        assert (cfg.fault.time, cfg.fault.scale_m, cfg.fault.scale_l) == \
            (20.0, 0.5, 0.5)
        assert cfg.duration == 40.0

    def test_override_changes_only_target(self):
        base = load_config(packaged_config("exp1.cfg"))
        cfg = load_config(packaged_config("exp1.cfg"), ["plant.m=0.4"])
        assert cfg.plant.m == 0.4
        assert cfg.plant.m_cart == base.plant.m_cart
        assert cfg.learner.n_s == base.learner.n_s

    def test_invariant_violation_names_field(self):
        with pytest.raises(ConfigError, match="plant.l"):
            load_config(packaged_config("exp1.cfg"), ["plant.l=-0.3"])

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError, match="plant.mass"):
            load_config(packaged_config("exp1.cfg"), ["plant.mass=1"])

    def test_unknown_key_in_file_rejected(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[plant]\nm = 0.2\nwheels = 4\n")
        with pytest.raises(ConfigError, match="wheels"):
            load_config(bad)

    def test_parse_error_carries_line_number(self, tmp_path):
        bad = tmp_path / "broken.cfg"
        bad.write_text("[plant]\nm = 0.2\nloose line without equals\n")
        with pytest.raises(ConfigError, match="line"):
            load_config(bad)

    def test_fault_scales_require_time(self, tmp_path):
        bad = tmp_path / "f.cfg"
        bad.write_text("[run]\nduration = 1\nfault_scale_m = 0.5\n")
        with pytest.raises(ConfigError, match="fault"):
            load_config(bad)


class TestCommands:
    def test_riccati_prints_solution(self, capsys, oracle):
        assert main(["riccati"]) == 0
        out = capsys.readouterr().out
        gain_line = next(l for l in out.splitlines() if l.startswith("k = "))
        printed = np.array([float(v) for v in gain_line[4:].split(",")])
        assert np.allclose(printed, oracle.k.ravel(), rtol=1e-12)
        assert "spectral_radius" in out
        assert "m_star[4]" in out

    def test_exp1_deterministic_outputs(self, tmp_path):
        args = ["exp1", "--seed", "7", "--set", "run.duration=2"]
        assert main(args + ["--out", str(tmp_path / "a")]) == 0
        assert main(args + ["--out", str(tmp_path / "b")]) == 0
        for name in ("steps.csv", "events.csv", "summary.txt"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_exp1_seed_lands_in_summary(self, tmp_path):
        assert main(["exp1", "--seed", "7", "--set", "run.duration=1",
                     "--out", str(tmp_path)]) == 0
        rec = read_log(tmp_path)
        assert rec.seed == 7
        assert rec.config_echo["learner.seed"] == "7"

    def test_simulate_writes_logs(self, tmp_path):
        assert main(["simulate", "--set", "run.duration=1",
                     "--out", str(tmp_path)]) == 0
        rec = read_log(tmp_path)
        assert len(rec.t) == 100
        assert rec.events == []

    def test_simulate_with_explicit_gain(self, tmp_path):
        assert main(["simulate", "--set", "run.duration=1",
                     "--gain", "0,0,0,0", "--out", str(tmp_path)]) == 0
        rec = read_log(tmp_path)
        assert rec.converged_at is None

    def test_exp2_with_explicit_warm_start(self, tmp_path):
        assert main(["exp1", "--out", str(tmp_path / "warm")]) == 0
        assert main(["exp2", "--out", str(tmp_path / "run"),
                     "--set", f"run.warm_start_m={tmp_path / 'warm'}"]) == 0
        rec = read_log(tmp_path / "run")
        assert any(e.kind == "Fault" for e in rec.events)
        assert not (tmp_path / "run" / "warmup").exists()

    def test_sweep_reports_statistics(self, tmp_path, capsys):
        assert main(["sweep", "--runs", "3", "--set", "run.duration=2",
                     "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "runs = 3" in out
        assert "rate = " in out
        for seed in range(3):
            assert (tmp_path / f"run_{seed:03d}" / "summary.txt").exists()
        summary = (tmp_path / "sweep_summary.txt").read_text()
        assert "run seed=2" in summary

    def test_sweep_parallel_matches_serial(self, tmp_path):
        common = ["sweep", "--runs", "2", "--set", "run.duration=1"]
        assert main(common + ["--out", str(tmp_path / "serial")]) == 0
        assert main(common + ["--jobs", "2", "--out", str(tmp_path / "par")]) == 0
        assert (tmp_path / "serial" / "sweep_summary.txt").read_bytes() == \
            (tmp_path / "par" / "sweep_summary.txt").read_bytes()

    def test_writes_stay_inside_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["exp1", "--set", "run.duration=1", "--out", "out"]) == 0
        entries = sorted(p.name for p in tmp_path.iterdir())
        assert entries == ["out"]


class TestExitCodes:
    def test_usage_error_is_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["exp1", "--bogus-flag"])
        assert exc.value.code == 2

    def test_config_error_is_3(self, capsys):
        assert main(["exp1", "--set", "plant.l=-1"]) == 3
        assert "config error" in capsys.readouterr().err

    def test_io_error_is_4(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        code = main(["exp1", "--set", "run.duration=1",
                     "--out", str(blocker / "sub")])
        assert code == 4
        assert "i/o error" in capsys.readouterr().err

    def test_missing_config_file_is_4(self, tmp_path):
        assert main(["exp1", "--config", str(tmp_path / "nope.cfg")]) == 4

import json
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from tempertune.cli import main
from tempertune.config import ConfigError, load_config, parse_config

CONFIG_DIR = Path(__file__).parent.parent / "configs"


def write_config(tmp_path: Path, payload: dict, name: str = "exp.yaml") -> Path:
    path = tmp_path / name
    path.write_text(yaml.safe_dump(payload))
    return path


def witch_config(**overrides) -> dict:
    payload = {
        "seed": 5,
        "target": {"kind": "witch-hat", "a": 1e-4, "b": 9.5e3},
        "ladder": {"beta0": 1.0, "betan": 0.0625, "n": 4, "mode": "tuned"},
        "g_source": {"kind": "analytic"},
        "run": {"iterations": 400, "burn_in": 100, "base_moves": 0},
    }
    for key, value in overrides.items():
        payload[key] = value
    return payload


class TestConfigValidation:
    def test_shipped_configs_parse(self):
        for path in CONFIG_DIR.glob("*.yaml"):
            load_config(path)

    def test_missing_target_section(self):
        with pytest.raises(ConfigError, match="target"):
            parse_config({"seed": 1})

    def test_unknown_key_reported(self):
        with pytest.raises(ConfigError, match="unknown keys"):
            parse_config({"target": {"kind": "witch-hat", "a": 0.1, "b": 1.0, "typo": 3}})

    def test_tuned_requires_g_source(self):
        payload = witch_config()
        del payload["g_source"]
        with pytest.raises(ConfigError, match="requires a g_source"):
            parse_config(payload)

    def test_analytic_g_requires_analytic_target(self):
        payload = witch_config()
        payload["target"] = {"kind": "mixture"}
        with pytest.raises(ConfigError, match="analytic"):
            parse_config(payload)

    def test_explicit_mode_requires_betas(self):
        payload = witch_config()
        payload["ladder"] = {"mode": "explicit"}
        with pytest.raises(ConfigError, match="betas"):
            parse_config(payload)

    def test_bad_endpoints(self):
        payload = witch_config()
        payload["ladder"] = {"beta0": 0.5, "betan": 1.0, "n": 4, "mode": "geometric"}
        with pytest.raises(ConfigError, match="beta0 > betan"):
            parse_config(payload)


class TestExitCodes:
    def test_missing_config_file_is_usage_error(self, tmp_path, capsys):
        assert main(["tune", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)]) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["tune", "--nonsense"])
        assert info.value.code == 1

    def test_invalid_config_is_usage_error(self, tmp_path, capsys):
        path = write_config(tmp_path, {"target": {"kind": "unknown-target"}})
        assert main(["tune", "--config", str(path), "--out", str(tmp_path)]) == 1

    def test_numerical_failure_exit_code(self, tmp_path, capsys):
        # a curve file with NaN averages drives the optimiser into non-finite
        # gaps, which is a numerical failure (exit 2), not a usage error
        curve_path = tmp_path / "curve.csv"
        curve_path.write_text(
            "beta,g_direct,g_importance,g_avg,gp_direct,gp_importance,gp_avg,ess\n"
            "0.0625,nan,,nan,-1.0,,-1.0,\n"
            "1.0,nan,nan,nan,-1.0,-1.0,-1.0,50.0\n"
        )
        payload = witch_config(g_source={"kind": "curve-file", "path": str(curve_path)})
        path = write_config(tmp_path, payload)
        code = main(["tune", "--config", str(path), "--out", str(tmp_path / "out")])
        assert code == 2
        assert "numerical failure" in capsys.readouterr().err


class TestTuneCommand:
    def test_witch_tuned_n4_matches_table(self, tmp_path, capsys):
        path = write_config(tmp_path, witch_config())
        out = tmp_path / "out"
        assert main(["tune", "--config", str(path), "--out", str(out)]) == 0
        payload = json.loads((out / "tuning.json").read_text())
        assert payload["s_n"] == pytest.approx(0.63456, abs=1e-3)
        assert payload["comparison"]["geometric"] == pytest.approx(2.20779, abs=1e-4)
        assert payload["converged"] is True
        assert (out / "ladders.png").exists()
        stdout = capsys.readouterr().out
        assert "geometric" in stdout and "tuned" in stdout

    def test_gaussian_tuned_equals_geometric(self, tmp_path):
        payload = {
            "seed": 1,
            "target": {"kind": "gaussian", "d": 3},
            "ladder": {"beta0": 1.0, "betan": 0.0625, "n": 8, "mode": "tuned"},
            "g_source": {"kind": "analytic"},
        }
        path = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["tune", "--config", str(path), "--out", str(out)]) == 0
        result = json.loads((out / "tuning.json").read_text())
        from tempertune.tuning import geometric_ladder

        np.testing.assert_allclose(result["beta"], geometric_ladder(1.0, 0.0625, 8).betas, atol=1e-6)

    def test_explicit_mode_skips_tuning_but_reports_gap(self, tmp_path):
        payload = witch_config()
        payload["ladder"] = {"mode": "explicit", "betas": [1.0, 0.25, 0.0625]}
        path = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["tune", "--config", str(path), "--out", str(out), "--no-figures"]) == 0
        result = json.loads((out / "tuning.json").read_text())
        assert result["starts"] == []
        assert result["s_n"] == pytest.approx(3.34158, abs=1e-4)


class TestEstimateGCommand:
    @staticmethod
    def estimate_config(grid=4, samples=300):
        return {
            "seed": 9,
            "target": {"kind": "witch-hat", "a": 1e-4, "b": 9.5e3},
            "ladder": {"beta0": 1.0, "betan": 0.0625, "n": 4, "mode": "geometric"},
            "g_source": {"kind": "estimate", "grid": grid, "samples": samples, "burn_in": 30},
        }

    def test_writes_curve_and_discrepancy(self, tmp_path):
        path = write_config(tmp_path, self.estimate_config())
        out = tmp_path / "out"
        assert main(["estimate-g", "--config", str(path), "--out", str(out)]) == 0
        lines = (out / "gcurve.csv").read_text().splitlines()
        assert lines[0] == "beta,g_direct,g_importance,g_avg,gp_direct,gp_importance,gp_avg,ess"
        assert len(lines) == 1 + 4
        payload = json.loads((out / "discrepancy.json").read_text())
        assert len(payload["points"]) == 4
        assert (out / "gcurve.png").exists()

    def test_grid_two_rows(self, tmp_path):
        path = write_config(tmp_path, self.estimate_config(grid=2))
        out = tmp_path / "out"
        assert main(["estimate-g", "--config", str(path), "--out", str(out), "--no-figures"]) == 0
        assert len((out / "gcurve.csv").read_text().splitlines()) == 3

    def test_same_seed_identical_bytes(self, tmp_path):
        path = write_config(tmp_path, self.estimate_config())
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        for out in (out1, out2):
            assert main(["estimate-g", "--config", str(path), "--out", str(out), "--no-figures"]) == 0
        assert (out1 / "gcurve.csv").read_bytes() == (out2 / "gcurve.csv").read_bytes()

    def test_jobs_flag_gives_identical_output(self, tmp_path):
        path = write_config(tmp_path, self.estimate_config(grid=3, samples=200))
        serial, parallel = tmp_path / "serial", tmp_path / "parallel"
        assert main(["estimate-g", "--config", str(path), "--out", str(serial), "--no-figures"]) == 0
        assert main(["estimate-g", "--config", str(path), "--out", str(parallel), "--jobs", "2", "--no-figures"]) == 0
        assert (serial / "gcurve.csv").read_bytes() == (parallel / "gcurve.csv").read_bytes()

    def test_requires_estimate_source(self, tmp_path):
        path = write_config(tmp_path, witch_config())
        assert main(["estimate-g", "--config", str(path), "--out", str(tmp_path / "x")]) == 1


class TestSampleCommand:
    def test_trace_and_summary(self, tmp_path):
        path = write_config(tmp_path, witch_config())
        out = tmp_path / "out"
        assert main(["sample", "--config", str(path), "--out", str(out)]) == 0
        lines = (out / "trace.csv").read_text().splitlines()
        assert lines[0] == "iteration,accepted,F,F_prime,x"
        assert len(lines) == 1 + 300  # iterations - burn_in
        summary = json.loads((out / "summary.json").read_text())
        assert summary["iterations"] == 400
        assert 0.0 <= summary["acceptance_rate"] <= 1.0
        assert "sampling_seconds" in summary["timings"]
        assert summary["tuning"]["s_n"] == pytest.approx(0.63456, abs=1e-3)
        assert (out / "trace.png").exists()

    def test_thinning_bookkeeping(self, tmp_path):
        payload = witch_config(run={"iterations": 110, "burn_in": 100, "base_moves": 0, "thinning": 10})
        path = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["sample", "--config", str(path), "--out", str(out), "--no-figures"]) == 0
        assert len((out / "trace.csv").read_text().splitlines()) == 2

    def test_deterministic_trace_and_summary(self, tmp_path):
        path = write_config(tmp_path, witch_config())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["sample", "--config", str(path), "--out", str(out), "--no-figures"]) == 0
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
        s1 = json.loads((out1 / "summary.json").read_text())
        s2 = json.loads((out2 / "summary.json").read_text())
        s1.pop("timings"); s2.pop("timings")
        s1["tuning"].pop("timings", None); s2["tuning"].pop("timings", None)
        assert s1 == s2

    def test_seed_override_changes_trace(self, tmp_path):
        path = write_config(tmp_path, witch_config())
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["sample", "--config", str(path), "--out", str(out1), "--no-figures"]) == 0
        assert main(["sample", "--config", str(path), "--out", str(out2), "--seed", "77", "--no-figures"]) == 0
        assert (out1 / "trace.csv").read_bytes() != (out2 / "trace.csv").read_bytes()

    def test_vanilla_mixture_trace(self, tmp_path):
        payload = {
            "seed": 3,
            "target": {"kind": "mixture"},
            "ladder": {"beta0": 1.0, "betan": 0.0625, "n": 1, "mode": "geometric"},
            "run": {"iterations": 300, "burn_in": 50, "vanilla": True},
        }
        path = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["sample", "--config", str(path), "--out", str(out), "--no-figures"]) == 0
        header = (out / "trace.csv").read_text().splitlines()[0]
        assert header == "iteration,w_1,w_2,w_3,mu_1,mu_2,mu_3,sigma2_1,sigma2_2,sigma2_3"
        summary = json.loads((out / "summary.json").read_text())
        assert summary["mode"] == "vanilla"


class TestAnalyzeCommand:
    def test_witch_trace_report(self, tmp_path):
        config_path = write_config(tmp_path, witch_config(run={"iterations": 3000, "burn_in": 200, "base_moves": 0}))
        out = tmp_path / "out"
        assert main(["sample", "--config", str(config_path), "--out", str(out), "--no-figures"]) == 0
        assert main(["analyze", "--config", str(config_path), "--trace", str(out / "trace.csv"), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert "x" in report["iact"]
        assert report["acceptance_rate"] is not None
        csv_text = (out / "report.csv").read_text().splitlines()
        assert csv_text[0] == "group,chain,tau,reliable"
        assert (out / "iact.png").exists()

    def test_degenerate_trace_flagged(self, tmp_path):
        config_path = write_config(tmp_path, witch_config())
        trace_path = tmp_path / "trace.csv"
        rows = ["iteration,accepted,F,F_prime,x"] + [f"{i},1,0.0,0.0,0.5" for i in range(200)]
        trace_path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "out"
        assert main(["analyze", "--config", str(config_path), "--trace", str(trace_path), "--out", str(out), "--no-figures"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["iact"]["x"][0]["degenerate"] is True

    def test_malformed_trace_names_row(self, tmp_path, capsys):
        config_path = write_config(tmp_path, witch_config())
        trace_path = tmp_path / "trace.csv"
        trace_path.write_text("iteration,x\n0,1.0\n1,bad\n")
        code = main(["analyze", "--config", str(config_path), "--trace", str(trace_path), "--out", str(tmp_path / "o")])
        assert code == 1
        assert "row 3" in capsys.readouterr().err

    def test_mixture_groups_present(self, tmp_path):
        payload = {
            "seed": 3,
            "target": {"kind": "mixture"},
            "ladder": {"beta0": 1.0, "betan": 0.0625, "n": 1, "mode": "geometric"},
            "run": {"iterations": 500, "burn_in": 100, "vanilla": True},
        }
        config_path = write_config(tmp_path, payload)
        out = tmp_path / "out"
        assert main(["sample", "--config", str(config_path), "--out", str(out), "--no-figures"]) == 0
        assert main(["analyze", "--config", str(config_path), "--trace", str(out / "trace.csv"), "--out", str(out), "--no-figures"]) == 0
        report = json.loads((out / "report.json").read_text())
        for group in ("w", "mu", "sigma2", "mu_chainwise"):
            assert group in report["iact"]
        assert len(report["iact"]["mu"]) == 3
        assert report["acceptance_rate"] is None

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from glmphase.cli import (ConfigError, ExperimentConfig, ResultTable, emit,
                          main, parse_config, run)

ERRORS_CFG = """
[experiment]
task = errors
seed = 77

[prior]
kind = rademacher
p_plus = 0.5

[channel]
kind = sign
delta = 0.0

[grid]
alpha_start = 1.0
alpha_stop = 1.4
alpha_step = 0.2

[numerics]
grid_size = 81

[output]
format = csv
"""


@pytest.fixture
def errors_cfg(tmp_path):
    path = tmp_path / "errors.ini"
    path.write_text(ERRORS_CFG)
    return path


class TestConfigParsing:
    def test_round_trip(self, errors_cfg):
        cfg = parse_config(str(errors_cfg))
        assert cfg.task == "errors"
        assert cfg.seed == 77
        assert cfg.prior_spec["kind"] == "rademacher"
        assert cfg.grid["alpha_step"] == 0.2

    def test_missing_seed_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[experiment]\ntask = errors\n")
        with pytest.raises(ConfigError):
            parse_config(str(path))

    def test_unknown_task_rejected(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("[experiment]\ntask = frobnicate\nseed = 1\n")
        with pytest.raises(ConfigError):
            parse_config(str(path))

    def test_override(self, errors_cfg):
        cfg = parse_config(str(errors_cfg), ["grid.alpha_step=0.4"])
        assert cfg.grid["alpha_step"] == 0.4

    def test_bad_override_shape(self, errors_cfg):
        with pytest.raises(ConfigError):
            parse_config(str(errors_cfg), ["alpha_step0.4"])

    def test_unknown_channel_kind(self, tmp_path):
        path = tmp_path / "bad.ini"
        path.write_text("""
[experiment]
task = errors
seed = 1
[prior]
kind = rademacher
[channel]
kind = wormhole
[grid]
alpha_start = 1.0
alpha_stop = 1.0
""")
        with pytest.raises(ConfigError):
            parse_config(str(path))


class TestEmit:
    def _table(self):
        return ResultTable(columns=("a", "b"),
                           rows=[(1.0, "x"), (0.1 + 0.2, "y,z")],
                           provenance={"config_hash": "feed", "timestamp": "t"})

    def test_empty_table_header_only(self):
        out = emit(ResultTable(columns=("a", "b"), rows=[]), "csv").decode()
        body = [l for l in out.splitlines() if not l.startswith("#")]
        assert body == ["a,b"]

    def test_csv_has_provenance_and_17_digits(self):
        out = emit(self._table(), "csv").decode()
        assert "# config_hash = feed" in out
        assert "0.30000000000000004" in out
        assert '"y,z"' in out  # quoting

    def test_json_round_trip_bitwise(self):
        out = json.loads(emit(self._table(), "json"))
        assert out["rows"][1][0] == 0.1 + 0.2
        assert out["metadata"]["config_hash"] == "feed"

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            emit(self._table(), "xml")


class TestRunTasks:
    def test_errors_task_columns_and_transition(self, errors_cfg):
        cfg = parse_config(str(errors_cfg))
        table = run(cfg)
        assert table.columns[:4] == ("alpha", "q_star", "r_star", "free_entropy")
        rows = {round(r[0], 3): r for r in table.rows}
        # alpha = 1.0 < alpha_IT: partial learning; alpha = 1.4 > alpha_IT
        assert rows[1.0][1] < 0.9
        assert rows[1.4][1] == pytest.approx(1.0)
        assert all(r[-1] == "" for r in table.rows)

    def test_se_task(self, tmp_path):
        path = tmp_path / "se.ini"
        path.write_text("""
[experiment]
task = se
seed = 5
[prior]
kind = gaussian
variance = 1.0
[channel]
kind = linear
delta = 0.5
[grid]
alpha = 2.0
q0 = 1e-6
""")
        table = run(parse_config(str(path)))
        assert table.columns == ("t", "q", "r", "mse_pred")
        s = 1.0 + 0.5 + 2.0
        q_exact = (s - math.sqrt(s * s - 8.0)) / 2.0
        assert table.rows[-1][1] == pytest.approx(q_exact, abs=1e-8)

    def test_gamp_task_emits_iterations(self, tmp_path):
        path = tmp_path / "gamp.ini"
        path.write_text("""
[experiment]
task = gamp
seed = 11
[prior]
kind = gaussian
[channel]
kind = linear
delta = 0.1
[grid]
n = 400
alpha = 1.5
n_test = 2000
""")
        table = run(parse_config(str(path)))
        assert table.columns == ("t", "overlap", "norm_sq", "mse", "gen_error_mc")
        assert table.rows[0][0] == 1
        # gen error only on the last row; NaN elsewhere (documented optional)
        assert math.isnan(table.rows[0][-1])
        assert not math.isnan(table.rows[-1][-1])

    def test_phase_diagram_task(self, tmp_path):
        path = tmp_path / "pd.ini"
        path.write_text("""
[experiment]
task = phase-diagram
seed = 3
[prior]
kind = rademacher
[channel]
kind = door
delta = 0.0
[grid]
param = K
param_values = 0.67449
alpha_lo = 0.8
alpha_hi = 2.2
[numerics]
bisect_tol = 5e-3
""")
        table = run(parse_config(str(path)))
        assert table.columns == ("param", "alpha_it", "alpha_amp", "alpha_c",
                                 "error")
        row = table.rows[0]
        assert row[1] == pytest.approx(1.0, abs=0.01)
        assert row[2] == pytest.approx(1.566, abs=0.02)
        assert row[3] == pytest.approx(1.36, abs=0.01)

    def test_potential_task(self, tmp_path):
        path = tmp_path / "pot.ini"
        path.write_text("""
[experiment]
task = potential
seed = 9
[prior]
kind = rademacher
[channel]
kind = sign
delta = 0.0
[grid]
alpha = 1.2
q_points = 11
""")
        table = run(parse_config(str(path)))
        assert table.columns == ("q", "r_inner", "f_rs", "i_rs")
        from glmphase.priors import RademacherPrior
        from glmphase.channels import Sign
        from glmphase.replica import f_hat
        q, r, f, i_val = table.rows[5]
        f_ref, r_ref = f_hat(RademacherPrior(), Sign(), 1.2, q)
        assert f == pytest.approx(f_ref, abs=1e-12)
        assert r == pytest.approx(r_ref, rel=1e-9)

    def test_validate_failure_exit_code(self, tmp_path, monkeypatch):
        import glmphase.cli as cli_mod
        monkeypatch.setattr(
            cli_mod, "_validate_checks",
            lambda seed: [("always_fails", lambda: "broken on purpose")])
        path = tmp_path / "val.ini"
        path.write_text("[experiment]\ntask = validate\nseed = 1\n")
        out = tmp_path / "val.csv"
        assert main(["validate", "--config", str(path), "--out", str(out)]) == 1
        assert "fail" in out.read_text()

    def test_reruns_are_byte_identical_modulo_timestamp(self, errors_cfg):
        cfg = parse_config(str(errors_cfg))
        def body(t):
            return [l for l in emit(t, "csv").decode().splitlines()
                    if not l.startswith("# timestamp")]
        assert body(run(cfg)) == body(run(cfg))

    def test_worker_count_invariance(self, errors_cfg):
        cfg = parse_config(str(errors_cfg))
        a = run(cfg, workers=1)
        b = run(cfg, workers=3)
        assert a.rows == b.rows


class TestCliEntry:
    def test_main_writes_csv(self, errors_cfg, tmp_path):
        out = tmp_path / "out.csv"
        code = main(["errors", "--config", str(errors_cfg), "--out", str(out)])
        assert code == 0
        text = out.read_text()
        assert text.splitlines()[-1].count(",") == 9

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.ini"
        bad.write_text("[experiment]\ntask = errors\n")
        assert main(["errors", "--config", str(bad)]) == 2

    def test_module_invocation(self, errors_cfg, tmp_path):
        out = tmp_path / "cli.json"
        proc = subprocess.run(
            [sys.executable, "-m", "glmphase", "errors", "--config",
             str(errors_cfg), "--out", str(out), "--format", "json"],
            capture_output=True, text=True, timeout=560)
        assert proc.returncode == 0, proc.stderr
        doc = json.loads(out.read_text())
        assert doc["columns"][0] == "alpha"

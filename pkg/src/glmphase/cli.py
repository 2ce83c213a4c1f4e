"""Batch experiment runner: INI-style configs, one subcommand per analysis,
deterministic seeded sweeps, plot-ready CSV/JSON tables.

    glmphase <task> --config cfg.ini [--out path] [--format csv|json]
                    [--workers N] [--override section.key=value ...]

Tasks: potential, se, gamp, phase-diagram, errors, validate.
Exit codes: 0 success, 1 validation failure, 2 config error.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import dataclasses
import hashlib
import io
import json
import math
import sys
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import __version__, oracle, replica, state_evolution as se_mod
from .channels import Channel
from .gamp import (GampOptions, channel_from_dict,
                   empirical_generalization_error, gamp_run,
                   generate_instance, prior_from_dict)
from .numerics import FixedPointOptions
from .priors import Prior

TASKS = ("potential", "se", "gamp", "phase-diagram", "errors", "validate")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    prior_spec: dict
    channel_spec: dict
    grid: dict
    numerics: dict
    output: dict
    seed: int

    def prior(self) -> Prior:
        return prior_from_dict(self.prior_spec)

    def channel(self) -> Channel:
        return channel_from_dict(self.channel_spec)

    def config_hash(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ResultTable:
    columns: tuple[str, ...]
    rows: list[tuple]
    provenance: dict = field(default_factory=dict)


def _section(cp: configparser.ConfigParser, name: str) -> dict:
    return dict(cp[name]) if cp.has_section(name) else {}


def _to_number(s: str):
    try:
        return int(s)
    except ValueError:
        try:
            return float(s)
        except ValueError:
            return s


def parse_config(path: str, overrides=()) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    for ov in overrides:
        if "=" not in ov or "." not in ov.split("=", 1)[0]:
            raise ConfigError(f"override must be section.key=value, got {ov!r}")
        key, value = ov.split("=", 1)
        section, option = key.split(".", 1)
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section.strip(), option.strip(), value.strip())

    exp = _section(cp, "experiment")
    if "task" not in exp:
        raise ConfigError("missing experiment.task")
    task = exp["task"].strip()
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    if "seed" not in exp:
        raise ConfigError("missing experiment.seed (no wall-clock defaults)")

    prior_spec = {k: _to_number(v) for k, v in _section(cp, "prior").items()}
    channel_spec = {k: _to_number(v) for k, v in _section(cp, "channel").items()}
    if task != "validate":
        if "kind" not in prior_spec:
            raise ConfigError("missing prior.kind")
        if "kind" not in channel_spec:
            raise ConfigError("missing channel.kind")
        try:
            prior_from_dict(prior_spec)
            channel_from_dict(channel_spec)
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad prior/channel spec: {exc}") from exc

    cfg = ExperimentConfig(
        task=task,
        prior_spec=prior_spec,
        channel_spec=channel_spec,
        grid={k: _to_number(v) for k, v in _section(cp, "grid").items()},
        numerics={k: _to_number(v) for k, v in _section(cp, "numerics").items()},
        output={k: v for k, v in _section(cp, "output").items()},
        seed=int(exp["seed"]),
    )
    return cfg


def _alpha_grid(cfg: ExperimentConfig) -> np.ndarray:
    g = cfg.grid
    try:
        start, stop = float(g["alpha_start"]), float(g["alpha_stop"])
        step = float(g.get("alpha_step", 0.1))
    except KeyError as exc:
        raise ConfigError(f"missing grid key {exc}") from exc
    if step <= 0 or stop < start:
        raise ConfigError("need alpha_stop >= alpha_start and alpha_step > 0")
    n = int(round((stop - start) / step)) + 1
    return start + step * np.arange(n)


def _row_seed(seed: int, index: int) -> int:
    return zlib.crc32(f"{seed}:{index}".encode()) + index


def _map_rows(func, items, workers: int):
    if workers <= 1:
        return [func(i, x) for i, x in enumerate(items)]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda t: func(*t), enumerate(items)))


def run(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    """Dispatch an experiment; returns the result table (caller writes it)."""
    started = time.strftime("%Y-%m-%dT%H:%M:%S")
    handler = {
        "errors": _run_errors,
        "se": _run_se,
        "gamp": _run_gamp,
        "phase-diagram": _run_phase_diagram,
        "potential": _run_potential,
        "validate": _run_validate,
    }[config.task]
    table = handler(config, workers)
    table.provenance = {
        "config_hash": config.config_hash(),
        "artifact_version": __version__,
        "timestamp": started,
        "task": config.task,
    }
    return table


def _run_errors(cfg: ExperimentConfig, workers: int) -> ResultTable:
    prior, channel = cfg.prior(), cfg.channel()
    rho = prior.second_moment
    alphas = _alpha_grid(cfg)
    grid_size = int(cfg.numerics.get("grid_size", 201))

    def row(i, alpha):
        try:
            sol = replica.solve(prior, channel, float(alpha), grid_size=grid_size)
            traj = se_mod.se_run(prior, channel, float(alpha),
                                 1e-6 * rho, fast=True)
            gen_se = replica.generalization_error(
                channel, rho, min(traj.q_limit, rho))
            return (float(alpha), sol.q_star, sol.r_star, sol.free_entropy,
                    sol.mmse, sol.matrix_mmse, sol.gen_error, gen_se,
                    sol.unique, "")
        except Exception as exc:
            return (float(alpha), math.nan, math.nan, math.nan, math.nan,
                    math.nan, math.nan, math.nan, False,
                    f"{type(exc).__name__}: {exc}")

    rows = _map_rows(row, alphas, workers)
    return ResultTable(
        columns=("alpha", "q_star", "r_star", "free_entropy", "mmse",
                 "matrix_mmse", "gen_error_replica", "gen_error_se",
                 "unique_flag", "error"),
        rows=rows)


def _run_se(cfg: ExperimentConfig, workers: int) -> ResultTable:
    prior, channel = cfg.prior(), cfg.channel()
    rho = prior.second_moment
    alpha = float(cfg.grid.get("alpha", 1.0))
    q0 = float(cfg.grid.get("q0", 1e-6 * rho))
    opts = FixedPointOptions(
        damping=float(cfg.numerics.get("damping", 0.0)),
        tol=float(cfg.numerics.get("se_tol", 1e-10)),
        max_iter=int(cfg.numerics.get("se_max_iter", 5000)))
    traj = se_mod.se_run(prior, channel, alpha, q0, opts)
    rows = [(t, float(q), float(r), rho - float(q))
            for t, (q, r) in enumerate(zip(traj.q_seq[1:], traj.r_seq))]
    return ResultTable(columns=("t", "q", "r", "mse_pred"), rows=rows)


def _run_gamp(cfg: ExperimentConfig, workers: int) -> ResultTable:
    prior, channel = cfg.prior(), cfg.channel()
    rho = prior.second_moment
    g = cfg.grid
    n = int(g.get("n", 1000))
    alpha = float(g.get("alpha", 1.0))
    n_test = int(g.get("n_test", 0))
    inst = generate_instance(prior, channel, n, alpha, seed=cfg.seed)
    opts = GampOptions(
        max_iter=int(cfg.numerics.get("gamp_max_iter", 500)),
        tol=float(cfg.numerics.get("gamp_tol", 1e-7)),
        damping=float(cfg.numerics.get("damping", 0.0)),
        seed=cfg.seed)
    result = gamp_run(inst, opts)
    rows = []
    for t in range(len(result.overlap_seq)):
        gen_mc = math.nan
        if n_test > 0 and t == len(result.overlap_seq) - 1:
            q_t = min(max(result.norm_sq_seq[t], 0.0), rho)
            gen_mc = empirical_generalization_error(
                inst, result.x_hat_final, q_t, n_test, seed=cfg.seed + 1)
        rows.append((t + 1, result.overlap_seq[t], result.norm_sq_seq[t],
                     result.mse_seq[t], gen_mc))
    return ResultTable(
        columns=("t", "overlap", "norm_sq", "mse", "gen_error_mc"), rows=rows)


def _run_phase_diagram(cfg: ExperimentConfig, workers: int) -> ResultTable:
    g = cfg.grid
    try:
        params = [float(p) for p in str(g["param_values"]).split(",")]
    except KeyError as exc:
        raise ConfigError("phase-diagram needs grid.param_values") from exc
    alpha_lo = float(g.get("alpha_lo", 0.1))
    alpha_hi = float(g.get("alpha_hi", 2.0))
    tol = float(cfg.numerics.get("bisect_tol", 1e-3))
    param_target = str(g.get("param", "sparsity"))

    def make_prior(p):
        spec = dict(cfg.prior_spec)
        if param_target in ("sparsity", "rho", "p_plus", "variance"):
            key = "sparsity" if param_target == "rho" else param_target
            if key in ("sparsity",) and spec.get("kind") == "gauss_bernoulli":
                spec["sparsity"] = p
            elif key in spec or key in ("p_plus", "variance"):
                spec[key] = p
        return prior_from_dict(spec)

    def make_channel(p):
        spec = dict(cfg.channel_spec)
        if param_target == "K":
            spec["K"] = p
        return channel_from_dict(spec)

    reports = se_mod.phase_sweep(make_prior, make_channel, params,
                                 alpha_lo, alpha_hi, tol=tol, workers=workers)
    rows = [(r.param,
             math.nan if r.alpha_it is None else r.alpha_it,
             math.nan if r.alpha_amp is None else r.alpha_amp,
             math.nan if r.alpha_c is None else r.alpha_c,
             r.error or "") for r in reports]
    return ResultTable(columns=("param", "alpha_it", "alpha_amp", "alpha_c",
                                "error"), rows=rows)


def _run_potential(cfg: ExperimentConfig, workers: int) -> ResultTable:
    prior, channel = cfg.prior(), cfg.channel()
    rho = prior.second_moment
    alpha = float(cfg.grid.get("alpha", 1.0))
    n_q = int(cfg.grid.get("q_points", 101))
    qs = np.linspace(0.0, rho * (1.0 - 1e-6), n_q)

    def row(i, q):
        f, r = replica.f_hat(prior, channel, alpha, float(q))
        i_val = replica.i_rs(prior, channel, alpha, float(q), r)
        return (float(q), r, f, i_val)

    rows = _map_rows(row, qs, workers)
    return ResultTable(columns=("q", "r_inner", "f_rs", "i_rs"), rows=rows)


# ---------------------------------------------------------------------------
# validate task: the bundled property suite
# ---------------------------------------------------------------------------

def _validate_checks(seed: int):
    from .channels import Abs, LinearAWGN, Sigmoid, Sign, SymmetricDoor
    from .priors import GaussBernoulliPrior, GaussianPrior, RademacherPrior

    rad = RademacherPrior()
    gb = GaussBernoulliPrior(0.3)
    gauss = GaussianPrior(1.0)

    def check_psi_p0_prime_fd():
        for prior in (rad, gb, gauss):
            for r in (0.1, 1.0, 10.0):
                h = 1e-4
                fd = (prior.psi_p0(r + h) - prior.psi_p0(r - h)) / (2 * h)
                an = prior.psi_p0_prime(r)
                if abs(fd - an) / max(abs(an), 1e-12) > 1e-5:
                    return f"prior {type(prior).__name__} r={r}"
        return None

    def check_psi_pout_prime_fd():
        for ch, rho in ((Sign(), 1.0), (SymmetricDoor(), 1.0), (Abs(0.0), 1.0),
                        (LinearAWGN(0.5), 1.0), (Sigmoid(2.0), 1.0)):
            for qf in (0.1, 0.5, 0.9):
                q, h = qf * rho, 1e-4 * rho
                fd = (ch.psi_pout(q + h, rho) - ch.psi_pout(q - h, rho)) / (2 * h)
                an = ch.psi_pout_prime(q, rho)
                if abs(fd - an) / max(abs(an), 1e-12) > 1e-4:
                    return f"{type(ch).__name__} q={q}"
        return None

    def check_convexity():
        for prior in (rad, gb):
            rs = np.linspace(0.0, 20.0, 20)
            psis = np.array([prior.psi_p0(r) for r in rs])
            if np.any(psis[:-2] + psis[2:] - 2 * psis[1:-1] < -1e-9):
                return f"psi_p0 not convex for {type(prior).__name__}"
        for ch, rho in ((Sign(), 1.0), (SymmetricDoor(), 1.0)):
            qs = np.linspace(0.0, rho * 0.999, 20)
            psis = np.array([ch.psi_pout(q, rho) for q in qs])
            if np.any(np.diff(psis) < -1e-10):
                return f"psi_pout not nondecreasing for {type(ch).__name__}"
            if np.any(psis[:-2] + psis[2:] - 2 * psis[1:-1] < -1e-9):
                return f"psi_pout not convex for {type(ch).__name__}"
        return None

    def check_sup_inf():
        alpha = 1.2
        sol = replica.solve(rad, Sign(), alpha)
        qs = np.linspace(0.0, 1.0 - 1e-6, 101)
        inf_sup = math.inf
        for q in qs:
            f, _ = replica.f_hat(rad, Sign(), alpha, float(q))
            i_val = alpha * Sign().psi_pout(1.0, 1.0) - f
            inf_sup = min(inf_sup, i_val)
        i_at_opt = alpha * Sign().psi_pout(1.0, 1.0) - sol.free_entropy
        if abs(inf_sup - i_at_opt) > 1e-6:
            return f"sup-inf duality broken: {inf_sup} vs {i_at_opt}"
        return None

    def check_stationarity():
        alpha = 1.2
        sol = replica.solve(rad, Sign(), alpha)
        rho = 1.0
        for p in sol.gamma_set:
            if not math.isfinite(p.r) or p.q >= rho:
                continue
            res_q = abs(p.q - 2 * rad.psi_p0_prime(p.r))
            if res_q > 1e-6 * rho:
                return f"stationarity residual {res_q} at q={p.q}"
        return None

    def check_nishimori():
        rep = oracle.nishimori_check(rad, LinearAWGN(0.5), n=8, alpha=1.5,
                                     samples=400, seed=seed)
        if rep.z_score >= 3.0:
            return f"z={rep.z_score:.2f}"
        return None

    def check_mc_free_entropies():
        est, se_ = oracle.mc_psi_p0(gauss, 1.0, 40000, seed)
        exact = gauss.psi_p0(1.0)
        if abs(est - exact) > 3 * se_ + 1e-12:
            return f"psi_p0 MC {est}+-{se_} vs {exact}"
        est, se_ = oracle.mc_psi_pout(Sign(), 0.3, 1.0, 40000, seed + 1)
        exact = Sign().psi_pout(0.3, 1.0)
        if abs(est - exact) > 3 * se_ + 1e-12:
            return f"psi_pout MC {est}+-{se_} vs {exact}"
        return None

    def check_gen_error_closed_forms():
        for ch, rho in ((Sign(), 1.0), (SymmetricDoor(), 1.0), (Abs(0.0), 1.0),
                        (LinearAWGN(0.3), 1.0), (Sigmoid(1.5), 1.0)):
            for qf in (0.0, 0.5, 0.99):
                replica.generalization_error(ch, rho, qf * rho)  # asserts inside
        return None

    def check_se_gamp_tracking():
        from .gamp import GampOptions, gamp_run, generate_instance
        traj = se_mod.se_run(gauss, LinearAWGN(0.2), 1.5, 0.0)
        devs = []
        for s in range(3):
            inst = generate_instance(gauss, LinearAWGN(0.2), 500, 1.5, seed=seed + s)
            res = gamp_run(inst, GampOptions(seed=seed + s))
            T = min(5, len(res.overlap_seq))
            devs.append(res.overlap_seq[:T] - traj.q_seq[1:T + 1])
        dev = float(np.max(np.abs(np.mean(devs, axis=0))))
        if dev > 0.1:
            return f"tracking deviation {dev:.3f}"
        return None

    return [
        ("psi_p0_prime_vs_fd", check_psi_p0_prime_fd),
        ("psi_pout_prime_vs_fd", check_psi_pout_prime_fd),
        ("convexity_grids", check_convexity),
        ("sup_inf_duality", check_sup_inf),
        ("gamma_stationarity", check_stationarity),
        ("nishimori_mc", check_nishimori),
        ("mc_free_entropies", check_mc_free_entropies),
        ("gen_error_closed_vs_generic", check_gen_error_closed_forms),
        ("se_gamp_tracking", check_se_gamp_tracking),
    ]


def _run_validate(cfg: ExperimentConfig, workers: int) -> ResultTable:
    rows = []
    for name, fn in _validate_checks(cfg.seed):
        try:
            detail = fn()
        except Exception as exc:
            detail = f"{type(exc).__name__}: {exc}"
        rows.append((name, "pass" if detail is None else "fail", detail or ""))
    return ResultTable(columns=("check", "status", "detail"), rows=rows)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def _fmt_cell(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return format(x, ".17g")
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    s = str(x)
    if any(c in s for c in ",\"\n"):
        s = '"' + s.replace('"', '""') + '"'
    return s


def emit(table: ResultTable, fmt: str = "csv") -> bytes:
    """Serialize a table; CSV uses 17-significant-digit floats and a
    '#'-commented provenance header."""
    if fmt == "csv":
        buf = io.StringIO()
        for key in sorted(table.provenance):
            buf.write(f"# {key} = {table.provenance[key]}\n")
        buf.write(",".join(table.columns) + "\n")
        for row in table.rows:
            buf.write(",".join(_fmt_cell(x) for x in row) + "\n")
        return buf.getvalue().encode()
    if fmt == "json":
        doc = {
            "metadata": dict(table.provenance),
            "columns": list(table.columns),
            "rows": [[(None if isinstance(x, float) and math.isnan(x) else
                       (bool(x) if isinstance(x, (bool, np.bool_)) else
                        (float(x) if isinstance(x, (float, np.floating)) else
                         (int(x) if isinstance(x, (int, np.integer)) else x))))
                      for x in row] for row in table.rows],
        }
        return json.dumps(doc, indent=1).encode()
    raise ValueError(f"unknown format {fmt!r}; expected csv or json")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="glmphase",
        description="Bayes-optimal errors and phase transitions for GLMs")
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--format", choices=("csv", "json"), default=None)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--override", action="append", default=[])
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config, args.override)
        if cfg.task != args.task:
            cfg = dataclasses.replace(cfg, task=args.task)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    table = run(cfg, workers=args.workers)

    fmt = args.format or cfg.output.get("format", "csv")
    out_path = args.out or cfg.output.get("path")
    try:
        payload = emit(table, fmt)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if out_path:
        with open(out_path, "wb") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload.decode())

    if cfg.task == "validate":
        failed = [r for r in table.rows if r[1] != "pass"]
        if failed:
            for name, _, detail in failed:
                print(f"validate: {name} FAILED ({detail})", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

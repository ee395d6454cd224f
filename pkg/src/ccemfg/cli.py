"""Batch front end: configuration parsing, experiment orchestration, and
CSV/PGM emission.

Configuration comes from an optional JSON file plus command-line flags;
flags win.  Every output file starts with a single ``#``-prefixed JSON
line holding the fully resolved configuration (including the seed), so any
artifact can be regenerated bit-exactly from its own header.

Exit codes: 0 success, 1 runtime failure (with step context when the
simulation blew up), 2 invalid configuration (with field diagnostics).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass

import numpy as np

from .analytic import (DEFAULT_ALPHAS, DeviceProbs, cce_margin,
                       finite_n_gap_oracle, region_sweep)
from .correlation import build_example_device, null_band, verify_consistency
from .engine import SimulationError, TimeGrid, mckean_vlasov_fixed_point
from .equilibrium import cce_gap_nplayer, mean_field_gap_mc, poc_curve
from .model import build_bang_bang_model

COMMANDS = ("region", "gap", "mfgap", "poc", "consistency", "mkv")


class ConfigError(ValueError):
    """Invalid configuration; carries per-field diagnostics."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.problems))


@dataclass(frozen=True)
class RunConfig:
    command: str
    a: float = -1.0
    b: float = 1.0
    c: float = 1.0
    T: float = 2.0
    p: tuple = (0.5, 0.3, 0.2, 0.0)
    resolution: int = 101
    alpha: tuple = DEFAULT_ALPHAS
    N: tuple = (50, 200, 500)
    reps: int = 2000
    steps: int = 200
    deviations: int = 21
    particles: int = 10000
    max_iters: int = 25
    tol: float = 0.02
    action: float | None = None       # mkv strategy; defaults to b
    seed: int = 0
    out: str = "out"
    workers: int = 0                  # 0 -> CCEMFG_WORKERS env or serial


def config_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)
    for key in ("p", "alpha", "N"):
        d[key] = list(d[key])
    return d


def parse_config(data: dict) -> RunConfig:
    """Validate a plain dict into a RunConfig; collects field diagnostics."""
    problems = []
    known = {f.name for f in dataclasses.fields(RunConfig)}
    for key in data:
        if key not in known:
            problems.append((key, "unknown field"))
    if problems:
        raise ConfigError(problems)

    merged = {f.name: f.default for f in dataclasses.fields(RunConfig)}
    merged.update(data)

    def check(field, ok, msg):
        if not ok:
            problems.append((field, msg))

    check("command", merged.get("command") in COMMANDS,
          f"must be one of {COMMANDS}")
    for key in ("a", "b", "c", "T", "tol"):
        try:
            merged[key] = float(merged[key])
        except (TypeError, ValueError):
            problems.append((key, "must be a real number"))
    for key in ("resolution", "reps", "steps", "deviations", "particles",
                "max_iters", "seed", "workers"):
        try:
            merged[key] = int(merged[key])
        except (TypeError, ValueError):
            problems.append((key, "must be an integer"))
    if not problems:
        check("a", merged["a"] < 0.0, "must be negative")
        check("b", merged["b"] > 0.0, "must be positive")
        check("c", merged["c"] > 0.0, "must be positive")
        check("T", merged["T"] > 0.0, "must be positive")
        check("reps", merged["reps"] >= 1, "must be at least 1")
        check("steps", merged["steps"] >= 1, "must be at least 1")
        check("resolution", merged["resolution"] >= 2, "must be at least 2")
        check("deviations", merged["deviations"] >= 3, "must be at least 3")
        check("workers", merged["workers"] >= 0, "must be nonnegative")
        check("tol", merged["tol"] > 0.0, "must be positive")
    try:
        p = tuple(float(v) for v in merged["p"])
        if len(p) != 4:
            raise ValueError
        merged["p"] = p
        DeviceProbs(*p)
    except (TypeError, ValueError) as exc:
        problems.append(("p", str(exc) or "must be 4 probabilities summing to 1"))
    try:
        alpha = tuple(float(v) for v in np.atleast_1d(merged["alpha"]))
        merged["alpha"] = alpha
        if any(not 0.0 <= v <= 1.0 for v in alpha):
            problems.append(("alpha", "entries must lie in [0, 1]"))
    except (TypeError, ValueError):
        problems.append(("alpha", "must be a list of reals"))
    try:
        Ns = tuple(int(v) for v in np.atleast_1d(merged["N"]))
        merged["N"] = Ns
        if any(v < 2 for v in Ns):
            problems.append(("N", "entries must be at least 2"))
    except (TypeError, ValueError):
        problems.append(("N", "must be a list of integers"))
    if merged.get("action") is not None:
        try:
            merged["action"] = float(merged["action"])
        except (TypeError, ValueError):
            problems.append(("action", "must be a real number"))
    if not isinstance(merged.get("out"), str) or not merged["out"]:
        problems.append(("out", "must be a nonempty path"))
    if problems:
        raise ConfigError(problems)
    return RunConfig(**merged)


def _parse_list(text: str):
    return [v for v in text.replace(",", " ").split() if v]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ccemfg",
        description="coarse correlated equilibria for mean field games: "
                    "region sweeps, deviation gaps, chaos/consistency checks")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", help="JSON configuration file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--N", help="comma-separated player counts")
    ap.add_argument("--reps", type=int)
    ap.add_argument("--steps", type=int)
    ap.add_argument("--resolution", type=int)
    ap.add_argument("--alpha", help="comma-separated mixing parameters")
    ap.add_argument("--p", help="device probabilities p11,p12,p21,p22")
    ap.add_argument("--a", type=float)
    ap.add_argument("--b", type=float)
    ap.add_argument("--c", type=float)
    ap.add_argument("--T", type=float)
    ap.add_argument("--deviations", type=int)
    ap.add_argument("--particles", type=int)
    ap.add_argument("--max-iters", dest="max_iters", type=int)
    ap.add_argument("--tol", type=float)
    ap.add_argument("--action", type=float, help="constant strategy for mkv")
    return ap


def resolve_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    data: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError([("config", str(exc))])
        except json.JSONDecodeError as exc:
            raise ConfigError([("config", f"line {exc.lineno}: {exc.msg}")])
        if not isinstance(data, dict):
            raise ConfigError([("config", "top level must be a JSON object")])
    data["command"] = args.command
    for key in ("seed", "out", "workers", "reps", "steps", "resolution",
                "a", "b", "c", "T", "deviations", "particles", "max_iters",
                "tol", "action"):
        val = getattr(args, key)
        if val is not None:
            data[key] = val
    if args.N is not None:
        data["N"] = _parse_list(args.N)
    if args.alpha is not None:
        data["alpha"] = _parse_list(args.alpha)
    if args.p is not None:
        parts = _parse_list(args.p)
        if len(parts) != 4:
            raise ConfigError([("p", "need exactly 4 probabilities")])
        data["p"] = parts
    return parse_config(data)


def _csv_path(out: str) -> str:
    return out if out.endswith(".csv") else out + ".csv"


def _base_path(out: str) -> str:
    for suffix in (".csv", ".pgm"):
        if out.endswith(suffix):
            return out[: -len(suffix)]
    return out


def _write_csv(path, header: dict, columns, rows) -> None:
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v)
                              for v in row) + "\n")


def _run_region(cfg: RunConfig):
    base = _base_path(cfg.out)
    for alpha in cfg.alpha:
        grid = region_sweep(cfg.resolution, alpha, cfg.a, cfg.b)
        header = config_dict(cfg)
        header["alpha"] = [alpha]
        grid.to_csv(f"{base}_alpha{alpha:g}.csv", header=header)
        grid.to_pgm(f"{base}_alpha{alpha:g}.pgm", header=header)
        print(f"alpha={alpha:g}: {int(grid.is_cce.sum())} equilibrium cells "
              f"of {int(grid.feasible.sum())} feasible "
              f"-> {base}_alpha{alpha:g}.csv/.pgm")


def _run_gap(cfg: RunConfig):
    model = build_bang_bang_model(cfg.a, cfg.b, cfg.c, cfg.T)
    probs = DeviceProbs(*cfg.p)
    device = build_example_device(probs, cfg.a, cfg.b)
    grid = TimeGrid(cfg.T, cfg.steps)
    rows = []
    for N in cfg.N:
        oracle = finite_n_gap_oracle(probs, cfg.a, cfg.b, cfg.c, cfg.T, N)
        rep = cce_gap_nplayer(model, device, N, deviations=cfg.deviations,
                              reps=cfg.reps, seed=cfg.seed, grid=grid,
                              workers=cfg.workers, oracle=oracle)
        rows.append((N, cfg.reps, rep.epsilon_hat, rep.raw_gap, rep.raw_se,
                     rep.epsilon_ci[0], rep.epsilon_ci[1], rep.best_deviation,
                     rep.j_rec.mean, rep.j_rec.std_error, oracle))
        print(f"N={N}: eps_hat={rep.epsilon_hat:.6g} "
              f"(raw {rep.raw_gap:.6g} +- {rep.raw_se:.2g}, oracle {oracle:.6g})")
    _write_csv(_csv_path(cfg.out), config_dict(cfg),
               ["N", "reps", "eps_hat", "raw_gap", "raw_se", "ci_lo", "ci_hi",
                "best_deviation", "j_rec", "j_rec_se", "oracle"], rows)


def _run_mfgap(cfg: RunConfig):
    model = build_bang_bang_model(cfg.a, cfg.b, cfg.c, cfg.T)
    probs = DeviceProbs(*cfg.p)
    device = build_example_device(probs, cfg.a, cfg.b)
    grid = TimeGrid(cfg.T, cfg.steps)
    margin = cce_margin(probs, cfg.a, cfg.b)
    oracle = cfg.c * cfg.T * cfg.T * max(0.0, -margin)
    rep = mean_field_gap_mc(model, device, deviations=cfg.deviations,
                            reps=cfg.reps, seed=cfg.seed, grid=grid,
                            workers=cfg.workers, oracle=oracle)
    _write_csv(_csv_path(cfg.out), config_dict(cfg),
               ["reps", "eps_hat", "raw_gap", "raw_se", "ci_lo", "ci_hi",
                "best_deviation", "margin", "oracle"],
               [(cfg.reps, rep.epsilon_hat, rep.raw_gap, rep.raw_se,
                 rep.epsilon_ci[0], rep.epsilon_ci[1], rep.best_deviation,
                 margin, oracle)])
    print(f"eps_hat={rep.epsilon_hat:.6g} (raw {rep.raw_gap:.6g} "
          f"+- {rep.raw_se:.2g}, oracle {oracle:.6g})")


def _run_poc(cfg: RunConfig):
    model = build_bang_bang_model(cfg.a, cfg.b, cfg.c, cfg.T)
    device = build_example_device(DeviceProbs(*cfg.p), cfg.a, cfg.b)
    grid = TimeGrid(cfg.T, cfg.steps)
    res = poc_curve(model, device, cfg.N, reps=cfg.reps, seed=cfg.seed,
                    grid=grid, workers=cfg.workers)
    rows = []
    for i, N in enumerate(res.Ns):
        rows.append((N, "all", float(res.overall[i])))
        for label, vals in res.per_class.items():
            rows.append((N, label, float(vals[i])))
        print(f"N={N}: sup_t E[W2^2] = {res.overall[i]:.6g}")
    _write_csv(_csv_path(cfg.out), config_dict(cfg),
               ["N", "class", "sup_w2_sq"], rows)


def _run_consistency(cfg: RunConfig):
    model = build_bang_bang_model(cfg.a, cfg.b, cfg.c, cfg.T)
    device = build_example_device(DeviceProbs(*cfg.p), cfg.a, cfg.b)
    grid = TimeGrid(cfg.T, cfg.steps)
    report = verify_consistency(model, device, grid, cfg.reps, cfg.seed)
    report.to_csv(_csv_path(cfg.out), header=config_dict(cfg))
    classes = device.flow_classes()
    for cl in report.classes:
        band = null_band(classes[cl.label]["flow"], grid.times, cl.count,
                         cfg.seed)
        verdict = "consistent" if cl.sup_w2 <= band else "INCONSISTENT"
        print(f"class {cl.label}: sup_t W2 = {cl.sup_w2:.4g}, "
              f"null band = {band:.4g} -> {verdict}"
              + (" (low sample count)" if cl.flagged else ""))


def _run_mkv(cfg: RunConfig):
    model = build_bang_bang_model(cfg.a, cfg.b, cfg.c, cfg.T)
    grid = TimeGrid(cfg.T, cfg.steps)
    action = cfg.b if cfg.action is None else cfg.action
    res = mckean_vlasov_fixed_point(model, grid, action, cfg.particles,
                                    cfg.max_iters, cfg.tol, cfg.seed)
    base = _base_path(cfg.out)
    times = res.flow.times
    _write_csv(base + ".csv", config_dict(cfg), ["t", "mean", "var"],
               [(float(t), float(res.flow.mean(float(t))),
                 float(res.flow.var(float(t)))) for t in times])
    _write_csv(base + "_trace.csv", config_dict(cfg),
               ["iteration", "w2_to_previous"],
               [(i + 1, d) for i, d in enumerate(res.distances)])
    status = "converged" if res.converged else "DID NOT CONVERGE"
    print(f"{status} in {res.iterations} iterations; "
          f"terminal mean {res.flow.mean(times[-1]):.4g}, "
          f"var {res.flow.var(times[-1]):.4g}")


_RUNNERS = {"region": _run_region, "gap": _run_gap, "mfgap": _run_mfgap,
            "poc": _run_poc, "consistency": _run_consistency, "mkv": _run_mkv}


def main(argv=None) -> int:
    try:
        cfg = resolve_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        for field, msg in exc.problems:
            print(f"config error: {field}: {msg}", file=sys.stderr)
        return 2
    try:
        _RUNNERS[cfg.command](cfg)
    except SimulationError as exc:
        print(f"simulation failed at step {exc.step}: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

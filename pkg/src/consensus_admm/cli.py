"""Command-line interface: ``generate``, ``solve``, ``benchmark`` and ``track``.

Every command reads a JSON config (``--config``), applies flag overrides,
validates the whole config, and only then writes anything.  Outputs carry
the sha256 of the canonical effective config and the seed.

Exit codes: 0 success, 1 usage or config error, 2 data error,
3 non-convergence.  The log level comes from ``CONSENSUS_ADMM_LOG_LEVEL``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .core import (
    ConstraintSet,
    GroupMap,
    InvalidProblemError,
    LossKind,
    PenaltyFamily,
    ProblemSpec,
    SolverOptions,
)
from .data import DataError, SyntheticDesign, gen_synthetic, load_csv, read_numeric_csv, split_train_test, standardize
from .engine import lambda_grid, lambda_grid_solve, lla_solve, solve
from .metrics import annual_tracking_error, estimation_errors, prediction_errors, support_stats

__all__ = ["main", "build_parser", "config_hash", "EXIT_OK", "EXIT_CONFIG", "EXIT_DATA", "EXIT_NONCONVERGED"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NONCONVERGED = 3

LOG_ENV = "CONSENSUS_ADMM_LOG_LEVEL"

log = logging.getLogger("consensus_admm.cli")


class ConfigError(Exception):
    """Invalid configuration or usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical config; the output location is not part of it."""
    canonical = json.dumps({k: v for k, v in cfg.items() if k != "output"}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        nxt = node.setdefault(k, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"cannot set {dotted!r}: {k!r} is not an object")
        node = nxt
    node[keys[-1]] = value


def load_config(args) -> dict:
    cfg: dict = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(cfg)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key.path=value, got {item!r}")
        key, val = item.split("=", 1)
        _set_path(cfg, key.strip(), _parse_value(val))
    flag_paths = {
        "seed": "seed",
        "M": "problem.M",
        "mu": "problem.mu",
        "lambda1": "problem.penalty.lambda1",
        "lambda2": "problem.penalty.lambda2",
        "threads": "problem.options.threads",
        "output": "output",
    }
    for attr, path in flag_paths.items():
        val = getattr(args, attr, None)
        if val is not None:
            _set_path(cfg, path, val)
    return cfg


def _section(cfg: dict, key: str) -> dict:
    val = cfg.get(key, {})
    if not isinstance(val, dict):
        raise ConfigError(f"config key {key!r} must be an object")
    return val


def _check_keys(section: dict, allowed, where: str) -> None:
    extra = sorted(set(section) - set(allowed))
    if extra:
        raise ConfigError(f"unknown keys in {where}: {extra}")


def build_design(cfg: dict, seed: int) -> SyntheticDesign:
    d = dict(cfg)
    _check_keys(d, ("n", "p", "rho", "regime", "snr", "n_groups", "n_active", "seed"), "synthetic design")
    if "n" not in d or "p" not in d:
        raise ConfigError("synthetic design needs n and p")
    d["seed"] = int(d.get("seed", seed))
    try:
        return SyntheticDesign(**d)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def build_problem(cfg: dict, p: int) -> ProblemSpec:
    prob = _section(cfg, "problem")
    _check_keys(prob, ("loss", "penalty", "constraint", "M", "mu", "options"), "problem")
    loss_cfg = prob.get("loss", {"kind": "least_squares"})
    if isinstance(loss_cfg, str):
        loss_cfg = {"kind": loss_cfg}
    _check_keys(loss_cfg, ("kind", "tau", "delta", "huber_variant"), "problem.loss")
    loss = LossKind(**loss_cfg)
    pen = dict(prob.get("penalty", {}))
    _check_keys(pen, ("family", "lambda1", "lambda2", "a", "groups", "n_groups"), "problem.penalty")
    lambda2 = pen.get("lambda2")
    if lambda2 is None:
        lambda2 = math.sqrt(math.log(max(p, 2)) / max(int(cfg.get("_n", 1)), 1))
    groups = None
    if "groups" in pen:
        groups = GroupMap(np.asarray(pen["groups"]))
    elif "n_groups" in pen:
        groups = GroupMap.contiguous(p, int(pen["n_groups"]))
    penalty = PenaltyFamily.from_name(pen.get("family", "enet"), float(pen.get("lambda1", 0.0)),
                                      float(lambda2), groups, pen.get("a"))
    con = prob.get("constraint", {"kind": "none"})
    if isinstance(con, str):
        con = {"kind": con}
    _check_keys(con, ("kind", "lo", "hi"), "problem.constraint")
    constraint = ConstraintSet(con.get("kind", "none"), con.get("lo"), con.get("hi"))
    opts = prob.get("options", {})
    _check_keys(opts, SolverOptions.__dataclass_fields__, "problem.options")
    return ProblemSpec(loss, penalty, constraint, int(prob.get("M", 1)), float(prob.get("mu", 1.0)),
                       SolverOptions(**opts))


def load_data(cfg: dict, seed: int):
    """Return ``(X, y, beta_true or None, column names)`` from the single data source."""
    src = _section(cfg, "data")
    keys = [k for k in ("synthetic", "dir", "csv") if k in src]
    if len(keys) != 1:
        raise ConfigError(f"config needs exactly one data source among synthetic/dir/csv, got {keys or 'none'}")
    kind = keys[0]
    if kind == "synthetic":
        X, y, beta = gen_synthetic(build_design(src["synthetic"], seed))
        return X, y, beta, [f"x{j + 1}" for j in range(X.shape[1])]
    if kind == "dir":
        root = Path(src["dir"])
        for name in ("X.csv", "y.csv"):
            if not (root / name).is_file():
                raise DataError(f"data directory {root} has no {name}")
        X, names = read_numeric_csv(root / "X.csv")
        y, _ = read_numeric_csv(root / "y.csv")
        if y.shape[1] != 1 or y.shape[0] != X.shape[0]:
            raise DataError(f"{root / 'y.csv'} must be a single column with {X.shape[0]} rows")
        beta = None
        if (root / "beta_true.csv").is_file():
            beta = read_numeric_csv(root / "beta_true.csv")[0][:, 0]
        return X, y[:, 0], beta, names
    c = src["csv"]
    if isinstance(c, str):
        c = {"path": c}
    _check_keys(c, ("path", "response", "delimiter"), "data.csv")
    if "path" not in c:
        raise ConfigError("data.csv needs a path")
    if not Path(c["path"]).is_file():
        raise DataError(f"data file {c['path']} does not exist")
    X, y, names = load_csv(c["path"], c.get("response", -1), c.get("delimiter", ","))
    return X, y, None, names


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return repr(float(v))


def _write_matrix(path: Path, A: np.ndarray, header) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in np.atleast_2d(A):
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, rows: list, fields) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _output_dir(cfg: dict) -> Path:
    out = Path(cfg.get("output", "out"))
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    return out


def _provenance(cfg: dict, seed: int) -> dict:
    return {"config_hash": config_hash(cfg), "seed": seed}


def _run_solver(problem: ProblemSpec, X, y, L: int):
    if problem.penalty.convex:
        return solve(problem, X, y)
    return lla_solve(problem, X, y, L=L)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(cfg: dict) -> int:
    seed = int(cfg.get("seed", 0))
    _check_keys(cfg, ("seed", "design", "output"), "config")
    design = build_design(_section(cfg, "design"), seed)
    out = _output_dir(cfg)
    X, y, beta = gen_synthetic(design)
    out.mkdir(parents=True, exist_ok=True)
    _write_matrix(out / "X.csv", X, [f"x{j + 1}" for j in range(design.p)])
    _write_matrix(out / "y.csv", y[:, None], ["y"])
    _write_matrix(out / "beta_true.csv", beta[:, None], ["beta"])
    _write_json(out / "manifest.json", {
        **_provenance(cfg, design.seed),
        "design": design.to_dict(),
        "generator": "numpy PCG64 / SeedSequence.spawn(4)",
        "files": ["X.csv", "y.csv", "beta_true.csv"],
    })
    log.info("wrote dataset n=%d p=%d to %s", design.n, design.p, out)
    return EXIT_OK


_SOLVE_KEYS = ("seed", "data", "problem", "standardize", "lla", "output")


def cmd_solve(cfg: dict) -> int:
    _check_keys(cfg, _SOLVE_KEYS, "config")
    seed = int(cfg.get("seed", 0))
    X, y, beta_true, names = load_data(cfg, seed)
    problem = build_problem({**cfg, "_n": X.shape[0]}, X.shape[1])
    if problem.M > X.shape[0]:
        raise InvalidProblemError(f"cannot split n={X.shape[0]} rows into M={problem.M} shards")
    X, y, transform = standardize(X, y, cfg.get("standardize", "none"))
    L = int(_section(cfg, "lla").get("L", 3))
    out = _output_dir(cfg)
    report = _run_solver(problem, X, y, L)
    out.mkdir(parents=True, exist_ok=True)
    solution = {
        **_provenance(cfg, seed),
        "family": problem.penalty.name,
        "loss": problem.loss.to_dict(),
        "penalty": {k: v for k, v in problem.penalty.to_dict().items() if k != "groups"},
        "M": problem.M,
        "mu": problem.mu,
        "beta": [float(v) for v in report.beta],
        "objective": float(report.objective),
        "iterations": int(report.iterations),
        "converged": bool(report.converged),
        "nnz": report.nnz,
    }
    if report.outer:
        solution["lla_steps"] = [{k: snap[k] for k in ("step", "iterations", "converged", "nnz", "objective")}
                                 for snap in report.outer]
    if beta_true is not None and beta_true.shape == report.beta.shape:
        aae, ase = estimation_errors(report.beta, beta_true)
        solution["estimation"] = {"aae": aae, "ase": ase}
    _write_json(out / "solution.json", solution)
    _write_rows(out / "history.csv",
                [{"iteration": i + 1, "primal": _fmt(h.primal), "dual": _fmt(h.dual),
                  "objective": _fmt(h.objective), "h_norm_sq": _fmt(h.h_norm_sq)}
                 for i, h in enumerate(report.history)],
                ("iteration", "primal", "dual", "objective", "h_norm_sq"))
    _write_json(out / "timing.json", {**_provenance(cfg, seed), **{k: float(v) for k, v in report.timings.items()}})
    if not report.converged:
        log.error("solver did not converge in %d iterations", report.iterations)
        return EXIT_NONCONVERGED
    return EXIT_OK


_METRIC_FIELDS = ("aae", "ase", "aap", "asp", "tpr", "fpr", "nnz", "iterations", "wall_time")


def cmd_benchmark(cfg: dict) -> int:
    _check_keys(cfg, ("seed", "data", "problem", "benchmark", "lla", "output"), "config")
    seed = int(cfg.get("seed", 0))
    bench = _section(cfg, "benchmark")
    _check_keys(bench, ("M_list", "repeats", "seeds", "n_test"), "benchmark")
    src = _section(cfg, "data")
    if set(src) != {"synthetic"}:
        raise ConfigError("benchmark needs a synthetic data source")
    base = build_design(src["synthetic"], seed)
    M_list = [int(m) for m in bench.get("M_list", [1])]
    repeats = int(bench.get("repeats", 1))
    seeds = [int(s) for s in bench.get("seeds", [base.seed + r for r in range(repeats)])]
    if len(seeds) != repeats or repeats < 1 or not M_list:
        raise ConfigError("benchmark needs repeats >= 1, a nonempty M_list and one seed per repeat")
    n_test = int(bench.get("n_test", max(1, base.n // 4)))
    for M in M_list:
        if not 1 <= M <= base.n:
            raise ConfigError(f"M={M} must lie in [1, n={base.n}]")
    template = build_problem({**cfg, "_n": base.n}, base.p)
    L = int(_section(cfg, "lla").get("L", 3))
    out = _output_dir(cfg)

    raw = []
    for M in M_list:
        problem = template.replace(M=M)
        for r, s in enumerate(seeds):
            design = SyntheticDesign(**{**base.to_dict(), "n": base.n + n_test, "seed": s})
            X, y, beta = gen_synthetic(design)
            (Xtr, ytr), (Xte, yte) = split_train_test(X, y, base.n)
            row = {"M": M, "repeat": r, "seed": s, "converged": "", "error": ""}
            try:
                t0 = time.perf_counter()
                rep = _run_solver(problem, Xtr, ytr, L)
                wall = time.perf_counter() - t0
            except (InvalidProblemError, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
                row["error"] = str(exc)
                raw.append(row)
                continue
            aae, ase = estimation_errors(rep.beta, beta)
            aap, asp = prediction_errors(Xte, yte, rep.beta)
            sup = support_stats(rep.beta, beta)
            row.update(aae=aae, ase=ase, aap=aap, asp=asp, tpr=sup.tpr, fpr=sup.fpr, nnz=rep.nnz,
                       iterations=rep.iterations, wall_time=wall, converged=rep.converged)
            raw.append(row)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "raw.csv", raw, ("M", "repeat", "seed") + _METRIC_FIELDS + ("converged", "error"))
    agg = []
    for M in M_list:
        rows = [r for r in raw if r["M"] == M and not r["error"]]
        line = {"M": M, "runs": len(rows), "failures": sum(1 for r in raw if r["M"] == M and r["error"])}
        for f in _METRIC_FIELDS:
            vals = np.array([float(r[f]) for r in rows], dtype=float)
            line[f"{f}_mean"] = float(vals.mean()) if vals.size else float("nan")
            line[f"{f}_sd"] = float(vals.std(ddof=1)) if vals.size > 1 else float("nan")
        agg.append(line)
    fields = ["M", "runs", "failures"] + [f"{f}_{s}" for f in _METRIC_FIELDS for s in ("mean", "sd")]
    _write_rows(out / "aggregate.csv", agg, fields)
    _write_json(out / "benchmark.json", {**_provenance(cfg, seed), "M_list": M_list, "seeds": seeds})
    return EXIT_OK


def cmd_track(cfg: dict) -> int:
    _check_keys(cfg, ("seed", "data", "problem", "track", "output"), "config")
    seed = int(cfg.get("seed", 0))
    tr = _section(cfg, "track")
    _check_keys(tr, ("K", "n_train", "grid_size", "grid_scale", "tolerance"), "track")
    if "K" not in tr:
        raise ConfigError("track needs a target count K")
    X, y, _, names = load_data(cfg, seed)
    n, p = X.shape
    K = int(tr["K"])
    if not 0 <= K <= p:
        raise ConfigError(f"K={K} must lie in [0, p={p}]")
    n_train = int(tr.get("n_train", (2 * n) // 3))
    (Xtr, ytr), (Xte, yte) = split_train_test(X, y, n_train)
    problem = build_problem({**cfg, "_n": n_train}, p)
    problem = problem.replace(constraint=ConstraintSet.nonnegative())
    grid1 = lambda_grid(n_train, p, int(tr.get("grid_size", 50)), float(tr.get("grid_scale", 100.0)))
    tolerance = int(tr.get("tolerance", 0))
    out = _output_dir(cfg)
    points = lambda_grid_solve(problem, Xtr, ytr, [(l1, problem.penalty.lambda2) for l1 in grid1])
    ok = [pt for pt in points if pt.report is not None]
    if not ok:
        raise RuntimeError("every grid point failed")
    best = min(ok, key=lambda pt: (abs(pt.nnz - K), pt.lambda1))
    w = best.report.beta
    sel = [int(j) for j in np.flatnonzero(np.abs(w) > 1e-8)]
    out.mkdir(parents=True, exist_ok=True)
    result = {
        **_provenance(cfg, seed),
        "K": K,
        "selected_lambda1": best.lambda1,
        "lambda2": problem.penalty.lambda2,
        "nnz": best.nnz,
        "within_tolerance": abs(best.nnz - K) <= tolerance,
        "selected_columns": [names[j] for j in sel],
        "weights": {names[j]: float(w[j]) for j in sel},
        "train_ate": annual_tracking_error(ytr - Xtr @ w),
        "test_ate": annual_tracking_error(yte - Xte @ w) if yte.size >= 2 else None,
        "grid": [{"lambda1": pt.lambda1, "nnz": pt.nnz, "error": pt.error} for pt in points],
    }
    if not result["within_tolerance"]:
        log.warning("no grid point has %d nonzeros; nearest has %d", K, best.nnz)
    _write_json(out / "track.json", result)
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "benchmark": cmd_benchmark, "track": cmd_track}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="consensus-admm", description="Consensus ADMM for penalized regression.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", "") + " command")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                        help="override a config entry (value parsed as JSON when possible)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--output", help="output directory")
        if name != "generate":
            sp.add_argument("--M", type=int, help="number of shards")
            sp.add_argument("--mu", type=float)
            sp.add_argument("--lambda1", type=float)
            sp.add_argument("--lambda2", type=float)
            sp.add_argument("--threads", type=int, help="cap on worker threads")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg)
    except (ConfigError, InvalidProblemError, TypeError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

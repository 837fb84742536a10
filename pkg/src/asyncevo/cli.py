"""Command line: ``asyncevo {run, ablate, fit, frontier, verify}``.

Exit codes: 0 success, 1 runtime failure (or a failed check), 2 usage or
config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import scaling
from .audit import full_audit
from .config import ConfigError, Experiment, load_experiment
from .evaluation import EvalKind, EvalMode
from .orchestrator import RunConfig, run
from .workers import OperatorType

log = logging.getLogger("asyncevo")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
SUITES = ("gpus", "evolution", "hce", "operators")
DEFAULT_BUDGETS = (8.0, 24.0, 72.0, 192.0, 576.0)


class UsageError(Exception):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _checkpoints(text: str):
    vals = _float_list(text)
    if len(vals) == 1 and vals[0].is_integer() and "." not in text:
        return int(vals[0])
    return vals


def _apply_overrides(exp: Experiment, args) -> Experiment:
    cfg = exp.run
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["master_seed"] = args.seed
        exp.seeds = [args.seed]
    if getattr(args, "checkpoints", None) is not None:
        changes["checkpoints"] = args.checkpoints
    if changes:
        try:
            cfg = replace(cfg, **changes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    exp.run = cfg
    if getattr(args, "out_dir", None):
        exp.out_dir = args.out_dir
    return exp


def selected_test_column(config: RunConfig) -> str:
    """Trajectory column holding the test score of the arm's own pick."""
    if config.eval_mode.kind is EvalKind.SELF_REPORTED or not config.score_val:
        return "best_test_by_search"
    return "best_test_by_val"


def cmd_run(args) -> int:
    exp = _apply_overrides(load_experiment(args.config), args)
    out = Path(exp.out_dir)
    report = run(exp.run)
    report.write(out)
    exp.write_resolved(out)
    s = report.summary()
    print(f"{exp.name}: {s['n_candidates']} candidates, final test {json.dumps(s['final_test'], sort_keys=True)}")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------- ablations


def ablation_arms(exp: Experiment, suite: str) -> list[tuple[str, RunConfig]]:
    """``[(label, config), ...]`` with the full system first."""
    base = exp.run
    ab = exp.ablation
    if suite == "gpus":
        ns = sorted({int(n) for n in ab["n_values"]}, reverse=True)
        if len(ns) < 2:
            raise ConfigError("the gpus suite needs at least two n_values")
        return [(f"n{n}", replace(base, n_workers=n)) for n in ns]
    if suite == "evolution":
        return [("evolution", replace(base, search_strategy="evolution")), ("best_of_k", replace(base, search_strategy="best_of_k"))]
    if suite == "hce":
        return [
            ("hce", replace(base, eval_mode=EvalMode())),
            ("self_reported", replace(base, eval_mode=EvalMode(**ab["self_reported"]))),
        ]
    if suite == "operators":
        kind = OperatorType(ab["operator_kind"])
        return [
            ("multi_step", replace(base, operator=replace(base.operator, kind=OperatorType.MULTI_STEP))),
            (kind.value, replace(base, operator=replace(base.operator, kind=kind, max_steps=1 if kind is OperatorType.SINGLE_TURN else base.operator.max_steps))),
        ]
    raise ConfigError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


def degradation_checkpoint(times, values) -> float | None:
    """First checkpoint where a best-so-far series falls below its running peak."""
    peak = -math.inf
    for t, v in zip(times, values):
        if v is None or (isinstance(v, float) and math.isnan(v)):
            continue
        if v < peak:
            return float(t)
        peak = max(peak, v)
    return None


def mean_se(values) -> tuple[float, float]:
    v = np.asarray([x for x in values if x is not None and not math.isnan(x)], dtype=float)
    if v.size == 0:
        return math.nan, math.nan
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(np.mean(v)), se


def run_ablation(exp: Experiment, suite: str) -> dict:
    arms = ablation_arms(exp, suite)
    series: dict[str, dict[int, list]] = {label: {} for label, _ in arms}
    finals: dict[str, dict[int, float | None]] = {label: {} for label, _ in arms}
    times = None
    for seed in exp.seeds:
        for label, cfg in arms:
            cfg = replace(cfg, master_seed=seed)
            report = run(cfg)
            col = selected_test_column(cfg)
            times = [row["time"] for row in report.trajectory]
            series[label][seed] = [row[col] for row in report.trajectory]
            finals[label][seed] = series[label][seed][-1]

    table = []
    for label, _ in arms:
        for k, t in enumerate(times):
            m, se = mean_se([series[label][s][k] for s in exp.seeds])
            table.append({"arm": label, "time": t, "mean": m, "se": se, "n_seeds": len(exp.seeds)})

    base_label, ablated = arms[0][0], [label for label, _ in arms[1:]]
    deltas = []
    for label in ablated:
        for seed in exp.seeds:
            for k, t in enumerate(times):
                b, a = series[base_label][seed][k], series[label][seed][k]
                d = None if a is None or b is None else b - a
                deltas.append({"seed": seed, "arm": label, "time": t, "base": b, "ablation": a, "delta": d})

    markers = []
    if suite == "hce":
        for seed in exp.seeds:
            markers.append({"seed": seed, "degraded_at": degradation_checkpoint(times, series[ablated[0]][seed])})
    return {"suite": suite, "arms": [label for label, _ in arms], "table": table, "deltas": deltas, "markers": markers}


def _write_csv(path: Path, rows: list[dict], columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({c: "" if row.get(c) is None else row[c] for c in columns})


def cmd_ablate(args) -> int:
    exp = _apply_overrides(load_experiment(args.config), args)
    if args.seed is None and args.seeds:
        exp.seeds = args.seeds
    result = run_ablation(exp, args.suite)
    out = Path(exp.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    exp.write_resolved(out)
    _write_csv(out / f"ablation_{args.suite}.csv", result["table"], ("arm", "time", "mean", "se", "n_seeds"))
    _write_csv(out / f"ablation_{args.suite}_deltas.csv", result["deltas"], ("seed", "arm", "time", "base", "ablation", "delta"))
    if result["markers"]:
        _write_csv(out / f"ablation_{args.suite}_degradation.csv", result["markers"], ("seed", "degraded_at"))

    last = max(r["time"] for r in result["table"])
    print(f"suite {args.suite}, seeds {exp.seeds}")
    for row in result["table"]:
        if row["time"] == last:
            print(f"  {row['arm']:>14}  {row['mean']:.4f} +/- {row['se']:.4f}")
    for m in result["markers"]:
        print(f"  seed {m['seed']}: degraded at {m['degraded_at']}")
    print(f"wrote {out}")
    return EXIT_OK


# ---------------------------------------------------------------- scaling law


def cmd_fit(args) -> int:
    try:
        points = scaling.read_points_csv(args.csv)
    except OSError as exc:
        raise UsageError(f"cannot read {args.csv}: {exc}") from exc
    except ValueError as exc:
        raise UsageError(f"malformed CSV {args.csv}: {exc}") from exc
    frozen = {"beta": args.freeze_beta} if args.freeze_beta is not None else None
    try:
        result = scaling.fit(points, frozen=frozen, seed=args.seed or 0)
    except (scaling.InsufficientDataError, scaling.DegenerateDataError) as exc:
        raise UsageError(str(exc)) from exc
    report = result.report(points)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit_report.json").write_text(text + "\n")
        _write_csv(out / "fit_residuals.csv", report["residuals"], ("n_agents", "time", "performance", "residual"))
    p = result.params
    tag = " (frozen)" if frozen else ""
    print(f"alpha={p.alpha:.6g} gamma={p.gamma:.6g} beta={p.beta:.6g}{tag}  R2={result.r_squared:.6f} RMSE={result.rmse:.4f}")
    return EXIT_OK


def cmd_frontier(args) -> int:
    params = scaling.ScalingParams(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    budgets = args.budgets or list(DEFAULT_BUDGETS)
    if any(c <= 0 for c in budgets):
        raise UsageError("budgets must be positive")
    rows = []
    for c in budgets:
        n_star, t_star = scaling.optimal_allocation(params, c)
        n_real, _ = scaling.continuous_optimum(params, c)
        rows.append(
            {
                "budget": c,
                "n_star": n_star,
                "t_star": t_star,
                "p_star": scaling.predict(params, n_star, t_star),
                "n_real": n_real,
                "p_continuous": scaling.closed_form_frontier(params, c),
            }
        )
    cols = ("budget", "n_star", "t_star", "p_star", "n_real", "p_continuous")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "frontier.csv", rows, cols)
    w = csv.DictWriter(sys.stdout, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return EXIT_OK


# ---------------------------------------------------------------- verify


def verify_checks(n_grid: int = 1000, seed: int = 0) -> list[tuple[str, bool, str]]:
    """Numerical checks of the allocation optimum plus a run-level invariant audit."""
    checks = []
    z = np.logspace(-6, 6, n_grid)
    rep = scaling.verify_stationarity(z)
    checks.append(("f increasing and f' > 0 (closed form vs finite difference)", rep.ok, f"max rel err {rep.max_rel_error:.2e}"))
    f1 = float(scaling.stationarity_f(1.0))
    checks.append(("f(1) = 2 log 2", abs(f1 - 2 * math.log(2)) <= 1e-12, f"{f1!r}"))

    params = scaling.REFERENCE_FIT
    worst = 0.0
    for c in np.logspace(-1, 4, 50):
        worst = max(worst, abs(scaling.continuous_frontier(params, c) - scaling.closed_form_frontier(params, c)))
    checks.append(("continuous frontier equals closed form", worst <= 1e-9, f"max abs diff {worst:.2e}"))

    eq = 0.0
    for c in np.logspace(-1, 4, 50):
        n, t = scaling.continuous_optimum(params, c)
        eq = max(eq, abs(math.log(params.gamma * t + 1) - math.log(params.beta * n + 1)))
    checks.append(("log terms equalize at the optimum", eq <= 1e-9, f"max diff {eq:.2e}"))

    for mode in (EvalMode(), EvalMode("self_reported", corruption_prob=0.02)):
        report = run(RunConfig(master_seed=seed, budget=24.0, eval_mode=mode))
        for name, problems in full_audit(report).items():
            checks.append((f"{mode.kind.value} run: {name}", not problems, problems[0] if problems else "clean"))
    return checks


def cmd_verify(args) -> int:
    checks = verify_checks(seed=args.seed or 0)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  [{detail}]")
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(
            json.dumps([{"check": n, "ok": ok, "detail": d} for n, ok, d in checks], indent=2) + "\n"
        )
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_RUNTIME


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asyncevo", description="Simulated asynchronous evolutionary search and scaling-law tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoints=True):
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out-dir", help="output directory (overrides the config)")
        if checkpoints:
            sp.add_argument("--checkpoints", type=_checkpoints, help="a count, or comma-separated times")

    sp = sub.add_parser("run", help="run one experiment from a JSON config")
    sp.add_argument("config")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ablate", help="full system vs one component removed, over seeds")
    sp.add_argument("suite", choices=SUITES)
    sp.add_argument("config")
    sp.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")], help="comma-separated seeds")
    common(sp)
    sp.set_defaults(func=cmd_ablate)

    sp = sub.add_parser("fit", help="fit the subagents-time law to a CSV of observations")
    sp.add_argument("csv")
    sp.add_argument("--freeze-beta", type=float, help="hold beta fixed and fit alpha, gamma only")
    common(sp, checkpoints=False)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("frontier", help="compute-optimal allocation table")
    sp.add_argument("--alpha", type=float, default=scaling.REFERENCE_FIT.alpha)
    sp.add_argument("--beta", type=float, default=scaling.REFERENCE_FIT.beta)
    sp.add_argument("--gamma", type=float, default=scaling.REFERENCE_FIT.gamma)
    sp.add_argument("--budgets", type=_float_list, help="comma-separated compute budgets")
    common(sp, checkpoints=False)
    sp.set_defaults(func=cmd_frontier)

    sp = sub.add_parser("verify", help="numerical optimum checks and run-level invariant audit")
    common(sp, checkpoints=False)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        if args.command in ("frontier",):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

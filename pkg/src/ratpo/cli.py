"""Command-line front end.

Subcommands: ``gen`` (synthetic data), ``features`` (feature table export),
``optimize`` (swarm run), ``oracle`` (brute-force enumeration) and ``sweep``
(hyperparameter grid).  Exit codes: 0 success, 1 degenerate problem,
2 configuration/usage error, 3 sweep with failed cells, 4 oracle budget
exceeded.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import datagen, fileio, oracle as oracle_mod, swarm as swarm_mod
from .features import FeatureLab, aggregate
from .instruments import build_universe
from .problem import ConstraintSpec, ProblemInstance, build_structure, riskfree_pnl
from .risk import VarConfig
from .swarm import RandomMode, RatsConfig

ENV_PROBLEM_CONFIG = "RATPO_PROBLEM_CONFIG"
ENV_RATS_CONFIG = "RATPO_RATS_CONFIG"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemConfig:
    beta: float = 0.01
    decay: float = 0.99
    tau_delta: float = 0.5
    tau_vega: float = 0.5
    tau_gamma: float = 0.5
    penalty_delta: float = 10.0
    penalty_vega: float = 10.0
    penalty_gamma: float = 10.0
    daycount: int = 360
    epsilon: float = 1e-9
    grid_points: int = 21
    derive_bounds: bool = True
    universe_tickers: Optional[tuple[str, ...]] = None


def load_problem_config(path: Optional[str]) -> ProblemConfig:
    if path is None:
        return ProblemConfig()
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "tau_g" in raw:
        tau = raw.pop("tau_g")
        raw.setdefault("tau_delta", tau)
        raw.setdefault("tau_vega", tau)
        raw.setdefault("tau_gamma", tau)
    known = {f.name for f in dataclasses.fields(ProblemConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown problem config keys {unknown}")
    if "universe_tickers" in raw and raw["universe_tickers"] is not None:
        raw["universe_tickers"] = tuple(raw["universe_tickers"])
    try:
        return ProblemConfig(**raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def load_rats_config(path: Optional[str], seed: Optional[int], threads: Optional[int]) -> RatsConfig:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    known = {f.name for f in dataclasses.fields(RatsConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown swarm config keys {unknown}")
    if "random_mode" in raw:
        raw["random_mode"] = RandomMode(raw["random_mode"])
    if seed is not None:
        raw["seed"] = seed
    if threads is not None:
        raw["threads"] = threads
    try:
        return RatsConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"swarm config: {exc}") from exc


def build_problem(data_dir: str, cfg: ProblemConfig) -> ProblemInstance:
    data = Path(data_dir)
    specs = fileio.load_universe(data / "universe.json")
    if cfg.universe_tickers is not None:
        wanted = set(cfg.universe_tickers)
        specs = [s for s in specs if s.ticker in wanted]
        missing = wanted - {s.ticker for s in specs}
        if missing:
            raise ConfigError(f"universe_tickers not in universe.json: {sorted(missing)}")
    market = fileio.load_market(data / "market.json")
    scenarios = fileio.load_scenarios(data / "scenarios.csv")
    portfolio = fileio.load_portfolio(data / "portfolio.csv")

    universe = build_universe(specs)
    lab = FeatureLab(market, scenarios, specs, day_count=cfg.daycount)
    table = lab.build_run_table(universe, portfolio)
    init = aggregate(table, portfolio)
    if "EUR" not in market.currencies:
        raise ConfigError("market.json must quote an EUR rate for the risk-free leg")
    pnl_rf = riskfree_pnl(init.value, market.currencies["EUR"].rate, cfg.daycount)
    structure = build_structure(
        specs, universe, grid_points=cfg.grid_points, table=table, base=init,
        derive_bounds=cfg.derive_bounds,
    )
    constraints = ConstraintSpec(
        tau_delta=cfg.tau_delta, tau_vega=cfg.tau_vega, tau_gamma=cfg.tau_gamma,
        base_delta=init.delta, base_vega=init.vega, base_gamma=init.gamma,
        penalty_delta=cfg.penalty_delta, penalty_vega=cfg.penalty_vega, penalty_gamma=cfg.penalty_gamma,
    )
    var_cfg = VarConfig(cfg.beta, cfg.decay, scenarios.count)
    return ProblemInstance(
        universe_ids=tuple(d.id for d in universe),
        structure=structure,
        table=table,
        init=init,
        pnl_rf=pnl_rf,
        var_cfg=var_cfg,
        constraints=constraints,
        epsilon=cfg.epsilon,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args: argparse.Namespace) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = datagen.gen_dataset(args.seed, profile=args.profile, scenario_count=args.scenarios)
    fileio.save_universe(dataset.universe_specs, out / "universe.json")
    fileio.save_market(dataset.market, out / "market.json")
    fileio.save_scenarios(dataset.scenarios, out / "scenarios.csv")
    fileio.save_portfolio(dataset.portfolio, out / "portfolio.csv")
    print(f"gen: wrote universe/market/scenarios/portfolio to {out} "
          f"({len(dataset.portfolio)} legs, {dataset.scenarios.count} scenarios)")
    return 0


def cmd_features(args: argparse.Namespace) -> int:
    cfg = load_problem_config(args.problem)
    problem = build_problem(args.data_dir, cfg)
    fileio.save_features(problem.table, args.out)
    print(f"features: wrote {len(problem.table)} instruments to {args.out}")
    return 0


def _write_trajectory(trajectory, path: Path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "best_fitness", "concentration", "stall", "wall_seconds"])
    for k, fit, chi, stall, wall in trajectory:
        writer.writerow([k, repr(fit), repr(chi), stall, repr(wall)])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")


def _slot_report(result: swarm_mod.RatsResult, problem: ProblemInstance) -> list[dict]:
    """Per-slot view of the chosen position, zero notionals included."""
    m = problem.structure.m
    rows = []
    for j, slot in enumerate(problem.structure.slots):
        idx = int(result.position[j])
        rows.append({
            "slot": j + 1,
            "instrument_id": problem.universe_ids[idx - 1],
            "notional": int(slot.grid[int(result.position[m + j])]),
        })
    return rows


def _write_result(result: swarm_mod.RatsResult, problem: ProblemInstance, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    b = result.breakdown
    payload = {
        "fitness": b.fitness,
        "objective": b.objective,
        "mean_pnl": b.mean_pnl,
        "beta_var": b.var,
        "cost": b.cost,
        "pnl_rf": problem.pnl_rf,
        "violations": list(b.psi),
        "feasible": b.feasible,
        "stop_reason": result.stop_reason.value,
        "iterations": result.iterations,
        "evaluations": result.evaluations,
        "wall_seconds": result.wall_seconds,
        "seed": result.seed,
        "strategy": [{"instrument_id": i, "notional": n} for i, n in result.strategy.legs],
        "slots": _slot_report(result, problem),
        "position": [int(v) for v in result.position],
    }
    (out / "result.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8", newline="")
    _write_trajectory(result.trajectory, out / "trajectory.csv")

    eos = aggregate(problem.table, result.strategy)
    total = problem.init + eos
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "initial_pnl", "total_pnl"])
    for i in range(problem.var_cfg.count):
        writer.writerow([i + 1, repr(float(problem.init.pnl[i])), repr(float(total.pnl[i]))])
    (out / "pnl_hist.csv").write_text(buf.getvalue(), encoding="utf-8", newline="")


def cmd_optimize(args: argparse.Namespace) -> int:
    pcfg = load_problem_config(args.problem)
    rcfg = load_rats_config(args.rats, args.seed, args.threads)
    problem = build_problem(args.data_dir, pcfg)
    baseline = problem.evaluate(problem.empty_position())
    if not math.isfinite(baseline.fitness):
        print("optimize: degenerate problem (empty strategy has non-finite fitness)", file=sys.stderr)
        return 1
    result = swarm_mod.run(rcfg, problem)
    _write_result(result, problem, Path(args.out))
    print(f"optimize: fitness {result.fitness:.6f} ({result.stop_reason.value}, "
          f"{result.iterations} iterations, {result.wall_seconds:.2f}s) -> {args.out}")
    return 0


def cmd_oracle(args: argparse.Namespace) -> int:
    pcfg = load_problem_config(args.problem)
    problem = build_problem(args.data_dir, pcfg)
    progress = None
    if args.progress:
        def progress(done: int, total: int) -> None:
            print(f"oracle: {done}/{total} evaluated", file=sys.stderr)
    try:
        result = oracle_mod.enumerate_space(
            problem, tau_eq=args.tau_eq, budget=args.budget, threads=args.threads, progress=progress,
        )
    except oracle_mod.BudgetExceeded as exc:
        print(f"oracle: {exc}", file=sys.stderr)
        return 4

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["solution", "fitness", "count", "status", "instrument_id", "notional"])
    for rank, position in enumerate(result.optimal_positions):
        strategy = problem.decode(position)
        if not strategy.legs:
            writer.writerow([rank, repr(result.optimal_fitness), result.count, result.status, "", 0])
        for instrument_id, notional in strategy.legs:
            writer.writerow([rank, repr(result.optimal_fitness), result.count, result.status,
                             instrument_id, notional])
    (out / "oracle.csv").write_text(buf.getvalue(), encoding="utf-8", newline="")
    print(f"oracle: optimum {result.optimal_fitness:.6f} over {result.count} positions "
          f"({len(result.optimal_positions)} optimal, {result.wall_seconds:.2f}s)")
    return 0


def derive_cell_seed(master: int, c_pers: float, c_soc: float, tau_g: float) -> int:
    key = f"{master}|{c_pers:.10g}|{c_soc:.10g}|{tau_g:.10g}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") & (2**63 - 1)


def _parse_grid(text: str) -> tuple[str, list[float]]:
    try:
        name, spec = text.split("=", 1)
        start_s, stop_s, step_s = spec.split(":")
        start, stop, step = float(start_s), float(stop_s), float(step_s)
    except ValueError as exc:
        raise ConfigError(f"bad grid spec {text!r} (want name=start:stop:step)") from exc
    if step <= 0 or stop < start:
        raise ConfigError(f"bad grid spec {text!r}")
    values = []
    k = 0
    while True:
        v = round(start + k * step, 10)
        if v > stop + step / 2:
            break
        values.append(v)
        k += 1
    return name, values


def cmd_sweep(args: argparse.Namespace) -> int:
    from concurrent.futures import ThreadPoolExecutor

    pcfg = load_problem_config(args.problem)
    rcfg = load_rats_config(args.rats, None, None)
    grids = dict(_parse_grid(g) for g in args.grid)
    unknown = sorted(set(grids) - {"c_pers", "c_soc"})
    if unknown:
        raise ConfigError(f"unsupported grid variables {unknown}")
    c_pers_values = grids.get("c_pers", [rcfg.c_pers])
    c_soc_values = grids.get("c_soc", [rcfg.c_soc])
    taus = [float(t) for t in args.tau_g.split(",")] if args.tau_g else [pcfg.tau_delta]

    problems = {}
    for tau in taus:
        tau_cfg = dataclasses.replace(pcfg, tau_delta=tau, tau_vega=tau, tau_gamma=tau)
        problems[tau] = build_problem(args.data_dir, tau_cfg)

    cells = [
        (tau, cp, cs)
        for tau in taus
        for cp in c_pers_values
        for cs in c_soc_values
    ]

    def run_cell(cell):
        tau, cp, cs = cell
        seed = derive_cell_seed(args.seed, cp, cs, tau)
        cfg = dataclasses.replace(rcfg, c_pers=cp, c_soc=cs, seed=seed, threads=1)
        try:
            result = swarm_mod.run(cfg, problems[tau])
            return (cp, cs, tau, result.fitness, result.iterations, result.wall_seconds,
                    result.stop_reason.value, seed, "ok")
        except Exception as exc:  # noqa: BLE001 - cell failures are reported, not fatal
            return (cp, cs, tau, float("nan"), 0, 0.0, "", seed, f"failed: {exc}")

    if args.threads > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            rows = list(pool.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["c_pers", "c_soc", "tau_g", "fitness", "iterations", "wall_s",
                     "stop_reason", "seed", "status"])
    for cp, cs, tau, fit, iters, wall, reason, seed, status in rows:
        writer.writerow([repr(cp), repr(cs), repr(tau), repr(fit), iters, repr(wall), reason, seed, status])
    Path(args.out).write_text(buf.getvalue(), encoding="utf-8", newline="")

    failures = [r for r in rows if r[-1] != "ok"]
    print(f"sweep: {len(rows)} cells -> {args.out} ({len(failures)} failed)")
    return 3 if failures else 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratpo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic data directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--profile", default="table1", choices=sorted(datagen.PROFILES))
    p.add_argument("--scenarios", type=int, default=250)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("features", help="export the feature table as CSV")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--problem", default=os.environ.get(ENV_PROBLEM_CONFIG))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("optimize", help="run the swarm optimizer")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--problem", default=os.environ.get(ENV_PROBLEM_CONFIG))
    p.add_argument("--rats", default=os.environ.get(ENV_RATS_CONFIG))
    p.add_argument("--seed", type=int, default=None, help="override the swarm seed")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("oracle", help="brute-force the full strategy space")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--problem", default=os.environ.get(ENV_PROBLEM_CONFIG))
    p.add_argument("--budget", type=int, default=10_000_000)
    p.add_argument("--tau-eq", type=float, default=1e-12)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--progress", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="grid-sweep swarm hyperparameters")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--problem", default=os.environ.get(ENV_PROBLEM_CONFIG))
    p.add_argument("--rats", default=os.environ.get(ENV_RATS_CONFIG))
    p.add_argument("--grid", nargs="+", default=["c_pers=0.1:1.9:0.1", "c_soc=0.1:1.9:0.1"])
    p.add_argument("--tau-g", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, fileio.SchemaError, ValueError) as exc:
        print(f"ratpo: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

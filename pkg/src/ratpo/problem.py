"""Problem assembly: strategy slot structure, position decoding, objective,
sensitivity constraints and penalty fitness.

Candidate strategies live in a 2m-dimensional integer position vector: the
first m entries pick universe indices (1-based), the second m entries pick
0-based indices into per-slot discretized notional grids.  Slots come in
per-underlying triplets (two option slots sharing the call+put index range,
one linear slot over the stock or futures indices).

The objective is a cost-adjusted P&L/VaR ratio (lower is better); constraint
violations are normalized by their thresholds so penalty weights are
scale-free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .features import FeatureTable, PortfolioFeatures, aggregate
from .instruments import Category, Kind, Portfolio, UeiDescriptor, UnderlyingSpec, descriptor_id
from .risk import VarConfig, beta_var, sample_pnl, var_index


class StructureError(ValueError):
    pass


class DegenerateDenominator(ArithmeticError):
    """Raised when beta-VaR minus cost is not safely negative."""


@dataclass(frozen=True)
class SlotSpec:
    """Index bounds (1-based, inclusive) and the signed-integer notional grid for one slot."""

    lower: int
    upper: int
    grid: tuple[int, ...]

    def __post_init__(self) -> None:
        if not 1 <= self.lower <= self.upper:
            raise StructureError(f"bad slot index range [{self.lower}, {self.upper}]")
        if not self.grid or 0 not in self.grid:
            raise StructureError("notional grid must be non-empty and contain 0")
        if list(self.grid) != sorted(set(self.grid)):
            raise StructureError("notional grid must be strictly increasing")

    @property
    def index_count(self) -> int:
        return self.upper - self.lower + 1

    @property
    def zero_index(self) -> int:
        return self.grid.index(0)


@dataclass(frozen=True)
class EosStructure:
    """Slot layout for candidate strategies.

    The standard layout built from underlying specs is a per-underlying
    triplet (two option slots sharing the call+put index range, one linear
    slot over the stock/futures indices); ``underlyings`` counts those
    triplets.  Structures with ``underlyings=0`` may use any slot list, as
    long as any two slot ranges are either identical or disjoint (this is
    what makes duplicate-instrument merging well defined).
    """

    underlyings: int
    slots: tuple[SlotSpec, ...]

    def __post_init__(self) -> None:
        if self.underlyings:
            if len(self.slots) != 3 * self.underlyings:
                raise StructureError("expected exactly three slots per underlying")
            for ell in range(self.underlyings):
                s1, s2, s3 = self.slots[3 * ell: 3 * ell + 3]
                if (s1.lower, s1.upper) != (s2.lower, s2.upper):
                    raise StructureError(f"underlying {ell + 1}: option slots must share one index range")
                if not (s3.upper < s1.lower or s3.lower > s1.upper):
                    raise StructureError(f"underlying {ell + 1}: linear slot overlaps the option range")
        if not self.slots:
            raise StructureError("structure needs at least one slot")
        for i, a in enumerate(self.slots):
            for b in self.slots[i + 1:]:
                same = (a.lower, a.upper) == (b.lower, b.upper)
                disjoint = a.upper < b.lower or b.upper < a.lower
                if not (same or disjoint):
                    raise StructureError("slot index ranges must be identical or disjoint")

    @property
    def m(self) -> int:
        return len(self.slots)

    def range_groups(self) -> list[list[int]]:
        """Slot indices grouped by identical index range."""
        groups: dict[tuple[int, int], list[int]] = {}
        for j, slot in enumerate(self.slots):
            groups.setdefault((slot.lower, slot.upper), []).append(j)
        return list(groups.values())

    def position_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) inclusive bounds for the full 2m position vector."""
        lo = [s.lower for s in self.slots] + [0] * self.m
        hi = [s.upper for s in self.slots] + [len(s.grid) - 1 for s in self.slots]
        return np.array(lo, dtype=np.int64), np.array(hi, dtype=np.int64)


def round_magnitude(x: float) -> int:
    """Round a positive number to its leading digit's scale (75 -> 80, 740 -> 700).

    Values below one would round to a fraction of a notional unit, which no
    integer grid can represent, so they are rejected; callers sizing notional
    ranges clamp to one unit first.
    """
    if x <= 0:
        raise ValueError(f"round_magnitude needs a positive input, got {x}")
    if x < 1.0:
        raise ValueError(f"round_magnitude needs x >= 1 (one notional unit), got {x}")
    scale = 10 ** math.floor(math.log10(x))
    return int(math.ceil(0.5 * math.floor(2.0 * x / scale))) * scale


def notional_grid(halfwidth: int, points: int = 21) -> tuple[int, ...]:
    """Symmetric integer grid on [-halfwidth, halfwidth] with ``points`` values.

    Falls back to the unit-step integer grid when the half-width does not
    split evenly (only possible for half-widths below points//2).
    """
    if points < 3 or points % 2 == 0:
        raise StructureError(f"grid points must be odd and >= 3, got {points}")
    if halfwidth <= 0:
        raise StructureError(f"grid half-width must be positive, got {halfwidth}")
    half = (points - 1) // 2
    if halfwidth >= half and halfwidth % half == 0:
        step = halfwidth // half
        return tuple(range(-halfwidth, halfwidth + step, step))
    return tuple(range(-halfwidth, halfwidth + 1))


def derive_notional_bounds(
    spec: UnderlyingSpec,
    position: int,
    table: FeatureTable,
    base: PortfolioFeatures,
) -> tuple[int, int]:
    """Half-widths sized so the slots can offset the portfolio's Vega and Delta.

    Uses the at-the-money call/put with the longest tenor on this underlying:
    options cover |Vega(P)| / |Vega(atm call)|, the linear slot covers
    |Delta(P)| / max(|Delta(atm call)|, |Delta(atm put)|), both rounded to
    the leading-digit scale.
    """
    tenor = spec.tenor_domain[-1]
    call = table[descriptor_id(UeiDescriptor(position, Kind.CALL, 0.50, tenor))]
    put = table[descriptor_id(UeiDescriptor(position, Kind.PUT, 0.50, tenor))]
    if call.vega == 0.0:
        raise StructureError(f"{spec.ticker}: ATM call Vega is zero; cannot size option notionals")
    denom = max(abs(call.delta), abs(put.delta))
    if denom == 0.0:
        raise StructureError(f"{spec.ticker}: ATM option Deltas are zero; cannot size linear notionals")
    eta_a = abs(base.vega) / abs(call.vega)
    eta_b = abs(base.delta) / denom
    if eta_a <= 0 or eta_b <= 0:
        raise StructureError(f"{spec.ticker}: portfolio sensitivities are zero; set explicit bounds")
    # A book smaller than one unit of the reference option still gets a one-unit slot.
    return round_magnitude(max(eta_a, 1.0)), round_magnitude(max(eta_b, 1.0))


def build_structure(
    specs: Sequence[UnderlyingSpec],
    universe: Sequence[UeiDescriptor],
    grid_points: int = 21,
    table: Optional[FeatureTable] = None,
    base: Optional[PortfolioFeatures] = None,
    derive_bounds: bool = False,
) -> EosStructure:
    """Slot layout over a built universe.

    Notional half-widths come from each spec when declared there, otherwise
    they are derived from the feature table and the initial portfolio via
    :func:`derive_notional_bounds`.  ``derive_bounds=True`` ignores declared
    half-widths entirely so the grids are always sized to the actual book;
    declared bounds only make sense for the dataset they were written for.
    """
    by_underlying: dict[int, dict[str, list[int]]] = {}
    for idx, d in enumerate(universe, start=1):
        groups = by_underlying.setdefault(d.underlying_pos, {"options": [], "linear": []})
        groups["options" if d.kind.is_option else "linear"].append(idx)

    slots: list[SlotSpec] = []
    for position, spec in enumerate(specs, start=1):
        groups = by_underlying.get(position)
        if groups is None or not groups["options"] or not groups["linear"]:
            raise StructureError(f"{spec.ticker}: universe has no instruments for this underlying")
        opt_lo, opt_hi = min(groups["options"]), max(groups["options"])
        lin_lo, lin_hi = min(groups["linear"]), max(groups["linear"])
        if opt_hi - opt_lo + 1 != len(groups["options"]) or lin_hi - lin_lo + 1 != len(groups["linear"]):
            raise StructureError(f"{spec.ticker}: universe indices are not contiguous")
        if spec.category is Category.STOCK and lin_lo != lin_hi:
            raise StructureError(f"{spec.ticker}: expected a single stock index")

        opt_bound, lin_bound = spec.option_notional_bound, spec.linear_notional_bound
        if derive_bounds:
            opt_bound = lin_bound = None
        if opt_bound is None or lin_bound is None:
            if table is None or base is None:
                raise StructureError(
                    f"{spec.ticker}: no declared notional bounds and no features/base to derive them"
                )
            derived_opt, derived_lin = derive_notional_bounds(spec, position, table, base)
            opt_bound = opt_bound if opt_bound is not None else derived_opt
            lin_bound = lin_bound if lin_bound is not None else derived_lin

        option_slot = SlotSpec(opt_lo, opt_hi, notional_grid(opt_bound, grid_points))
        linear_slot = SlotSpec(lin_lo, lin_hi, notional_grid(lin_bound, grid_points))
        slots.extend((option_slot, option_slot, linear_slot))
    return EosStructure(len(specs), tuple(slots))


def search_space_size(structure: EosStructure) -> int:
    total = 1
    for slot in structure.slots:
        total *= slot.index_count * len(slot.grid)
    return total


def decode(x: Sequence[int], structure: EosStructure, universe_ids: Sequence[str]) -> Portfolio:
    """Position vector -> strategy portfolio (duplicates merged, zero legs dropped)."""
    m = structure.m
    if len(x) != 2 * m:
        raise StructureError(f"position length {len(x)} != 2m = {2 * m}")
    legs: list[tuple[str, int]] = []
    for j, slot in enumerate(structure.slots):
        idx, gidx = int(x[j]), int(x[m + j])
        if not slot.lower <= idx <= slot.upper:
            raise StructureError(f"slot {j}: universe index {idx} outside [{slot.lower}, {slot.upper}]")
        if not 0 <= gidx < len(slot.grid):
            raise StructureError(f"slot {j}: grid index {gidx} outside [0, {len(slot.grid) - 1}]")
        legs.append((universe_ids[idx - 1], slot.grid[gidx]))
    return Portfolio(tuple(legs)).merged()


# ---------------------------------------------------------------------------
# Objective, constraints, fitness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintSpec:
    """Sensitivity limits relative to the initial portfolio, plus penalty weights."""

    tau_delta: float
    tau_vega: float
    tau_gamma: float
    base_delta: float
    base_vega: float
    base_gamma: float
    penalty_delta: float = 10.0
    penalty_vega: float = 10.0
    penalty_gamma: float = 10.0

    def __post_init__(self) -> None:
        for name in ("tau_delta", "tau_vega", "tau_gamma", "penalty_delta", "penalty_vega", "penalty_gamma"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")

    @property
    def limits(self) -> tuple[float, float, float]:
        return (
            self.tau_delta * abs(self.base_delta),
            self.tau_vega * abs(self.base_vega),
            self.tau_gamma * abs(self.base_gamma),
        )

    @property
    def penalties(self) -> tuple[float, float, float]:
        return (self.penalty_delta, self.penalty_vega, self.penalty_gamma)


def violations(eos: PortfolioFeatures, spec: ConstraintSpec) -> tuple[float, float, float]:
    """Normalized positive parts of the three sensitivity constraint excesses.

    Each violation is (|sensitivity| - limit)_+ / limit, dimensionless; a
    zero limit with a nonzero sensitivity yields an infinite violation.
    """
    out = []
    for sens, limit in zip((eos.delta, eos.vega, eos.gamma), spec.limits):
        if limit > 0.0:
            out.append(max(abs(sens) - limit, 0.0) / limit)
        else:
            out.append(0.0 if sens == 0.0 else math.inf)
    return tuple(out)


def objective(
    total: PortfolioFeatures,
    pnl_rf: float,
    cost_eos: float,
    var_cfg: VarConfig,
    epsilon: float = 1e-9,
) -> float:
    """Cost-adjusted mean-P&L over beta-VaR ratio of the total portfolio; lower is better."""
    mean = sample_pnl(total.pnl)
    var = beta_var(total.pnl, var_cfg)
    denominator = var - cost_eos
    if denominator >= -epsilon:
        raise DegenerateDenominator(f"beta-VaR - cost = {denominator} is not safely negative")
    return (mean - pnl_rf - cost_eos) / denominator


def penalty_term(psi: Sequence[float], penalties: Sequence[float]) -> float:
    total = 0.0
    for p, lam in zip(psi, penalties):
        if lam > 0.0 and p > 0.0:
            total += lam * p
    return total


def riskfree_pnl(portfolio_value: float, rate: float, day_count: int) -> float:
    """One-day profit from parking the portfolio value at the risk-free rate."""
    if day_count not in (252, 360, 365):
        raise ValueError(f"day count must be one of 252/360/365, got {day_count}")
    return portfolio_value * rate / day_count


@dataclass(frozen=True)
class EvalBreakdown:
    fitness: float
    objective: float
    mean_pnl: float
    var: float
    cost: float
    psi: tuple[float, float, float]

    @property
    def feasible(self) -> bool:
        return all(p == 0.0 for p in self.psi)


@dataclass(frozen=True)
class ProblemInstance:
    """Everything a fitness evaluation needs, immutable for the whole run."""

    universe_ids: tuple[str, ...]
    structure: EosStructure
    table: FeatureTable
    init: PortfolioFeatures
    pnl_rf: float
    var_cfg: VarConfig
    constraints: ConstraintSpec
    epsilon: float = 1e-9

    def __post_init__(self) -> None:
        if self.init.pnl.shape != (self.var_cfg.count,):
            raise ValueError("initial portfolio P&L length does not match the scenario count")
        for slot in self.structure.slots:
            if slot.upper > len(self.universe_ids):
                raise ValueError("structure indices exceed the universe size")

    def decode(self, x: Sequence[int]) -> Portfolio:
        return decode(x, self.structure, self.universe_ids)

    def evaluate(self, x: Sequence[int]) -> EvalBreakdown:
        eos = aggregate(self.table, self.decode(x))
        total = self.init + eos
        psi = violations(eos, self.constraints)
        mean = sample_pnl(total.pnl)
        var = beta_var(total.pnl, self.var_cfg)
        try:
            f = objective(total, self.pnl_rf, eos.cost, self.var_cfg, self.epsilon)
        except DegenerateDenominator:
            return EvalBreakdown(math.inf, math.inf, mean, var, eos.cost, psi)
        fitness = f + penalty_term(psi, self.constraints.penalties)
        return EvalBreakdown(fitness, f, mean, var, eos.cost, psi)

    def fitness(self, x: Sequence[int]) -> float:
        return self.evaluate(x).fitness

    def empty_position(self) -> np.ndarray:
        """A position with every notional grid index at zero (the empty strategy)."""
        m = self.structure.m
        x = np.empty(2 * m, dtype=np.int64)
        for j, slot in enumerate(self.structure.slots):
            x[j] = slot.lower
            x[m + j] = slot.zero_index
        return x


class BatchEvaluator:
    """Vectorized fitness evaluation over many positions at once.

    Results are row-wise deterministic: each position's numbers are computed
    by the same fixed per-slot accumulation order no matter how the batch is
    chunked, so multi-threaded callers get bit-identical output.
    """

    def __init__(self, problem: ProblemInstance):
        self.problem = problem
        arrays = problem.table.arrays(problem.universe_ids)
        self._pnl = np.ascontiguousarray(arrays["pnl"])
        self._delta = arrays["delta"]
        self._vega = arrays["vega"]
        self._gamma = arrays["gamma"]
        self._cost = arrays["cost"]

        structure = problem.structure
        self.m = structure.m
        gmax = max(len(s.grid) for s in structure.slots)
        self._grids = np.zeros((self.m, gmax), dtype=np.int64)
        for j, slot in enumerate(structure.slots):
            self._grids[j, : len(slot.grid)] = slot.grid
        self._rank = var_index(problem.var_cfg)
        self._limits = np.array(problem.constraints.limits)
        self._penalties = np.array(problem.constraints.penalties)
        self._groups = structure.range_groups()

    def evaluate(self, positions: np.ndarray) -> dict[str, np.ndarray]:
        """Evaluate a (p, 2m) int position matrix; returns per-row arrays.

        The accumulation runs slot by slot in a fixed order so every row's
        arithmetic is independent of the batch it arrived in.
        """
        positions = np.asarray(positions)
        p = positions.shape[0]
        m = self.m
        idx = positions[:, :m] - 1
        notion = np.empty((p, m))
        for j in range(m):
            notion[:, j] = self._grids[j, positions[:, m + j]]

        total_pnl = np.repeat(self.problem.init.pnl[None, :], p, axis=0)
        buf = np.empty_like(total_pnl)
        delta = np.zeros(p)
        vega = np.zeros(p)
        gamma = np.zeros(p)
        for j in range(m):
            rows = idx[:, j]
            np.take(self._pnl, rows, axis=0, out=buf)
            buf *= notion[:, j, None]
            total_pnl += buf
            delta += notion[:, j] * self._delta[rows]
            vega += notion[:, j] * self._vega[rows]
            gamma += notion[:, j] * self._gamma[rows]

        # Cost is the one non-linear feature: duplicate instrument picks must
        # be merged before taking absolute notionals.  Duplicates can only
        # occur between slots sharing an index range.
        cost = np.zeros(p)
        for group in self._groups:
            if len(group) == 1:
                j = group[0]
                cost += self._cost[idx[:, j]] * np.abs(notion[:, j])
            elif len(group) == 2:
                j1, j2 = group
                i1, i2 = idx[:, j1], idx[:, j2]
                n1, n2 = notion[:, j1], notion[:, j2]
                merged = self._cost[i1] * np.abs(n1 + n2)
                split = self._cost[i1] * np.abs(n1) + self._cost[i2] * np.abs(n2)
                cost += np.where(i1 == i2, merged, split)
            else:
                cost += self._grouped_cost(idx[:, group], notion[:, group])

        mean = total_pnl.mean(axis=1)
        if self._rank == 1:
            var = total_pnl.min(axis=1)
        else:
            var = np.partition(total_pnl, self._rank - 1, axis=1)[:, self._rank - 1]

        denominator = var - cost
        degenerate = denominator >= -self.problem.epsilon
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(degenerate, np.inf, (mean - self.problem.pnl_rf - cost) / denominator)

        sens = np.stack([delta, vega, gamma], axis=1)
        limits = self._limits[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = np.where(
                limits > 0.0,
                np.maximum(np.abs(sens) - limits, 0.0) / limits,
                np.where(np.abs(sens) > 0.0, np.inf, 0.0),
            )
        penalty = np.zeros(p)
        for k in range(3):
            lam = self._penalties[k]
            if lam > 0.0:
                penalty += np.where(psi[:, k] > 0.0, lam * psi[:, k], 0.0)
        fitness = f + penalty
        return self._package(fitness, f, mean, var, cost, psi)

    def _grouped_cost(self, gi: np.ndarray, gn: np.ndarray) -> np.ndarray:
        # Rarely used exact path for 3+ slots sharing one index range.
        out = np.empty(gi.shape[0])
        for r in range(gi.shape[0]):
            nets: dict[int, float] = {}
            for i, n in zip(gi[r], gn[r]):
                nets[int(i)] = nets.get(int(i), 0.0) + float(n)
            out[r] = sum(self._cost[i] * abs(n) for i, n in nets.items())
        return out

    def _package(self, fitness, f, mean, var, cost, psi) -> dict[str, np.ndarray]:
        return {
            "fitness": fitness,
            "objective": f,
            "mean": mean,
            "var": var,
            "cost": cost,
            "psi": psi,
            "feasible": np.all(psi == 0.0, axis=1),
        }

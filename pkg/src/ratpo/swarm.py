"""Integer particle-swarm optimizer over the strategy position encoding.

Standard swarm recursion with three departures that matter here:

* positions are integers: after each velocity step the float position is
  rounded half-away-from-zero and saturated at the per-slot bounds;
* the global best only moves when the best personal fitness beats the
  incumbent by strictly more than a significance threshold, and a stall
  counter drives one of the stopping rules;
* the two uniform random vectors are, by default, drawn once per iteration
  and shared by all particles ("shared" mode); "per_particle" redraws them
  for every particle like textbook PSO.

Fitness evaluation is pure and vectorized; worker threads only split the
particle block, so results are bit-identical for any thread count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .instruments import Portfolio
from .problem import BatchEvaluator, EvalBreakdown, ProblemInstance


class StopReason(str, Enum):
    MAX_ITER = "max_iter"
    STALL = "stall"
    CONCENTRATION = "concentration"


def round_half_away_from_zero(values: np.ndarray) -> np.ndarray:
    """Symmetric integer rounding: 2.5 -> 3, -2.5 -> -3."""
    return np.copysign(np.floor(np.abs(values) + 0.5), values)


class RandomMode(str, Enum):
    SHARED = "shared"
    PER_PARTICLE = "per_particle"


@dataclass(frozen=True)
class RatsConfig:
    """Swarm hyperparameters; defaults follow the reference configuration."""

    particles: int = 1000
    c_pers: float = 1.0
    c_soc: float = 1.0
    v_min: float = -1.0
    v_max: float = 1.0
    w_min: float = 1.0
    w_max: float = 1.0
    tau_f: float = 1e-4
    tau_p: float = 0.75
    k_max: int = 500
    k_max_stall: int = 100
    seed: int = 0
    random_mode: RandomMode = RandomMode.SHARED
    threads: int = 1
    inject_zero_strategy: bool = True
    concentration_by_fitness: bool = False

    def __post_init__(self) -> None:
        if self.particles < 1:
            raise ValueError("need at least one particle")
        if self.v_min >= self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.w_min > self.w_max:
            raise ValueError("w_min must not exceed w_max")
        if self.tau_f <= 0:
            raise ValueError("tau_f must be positive")
        if not 0.0 < self.tau_p < 1.0:
            raise ValueError("tau_p must be in (0, 1)")
        if self.k_max < 0 or self.k_max_stall < 1:
            raise ValueError("iteration budgets must be non-negative / positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class RunState:
    iteration: int
    best_position: np.ndarray
    best_fitness: float
    stall: int
    inertia: float
    concentration: float
    stop_reason: Optional[StopReason] = None
    trajectory: list[tuple[int, float, float, int, float]] = field(default_factory=list)


@dataclass(frozen=True)
class RatsResult:
    position: np.ndarray
    strategy: Portfolio
    breakdown: EvalBreakdown
    stop_reason: StopReason
    iterations: int
    evaluations: int
    trajectory: list[tuple[int, float, float, int, float]]
    wall_seconds: float
    init_seconds: float
    seed: int

    @property
    def fitness(self) -> float:
        return self.breakdown.fitness


class Swarm:
    """Owns the particle arrays and the run loop for one optimization."""

    def __init__(self, cfg: RatsConfig, problem: ProblemInstance):
        self.cfg = cfg
        self.problem = problem
        self.evaluator = BatchEvaluator(problem)
        self.lower, self.upper = problem.structure.position_bounds()
        self.dim = 2 * problem.structure.m
        self.rng = np.random.default_rng(cfg.seed)
        self.evaluations = 0
        self._pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None

    # -- evaluation -----------------------------------------------------------

    def _evaluate(self, positions: np.ndarray) -> np.ndarray:
        self.evaluations += positions.shape[0]
        if self._pool is None or positions.shape[0] < 2 * self.cfg.threads:
            return self.evaluator.evaluate(positions)["fitness"]
        chunks = np.array_split(np.arange(positions.shape[0]), self.cfg.threads)
        parts = list(self._pool.map(lambda c: self.evaluator.evaluate(positions[c])["fitness"], chunks))
        return np.concatenate(parts)

    # -- initialization -------------------------------------------------------

    def initialize(self) -> RunState:
        cfg, n = self.cfg, self.cfg.particles
        m = self.problem.structure.m
        self.positions = np.empty((n, self.dim), dtype=np.int64)
        for j in range(self.dim):
            self.positions[:, j] = self.rng.integers(self.lower[j], self.upper[j] + 1, size=n)
        self.velocities = self.rng.uniform(cfg.v_min, cfg.v_max, size=(n, self.dim))
        if cfg.inject_zero_strategy:
            # Guarantee a feasible incumbent: one particle trades nothing.
            for j, slot in enumerate(self.problem.structure.slots):
                self.positions[0, m + j] = slot.zero_index

        self.best_positions = self.positions.copy()
        self.best_fitness = self._evaluate(self.positions)
        best = int(np.argmin(self.best_fitness))
        state = RunState(
            iteration=0,
            best_position=self.best_positions[best].copy(),
            best_fitness=float(self.best_fitness[best]),
            stall=0,
            inertia=cfg.w_max,
            concentration=self._concentration(self.best_positions[best]),
        )
        return state

    def _concentration(self, global_best: np.ndarray) -> float:
        if self.cfg.concentration_by_fitness:
            best = self.best_fitness.min()
            return float(np.mean(self.best_fitness == best))
        return float(np.mean(np.all(self.best_positions == global_best[None, :], axis=1)))

    # -- one iteration --------------------------------------------------------

    def step(self, state: RunState) -> None:
        cfg = self.cfg
        n = cfg.particles
        if cfg.random_mode is RandomMode.SHARED:
            r1 = self.rng.uniform(size=self.dim)[None, :]
            r2 = self.rng.uniform(size=self.dim)[None, :]
        else:
            r1 = self.rng.uniform(size=(n, self.dim))
            r2 = self.rng.uniform(size=(n, self.dim))

        self.velocities = (
            state.inertia * self.velocities
            + cfg.c_pers * r1 * (self.best_positions - self.positions)
            + cfg.c_soc * r2 * (state.best_position[None, :] - self.positions)
        )
        moved = self.positions + self.velocities
        rounded = round_half_away_from_zero(moved)
        self.positions = np.clip(rounded, self.lower, self.upper).astype(np.int64)

        fitness = self._evaluate(self.positions)
        improved = fitness < self.best_fitness
        self.best_positions[improved] = self.positions[improved]
        self.best_fitness[improved] = fitness[improved]

        state.iteration += 1
        champion = int(np.argmin(self.best_fitness))
        if state.best_fitness - self.best_fitness[champion] > cfg.tau_f:
            state.best_position = self.best_positions[champion].copy()
            state.best_fitness = float(self.best_fitness[champion])
            state.stall = 0
        else:
            state.stall += 1
        if cfg.k_max > 0:
            state.inertia = cfg.w_max - (state.iteration / cfg.k_max) * (cfg.w_max - cfg.w_min)
        state.concentration = self._concentration(state.best_position)

    # -- full run --------------------------------------------------------------

    def run(self) -> RatsResult:
        cfg = self.cfg
        t0 = time.perf_counter()
        state = self.initialize()
        init_seconds = time.perf_counter() - t0
        state.trajectory.append((0, state.best_fitness, state.concentration, state.stall, init_seconds))

        try:
            while (
                state.iteration < cfg.k_max
                and state.stall < cfg.k_max_stall
                and state.concentration < cfg.tau_p
            ):
                self.step(state)
                state.trajectory.append((
                    state.iteration, state.best_fitness, state.concentration,
                    state.stall, time.perf_counter() - t0,
                ))
        finally:
            if self._pool is not None:
                self._pool.shutdown(wait=True)

        if state.iteration >= cfg.k_max:
            state.stop_reason = StopReason.MAX_ITER
        elif state.stall >= cfg.k_max_stall:
            state.stop_reason = StopReason.STALL
        else:
            state.stop_reason = StopReason.CONCENTRATION

        breakdown = self.problem.evaluate(state.best_position)
        return RatsResult(
            position=state.best_position,
            strategy=self.problem.decode(state.best_position),
            breakdown=breakdown,
            stop_reason=state.stop_reason,
            iterations=state.iteration,
            evaluations=self.evaluations,
            trajectory=state.trajectory,
            wall_seconds=time.perf_counter() - t0,
            init_seconds=init_seconds,
            seed=cfg.seed,
        )


def run(cfg: RatsConfig, problem: ProblemInstance) -> RatsResult:
    """Convenience wrapper: build a swarm, run it, return the result."""
    return Swarm(cfg, problem).run()

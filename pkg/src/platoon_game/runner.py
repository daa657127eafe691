"""Glue between scenarios and the library: whole runs, sweeps, verification.

These are the operations the command line exposes, factored out so they
are just as usable from scripts and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .game import (
    ActionProfile,
    GameConfig,
    Population,
    PricingPolicy,
)
from .learning import Trace, run
from .metrics import Summary, emit, social_cost, summarize
from .potential import (
    PotentialDecision,
    delta_move,
    exact_potential_exists,
    POTENTIAL_TOL,
)
from .scenario import ScenarioSpec, sample_population
from .game import AgentRef, occupancy


@dataclass(frozen=True)
class ScenarioResult:
    config: GameConfig
    population: Population
    trace: Trace
    summary: Summary


def run_scenario(spec: ScenarioSpec, *, seed: int | None = None,
                 algorithm: str | None = None, max_iters: int | None = None) -> ScenarioResult:
    """Sample the population, run the learner, and summarise.

    The seed splits deterministically into one stream for population
    sampling and one for the learning dynamics, so a (spec, seed) pair
    pins the whole experiment.
    """
    seed = spec.seed if seed is None else seed
    algorithm = spec.learner.algorithm if algorithm is None else algorithm
    max_iters = spec.learner.max_iters if max_iters is None else max_iters
    pop_seq, learn_seq = np.random.SeedSequence(seed).spawn(2)
    pop_rng = np.random.default_rng(pop_seq)
    pop = sample_population(spec, pop_rng)
    cfg = spec.game_config()
    initial = None
    if spec.learner.initial_profile == "random":
        initial = ActionProfile(
            pop_rng.integers(1, spec.intervals + 1, size=spec.cars),
            pop_rng.integers(1, spec.intervals + 1, size=spec.trucks),
        )
    trace = run(
        algorithm, cfg, pop,
        inertia=spec.learner.inertia,
        forgetting=spec.learner.forgetting,
        max_iters=max_iters,
        stability_window=spec.learner.stability_window,
        rng=np.random.default_rng(learn_seq),
        perturbations=spec.perturbations,
        initial_profile=initial,
    )
    return ScenarioResult(cfg, pop, trace, summarize(trace, cfg, pop))


# ---------------------------------------------------------------------------
# parameter sweeps

SWEEP_PARAMS = ("beta", "equipment_ratio", "delay")


def apply_sweep_param(spec: ScenarioSpec, param: str, value: float) -> ScenarioSpec:
    """Return the spec with one swept parameter replaced.

    ``beta`` swaps the platoon coefficient; ``equipment_ratio`` moves
    agents between the car and truck pools keeping the total fixed;
    ``delay`` switches the policy to the delayed car tax with that
    announcement delay.
    """
    if param == "beta":
        return replace(spec, beta=float(value))
    if param == "equipment_ratio":
        ratio = float(value)
        if not 0.0 <= ratio <= 1.0:
            raise ValueError("equipment ratio must lie in [0, 1]")
        total = spec.cars + spec.trucks if spec.equipment_split is None else spec.equipment_split[0]
        trucks = int(round(ratio * total))
        return replace(spec, cars=total - trucks, trucks=trucks,
                       equipment_split=(total, ratio))
    if param == "delay":
        return replace(spec, policy=PricingPolicy.car_tax_delayed(int(value)))
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


@dataclass(frozen=True)
class SweepRow:
    param_value: float
    seed: int
    iterations: int
    converged: bool
    s_nash: float
    max_truck_concentration: int


def run_sweep(spec: ScenarioSpec, param: str, values: Sequence[float], seeds: Sequence[int],
              out_dir: str | Path | None = None,
              emit_formats: Iterable[str] = ("csv", "json")) -> list[SweepRow]:
    """One run per (value, seed) cell; optionally emits per-cell artifacts
    plus an aggregated ``sweep.csv``."""
    rows: list[SweepRow] = []
    base = Path(out_dir) if out_dir is not None else None
    for value in values:
        cell_spec = apply_sweep_param(spec, param, value)
        for seed in seeds:
            result = run_scenario(cell_spec, seed=seed)
            occ = occupancy(result.trace.final_profile, result.config.R)
            rows.append(SweepRow(
                param_value=float(value),
                seed=int(seed),
                iterations=result.trace.iterations,
                converged=result.trace.converged,
                s_nash=social_cost(occ, result.config.velocity),
                max_truck_concentration=int(occ.m.max()) if occ.m.size else 0,
            ))
            if base is not None:
                cell_dir = base / f"{param}={value:g}" / f"seed={seed}"
                emit(result.trace, result.summary, cell_dir, emit_formats)
    if base is not None:
        lines = ["param_value,seed,iterations,converged,s_nash,max_truck_concentration"]
        for row in rows:
            lines.append(
                f"{format(row.param_value, '.17g')},{row.seed},{row.iterations},"
                f"{'true' if row.converged else 'false'},{format(row.s_nash, '.17g')},"
                f"{row.max_truck_concentration}"
            )
        base.mkdir(parents=True, exist_ok=True)
        (base / "sweep.csv").write_text("\n".join(lines) + "\n")
    return rows


# ---------------------------------------------------------------------------
# potential verification


@dataclass(frozen=True)
class VerifyReport:
    """Outcome of the pricing/potential consistency check."""

    mode: str  # "deviation_trials" or "cycle_oracle"
    policy: str
    passed: bool
    trials: int = 0
    max_gap: float = 0.0
    decision: PotentialDecision | None = None
    expected_potential: bool | None = None

    def describe(self) -> str:
        if self.mode == "deviation_trials":
            return (
                f"{self.trials} random unilateral deviations under {self.policy!r}: "
                f"max |d(potential) - d(utility)| = {self.max_gap:.3e} "
                f"(tolerance {POTENTIAL_TOL:g}) -> {'OK' if self.passed else 'FAILED'}"
            )
        verdict = "exact potential exists" if self.decision.exists else "no exact potential"
        expectation = "expected" if self.passed else "UNEXPECTED"
        text = f"4-cycle oracle under {self.policy!r}: {verdict} ({expectation})"
        if self.decision.counterexample is not None:
            text += "\ncounterexample: " + self.decision.counterexample.describe()
        return text


def verify_potential(spec: ScenarioSpec, *, trials: int = 10_000, seed: int = 0,
                     max_cycles: int = 250_000) -> VerifyReport:
    """Check that pricing and potential agree for the configured policy.

    Under a pricing policy with a closed-form potential, samples random
    profiles and unilateral moves and reports the worst gap between the
    potential change and the deviator's utility change. Without pricing,
    runs the 4-cycle oracle instead and checks its verdict against the
    theory: a potential exists exactly when the platoon coefficient is
    zero or the benefit vanishes on every reachable platoon size.
    """
    cfg = spec.game_config()
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[0])
    pop = sample_population(spec, np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1]))
    N, M, R = pop.n_cars, pop.n_trucks, cfg.R
    if cfg.policy.kind in ("car_tax", "truck_subsidy"):
        kind = cfg.policy.kind
        max_gap = 0.0
        for _ in range(trials):
            profile = ActionProfile(
                rng.integers(1, R + 1, size=N), rng.integers(1, R + 1, size=M)
            )
            idx = int(rng.integers(0, N + M))
            mover = AgentRef("car", idx) if idx < N else AgentRef("truck", idx - N)
            to = int(rng.integers(1, R + 1))
            d_pot, d_util = delta_move(kind, profile, mover, to, cfg, pop)
            max_gap = max(max_gap, abs(d_pot - d_util))
        return VerifyReport(mode="deviation_trials", policy=cfg.policy.kind,
                            passed=max_gap <= POTENTIAL_TOL, trials=trials, max_gap=max_gap)
    if cfg.policy.kind == "car_tax_delayed":
        raise ValueError("the delayed car tax has no static potential to verify")
    decision = exact_potential_exists(cfg, pop, max_cycles=max_cycles)
    benefit_vanishes = all(
        float(cfg.benefit.value(m)) == 0.0 for m in range(1, M + 1)
    )
    expected = cfg.beta == 0.0 or benefit_vanishes or M == 0 or N == 0
    return VerifyReport(mode="cycle_oracle", policy=cfg.policy.kind,
                        passed=decision.exists == expected, decision=decision,
                        expected_potential=expected)

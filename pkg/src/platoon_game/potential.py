"""Potential functions and potential-existence diagnostics.

Without pricing, the two-type game generally admits no exact potential:
the mixed second difference of a truck's utility under a (car move,
truck move) pair does not match the car's. Each pricing policy repairs
this in its own way, and each comes with a closed-form potential whose
change under any unilateral deviation equals the deviator's utility
change:

- under the car tax the potential adds, per interval, the velocity
  ramp, the benefit-weighted velocity, and a correction quadratic in the
  truck counts;
- under the truck subsidy the benefit term is weighted by the fixed
  reference velocity instead, which makes the identity exact only for
  the linear benefit (the subsidy pays per truck, not per benefit
  unit, so the two cancel only when ``g(m) = m``).

Everything here works from utility evaluations or from the closed
forms; the 4-cycle oracle at the bottom is deliberately blind to the
pricing formulas so it can referee them.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .game import (
    ActionProfile,
    AgentRef,
    GameConfig,
    GameError,
    PolicyMismatchError,
    Population,
    car_utility,
    occupancy,
    truck_utility,
)

PotentialKind = Literal["car_tax", "truck_subsidy"]

#: Absolute slack allowed between a potential change and a utility change.
POTENTIAL_TOL = 1e-9

#: Absolute slack allowed on a 4-cycle utility-difference sum.
CYCLE_TOL = 1e-12


class SizeGuardError(GameError, ValueError):
    """The exhaustive 4-cycle enumeration would exceed its work guard."""


@dataclass(frozen=True)
class CrossDifferenceReport:
    """Mixed second differences of one (car, truck) move pair.

    ``lhs`` is the truck's utility differenced over the car move then the
    truck move; ``rhs`` is the car's utility differenced the other way
    around. ``mismatch = lhs - rhs`` must vanish for an exact potential
    to exist. ``witness`` is ``(i, j, z_i, z'_i, x_j, x'_j)``.
    """

    lhs: float
    rhs: float
    mismatch: float
    witness: tuple[int, int, int, int, int, int]


@dataclass(frozen=True)
class CycleWitness:
    """A closed 4-cycle of unilateral moves with a nonzero utility sum."""

    first: AgentRef
    first_move: tuple[int, int]
    second: AgentRef
    second_move: tuple[int, int]
    base_z: tuple[int, ...]
    base_x: tuple[int, ...]
    cycle_sum: float

    def describe(self) -> str:
        a, (a0, a1) = self.first, self.first_move
        b, (b0, b1) = self.second, self.second_move
        return (
            f"{a.kind} {a.index}: {a0}->{a1}, {b.kind} {b.index}: {b0}->{b1} "
            f"from z={list(self.base_z)}, x={list(self.base_x)}: "
            f"cycle sum {self.cycle_sum:.6e}"
        )


@dataclass(frozen=True)
class PotentialDecision:
    """Outcome of the exhaustive 4-cycle test."""

    exists: bool
    counterexample: CycleWitness | None = None

    def __bool__(self) -> bool:
        return self.exists


def _require_kind(kind: PotentialKind, cfg: GameConfig) -> None:
    if kind not in ("car_tax", "truck_subsidy"):
        raise ValueError(f"unknown potential kind {kind!r}")
    if cfg.policy.kind != kind:
        raise PolicyMismatchError(
            f"potential for {kind!r} pricing evaluated under policy {cfg.policy.kind!r}"
        )


def potential_value(kind: PotentialKind, profile: ActionProfile, cfg: GameConfig,
                    pop: Population) -> float:
    """Evaluate the exact potential matching the configured pricing policy.

    The car-tax identity holds for any benefit function as long as every
    car has value of time 1; the truck-subsidy identity additionally
    needs the linear benefit.
    """
    _require_kind(kind, cfg)
    occ = occupancy(profile, cfg.R)
    a, b = cfg.velocity.a, cfg.velocity.b

    pen = 0.0
    if len(pop.cars):
        pen += float(np.sum(pop.car_alpha * _deviation(pop.car_late_only, profile.z,
                                                       pop.car_preferred)))
    if len(pop.trucks):
        pen += float(np.sum(pop.truck_alpha * _deviation(pop.truck_late_only, profile.x,
                                                         pop.truck_preferred)))

    # per-interval velocity ramp: sum_{k=1}^{n_r} (a k + b), with the
    # integer triangle number computed exactly
    ramp = float(np.sum(a * (occ.n * (occ.n + 1) // 2) + b * occ.n))

    table = cfg.benefit.prefix_table(int(occ.m.max()) if occ.m.size else 0)
    if kind == "car_tax":
        weighted = float(np.sum(cfg.beta * (a * occ.n + b) * table[occ.m]))
        stacked = np.concatenate(([0.0], np.cumsum(table)[:-1]))  # sum_{k=1..m} G(k-1)
        correction = -(a * cfg.beta) * float(np.sum(stacked[occ.m]))
        return pen + ramp + weighted + correction
    subsidised = (cfg.beta * cfg.policy.reference_velocity) * float(np.sum(table[occ.m]))
    return pen + ramp + subsidised


def _deviation(late_only: np.ndarray, chosen: np.ndarray, preferred: np.ndarray) -> np.ndarray:
    return np.where(late_only, np.maximum(chosen - preferred, 0), np.abs(chosen - preferred))


def delta_move(kind: PotentialKind, profile: ActionProfile, mover: AgentRef, to: int,
               cfg: GameConfig, pop: Population) -> tuple[float, float]:
    """(potential change, mover's utility change) for one unilateral move.

    Both deltas are ``after - before``, each side fully re-evaluated from
    scratch so they can check one another; for a matching kind/policy
    they agree to within :data:`POTENTIAL_TOL`.
    """
    moved = profile.moved(mover, to)
    d_pot = potential_value(kind, moved, cfg, pop) - potential_value(kind, profile, cfg, pop)
    if mover.kind == "car":
        d_util = car_utility(mover.index, moved, cfg, pop) - car_utility(mover.index, profile,
                                                                         cfg, pop)
    else:
        d_util = truck_utility(mover.index, moved, cfg, pop) - truck_utility(mover.index, profile,
                                                                             cfg, pop)
    return d_pot, d_util


def cross_difference(profile: ActionProfile, i: int, j: int, car_to: int, truck_to: int,
                     cfg: GameConfig, pop: Population) -> CrossDifferenceReport:
    """Mixed second differences from raw utilities at the four profile corners."""
    car, truck = AgentRef("car", i), AgentRef("truck", j)
    p00 = profile
    p10 = profile.moved(car, car_to)
    p01 = profile.moved(truck, truck_to)
    p11 = p10.moved(truck, truck_to)
    v00, v10 = truck_utility(j, p00, cfg, pop), truck_utility(j, p10, cfg, pop)
    v01, v11 = truck_utility(j, p01, cfg, pop), truck_utility(j, p11, cfg, pop)
    u00, u10 = car_utility(i, p00, cfg, pop), car_utility(i, p10, cfg, pop)
    u01, u11 = car_utility(i, p01, cfg, pop), car_utility(i, p11, cfg, pop)
    lhs = (v00 - v10) - (v01 - v11)
    rhs = (u00 - u01) - (u10 - u11)
    return CrossDifferenceReport(
        lhs=lhs,
        rhs=rhs,
        mismatch=lhs - rhs,
        witness=(i, j, int(profile.z[i]), car_to, int(profile.x[j]), truck_to),
    )


def predicted_cross_mismatch(profile: ActionProfile, i: int, j: int, car_to: int, truck_to: int,
                             cfg: GameConfig, pop: Population) -> float:
    """Closed-form mismatch for the unpriced game.

    With ``s(r) = 1[r = z_i] - 1[r = z'_i]`` the mismatch equals
    ``a * beta * (s(x_j) g(m_{x_j}(x)) - s(x'_j) g(m_{x'_j}(x')))``,
    zero whenever ``beta = 0``, the car move is degenerate, or neither
    truck endpoint touches a car endpoint. Matches the raw-corner
    mismatch of :func:`cross_difference` under ``no_pricing``.
    """
    zi, zp = int(profile.z[i]), car_to
    if zi == zp:
        return 0.0
    xj, xp = int(profile.x[j]), truck_to
    occ = occupancy(profile, cfg.R)
    m_before = int(occ.m[xj - 1])
    m_after = int(occ.m[xp - 1]) + 1 - (xj == xp)

    def s(r: int) -> int:
        return (r == zi) - (r == zp)

    g = cfg.benefit.value
    return (cfg.velocity.a * cfg.beta) * (s(xj) * g(m_before) - s(xp) * g(m_after))


def exact_potential_exists(cfg: GameConfig, pop: Population, *,
                           max_cycles: int = 250_000) -> PotentialDecision:
    """Decide exact-potential existence by exhaustive 4-cycle enumeration.

    For every joint profile, every agent pair and every pair of action
    changes, the sum of the deviators' utility changes around the closed
    4-cycle must vanish (within :data:`CYCLE_TOL`). Works purely through
    utility evaluations, never through the pricing formulas, so it can
    referee the closed-form potentials. Raises :class:`SizeGuardError`
    when the enumeration would exceed ``max_cycles``.
    """
    N, M, R = pop.n_cars, pop.n_trucks, cfg.R
    agents = [AgentRef("car", i) for i in range(N)] + [AgentRef("truck", j) for j in range(M)]
    total = len(agents)
    if total < 2:
        return PotentialDecision(True, None)
    pairs = total * (total - 1) // 2
    work = (R ** total) * pairs * (R - 1) ** 2
    if work > max_cycles:
        raise SizeGuardError(
            f"4-cycle enumeration needs {work} cycles, guard allows {max_cycles}"
        )

    def util(agent: AgentRef, profile: ActionProfile) -> float:
        if agent.kind == "car":
            return car_utility(agent.index, profile, cfg, pop)
        return truck_utility(agent.index, profile, cfg, pop)

    for assignment in itertools.product(range(1, R + 1), repeat=total):
        base = ActionProfile.of(assignment[:N], assignment[N:])
        for ia, ib in itertools.combinations(range(total), 2):
            a_ref, b_ref = agents[ia], agents[ib]
            a0, b0 = assignment[ia], assignment[ib]
            for a1 in range(1, R + 1):
                if a1 == a0:
                    continue
                p1 = base.moved(a_ref, a1)
                for b1 in range(1, R + 1):
                    if b1 == b0:
                        continue
                    p2 = p1.moved(b_ref, b1)
                    p3 = base.moved(b_ref, b1)
                    total_change = (
                        (util(a_ref, p1) - util(a_ref, base))
                        + (util(b_ref, p2) - util(b_ref, p1))
                        + (util(a_ref, p3) - util(a_ref, p2))
                        + (util(b_ref, base) - util(b_ref, p3))
                    )
                    if abs(total_change) > CYCLE_TOL:
                        witness = CycleWitness(
                            first=a_ref,
                            first_move=(a0, a1),
                            second=b_ref,
                            second_move=(b0, b1),
                            base_z=tuple(int(v) for v in base.z),
                            base_x=tuple(int(v) for v in base.x),
                            cycle_sum=total_change,
                        )
                        return PotentialDecision(False, witness)
    return PotentialDecision(True, None)

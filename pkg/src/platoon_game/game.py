"""Core model of a two-type departure-time congestion game.

A day is split into ``R`` non-overlapping time intervals. Two kinds of
drivers pick one interval each to use a shared road segment: *cars*
(including trucks without platooning equipment) and *trucks* (vehicles
that can platoon and therefore like sharing an interval with their
peers). The average flow velocity at an interval drops affinely with the
number of vehicles there, every driver pays a penalty for deviating from
their preferred interval, and an optional pricing policy adds a
congestion tax for cars or a platooning subsidy for trucks.

Conventions used throughout the package:

- interval indices are 1-based (``1..R``); any length-``R`` array is
  indexed by ``r - 1``;
- agent indices are 0-based within their own type;
- utilities are plain ``float`` sums of penalty, velocity, pricing and
  (for trucks) platooning terms, always added in that order so that the
  scalar and the vectorised evaluators agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal

import numpy as np


class GameError(Exception):
    """Base class for errors raised by this package."""


class InvalidProfileError(GameError, ValueError):
    """An action profile contains an out-of-range interval index."""


class PolicyMismatchError(GameError, ValueError):
    """An operation was asked to price under the wrong policy."""


# ---------------------------------------------------------------------------
# model building blocks


@dataclass(frozen=True)
class VelocityModel:
    """Affine velocity of the traffic flow: ``v = a * count + b`` [km/h].

    ``a`` is the (negative) per-vehicle slowdown and ``b`` the free-flow
    velocity of the empty road.
    """

    a: float
    b: float

    def __post_init__(self) -> None:
        if not self.a < 0:
            raise ValueError(f"velocity slope a must be negative, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"free-flow velocity b must be positive, got {self.b}")

    def at_count(self, count):
        """Velocity for ``count`` vehicles sharing one interval."""
        return self.a * count + self.b


@dataclass(frozen=True)
class PenaltyKind:
    """Disutility for using the road away from the preferred interval.

    ``absolute`` charges ``alpha * |chosen - preferred|`` while
    ``late_only`` charges ``alpha * max(chosen - preferred, 0)``;
    ``alpha`` is strictly negative, so the penalty is never positive.
    """

    kind: Literal["absolute", "late_only"]
    alpha: float

    def __post_init__(self) -> None:
        if self.kind not in ("absolute", "late_only"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if not self.alpha < 0:
            raise ValueError(f"penalty slope alpha must be negative, got {self.alpha}")

    @classmethod
    def absolute(cls, alpha: float) -> "PenaltyKind":
        return cls("absolute", alpha)

    @classmethod
    def late_only(cls, alpha: float) -> "PenaltyKind":
        return cls("late_only", alpha)


@dataclass(frozen=True)
class PlatoonBenefit:
    """Nondecreasing benefit ``g(m)`` of sharing an interval with ``m`` trucks.

    ``linear`` uses ``g(m) = m``; ``thresholded`` uses
    ``g(m) = m`` once ``m`` reaches the threshold and 0 below it.
    ``g(0) = 0`` by convention (an empty interval yields no benefit).
    """

    kind: Literal["linear", "thresholded"]
    threshold: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "thresholded"):
            raise ValueError(f"unknown benefit kind {self.kind!r}")
        if self.kind == "thresholded":
            if self.threshold is None or self.threshold < 1:
                raise ValueError("thresholded benefit needs a threshold >= 1")
        elif self.threshold is not None:
            raise ValueError("linear benefit takes no threshold")

    @classmethod
    def linear(cls) -> "PlatoonBenefit":
        return cls("linear")

    @classmethod
    def thresholded(cls, threshold: int) -> "PlatoonBenefit":
        return cls("thresholded", threshold)

    def value(self, m):
        """``g(m)``; accepts scalars or arrays, fractional ``m`` allowed."""
        m = np.asarray(m, dtype=float)
        if self.kind == "thresholded":
            out = np.where(m >= self.threshold, m, 0.0)
        else:
            out = m
        return float(out) if out.ndim == 0 else out

    def prefix_sum(self, m):
        """Cumulative benefit ``sum_{k=1}^{m} g(k)``.

        Exact for integer ``m``; extended piecewise-linearly between
        integers so that forecast-based learners can price fractional
        flow averages.
        """
        m = np.maximum(np.asarray(m, dtype=float), 0.0)
        whole = np.floor(m)
        frac = m - whole
        if self.kind == "linear":
            base = whole * (whole + 1.0) / 2.0
        else:
            t = float(self.threshold)
            base = np.where(whole >= t, whole * (whole + 1.0) / 2.0 - (t - 1.0) * t / 2.0, 0.0)
        out = base + frac * self.value(whole + 1.0)
        return float(out) if out.ndim == 0 else out

    def prefix_table(self, max_m: int) -> np.ndarray:
        """Lookup table ``G`` with ``G[m] = sum_{k=1}^{m} g(k)``, ``m = 0..max_m``."""
        values = self.value(np.arange(1, max_m + 1, dtype=float))
        return np.concatenate(([0.0], np.cumsum(values)))


@dataclass(frozen=True)
class PricingPolicy:
    """Which pricing term, if any, enters the utilities.

    - ``no_pricing``: both pricing terms are zero;
    - ``car_tax``: cars pay a tax driven by the trucks sharing their
      interval (restores the exact-potential property);
    - ``car_tax_delayed``: the same tax, but computed from the truck
      counts ``delay`` days ago and zero before day ``delay + 1``; the
      history of counts is owned by the learning loop and handed to the
      evaluators as an explicit ``tax_basis`` argument;
    - ``truck_subsidy``: trucks are paid
      ``beta * (reference_velocity - flow velocity) * platoon size``.
    """

    kind: Literal["no_pricing", "car_tax", "car_tax_delayed", "truck_subsidy"]
    delay: int | None = None
    reference_velocity: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("no_pricing", "car_tax", "car_tax_delayed", "truck_subsidy"):
            raise ValueError(f"unknown pricing policy {self.kind!r}")
        if self.kind == "car_tax_delayed":
            if self.delay is None or self.delay < 1:
                raise ValueError("delayed car tax needs delay >= 1")
        elif self.delay is not None:
            raise ValueError(f"policy {self.kind!r} takes no delay")
        if self.kind == "truck_subsidy":
            if self.reference_velocity is None:
                raise ValueError("truck subsidy needs a reference velocity")
        elif self.reference_velocity is not None:
            raise ValueError(f"policy {self.kind!r} takes no reference velocity")

    @classmethod
    def no_pricing(cls) -> "PricingPolicy":
        return cls("no_pricing")

    @classmethod
    def car_tax(cls) -> "PricingPolicy":
        return cls("car_tax")

    @classmethod
    def car_tax_delayed(cls, delay: int) -> "PricingPolicy":
        return cls("car_tax_delayed", delay=delay)

    @classmethod
    def truck_subsidy(cls, reference_velocity: float) -> "PricingPolicy":
        return cls("truck_subsidy", reference_velocity=reference_velocity)

    @property
    def taxes_cars(self) -> bool:
        return self.kind in ("car_tax", "car_tax_delayed")


@dataclass(frozen=True)
class CarAgent:
    """A car driver: preferred interval, deviation penalty, value of time.

    ``value_of_time`` rescales only the congestion tax (a driver who
    values time highly shrugs off the toll); velocity and penalty terms
    are never rescaled.
    """

    preferred: int
    penalty: PenaltyKind
    value_of_time: float = 1.0

    def __post_init__(self) -> None:
        if not self.value_of_time > 0:
            raise ValueError("value_of_time must be positive")
        if self.preferred < 1:
            raise ValueError("preferred interval must be >= 1")


@dataclass(frozen=True)
class TruckAgent:
    """A platooning-equipped truck: preferred interval and deviation penalty."""

    preferred: int
    penalty: PenaltyKind

    def __post_init__(self) -> None:
        if self.preferred < 1:
            raise ValueError("preferred interval must be >= 1")


@dataclass(frozen=True)
class Population:
    """Immutable roster of all players. Derived arrays are cached."""

    cars: tuple[CarAgent, ...]
    trucks: tuple[TruckAgent, ...]

    @property
    def n_cars(self) -> int:
        return len(self.cars)

    @property
    def n_trucks(self) -> int:
        return len(self.trucks)

    @cached_property
    def car_preferred(self) -> np.ndarray:
        return _readonly(np.array([c.preferred for c in self.cars], dtype=np.int64))

    @cached_property
    def car_alpha(self) -> np.ndarray:
        return _readonly(np.array([c.penalty.alpha for c in self.cars], dtype=float))

    @cached_property
    def car_late_only(self) -> np.ndarray:
        return _readonly(np.array([c.penalty.kind == "late_only" for c in self.cars], dtype=bool))

    @cached_property
    def car_value_of_time(self) -> np.ndarray:
        return _readonly(np.array([c.value_of_time for c in self.cars], dtype=float))

    @cached_property
    def truck_preferred(self) -> np.ndarray:
        return _readonly(np.array([t.preferred for t in self.trucks], dtype=np.int64))

    @cached_property
    def truck_alpha(self) -> np.ndarray:
        return _readonly(np.array([t.penalty.alpha for t in self.trucks], dtype=float))

    @cached_property
    def truck_late_only(self) -> np.ndarray:
        return _readonly(np.array([t.penalty.kind == "late_only" for t in self.trucks], dtype=bool))

    def preference_profile(self) -> "ActionProfile":
        """The profile where every agent uses its preferred interval."""
        return ActionProfile(self.car_preferred.copy(), self.truck_preferred.copy())


@dataclass(frozen=True)
class GameConfig:
    """Immutable physics of one game instance."""

    R: int
    velocity: VelocityModel
    beta: float
    benefit: PlatoonBenefit
    policy: PricingPolicy

    def __post_init__(self) -> None:
        if self.R < 2:
            raise ValueError(f"need at least two intervals, got R={self.R}")
        if not self.beta >= 0:
            raise ValueError(f"platoon coefficient beta must be >= 0, got {self.beta}")


@dataclass(frozen=True, eq=False)
class ActionProfile:
    """One chosen interval per car (``z``) and per truck (``x``)."""

    z: np.ndarray
    x: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "z", _readonly(np.asarray(self.z, dtype=np.int64)))
        object.__setattr__(self, "x", _readonly(np.asarray(self.x, dtype=np.int64)))

    @classmethod
    def of(cls, z, x) -> "ActionProfile":
        return cls(np.asarray(z, dtype=np.int64), np.asarray(x, dtype=np.int64))

    def moved(self, agent: "AgentRef", to: int) -> "ActionProfile":
        """Copy of the profile with one agent moved to interval ``to``."""
        if agent.kind == "car":
            z = self.z.copy()
            z[agent.index] = to
            return ActionProfile(z, self.x)
        x = self.x.copy()
        x[agent.index] = to
        return ActionProfile(self.z, x)

    def same_as(self, other: "ActionProfile") -> bool:
        return np.array_equal(self.z, other.z) and np.array_equal(self.x, other.x)


@dataclass(frozen=True, eq=False)
class Occupancy:
    """Per-interval totals: ``n[r-1]`` vehicles of which ``m[r-1]`` trucks."""

    n: np.ndarray
    m: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "n", _readonly(np.asarray(self.n, dtype=np.int64)))
        object.__setattr__(self, "m", _readonly(np.asarray(self.m, dtype=np.int64)))
        if self.n.shape != self.m.shape:
            raise ValueError("occupancy vectors must have equal length")
        if (self.m > self.n).any() or (self.m < 0).any():
            raise ValueError("truck counts must satisfy 0 <= m_r <= n_r")


@dataclass(frozen=True)
class AgentRef:
    """Addresses one player: ``kind`` plus 0-based index within its type."""

    kind: Literal["car", "truck"]
    index: int

    def __post_init__(self) -> None:
        if self.kind not in ("car", "truck"):
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.index < 0:
            raise ValueError("agent index must be >= 0")


@dataclass(frozen=True)
class NashResult:
    """Verdict of a brute-force deviation scan plus the first witness."""

    equilibrium: bool
    witness: tuple[AgentRef, int] | None = None

    def __bool__(self) -> bool:
        return self.equilibrium


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# scalar operations


def occupancy(profile: ActionProfile, R: int) -> Occupancy:
    """Count vehicles and trucks per interval.

    Raises :class:`InvalidProfileError` if any action lies outside ``1..R``.
    """
    for name, actions in (("car", profile.z), ("truck", profile.x)):
        if actions.size and (actions.min() < 1 or actions.max() > R):
            raise InvalidProfileError(f"{name} action outside 1..{R}")
    m = np.bincount(profile.x - 1, minlength=R)
    n = np.bincount(profile.z - 1, minlength=R) + m
    return Occupancy(n, m)


def velocity(occ: Occupancy, r: int, vm: VelocityModel) -> float:
    """Average flow velocity at interval ``r`` [km/h]."""
    return float(vm.a * occ.n[r - 1] + vm.b)


def penalty(kind: PenaltyKind, chosen: int, preferred: int) -> float:
    """Schedule-deviation penalty (always <= 0)."""
    if kind.kind == "late_only":
        return kind.alpha * max(chosen - preferred, 0)
    return kind.alpha * abs(chosen - preferred)


def _car_tax_counts(cfg: GameConfig, occ: Occupancy, tax_basis: np.ndarray | None):
    """Truck counts the car tax is computed from, or None for a zero tax.

    Live policies read the supplied occupancy; the delayed policy reads
    the explicit ``tax_basis`` (the counts the announced schedule was
    computed from), with ``None`` meaning no schedule announced yet.
    """
    if cfg.policy.kind == "car_tax":
        return occ.m
    if cfg.policy.kind == "car_tax_delayed":
        return tax_basis
    return None


def car_tax(cfg: GameConfig, occ: Occupancy, r: int, delta: float = 1.0, *,
            tax_basis: np.ndarray | None = None) -> float:
    """Congestion tax a car pays at interval ``r`` (as a utility term, <= 0).

    Equals ``a * beta * sum_{k=1}^{m_r} g(k)`` divided by the car's value
    of time ``delta``. Requires a car-taxing policy.
    """
    if not cfg.policy.taxes_cars:
        raise PolicyMismatchError(f"car tax undefined under policy {cfg.policy.kind!r}")
    counts = _car_tax_counts(cfg, occ, tax_basis)
    if counts is None:
        return 0.0
    gsum = float(cfg.benefit.prefix_sum(int(counts[r - 1])))
    return (cfg.velocity.a * cfg.beta) * gsum / delta


def truck_subsidy(cfg: GameConfig, occ: Occupancy, r: int) -> float:
    """Platooning subsidy a truck receives at interval ``r``.

    Pays ``beta * (reference velocity - flow velocity) * m_r``; positive
    exactly when the flow is slower than the reference and trucks are
    present. Requires the truck-subsidy policy.
    """
    if cfg.policy.kind != "truck_subsidy":
        raise PolicyMismatchError(f"truck subsidy undefined under policy {cfg.policy.kind!r}")
    v = cfg.velocity.a * int(occ.n[r - 1]) + cfg.velocity.b
    return (cfg.beta * (cfg.policy.reference_velocity - v)) * int(occ.m[r - 1])


def car_utility(i: int, profile: ActionProfile, cfg: GameConfig, pop: Population, *,
                occ: Occupancy | None = None, tax_basis: np.ndarray | None = None) -> float:
    """Utility of car ``i``: penalty + velocity + (car tax if priced)."""
    if occ is None:
        occ = occupancy(profile, cfg.R)
    agent = pop.cars[i]
    r = int(profile.z[i])
    u = penalty(agent.penalty, r, agent.preferred) + velocity(occ, r, cfg.velocity)
    if cfg.policy.taxes_cars:
        counts = _car_tax_counts(cfg, occ, tax_basis)
        if counts is not None:
            gsum = float(cfg.benefit.prefix_sum(int(counts[r - 1])))
            u = u + (cfg.velocity.a * cfg.beta) * gsum / agent.value_of_time
    return u


def truck_utility(j: int, profile: ActionProfile, cfg: GameConfig, pop: Population, *,
                  occ: Occupancy | None = None) -> float:
    """Utility of truck ``j``: penalty + velocity + subsidy (if priced) + platooning term."""
    if occ is None:
        occ = occupancy(profile, cfg.R)
    agent = pop.trucks[j]
    r = int(profile.x[j])
    v = velocity(occ, r, cfg.velocity)
    u = penalty(agent.penalty, r, agent.preferred) + v
    if cfg.policy.kind == "truck_subsidy":
        u = u + (cfg.beta * (cfg.policy.reference_velocity - v)) * int(occ.m[r - 1])
    u = u + (cfg.beta * v) * float(cfg.benefit.value(int(occ.m[r - 1])))
    return u


# ---------------------------------------------------------------------------
# vectorised counterfactual evaluation
#
# Table entry [i, r-1] is agent i's utility with that agent alone moved to
# interval r (everyone else fixed). Counterfactual occupancies are adjusted
# in integers and fed through exactly the same floating-point expression as
# the scalar operations above, so table entries match scalar re-evaluation
# bitwise.


def _penalty_table(alpha: np.ndarray, preferred: np.ndarray, late_only: np.ndarray,
                   R: int) -> np.ndarray:
    rs = np.arange(1, R + 1, dtype=np.int64)[None, :]
    dev_late = np.maximum(rs - preferred[:, None], 0)
    dev_abs = np.abs(rs - preferred[:, None])
    dev = np.where(late_only[:, None], dev_late, dev_abs)
    return _readonly(alpha[:, None] * dev)


def car_penalty_table(pop: Population, R: int) -> np.ndarray:
    """Penalty of every car at every interval, shape ``(n_cars, R)``.

    Constant per population, so cached on the instance; treat as
    read-only.
    """
    cache = pop.__dict__.setdefault("_penalty_tables", {})
    key = ("car", R)
    if key not in cache:
        cache[key] = _penalty_table(pop.car_alpha, pop.car_preferred, pop.car_late_only, R)
    return cache[key]


def truck_penalty_table(pop: Population, R: int) -> np.ndarray:
    """Penalty of every truck at every interval, shape ``(n_trucks, R)``; cached."""
    cache = pop.__dict__.setdefault("_penalty_tables", {})
    key = ("truck", R)
    if key not in cache:
        cache[key] = _penalty_table(pop.truck_alpha, pop.truck_preferred, pop.truck_late_only, R)
    return cache[key]


def car_utility_table(profile: ActionProfile, cfg: GameConfig, pop: Population, *,
                      occ: Occupancy | None = None,
                      tax_basis: np.ndarray | None = None,
                      divisors: np.ndarray | None = None) -> np.ndarray:
    """Counterfactual car utilities, shape ``(n_cars, R)``.

    ``divisors`` optionally divides the flow velocity per interval (used
    to model one-day disruptions such as accidents).
    """
    if occ is None:
        occ = occupancy(profile, cfg.R)
    rs = np.arange(1, cfg.R + 1, dtype=np.int64)
    own = profile.z[:, None] == rs[None, :]
    counts = occ.n[None, :] + 1 - own
    v = cfg.velocity.a * counts + cfg.velocity.b
    if divisors is not None:
        v = v / divisors[None, :]
    util = car_penalty_table(pop, cfg.R) + v
    if cfg.policy.taxes_cars:
        tax_counts = _car_tax_counts(cfg, occ, tax_basis)
        if tax_counts is not None:
            table = cfg.benefit.prefix_table(int(tax_counts.max()) if tax_counts.size else 0)
            row = (cfg.velocity.a * cfg.beta) * table[tax_counts]
            util = util + row[None, :] / pop.car_value_of_time[:, None]
    return util


def truck_utility_table(profile: ActionProfile, cfg: GameConfig, pop: Population, *,
                        occ: Occupancy | None = None,
                        divisors: np.ndarray | None = None) -> np.ndarray:
    """Counterfactual truck utilities, shape ``(n_trucks, R)``."""
    if occ is None:
        occ = occupancy(profile, cfg.R)
    rs = np.arange(1, cfg.R + 1, dtype=np.int64)
    own = profile.x[:, None] == rs[None, :]
    counts = occ.n[None, :] + 1 - own
    peers = occ.m[None, :] + 1 - own
    v = cfg.velocity.a * counts + cfg.velocity.b
    if divisors is not None:
        v = v / divisors[None, :]
    util = truck_penalty_table(pop, cfg.R) + v
    if cfg.policy.kind == "truck_subsidy":
        util = util + (cfg.beta * (cfg.policy.reference_velocity - v)) * peers
    util = util + (cfg.beta * v) * cfg.benefit.value(peers)
    return util


def best_response(agent: AgentRef, profile: ActionProfile, cfg: GameConfig, pop: Population, *,
                  tax_basis: np.ndarray | None = None) -> int:
    """Interval maximising the agent's utility with everyone else fixed.

    Ties break to the smallest interval index.
    """
    if agent.kind == "car":
        row = car_utility_table(profile, cfg, pop, tax_basis=tax_basis)[agent.index]
    else:
        row = truck_utility_table(profile, cfg, pop)[agent.index]
    return int(np.argmax(row)) + 1


def is_nash(profile: ActionProfile, cfg: GameConfig, pop: Population, *,
            occ: Occupancy | None = None,
            tax_basis: np.ndarray | None = None) -> NashResult:
    """Certify a pure-strategy Nash equilibrium by exhaustive deviation scan.

    Uses a strict improvement test with zero tolerance. On failure the
    witness is the first improving (agent, interval) pair in
    cars-then-trucks, ascending-interval order.
    """
    if occ is None:
        occ = occupancy(profile, cfg.R)
    cars = car_utility_table(profile, cfg, pop, occ=occ, tax_basis=tax_basis)
    current = cars[np.arange(len(pop.cars)), profile.z - 1] if len(pop.cars) else np.empty(0)
    better = cars > current[:, None]
    rows = np.flatnonzero(better.any(axis=1))
    if rows.size:
        i = int(rows[0])
        r = int(np.flatnonzero(better[i])[0]) + 1
        return NashResult(False, (AgentRef("car", i), r))
    trucks = truck_utility_table(profile, cfg, pop, occ=occ)
    current = trucks[np.arange(len(pop.trucks)), profile.x - 1] if len(pop.trucks) else np.empty(0)
    better = trucks > current[:, None]
    rows = np.flatnonzero(better.any(axis=1))
    if rows.size:
        j = int(rows[0])
        r = int(np.flatnonzero(better[j])[0]) + 1
        return NashResult(False, (AgentRef("truck", j), r))
    return NashResult(True, None)

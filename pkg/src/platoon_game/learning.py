"""Day-by-day learning dynamics that settle into a pure Nash equilibrium.

Two fictitious-play variants are implemented. Both share the same daily
rhythm: every driver picks a candidate interval by maximising a private
score, switches to it only if it would actually have beaten yesterday's
choice (and then only with the inertia probability), and finally all
bookkeeping is refreshed against the day's realised traffic.

- *Joint strategy fictitious play* (``jsfp``): each agent keeps a
  forgetting-weighted average of the hypothetical utility of every
  interval, refreshed each day against the freshly committed profile.
- *Average strategy fictitious play* (``asfp``): a central node
  broadcasts forgetting-weighted per-interval flow averages; each agent
  only remembers how often it has used each interval itself and scores
  intervals from those forecasts.

Within one step, all agents decide simultaneously against the frozen
previous profile (phase 1) and the profile is committed once (phase 2);
random draws are pre-assigned by agent index, cars first, so the result
does not depend on evaluation order. Every utility evaluated during
step ``t`` uses the day-``t`` context: the perturbed velocity if ``t``
is a perturbation day, and the delayed tax schedule announced for day
``t``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .game import (
    ActionProfile,
    GameConfig,
    Occupancy,
    PolicyMismatchError,
    Population,
    _car_tax_counts,
    car_penalty_table,
    car_utility_table,
    is_nash,
    occupancy,
    truck_penalty_table,
    truck_utility_table,
)

Algorithm = Literal["jsfp", "asfp"]


@dataclass(frozen=True)
class ForgettingSchedule:
    """Weight on the newest observation in the averaging recursions.

    ``constant`` keeps a fixed rate in (0, 1); ``harmonic`` uses
    ``1 / (t + 1)`` so that step 0 is fully myopic and the whole history
    is weighted evenly afterwards.
    """

    kind: Literal["constant", "harmonic"]
    value: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "harmonic"):
            raise ValueError(f"unknown forgetting schedule {self.kind!r}")
        if self.kind == "constant":
            if self.value is None or not 0.0 < self.value < 1.0:
                raise ValueError("constant forgetting factor must lie strictly in (0, 1)")
        elif self.value is not None:
            raise ValueError("harmonic schedule takes no value")

    @classmethod
    def constant(cls, value: float) -> "ForgettingSchedule":
        return cls("constant", value)

    @classmethod
    def harmonic(cls) -> "ForgettingSchedule":
        return cls("harmonic")

    def rate(self, t: int) -> float:
        if self.kind == "constant":
            return self.value
        return 1.0 / (t + 1)


@dataclass(frozen=True)
class Perturbation:
    """One-day disruption: velocities at some intervals are divided.

    Models an accident or sudden weather change on day ``at_iteration``:
    both the day's acceptance comparisons and its memory refresh see the
    reduced velocities, and nothing else does.
    """

    at_iteration: int
    intervals: tuple[int, ...]
    velocity_divisor: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", tuple(int(r) for r in self.intervals))
        if self.at_iteration < 0:
            raise ValueError("at_iteration must be >= 0")
        if not self.intervals:
            raise ValueError("perturbation needs at least one interval")
        if not self.velocity_divisor > 0:
            raise ValueError("velocity divisor must be positive")


@dataclass(eq=False)
class JsfpState:
    """Profile plus per-agent average-utility memories after ``t`` steps.

    Memories start from pure deviation penalties (what an agent can
    score before ever observing traffic). ``truck_count_history`` keeps
    one truck-count vector per committed day and exists only under the
    delayed car tax, which prices day ``t`` from the counts of day
    ``t - delay``.
    """

    profile: ActionProfile
    car_avg_utility: np.ndarray
    truck_avg_utility: np.ndarray
    t: int
    truck_count_history: tuple[np.ndarray, ...] | None = None


@dataclass(eq=False)
class AsfpState:
    """Profile, central flow averages and per-agent choice averages."""

    profile: ActionProfile
    car_flow_avg: np.ndarray
    truck_flow_avg: np.ndarray
    car_choice_avg: np.ndarray
    truck_choice_avg: np.ndarray
    t: int


@dataclass(eq=False)
class Trace:
    """Everything a finished run leaves behind."""

    algorithm: str
    iterations: int
    converged: bool
    certified_at: int | None
    occupancy: np.ndarray
    truck_occupancy: np.ndarray
    switches: np.ndarray
    final_profile: ActionProfile
    final_state: "JsfpState | AsfpState"


def init_jsfp(profile: ActionProfile, cfg: GameConfig, pop: Population) -> JsfpState:
    occupancy(profile, cfg.R)  # validates the profile
    history = () if cfg.policy.kind == "car_tax_delayed" else None
    return JsfpState(
        profile=profile,
        car_avg_utility=car_penalty_table(pop, cfg.R),
        truck_avg_utility=truck_penalty_table(pop, cfg.R),
        t=0,
        truck_count_history=history,
    )


def init_asfp(profile: ActionProfile, cfg: GameConfig, pop: Population) -> AsfpState:
    if cfg.policy.kind == "car_tax_delayed":
        raise PolicyMismatchError(
            "asfp needs prices that are functions of the current interval counts; "
            "the delayed car tax is not"
        )
    occupancy(profile, cfg.R)
    rs = np.arange(1, cfg.R + 1, dtype=np.int64)
    return AsfpState(
        profile=profile,
        car_flow_avg=np.bincount(profile.z - 1, minlength=cfg.R).astype(float),
        truck_flow_avg=np.bincount(profile.x - 1, minlength=cfg.R).astype(float),
        car_choice_avg=(profile.z[:, None] == rs[None, :]).astype(float),
        truck_choice_avg=(profile.x[:, None] == rs[None, :]).astype(float),
        t=0,
    )


# ---------------------------------------------------------------------------
# per-step machinery


def _divisors_for(R: int, t: int, perturbations: Sequence[Perturbation]) -> np.ndarray | None:
    divisors = None
    for p in perturbations:
        if p.at_iteration == t:
            if divisors is None:
                divisors = np.ones(R)
            for r in p.intervals:
                divisors[r - 1] *= p.velocity_divisor
    return divisors


def _delayed_basis(cfg: GameConfig, history: tuple[np.ndarray, ...] | None,
                   day: int) -> np.ndarray | None:
    """Truck counts behind the tax schedule announced for ``day``."""
    if cfg.policy.kind != "car_tax_delayed" or history is None:
        return None
    if day <= cfg.policy.delay:
        return None
    return history[day - cfg.policy.delay]


def _car_values_at(targets: np.ndarray, profile: ActionProfile, occ: Occupancy,
                   cfg: GameConfig, pop: Population,
                   tax_basis: np.ndarray | None,
                   divisors: np.ndarray | None) -> np.ndarray:
    """Utility of each car moved alone to its target interval.

    Mirrors the expression of :func:`platoon_game.game.car_utility_table`
    entry-for-entry (same integer counterfactual counts, same term
    order), so gathered values match table entries bitwise.
    """
    t0 = targets - 1
    counts = occ.n[t0] + 1 - (profile.z == targets)
    v = cfg.velocity.a * counts + cfg.velocity.b
    if divisors is not None:
        v = v / divisors[t0]
    dev = np.where(pop.car_late_only, np.maximum(targets - pop.car_preferred, 0),
                   np.abs(targets - pop.car_preferred))
    util = pop.car_alpha * dev + v
    if cfg.policy.taxes_cars:
        tax_counts = _car_tax_counts(cfg, occ, tax_basis)
        if tax_counts is not None:
            table = cfg.benefit.prefix_table(int(tax_counts.max()) if tax_counts.size else 0)
            row = (cfg.velocity.a * cfg.beta) * table[tax_counts]
            util = util + row[t0] / pop.car_value_of_time
    return util


def _truck_values_at(targets: np.ndarray, profile: ActionProfile, occ: Occupancy,
                     cfg: GameConfig, pop: Population,
                     divisors: np.ndarray | None) -> np.ndarray:
    """Utility of each truck moved alone to its target interval."""
    t0 = targets - 1
    own = profile.x == targets
    counts = occ.n[t0] + 1 - own
    peers = occ.m[t0] + 1 - own
    v = cfg.velocity.a * counts + cfg.velocity.b
    if divisors is not None:
        v = v / divisors[t0]
    dev = np.where(pop.truck_late_only, np.maximum(targets - pop.truck_preferred, 0),
                   np.abs(targets - pop.truck_preferred))
    util = pop.truck_alpha * dev + v
    if cfg.policy.kind == "truck_subsidy":
        util = util + (cfg.beta * (cfg.policy.reference_velocity - v)) * peers
    util = util + (cfg.beta * v) * cfg.benefit.value(peers)
    return util


def _accept_candidates(profile: ActionProfile, occ: Occupancy, cfg: GameConfig, pop: Population,
                       cand_c: np.ndarray, cand_t: np.ndarray, inertia: float,
                       draws: np.ndarray, tax_basis: np.ndarray | None,
                       divisors: np.ndarray | None) -> ActionProfile:
    """Switch to a candidate only if it strictly beats the incumbent, then
    only with the inertia probability. All comparisons are against the
    frozen previous profile."""
    N = pop.n_cars
    u_inc = _car_values_at(profile.z, profile, occ, cfg, pop, tax_basis, divisors)
    u_cand = _car_values_at(cand_c, profile, occ, cfg, pop, tax_basis, divisors)
    z_new = np.where((u_cand > u_inc) & (draws[:N] < inertia), cand_c, profile.z)
    v_inc = _truck_values_at(profile.x, profile, occ, cfg, pop, divisors)
    v_cand = _truck_values_at(cand_t, profile, occ, cfg, pop, divisors)
    x_new = np.where((v_cand > v_inc) & (draws[N:] < inertia), cand_t, profile.x)
    return ActionProfile(z_new, x_new)


def _check_inertia(inertia: float) -> None:
    if not 0.0 < inertia < 1.0:
        raise ValueError(f"inertia must lie strictly in (0, 1), got {inertia}")


def jsfp_step(state: JsfpState, cfg: GameConfig, pop: Population, *,
              inertia: float, schedule: ForgettingSchedule, rng: np.random.Generator,
              perturbations: Sequence[Perturbation] = ()) -> JsfpState:
    """Advance joint strategy fictitious play by one day.

    Candidates are the argmax (smallest index on ties) of the average
    utility memories; after the profile commits, every memory entry is
    refreshed towards the utility the agent would have realised at that
    interval today.
    """
    _check_inertia(inertia)
    t = state.t
    occ = occupancy(state.profile, cfg.R)
    divisors = _divisors_for(cfg.R, t, perturbations)
    basis = _delayed_basis(cfg, state.truck_count_history, t)
    draws = rng.random(pop.n_cars + pop.n_trucks)

    cand_c = np.argmax(state.car_avg_utility, axis=1) + 1
    cand_t = np.argmax(state.truck_avg_utility, axis=1) + 1
    new_profile = _accept_candidates(state.profile, occ, cfg, pop, cand_c, cand_t,
                                     inertia, draws, basis, divisors)

    occ_new = occupancy(new_profile, cfg.R)
    rate = schedule.rate(t)
    car_table = car_utility_table(new_profile, cfg, pop, occ=occ_new, tax_basis=basis,
                                  divisors=divisors)
    truck_table = truck_utility_table(new_profile, cfg, pop, occ=occ_new, divisors=divisors)
    history = state.truck_count_history
    if history is not None:
        history = history + (occ_new.m,)
    return JsfpState(
        profile=new_profile,
        car_avg_utility=(1.0 - rate) * state.car_avg_utility + rate * car_table,
        truck_avg_utility=(1.0 - rate) * state.truck_avg_utility + rate * truck_table,
        t=t + 1,
        truck_count_history=history,
    )


def _car_forecast_table(state: AsfpState, cfg: GameConfig, pop: Population) -> np.ndarray:
    """Score of every (car, interval) from the broadcast flow forecast.

    The expected crowd at an interval is the averaged total flow minus
    the car's own averaged presence plus one (itself).
    """
    others = (state.car_flow_avg + state.truck_flow_avg + 1.0)[None, :] - state.car_choice_avg
    v = cfg.velocity.a * others + cfg.velocity.b
    util = car_penalty_table(pop, cfg.R) + v
    if cfg.policy.kind == "car_tax":
        row = (cfg.velocity.a * cfg.beta) * cfg.benefit.prefix_sum(state.truck_flow_avg)
        util = util + row[None, :] / pop.car_value_of_time[:, None]
    return util


def _truck_forecast_table(state: AsfpState, cfg: GameConfig, pop: Population) -> np.ndarray:
    """Score of every (truck, interval) from the broadcast flow forecast."""
    total = (state.car_flow_avg + state.truck_flow_avg + 1.0)[None, :] - state.truck_choice_avg
    peers = (state.truck_flow_avg + 1.0)[None, :] - state.truck_choice_avg
    v = cfg.velocity.a * total + cfg.velocity.b
    util = truck_penalty_table(pop, cfg.R) + v
    if cfg.policy.kind == "truck_subsidy":
        util = util + (cfg.beta * (cfg.policy.reference_velocity - v)) * peers
    util = util + (cfg.beta * v) * cfg.benefit.value(peers)
    return util


def asfp_step(state: AsfpState, cfg: GameConfig, pop: Population, *,
              inertia: float, forgetting: float, rng: np.random.Generator,
              perturbations: Sequence[Perturbation] = ()) -> AsfpState:
    """Advance average strategy fictitious play by one day.

    Candidates maximise the forecast scores; acceptance compares realised
    utilities exactly as in :func:`jsfp_step`. Afterwards the central
    node folds the day's interval counts into the flow averages and each
    agent folds its choice indicator into its own average.
    """
    _check_inertia(inertia)
    if not 0.0 < forgetting < 1.0:
        raise ValueError(f"forgetting factor must lie strictly in (0, 1), got {forgetting}")
    occ = occupancy(state.profile, cfg.R)
    divisors = _divisors_for(cfg.R, state.t, perturbations)
    draws = rng.random(pop.n_cars + pop.n_trucks)

    cand_c = np.argmax(_car_forecast_table(state, cfg, pop), axis=1) + 1
    cand_t = np.argmax(_truck_forecast_table(state, cfg, pop), axis=1) + 1
    new_profile = _accept_candidates(state.profile, occ, cfg, pop, cand_c, cand_t,
                                     inertia, draws, None, divisors)

    rs = np.arange(1, cfg.R + 1, dtype=np.int64)
    counts_c = np.bincount(new_profile.z - 1, minlength=cfg.R).astype(float)
    counts_t = np.bincount(new_profile.x - 1, minlength=cfg.R).astype(float)
    keep = 1.0 - forgetting
    return AsfpState(
        profile=new_profile,
        car_flow_avg=keep * state.car_flow_avg + forgetting * counts_c,
        truck_flow_avg=keep * state.truck_flow_avg + forgetting * counts_t,
        car_choice_avg=keep * state.car_choice_avg
        + forgetting * (new_profile.z[:, None] == rs[None, :]),
        truck_choice_avg=keep * state.truck_choice_avg
        + forgetting * (new_profile.x[:, None] == rs[None, :]),
        t=state.t + 1,
    )


# ---------------------------------------------------------------------------
# full runs


def run(algorithm: Algorithm, cfg: GameConfig, pop: Population, *,
        inertia: float, forgetting: ForgettingSchedule, max_iters: int,
        stability_window: int, rng, perturbations: Sequence[Perturbation] = (),
        initial_profile: ActionProfile | None = None) -> Trace:
    """Iterate a learner until it parks on a certified Nash equilibrium.

    The run stops once the profile has not changed for
    ``stability_window`` consecutive steps *and* an exhaustive deviation
    scan certifies it (never before the last scheduled perturbation has
    fired), or after ``max_iters`` steps. Non-convergence is reported in
    the trace, not raised. Identical inputs and seed give a bitwise
    identical trace.
    """
    if algorithm not in ("jsfp", "asfp"):
        raise ValueError(f"unknown algorithm {algorithm!r}")
    _check_inertia(inertia)
    if max_iters < 1 or stability_window < 1:
        raise ValueError("max_iters and stability_window must be >= 1")
    rng = np.random.default_rng(rng)
    if initial_profile is None:
        initial_profile = pop.preference_profile()

    if algorithm == "jsfp":
        state: JsfpState | AsfpState = init_jsfp(initial_profile, cfg, pop)
    else:
        if forgetting.kind != "constant":
            raise ValueError("asfp requires a constant forgetting factor")
        state = init_asfp(initial_profile, cfg, pop)

    last_perturbed = max((p.at_iteration for p in perturbations), default=-1)
    occ_rows: list[np.ndarray] = []
    truck_rows: list[np.ndarray] = []
    switch_counts: list[int] = []
    stable = 0
    checked: bytes | None = None
    converged = False
    certified_at: int | None = None

    for k in range(max_iters):
        previous = state.profile
        if algorithm == "jsfp":
            state = jsfp_step(state, cfg, pop, inertia=inertia, schedule=forgetting,
                              rng=rng, perturbations=perturbations)
        else:
            state = asfp_step(state, cfg, pop, inertia=inertia, forgetting=forgetting.value,
                              rng=rng, perturbations=perturbations)
        occ = occupancy(state.profile, cfg.R)
        occ_rows.append(occ.n)
        truck_rows.append(occ.m)
        moved = int(np.count_nonzero(state.profile.z != previous.z))
        moved += int(np.count_nonzero(state.profile.x != previous.x))
        switch_counts.append(moved)
        if moved:
            stable = 0
            checked = None
        else:
            stable += 1
        if stable >= stability_window and k > last_perturbed:
            basis = _delayed_basis(cfg, getattr(state, "truck_count_history", None), k)
            key = basis.tobytes() if basis is not None else b"live"
            if checked != key:
                checked = key
                if is_nash(state.profile, cfg, pop, occ=occ, tax_basis=basis):
                    converged = True
                    certified_at = k
                    break

    occupancy_hist = np.array(occ_rows, dtype=np.int64)
    if occupancy_hist.size and cfg.velocity.at_count(int(occupancy_hist.max())) < 0:
        warnings.warn(
            "affine velocity went negative during the run; the model is outside "
            "the range it was fitted for",
            stacklevel=2,
        )
    return Trace(
        algorithm=algorithm,
        iterations=len(occ_rows),
        converged=converged,
        certified_at=certified_at,
        occupancy=occupancy_hist,
        truck_occupancy=np.array(truck_rows, dtype=np.int64),
        switches=np.array(switch_counts, dtype=np.int64),
        final_profile=state.profile,
        final_state=state,
    )

"""Scenario files: everything one experiment needs, as a single JSON document.

Schema (all numbers are decimal literals)::

    {
      "game": {
        "intervals": 8,
        "velocity": {"a": -0.011, "b": 84.9696},
        "beta": 0.001,
        "benefit": {"kind": "linear"},           // or {"kind": "thresholded", "threshold": 3}
        "allow_negative_velocity": true          // optional; silences the worst-case warning
      },
      "population": {
        "cars": 10000, "trucks": 100,            // or "total": 10000, "equipment_ratio": 0.01
        "preference": [..R probabilities..],
        "truck_preference": [..optional, defaults to "preference"..],
        "alpha": {"lower": -7.5, "upper": -2.5},
        "penalty": "absolute",                   // or "late_only"
        "value_of_time": [[1.0, 1.0]]            // [delta, probability] pairs, cars only
      },
      "policy": {"kind": "car_tax"},             // no_pricing | car_tax |
                                                 // car_tax_delayed {"delay": 30} |
                                                 // truck_subsidy {"reference_velocity": 85.0}
      "learner": {
        "algorithm": "jsfp",                     // or "asfp"
        "inertia": 0.4,
        "forgetting": {"kind": "constant", "value": 0.03},   // or {"kind": "harmonic"}
        "max_iters": 1000,
        "stability_window": 50,
        "initial_profile": "preferred"           // or "random"
      },
      "perturbations": [
        {"at_iteration": 50, "intervals": [2, 3, 4], "velocity_divisor": 10.0}
      ],
      "seed": 0,
      "output": {"directory": "out"}
    }

Unknown fields are ignored with a warning; everything else is validated
at load time with field-addressed errors. ``save_scenario`` emits a
canonical serialisation, so ``save(load(f))`` is byte-identical for
canonical input.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Literal

import numpy as np

from .game import (
    CarAgent,
    GameConfig,
    GameError,
    PenaltyKind,
    PlatoonBenefit,
    Population,
    PricingPolicy,
    TruckAgent,
    VelocityModel,
)
from .learning import ForgettingSchedule, Perturbation


class ScenarioError(GameError, ValueError):
    """A scenario document failed validation; names the offending field."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"scenario field {field!r}: {message}")


@dataclass(frozen=True)
class PreferenceDistribution:
    """Probability of preferring each interval; must sum to one."""

    probabilities: tuple[float, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        if any(p < 0 for p in self.probabilities):
            raise ValueError("preference probabilities must be nonnegative")
        if abs(sum(self.probabilities) - 1.0) > 1e-12:
            raise ValueError("preference probabilities must sum to 1")

    @classmethod
    def morning_peak(cls) -> "PreferenceDistribution":
        """Default eight-interval distribution with its mode on interval 3."""
        return cls((1 / 12, 1 / 6, 1 / 4, 1 / 6, 1 / 12, 1 / 12, 1 / 12, 1 / 12))


@dataclass(frozen=True)
class AlphaDistribution:
    """Uniform range the (negative) penalty slopes are drawn from."""

    lower: float = -7.5
    upper: float = -2.5

    def __post_init__(self) -> None:
        if not (self.lower <= self.upper < 0):
            raise ValueError("alpha range must satisfy lower <= upper < 0")


@dataclass(frozen=True)
class ValueOfTimeGroups:
    """(value of time, probability) groups the cars are drawn from.

    The default mirrors a commuter survey: most drivers at 1.0, a small
    business-trip group at 3.37 and a leisure group at 0.19.
    """

    groups: tuple[tuple[float, float], ...] = ((1.00, 0.754), (3.37, 0.036), (0.19, 0.210))

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "groups", tuple((float(d), float(p)) for d, p in self.groups)
        )
        if not self.groups:
            raise ValueError("need at least one value-of-time group")
        if any(d <= 0 for d, _ in self.groups):
            raise ValueError("values of time must be positive")
        if any(p < 0 for _, p in self.groups):
            raise ValueError("group probabilities must be nonnegative")
        if abs(sum(p for _, p in self.groups) - 1.0) > 1e-12:
            raise ValueError("group probabilities must sum to 1")

    @classmethod
    def uniform(cls) -> "ValueOfTimeGroups":
        """Everyone values time equally (the tax applies unscaled)."""
        return cls(((1.0, 1.0),))


@dataclass(frozen=True)
class LearnerSettings:
    algorithm: Literal["jsfp", "asfp"] = "jsfp"
    inertia: float = 0.4
    forgetting: ForgettingSchedule = ForgettingSchedule.constant(0.03)
    max_iters: int = 1000
    stability_window: int = 50
    initial_profile: Literal["preferred", "random"] = "preferred"

    def __post_init__(self) -> None:
        if self.algorithm not in ("jsfp", "asfp"):
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0.0 < self.inertia < 1.0:
            raise ValueError("inertia must lie strictly in (0, 1)")
        if self.max_iters < 1 or self.stability_window < 1:
            raise ValueError("max_iters and stability_window must be >= 1")
        if self.initial_profile not in ("preferred", "random"):
            raise ValueError(f"unknown initial profile rule {self.initial_profile!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    """A complete, validated experiment definition."""

    cars: int
    trucks: int
    intervals: int
    velocity: VelocityModel
    beta: float
    benefit: PlatoonBenefit
    policy: PricingPolicy
    preference: PreferenceDistribution
    alpha: AlphaDistribution
    penalty_kind: Literal["absolute", "late_only"]
    value_of_time: ValueOfTimeGroups
    learner: LearnerSettings
    truck_preference: PreferenceDistribution | None = None
    equipment_split: tuple[int, float] | None = None  # (total, ratio) if specified that way
    perturbations: tuple[Perturbation, ...] = ()
    seed: int = 0
    output_dir: str = "out"
    allow_negative_velocity: bool = False

    def __post_init__(self) -> None:
        if self.cars < 0 or self.trucks < 0:
            raise ValueError("agent counts must be >= 0")
        if len(self.preference.probabilities) != self.intervals:
            raise ValueError("preference distribution length must equal interval count")
        if self.truck_preference is not None and \
                len(self.truck_preference.probabilities) != self.intervals:
            raise ValueError("truck preference distribution length must equal interval count")
        if self.penalty_kind not in ("absolute", "late_only"):
            raise ValueError(f"unknown penalty kind {self.penalty_kind!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit an unsigned 64-bit integer")
        # static heads-up: the affine velocity model can go negative if
        # everyone crowds into one interval; scenarios that knowingly run
        # past the fitted range opt out of the warning
        if not self.allow_negative_velocity and \
                self.velocity.at_count(self.cars + self.trucks) < 0:
            warnings.warn(
                "worst-case occupancy drives the affine velocity negative; the model "
                "is outside the range it was fitted for (set allow_negative_velocity "
                "to acknowledge)",
                stacklevel=3,
            )

    def game_config(self) -> GameConfig:
        return GameConfig(R=self.intervals, velocity=self.velocity, beta=self.beta,
                          benefit=self.benefit, policy=self.policy)


def default_scenario() -> ScenarioSpec:
    """The headline experiment: 10000 cars, 100 trucks, eight intervals,
    car tax, JSFP with inertia 0.4 and forgetting 0.03.

    The stability window is set below the library default: certification
    carries the correctness burden, and the shorter window lets typical
    runs certify well inside the 1000-iteration budget.
    """
    return ScenarioSpec(
        cars=10_000,
        trucks=100,
        intervals=8,
        velocity=VelocityModel(a=-0.0110, b=84.9696),
        beta=1e-3,
        benefit=PlatoonBenefit.linear(),
        policy=PricingPolicy.car_tax(),
        preference=PreferenceDistribution.morning_peak(),
        alpha=AlphaDistribution(),
        penalty_kind="absolute",
        value_of_time=ValueOfTimeGroups.uniform(),
        learner=LearnerSettings(stability_window=30),
        allow_negative_velocity=True,
    )


def sample_population(spec: ScenarioSpec, rng: np.random.Generator) -> Population:
    """Draw the agents of a scenario.

    Draw order is fixed (car preferences, car alphas, car values of
    time, truck preferences, truck alphas) so a seed pins the whole
    population; value-of-time draws happen even for a single trivial
    group, which keeps the other draws aligned across scenarios that
    differ only in their groups.
    """
    R = spec.intervals
    rs = np.arange(1, R + 1)
    car_pref = rng.choice(rs, size=spec.cars, p=spec.preference.probabilities)
    car_alpha = rng.uniform(spec.alpha.lower, spec.alpha.upper, size=spec.cars)
    deltas = np.array([d for d, _ in spec.value_of_time.groups])
    probs = np.array([p for _, p in spec.value_of_time.groups])
    car_delta = rng.choice(deltas, size=spec.cars, p=probs)
    truck_dist = spec.truck_preference if spec.truck_preference is not None else spec.preference
    truck_pref = rng.choice(rs, size=spec.trucks, p=truck_dist.probabilities)
    truck_alpha = rng.uniform(spec.alpha.lower, spec.alpha.upper, size=spec.trucks)
    cars = tuple(
        CarAgent(int(t), PenaltyKind(spec.penalty_kind, float(a)), float(d))
        for t, a, d in zip(car_pref, car_alpha, car_delta)
    )
    trucks = tuple(
        TruckAgent(int(t), PenaltyKind(spec.penalty_kind, float(a)))
        for t, a in zip(truck_pref, truck_alpha)
    )
    return Population(cars, trucks)


# ---------------------------------------------------------------------------
# reading


def _expect(obj: Any, path: str, kind: type, kinds=None) -> Any:
    if not isinstance(obj, kinds or kind):
        raise ScenarioError(path, f"expected {kind.__name__}, got {type(obj).__name__}")
    return obj


def _get(mapping: dict, key: str, path: str) -> Any:
    if key not in mapping:
        raise ScenarioError(f"{path}.{key}" if path else key, "missing required field")
    return mapping[key]


def _number(mapping: dict, key: str, path: str) -> float:
    value = _get(mapping, key, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{path}.{key}", "expected a number")
    return float(value)


def _integer(mapping: dict, key: str, path: str) -> int:
    value = _get(mapping, key, path)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(f"{path}.{key}", "expected an integer")
    return value


def _warn_unknown(mapping: dict, known: set[str], path: str) -> None:
    for key in mapping:
        if key not in known:
            warnings.warn(f"ignoring unknown scenario field {path + '.' if path else ''}{key}",
                          stacklevel=4)


def _wrap(path: str, build, *args):
    try:
        return build(*args)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(path, str(exc)) from exc


def scenario_from_document(doc: dict) -> ScenarioSpec:
    """Validate a parsed JSON document and build the spec."""
    _expect(doc, "<root>", dict)
    _warn_unknown(doc, {"game", "population", "policy", "learner", "perturbations",
                        "seed", "output"}, "")

    game = _expect(_get(doc, "game", ""), "game", dict)
    _warn_unknown(game, {"intervals", "velocity", "beta", "benefit",
                         "allow_negative_velocity"}, "game")
    intervals = _integer(game, "intervals", "game")
    allow_negative = game.get("allow_negative_velocity", False)
    if not isinstance(allow_negative, bool):
        raise ScenarioError("game.allow_negative_velocity", "expected a boolean")
    vel = _expect(_get(game, "velocity", "game"), "game.velocity", dict)
    _warn_unknown(vel, {"a", "b"}, "game.velocity")
    velocity = _wrap("game.velocity", VelocityModel,
                     _number(vel, "a", "game.velocity"), _number(vel, "b", "game.velocity"))
    beta = _number(game, "beta", "game")
    ben = _expect(_get(game, "benefit", "game"), "game.benefit", dict)
    _warn_unknown(ben, {"kind", "threshold"}, "game.benefit")
    kind = _get(ben, "kind", "game.benefit")
    if kind == "thresholded":
        benefit = _wrap("game.benefit", PlatoonBenefit.thresholded,
                        _integer(ben, "threshold", "game.benefit"))
    else:
        benefit = _wrap("game.benefit", PlatoonBenefit, kind)

    population = _expect(_get(doc, "population", ""), "population", dict)
    _warn_unknown(population, {"cars", "trucks", "total", "equipment_ratio", "preference",
                               "truck_preference", "alpha", "penalty", "value_of_time"},
                  "population")
    equipment_split = None
    if "total" in population or "equipment_ratio" in population:
        if "cars" in population or "trucks" in population:
            raise ScenarioError("population", "give either cars/trucks or total/equipment_ratio")
        total = _integer(population, "total", "population")
        ratio = _number(population, "equipment_ratio", "population")
        if not 0.0 <= ratio <= 1.0:
            raise ScenarioError("population.equipment_ratio", "must lie in [0, 1]")
        trucks = int(round(ratio * total))
        cars = total - trucks
        equipment_split = (total, ratio)
    else:
        cars = _integer(population, "cars", "population")
        trucks = _integer(population, "trucks", "population")
    preference = _wrap("population.preference", PreferenceDistribution,
                       tuple(_expect(_get(population, "preference", "population"),
                                     "population.preference", list)))
    truck_preference = None
    if population.get("truck_preference") is not None:
        truck_preference = _wrap("population.truck_preference", PreferenceDistribution,
                                 tuple(_expect(population["truck_preference"],
                                               "population.truck_preference", list)))
    alpha_doc = _expect(_get(population, "alpha", "population"), "population.alpha", dict)
    _warn_unknown(alpha_doc, {"lower", "upper"}, "population.alpha")
    alpha = _wrap("population.alpha", AlphaDistribution,
                  _number(alpha_doc, "lower", "population.alpha"),
                  _number(alpha_doc, "upper", "population.alpha"))
    penalty_kind = _get(population, "penalty", "population")
    vot_doc = _expect(_get(population, "value_of_time", "population"),
                      "population.value_of_time", list)
    value_of_time = _wrap("population.value_of_time", ValueOfTimeGroups,
                          tuple(tuple(pair) for pair in vot_doc))

    policy_doc = _expect(_get(doc, "policy", ""), "policy", dict)
    _warn_unknown(policy_doc, {"kind", "delay", "reference_velocity"}, "policy")
    policy_kind = _get(policy_doc, "kind", "policy")
    if policy_kind == "car_tax_delayed":
        policy = _wrap("policy", PricingPolicy.car_tax_delayed,
                       _integer(policy_doc, "delay", "policy"))
    elif policy_kind == "truck_subsidy":
        policy = _wrap("policy", PricingPolicy.truck_subsidy,
                       _number(policy_doc, "reference_velocity", "policy"))
    else:
        policy = _wrap("policy", PricingPolicy, policy_kind)

    learner_doc = _expect(_get(doc, "learner", ""), "learner", dict)
    _warn_unknown(learner_doc, {"algorithm", "inertia", "forgetting", "max_iters",
                                "stability_window", "initial_profile"}, "learner")
    forget_doc = _expect(_get(learner_doc, "forgetting", "learner"), "learner.forgetting", dict)
    _warn_unknown(forget_doc, {"kind", "value"}, "learner.forgetting")
    if _get(forget_doc, "kind", "learner.forgetting") == "constant":
        forgetting = _wrap("learner.forgetting", ForgettingSchedule.constant,
                           _number(forget_doc, "value", "learner.forgetting"))
    else:
        forgetting = _wrap("learner.forgetting", ForgettingSchedule,
                           forget_doc["kind"])
    learner = _wrap("learner", LearnerSettings,
                    _get(learner_doc, "algorithm", "learner"),
                    _number(learner_doc, "inertia", "learner"),
                    forgetting,
                    _integer(learner_doc, "max_iters", "learner"),
                    _integer(learner_doc, "stability_window", "learner"),
                    learner_doc.get("initial_profile", "preferred"))

    perturbations = []
    for idx, item in enumerate(_expect(doc.get("perturbations", []), "perturbations", list)):
        pdoc = _expect(item, f"perturbations[{idx}]", dict)
        _warn_unknown(pdoc, {"at_iteration", "intervals", "velocity_divisor"},
                      f"perturbations[{idx}]")
        perturbations.append(_wrap(
            f"perturbations[{idx}]", Perturbation,
            _integer(pdoc, "at_iteration", f"perturbations[{idx}]"),
            tuple(_expect(_get(pdoc, "intervals", f"perturbations[{idx}]"),
                          f"perturbations[{idx}].intervals", list)),
            _number(pdoc, "velocity_divisor", f"perturbations[{idx}]"),
        ))

    seed = _integer(doc, "seed", "")
    output_doc = _expect(doc.get("output", {"directory": "out"}), "output", dict)
    _warn_unknown(output_doc, {"directory"}, "output")
    output_dir = _expect(_get(output_doc, "directory", "output"), "output.directory", str)

    return _wrap("<root>", ScenarioSpec, cars, trucks, intervals, velocity, beta, benefit,
                 policy, preference, alpha, penalty_kind, value_of_time, learner,
                 truck_preference, equipment_split, tuple(perturbations), seed, output_dir,
                 allow_negative)


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Read and validate a scenario file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("<root>", f"not valid JSON: {exc}") from exc
    return scenario_from_document(doc)


# ---------------------------------------------------------------------------
# writing


def scenario_to_document(spec: ScenarioSpec) -> dict:
    """Canonical document form of a spec (fixed key order)."""
    game: dict[str, Any] = {
        "intervals": spec.intervals,
        "velocity": {"a": spec.velocity.a, "b": spec.velocity.b},
        "beta": spec.beta,
        "benefit": {"kind": spec.benefit.kind},
    }
    if spec.benefit.threshold is not None:
        game["benefit"]["threshold"] = spec.benefit.threshold
    if spec.allow_negative_velocity:
        game["allow_negative_velocity"] = True
    population: dict[str, Any] = {}
    if spec.equipment_split is not None:
        population["total"] = spec.equipment_split[0]
        population["equipment_ratio"] = spec.equipment_split[1]
    else:
        population["cars"] = spec.cars
        population["trucks"] = spec.trucks
    population["preference"] = list(spec.preference.probabilities)
    if spec.truck_preference is not None:
        population["truck_preference"] = list(spec.truck_preference.probabilities)
    population["alpha"] = {"lower": spec.alpha.lower, "upper": spec.alpha.upper}
    population["penalty"] = spec.penalty_kind
    population["value_of_time"] = [list(pair) for pair in spec.value_of_time.groups]
    policy: dict[str, Any] = {"kind": spec.policy.kind}
    if spec.policy.delay is not None:
        policy["delay"] = spec.policy.delay
    if spec.policy.reference_velocity is not None:
        policy["reference_velocity"] = spec.policy.reference_velocity
    forgetting: dict[str, Any] = {"kind": spec.learner.forgetting.kind}
    if spec.learner.forgetting.value is not None:
        forgetting["value"] = spec.learner.forgetting.value
    learner = {
        "algorithm": spec.learner.algorithm,
        "inertia": spec.learner.inertia,
        "forgetting": forgetting,
        "max_iters": spec.learner.max_iters,
        "stability_window": spec.learner.stability_window,
        "initial_profile": spec.learner.initial_profile,
    }
    return {
        "game": game,
        "population": population,
        "policy": policy,
        "learner": learner,
        "perturbations": [
            {
                "at_iteration": p.at_iteration,
                "intervals": list(p.intervals),
                "velocity_divisor": p.velocity_divisor,
            }
            for p in spec.perturbations
        ],
        "seed": spec.seed,
        "output": {"directory": spec.output_dir},
    }


def save_scenario(spec: ScenarioSpec, path: str | Path) -> Path:
    """Write the canonical serialisation of a spec."""
    path = Path(path)
    path.write_text(json.dumps(scenario_to_document(spec), indent=2) + "\n")
    return path


def with_seed(spec: ScenarioSpec, seed: int) -> ScenarioSpec:
    return replace(spec, seed=seed)

"""Scenario documents: schema validation, round-trips, population sampling."""

import json
import warnings
from dataclasses import replace

import numpy as np
import pytest

from platoon_game import (
    AlphaDistribution,
    PreferenceDistribution,
    ScenarioError,
    ValueOfTimeGroups,
    default_scenario,
    load_scenario,
    sample_population,
    save_scenario,
    scenario_from_document,
    scenario_to_document,
)


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        spec = default_scenario()
        path = save_scenario(spec, tmp_path / "default.json")
        assert load_scenario(path) == spec

    def test_canonical_bytes_stable(self, tmp_path):
        spec = default_scenario()
        first = save_scenario(spec, tmp_path / "a.json").read_bytes()
        second = save_scenario(load_scenario(tmp_path / "a.json"),
                               tmp_path / "b.json").read_bytes()
        assert first == second

    def test_equipment_split_form_preserved(self, tmp_path):
        doc = scenario_to_document(default_scenario())
        doc["population"].pop("cars")
        doc["population"].pop("trucks")
        doc["population"]["total"] = 10_000
        doc["population"]["equipment_ratio"] = 0.01
        spec = scenario_from_document(doc)
        assert spec.trucks == 100 and spec.cars == 9_900
        out = scenario_to_document(spec)
        assert out["population"]["total"] == 10_000
        assert "cars" not in out["population"]

    def test_paper_defaults(self):
        spec = default_scenario()
        assert (spec.cars, spec.trucks, spec.intervals) == (10_000, 100, 8)
        assert spec.velocity.a == -0.0110 and spec.velocity.b == 84.9696
        assert spec.beta == 1e-3
        assert spec.learner.inertia == 0.4
        assert spec.learner.forgetting.value == 0.03
        assert spec.policy.kind == "car_tax"
        assert abs(sum(spec.preference.probabilities) - 1.0) <= 1e-12
        assert spec.preference.probabilities[2] == 0.25


class TestValidation:
    def doc(self):
        return scenario_to_document(default_scenario())

    def test_missing_beta_names_the_field(self):
        doc = self.doc()
        del doc["game"]["beta"]
        with pytest.raises(ScenarioError, match="beta"):
            scenario_from_document(doc)

    def test_missing_sections(self):
        for section in ("game", "population", "policy", "learner"):
            doc = self.doc()
            del doc[section]
            with pytest.raises(ScenarioError, match=section):
                scenario_from_document(doc)

    def test_unknown_field_warns_not_errors(self):
        doc = self.doc()
        doc["game"]["surprise"] = 1
        with pytest.warns(UserWarning, match="surprise"):
            spec = scenario_from_document(doc)
        assert spec.intervals == 8

    def test_bad_velocity_slope(self):
        doc = self.doc()
        doc["game"]["velocity"]["a"] = 0.5
        with pytest.raises(ScenarioError, match="velocity"):
            scenario_from_document(doc)

    def test_preference_length_mismatch(self):
        doc = self.doc()
        doc["population"]["preference"] = [0.5, 0.5]
        with pytest.raises(ScenarioError):
            scenario_from_document(doc)

    def test_preference_must_sum_to_one(self):
        with pytest.raises(ValueError):
            PreferenceDistribution((0.5, 0.4))

    def test_alpha_range(self):
        with pytest.raises(ValueError):
            AlphaDistribution(lower=-1.0, upper=-2.0)
        with pytest.raises(ValueError):
            AlphaDistribution(lower=-1.0, upper=0.5)

    def test_value_of_time_groups(self):
        with pytest.raises(ValueError):
            ValueOfTimeGroups(((1.0, 0.5), (2.0, 0.4)))
        with pytest.raises(ValueError):
            ValueOfTimeGroups(((-1.0, 1.0),))
        groups = ValueOfTimeGroups()
        assert groups.groups == ((1.00, 0.754), (3.37, 0.036), (0.19, 0.210))

    def test_seed_bounds(self):
        doc = self.doc()
        doc["seed"] = -1
        with pytest.raises(ScenarioError):
            scenario_from_document(doc)

    def test_invalid_json_reports_file_problem(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioError, match="JSON"):
            load_scenario(path)

    def test_both_population_forms_rejected(self):
        doc = self.doc()
        doc["population"]["total"] = 500
        doc["population"]["equipment_ratio"] = 0.1
        with pytest.raises(ScenarioError, match="population"):
            scenario_from_document(doc)

    def test_negative_velocity_warning_without_allowance(self):
        doc = self.doc()
        del doc["game"]["allow_negative_velocity"]
        with pytest.warns(UserWarning, match="negative"):
            scenario_from_document(doc)

    def test_no_warning_when_allowed(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            default_scenario()


class TestSampling:
    def test_point_mass_preference(self):
        spec = replace(default_scenario(), cars=50, trucks=10,
                       preference=PreferenceDistribution((0, 0, 1, 0, 0, 0, 0, 0)))
        pop = sample_population(spec, np.random.default_rng(0))
        assert all(c.preferred == 3 for c in pop.cars)
        assert all(t.preferred == 3 for t in pop.trucks)

    def test_law_of_large_numbers_on_the_peak(self):
        spec = replace(default_scenario(), cars=1_000_000, trucks=0)
        pop = sample_population(spec, np.random.default_rng(1))
        frac = (pop.car_preferred == 3).mean()
        assert abs(frac - 0.25) <= 0.002

    def test_equipment_ratio_zero(self):
        doc = scenario_to_document(default_scenario())
        doc["population"].pop("cars")
        doc["population"].pop("trucks")
        doc["population"]["total"] = 10_000
        doc["population"]["equipment_ratio"] = 0.0
        spec = scenario_from_document(doc)
        pop = sample_population(spec, np.random.default_rng(2))
        assert pop.n_trucks == 0 and pop.n_cars == 10_000

    def test_seed_determinism(self):
        spec = replace(default_scenario(), cars=500, trucks=50)
        a = sample_population(spec, np.random.default_rng(7))
        b = sample_population(spec, np.random.default_rng(7))
        assert a == b
        c = sample_population(spec, np.random.default_rng(8))
        assert a != c

    def test_alpha_within_bounds(self):
        spec = replace(default_scenario(), cars=2000, trucks=200)
        pop = sample_population(spec, np.random.default_rng(3))
        assert (pop.car_alpha >= -7.5).all() and (pop.car_alpha <= -2.5).all()
        assert (pop.truck_alpha >= -7.5).all() and (pop.truck_alpha <= -2.5).all()

    def test_value_of_time_groups_sampled_for_cars_only(self):
        spec = replace(default_scenario(), cars=5000, trucks=100,
                       value_of_time=ValueOfTimeGroups())
        pop = sample_population(spec, np.random.default_rng(4))
        seen = set(pop.car_value_of_time.tolist())
        assert seen == {1.00, 3.37, 0.19}
        # the dominant group should be near its 0.754 share
        assert abs((pop.car_value_of_time == 1.0).mean() - 0.754) < 0.03
        assert not hasattr(pop.trucks[0], "value_of_time")

    def test_truck_preference_override(self):
        spec = replace(default_scenario(), cars=10, trucks=400,
                       truck_preference=PreferenceDistribution((0, 0, 0, 0, 0, 0, 0, 1)))
        pop = sample_population(spec, np.random.default_rng(5))
        assert all(t.preferred == 8 for t in pop.trucks)
        assert any(c.preferred != 8 for c in pop.cars)


class TestDocumentShape:
    def test_document_sections(self):
        doc = scenario_to_document(default_scenario())
        assert list(doc) == ["game", "population", "policy", "learner",
                             "perturbations", "seed", "output"]
        text = json.dumps(doc)
        assert "car_tax" in text

    def test_policy_variants_round_trip(self):
        base = scenario_to_document(default_scenario())
        for policy in ({"kind": "no_pricing"},
                       {"kind": "car_tax_delayed", "delay": 30},
                       {"kind": "truck_subsidy", "reference_velocity": 85.0}):
            doc = dict(base, policy=policy)
            spec = scenario_from_document(doc)
            assert scenario_to_document(spec)["policy"] == policy

    def test_perturbations_round_trip(self):
        doc = scenario_to_document(default_scenario())
        doc["perturbations"] = [
            {"at_iteration": 50, "intervals": [2, 3, 4], "velocity_divisor": 10.0}
        ]
        spec = scenario_from_document(doc)
        assert spec.perturbations[0].intervals == (2, 3, 4)
        assert scenario_to_document(spec)["perturbations"] == doc["perturbations"]

"""Core game mechanics: occupancy, velocity, penalties, pricing, utilities."""

import numpy as np
import pytest

from platoon_game import (
    ActionProfile,
    AgentRef,
    CarAgent,
    GameConfig,
    InvalidProfileError,
    PenaltyKind,
    PlatoonBenefit,
    PolicyMismatchError,
    Population,
    PricingPolicy,
    TruckAgent,
    VelocityModel,
    best_response,
    car_tax,
    car_utility,
    car_utility_table,
    is_nash,
    occupancy,
    penalty,
    truck_subsidy,
    truck_utility,
    truck_utility_table,
    velocity,
)

VM = VelocityModel(a=-0.0110, b=84.9696)
ABS5 = PenaltyKind.absolute(-5.0)


def make_config(policy=None, beta=1e-3, R=8, benefit=None, vm=VM):
    return GameConfig(
        R=R,
        velocity=vm,
        beta=beta,
        benefit=benefit or PlatoonBenefit.linear(),
        policy=policy or PricingPolicy.no_pricing(),
    )


def uniform_population(n_cars, n_trucks, R, alpha=-5.0, rng=None):
    rng = rng or np.random.default_rng(0)
    cars = tuple(
        CarAgent(int(rng.integers(1, R + 1)), PenaltyKind.absolute(alpha))
        for _ in range(n_cars)
    )
    trucks = tuple(
        TruckAgent(int(rng.integers(1, R + 1)), PenaltyKind.absolute(alpha))
        for _ in range(n_trucks)
    )
    return Population(cars, trucks)


def random_profile(pop, R, rng):
    return ActionProfile(
        rng.integers(1, R + 1, size=pop.n_cars),
        rng.integers(1, R + 1, size=pop.n_trucks),
    )


class TestOccupancy:
    def test_direct_count(self):
        occ = occupancy(ActionProfile.of([1, 1, 2], [2]), 2)
        assert occ.n.tolist() == [2, 2]
        assert occ.m.tolist() == [0, 1]

    def test_empty_game(self):
        occ = occupancy(ActionProfile.of([], []), 3)
        assert occ.n.tolist() == [0, 0, 0]
        assert occ.m.tolist() == [0, 0, 0]

    def test_hand_count(self):
        occ = occupancy(ActionProfile.of([3, 3, 3, 1], [3, 2]), 3)
        assert occ.n.tolist() == [1, 1, 4]
        assert occ.m.tolist() == [0, 1, 1]

    def test_out_of_range_action(self):
        with pytest.raises(InvalidProfileError):
            occupancy(ActionProfile.of([3], []), 2)
        with pytest.raises(InvalidProfileError):
            occupancy(ActionProfile.of([1], [0]), 2)

    def test_conservation_property(self):
        rng = np.random.default_rng(7)
        checks = 0
        for _ in range(200):
            R = int(rng.integers(2, 7))
            pop = uniform_population(int(rng.integers(0, 30)), int(rng.integers(0, 10)), R)
            profile = random_profile(pop, R, rng)
            for _ in range(5):
                occ = occupancy(profile, R)
                assert occ.n.sum() == pop.n_cars + pop.n_trucks
                assert occ.m.sum() == pop.n_trucks
                assert (occ.m <= occ.n).all()
                checks += 1
                if pop.n_cars + pop.n_trucks:
                    idx = int(rng.integers(0, pop.n_cars + pop.n_trucks))
                    agent = AgentRef("car", idx) if idx < pop.n_cars else \
                        AgentRef("truck", idx - pop.n_cars)
                    profile = profile.moved(agent, int(rng.integers(1, R + 1)))
        assert checks >= 1000


class TestVelocity:
    def test_empty_road_intercept(self):
        occ = occupancy(ActionProfile.of([], []), 2)
        assert velocity(occ, 1, VM) == VM.b

    def test_fitted_coefficients(self):
        occ = occupancy(ActionProfile.of([1] * 1000, []), 2)
        assert velocity(occ, 1, VM) == pytest.approx(73.9696, abs=1e-12)

    def test_velocity_at_balanced_peak(self):
        occ = occupancy(ActionProfile.of([1] * 1263, []), 2)
        assert velocity(occ, 1, VM) == pytest.approx(71.0766, abs=1e-4)

    def test_monotone_in_count(self):
        rng = np.random.default_rng(3)
        for _ in range(1000):
            count = int(rng.integers(0, 5000))
            assert VM.at_count(count + 1) < VM.at_count(count)


class TestPenalty:
    def test_zero_deviation(self):
        assert penalty(ABS5, 3, 3) == 0.0

    def test_absolute(self):
        assert penalty(ABS5, 1, 4) == -15.0

    def test_early_arrival_unpenalized(self):
        assert penalty(PenaltyKind.late_only(-5.0), 2, 4) == 0.0

    def test_late_penalized(self):
        assert penalty(PenaltyKind.late_only(-5.0), 6, 4) == -10.0

    def test_never_positive(self):
        rng = np.random.default_rng(5)
        for _ in range(1000):
            kind = PenaltyKind(
                "late_only" if rng.random() < 0.5 else "absolute",
                float(-rng.uniform(0.1, 10)),
            )
            assert penalty(kind, int(rng.integers(1, 9)), int(rng.integers(1, 9))) <= 0.0


class TestPricing:
    def test_tax_empty_interval(self):
        cfg = make_config(PricingPolicy.car_tax())
        occ = occupancy(ActionProfile.of([1, 1], []), 8)
        assert car_tax(cfg, occ, 1) == 0.0

    def test_tax_three_trucks(self):
        cfg = make_config(PricingPolicy.car_tax())
        occ = occupancy(ActionProfile.of([], [2, 2, 2]), 8)
        # a * beta * (1 + 2 + 3)
        assert car_tax(cfg, occ, 2) == pytest.approx(-6.6e-5, abs=1e-15)

    def test_tax_value_of_time_scaling(self):
        cfg = make_config(PricingPolicy.car_tax())
        occ = occupancy(ActionProfile.of([], [1]), 8)
        assert car_tax(cfg, occ, 1, delta=0.19) == pytest.approx(-0.0110 * 1e-3 / 0.19, rel=1e-12)

    def test_tax_policy_mismatch(self):
        cfg = make_config(PricingPolicy.no_pricing())
        occ = occupancy(ActionProfile.of([1], []), 8)
        with pytest.raises(PolicyMismatchError):
            car_tax(cfg, occ, 1)

    def test_subsidy_no_trucks(self):
        cfg = make_config(PricingPolicy.truck_subsidy(85.0))
        occ = occupancy(ActionProfile.of([1, 2], []), 8)
        assert truck_subsidy(cfg, occ, 1) == 0.0

    def test_subsidy_hand_value(self):
        cfg = make_config(PricingPolicy.truck_subsidy(85.0))
        occ = occupancy(ActionProfile.of([1] * 995, [1] * 5), 8)
        assert truck_subsidy(cfg, occ, 1) == pytest.approx(5.5152e-2, rel=1e-10)

    def test_subsidy_vanishes_at_reference_velocity(self):
        occ = occupancy(ActionProfile.of([1] * 99, [1]), 8)
        v = velocity(occ, 1, VM)
        cfg = make_config(PricingPolicy.truck_subsidy(v))
        assert truck_subsidy(cfg, occ, 1) == 0.0

    def test_subsidy_policy_mismatch(self):
        cfg = make_config(PricingPolicy.car_tax())
        occ = occupancy(ActionProfile.of([], [1]), 8)
        with pytest.raises(PolicyMismatchError):
            truck_subsidy(cfg, occ, 1)

    def test_delayed_tax_uses_basis(self):
        cfg = make_config(PricingPolicy.car_tax_delayed(5))
        occ = occupancy(ActionProfile.of([1], [1, 1]), 8)
        # no schedule announced yet
        assert car_tax(cfg, occ, 1, tax_basis=None) == 0.0
        # schedule computed from three trucks, regardless of today's two
        basis = np.array([3, 0, 0, 0, 0, 0, 0, 0])
        assert car_tax(cfg, occ, 1, tax_basis=basis) == pytest.approx(-6.6e-5, abs=1e-15)


class TestUtilities:
    def test_car_utility_with_tax(self):
        cfg = make_config(PricingPolicy.car_tax())
        pop = Population((CarAgent(3, ABS5),), (TruckAgent(3, ABS5),))
        profile = ActionProfile.of([3], [3])
        assert car_utility(0, profile, cfg, pop) == pytest.approx(84.947589, abs=1e-9)

    def test_car_utility_no_pricing(self):
        cfg = make_config(PricingPolicy.no_pricing())
        pop = Population((CarAgent(3, ABS5),), (TruckAgent(3, ABS5),))
        profile = ActionProfile.of([3], [3])
        assert car_utility(0, profile, cfg, pop) == pytest.approx(84.9476, abs=1e-9)

    def test_car_alone_at_preference(self):
        cfg = make_config(PricingPolicy.no_pricing())
        pop = Population((CarAgent(2, ABS5),), ())
        assert car_utility(0, ActionProfile.of([2], []), cfg, pop) == \
            pytest.approx(VM.a + VM.b, abs=1e-12)

    def test_truck_utility_with_subsidy(self):
        cfg = make_config(PricingPolicy.truck_subsidy(85.0))
        pop = Population((CarAgent(5, ABS5),), (TruckAgent(5, ABS5),))
        profile = ActionProfile.of([5], [5])
        occ = occupancy(profile, 8)
        # term by term: velocity 84.9476, subsidy 5.24e-5, platoon 0.0849476
        assert velocity(occ, 5, VM) == pytest.approx(84.9476, abs=1e-12)
        assert truck_subsidy(cfg, occ, 5) == pytest.approx(5.24e-5, abs=1e-12)
        assert truck_utility(0, profile, cfg, pop) == \
            pytest.approx(84.9476 + 5.24e-5 + 0.0849476, abs=1e-9)

    def test_truck_beta_zero_reduces_to_car_form(self):
        cfg = make_config(PricingPolicy.no_pricing(), beta=0.0)
        pop = Population((), (TruckAgent(2, ABS5),))
        assert truck_utility(0, ActionProfile.of([], [2]), cfg, pop) == \
            pytest.approx(VM.a + VM.b, abs=1e-12)

    def test_two_truck_platoon_factors(self):
        cfg = make_config(PricingPolicy.no_pricing(), beta=1e-3)
        pop = Population((), (TruckAgent(4, ABS5), TruckAgent(4, ABS5)))
        profile = ActionProfile.of([], [4, 4])
        expected = (2 * VM.a + VM.b) * (1 + 2e-3)
        assert truck_utility(0, profile, cfg, pop) == pytest.approx(expected, abs=1e-12)

    def test_beta_zero_truck_equals_car(self):
        # identical parameters, beta=0: truck and car utilities coincide
        rng = np.random.default_rng(11)
        cfg = make_config(PricingPolicy.no_pricing(), beta=0.0, R=4)
        for _ in range(200):
            T = int(rng.integers(1, 5))
            alpha = float(-rng.uniform(1, 8))
            others = rng.integers(1, 5, size=10)
            spot = int(rng.integers(1, 5))
            pop_t = Population(
                tuple(CarAgent(1, ABS5) for _ in range(10)),
                (TruckAgent(T, PenaltyKind.absolute(alpha)),),
            )
            pop_c = Population(
                tuple(CarAgent(1, ABS5) for _ in range(10)) +
                (CarAgent(T, PenaltyKind.absolute(alpha)),),
                (),
            )
            u_t = truck_utility(0, ActionProfile.of(others, [spot]), cfg, pop_t)
            u_c = car_utility(10, ActionProfile.of(list(others) + [spot], []), cfg, pop_c)
            assert u_t == u_c

    def test_policy_exclusivity(self):
        # car tax: truck pricing term zero; subsidy: car pricing term zero
        rng = np.random.default_rng(13)
        pop = uniform_population(8, 4, 4, rng=rng)
        profile = random_profile(pop, 4, rng)
        taxed = make_config(PricingPolicy.car_tax(), R=4)
        unpriced = make_config(PricingPolicy.no_pricing(), R=4)
        subsidised = make_config(PricingPolicy.truck_subsidy(85.0), R=4)
        for j in range(4):
            assert truck_utility(j, profile, taxed, pop) == \
                truck_utility(j, profile, unpriced, pop)
        for i in range(8):
            assert car_utility(i, profile, subsidised, pop) == \
                car_utility(i, profile, unpriced, pop)


class TestCounterfactualTables:
    def test_bitwise_matches_scalar_reevaluation(self):
        rng = np.random.default_rng(17)
        for policy in (PricingPolicy.no_pricing(), PricingPolicy.car_tax(),
                       PricingPolicy.truck_subsidy(80.0)):
            cfg = make_config(policy, R=4)
            pop = uniform_population(12, 5, 4, rng=rng)
            profile = random_profile(pop, 4, rng)
            cars = car_utility_table(profile, cfg, pop)
            trucks = truck_utility_table(profile, cfg, pop)
            for i in range(pop.n_cars):
                for r in range(1, 5):
                    moved = profile.moved(AgentRef("car", i), r)
                    assert cars[i, r - 1] == car_utility(i, moved, cfg, pop)
            for j in range(pop.n_trucks):
                for r in range(1, 5):
                    moved = profile.moved(AgentRef("truck", j), r)
                    assert trucks[j, r - 1] == truck_utility(j, moved, cfg, pop)

    def test_current_action_column_is_realized_utility(self):
        rng = np.random.default_rng(19)
        cfg = make_config(PricingPolicy.car_tax(), R=5)
        pop = uniform_population(20, 6, 5, rng=rng)
        profile = random_profile(pop, 5, rng)
        table = car_utility_table(profile, cfg, pop)
        for i in range(pop.n_cars):
            assert table[i, profile.z[i] - 1] == car_utility(i, profile, cfg, pop)


class TestBestResponse:
    def test_fixed_point(self):
        cfg = make_config(PricingPolicy.no_pricing(), R=3)
        pop = Population((CarAgent(2, ABS5),), ())
        profile = ActionProfile.of([2], [])
        assert best_response(AgentRef("car", 0), profile, cfg, pop) == 2

    def test_all_equal_tie_breaks_to_one(self):
        # late-only penalty with the last interval preferred: all utilities equal
        cfg = make_config(PricingPolicy.no_pricing(), R=3)
        pop = Population((CarAgent(3, PenaltyKind.late_only(-5.0)),), ())
        profile = ActionProfile.of([2], [])
        assert best_response(AgentRef("car", 0), profile, cfg, pop) == 1

    def test_velocity_gain_beats_small_penalty(self):
        cfg = make_config(PricingPolicy.no_pricing(), R=2, vm=VelocityModel(-1.0, 10.0))
        pop = Population(
            (CarAgent(1, PenaltyKind.absolute(-0.001)), CarAgent(1, PenaltyKind.absolute(-0.001))),
            (),
        )
        profile = ActionProfile.of([1, 1], [])
        assert best_response(AgentRef("car", 0), profile, cfg, pop) == 2


class TestIsNash:
    def test_single_agent_at_preference(self):
        cfg = make_config(PricingPolicy.no_pricing(), R=3)
        pop = Population((CarAgent(2, ABS5),), ())
        assert is_nash(ActionProfile.of([2], []), cfg, pop)

    def test_witness_of_improving_deviation(self):
        cfg = make_config(PricingPolicy.no_pricing(), R=2, vm=VelocityModel(-1.0, 10.0))
        pop = Population(
            (CarAgent(1, PenaltyKind.absolute(-0.001)), CarAgent(1, PenaltyKind.absolute(-0.001))),
            (),
        )
        result = is_nash(ActionProfile.of([1, 1], []), cfg, pop)
        assert not result
        assert result.witness == (AgentRef("car", 0), 2)

    def test_empty_game_is_nash(self):
        cfg = make_config(PricingPolicy.no_pricing(), R=2)
        assert is_nash(ActionProfile.of([], []), cfg, Population((), ()))


class TestPlatoonBenefit:
    def test_linear_values(self):
        g = PlatoonBenefit.linear()
        assert g.value(0) == 0.0
        assert g.value(7) == 7.0
        assert g.prefix_sum(3) == 6.0
        assert g.prefix_sum(0) == 0.0

    def test_thresholded_values(self):
        g = PlatoonBenefit.thresholded(3)
        assert g.value(2) == 0.0
        assert g.value(3) == 3.0
        assert g.prefix_sum(2) == 0.0
        assert g.prefix_sum(4) == 7.0  # 3 + 4

    def test_prefix_table_matches_prefix_sum(self):
        for g in (PlatoonBenefit.linear(), PlatoonBenefit.thresholded(4)):
            table = g.prefix_table(30)
            for m in range(31):
                assert table[m] == g.prefix_sum(m)

    def test_fractional_prefix_interpolates(self):
        g = PlatoonBenefit.linear()
        # halfway between prefix(2)=3 and prefix(3)=6
        assert g.prefix_sum(2.5) == pytest.approx(4.5, abs=1e-12)
        assert g.value(2.5) == 2.5

    def test_nondecreasing(self):
        rng = np.random.default_rng(23)
        for g in (PlatoonBenefit.linear(), PlatoonBenefit.thresholded(5)):
            ms = np.sort(rng.uniform(0, 50, size=500))
            vals = g.value(ms)
            assert (np.diff(vals) >= -1e-12).all()


class TestValidation:
    def test_velocity_model_bounds(self):
        with pytest.raises(ValueError):
            VelocityModel(0.01, 80.0)
        with pytest.raises(ValueError):
            VelocityModel(-0.01, -1.0)

    def test_penalty_alpha_negative(self):
        with pytest.raises(ValueError):
            PenaltyKind.absolute(0.5)

    def test_benefit_threshold(self):
        with pytest.raises(ValueError):
            PlatoonBenefit.thresholded(0)

    def test_policy_fields(self):
        with pytest.raises(ValueError):
            PricingPolicy.car_tax_delayed(0)
        with pytest.raises(ValueError):
            PricingPolicy("truck_subsidy")
        with pytest.raises(ValueError):
            PricingPolicy("bogus")

    def test_config_bounds(self):
        with pytest.raises(ValueError):
            make_config(R=1)
        with pytest.raises(ValueError):
            make_config(beta=-0.1)

    def test_car_agent_value_of_time(self):
        with pytest.raises(ValueError):
            CarAgent(1, ABS5, value_of_time=0.0)

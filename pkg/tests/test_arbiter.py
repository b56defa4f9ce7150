import numpy as np
import pytest

from canyonguard.arbiter import (CooperationWeights, HysteresisFilter,
                                 InterventionDecision, SafetySet, cooperate,
                                 decide, qp_oracle, shield)
from canyonguard.errors import ConfigurationError, PreconditionError
from canyonguard.numcore import Rng
from canyonguard.saliency import AttentionMap


def unit_sum_pixel(h, w, r, c):
    v = np.zeros((h, w))
    v[r, c] = 1.0
    return AttentionMap(v, "unit-sum")


class TestDecide:
    def test_identical_maps_no_intervention(self):
        a = unit_sum_pixel(4, 4, 1, 1)
        for rule, key in (("amplitude", "c_f"), ("center", "d_f")):
            d = decide(rule, a, a, {key: 0.5})
            assert d.flag == 0 and d.metric_value == 0.0

    def test_disjoint_pixels_amplitude_triggers(self):
        d = decide("amplitude", unit_sum_pixel(4, 4, 0, 0),
                   unit_sum_pixel(4, 4, 3, 3), {"c_f": 1.0})
        assert d.flag == 1
        assert d.metric_value == pytest.approx(2.0)
        assert d.rule == "amplitude"

    def test_boundary_tie_excluded(self):
        a = unit_sum_pixel(8, 8, 0, 0)
        b = unit_sum_pixel(8, 8, 3, 4)  # centers exactly 5 px apart
        d = decide("center", a, b, {"d_f": 5.0})
        assert d.metric_value == pytest.approx(5.0)
        assert d.flag == 0

    def test_verbatim_orientation_flips(self):
        a = unit_sum_pixel(4, 4, 1, 1)
        d = decide("amplitude", a, a, {"c_f": 0.5}, eq34_verbatim=True)
        assert d.flag == 1  # zero distance <= threshold intervenes verbatim
        d2 = decide("amplitude", unit_sum_pixel(4, 4, 0, 0),
                    unit_sum_pixel(4, 4, 3, 3), {"c_f": 0.5}, eq34_verbatim=True)
        assert d2.flag == 0

    def test_rule_none(self):
        d = decide("none", None, None, {})
        assert d.flag == 0 and d.rule == "none"

    def test_hysteresis_majority(self):
        filt = HysteresisFilter(window=5)
        flags = [filt.apply(f) for f in (1, 1, 0, 0, 0, 0, 1, 1, 1)]
        assert flags == [1, 1, 1, 0, 0, 0, 0, 0, 1]


class TestShield:
    def test_equal_controls_pass_pilot(self):
        u = np.array([0.1, 0.2, -0.3, 0.4])
        out, flag = shield(u, u, 0.5)
        np.testing.assert_array_equal(out, u)
        assert flag == 0

    def test_large_difference_switches(self):
        out, flag = shield(np.zeros(4), np.array([1.0, 0, 0, 0]), 0.5)
        np.testing.assert_array_equal(out, [1.0, 0, 0, 0])
        assert flag == 1

    def test_boundary_excluded(self):
        u_r = np.zeros(4)
        u_g = np.array([0.5, 0, 0, 0])
        out, flag = shield(u_r, u_g, 0.5)
        assert flag == 0
        np.testing.assert_array_equal(out, u_r)


class TestCooperate:
    def test_no_intervention_passes_pilot_exactly(self):
        d = InterventionDecision(0, 0.0, 1.0, "amplitude")
        u_r = np.array([0.2, -0.5, 0.0, 0.9])
        u, level = cooperate(u_r, np.ones(4), d, CooperationWeights.uniform(),
                             SafetySet.unit_box())
        np.testing.assert_array_equal(u, u_r)
        assert level == 0.0

    def test_symmetric_midpoint(self):
        d = InterventionDecision(1, 2.0, 1.0, "amplitude")
        w = CooperationWeights.uniform(q_h=1.0, q_g=1.0)
        u, level = cooperate(np.full(4, 0.2), np.full(4, 0.8), d, w,
                             SafetySet.unit_box())
        np.testing.assert_allclose(u, 0.5, atol=1e-12)
        assert level == pytest.approx(0.5, abs=1e-9)

    def test_weighted_stationary_point_and_clamp(self):
        d = InterventionDecision(1, 2.0, 1.0, "amplitude")
        w = CooperationWeights(np.ones(1), np.full(1, 3.0))
        u, _ = cooperate(np.zeros(1), np.ones(1), d, w,
                         SafetySet(np.array([-1.0]), np.array([1.0])))
        assert u[0] == pytest.approx(0.75)
        u2, _ = cooperate(np.zeros(1), np.ones(1), d, w,
                          SafetySet(np.array([-1.0]), np.array([0.5])))
        assert u2[0] == pytest.approx(0.5)

    def test_segment_property(self):
        rng = Rng.from_seed(17)
        w = CooperationWeights.uniform(1.0, 4.0)
        box = SafetySet.unit_box()
        d = InterventionDecision(1, 2.0, 1.0, "amplitude")
        for _ in range(100):
            u, rng = rng.uniform(8)
            u_r = u[:4] * 2 - 1
            u_g = u[4:] * 2 - 1
            out, level = cooperate(u_r, u_g, d, w, box)
            lo = np.minimum(u_r, u_g) - 1e-9
            hi = np.maximum(u_r, u_g) + 1e-9
            assert np.all(out >= lo) and np.all(out <= hi)
            assert 0.0 <= level <= 1.0

    def test_objective_not_worse_than_endpoints(self):
        rng = Rng.from_seed(23)
        w = CooperationWeights.uniform(2.0, 3.0)
        box = SafetySet.unit_box()
        d = InterventionDecision(1, 2.0, 1.0, "amplitude")

        def obj(u, u_r, u_g):
            return float(w.q_h @ (u - u_r) ** 2 + w.q_g @ (u - u_g) ** 2)

        for _ in range(50):
            vals, rng = rng.uniform(8)
            u_r = vals[:4] * 2 - 1
            u_g = vals[4:] * 2 - 1
            u, _ = cooperate(u_r, u_g, d, w, box)
            assert obj(u, u_r, u_g) <= obj(u_r, u_r, u_g) + 1e-9
            assert obj(u, u_r, u_g) <= obj(u_g, u_r, u_g) + 1e-9

    def test_infeasible_safety_set_rejected_at_setup(self):
        with pytest.raises(ConfigurationError):
            SafetySet(np.full(2, -1.0), np.full(2, 1.0),
                      a=np.array([[1.0, 0.0], [-1.0, 0.0]]),
                      b=np.array([-2.0, -2.0]))

    def test_infeasible_box_rejected(self):
        with pytest.raises(ConfigurationError):
            SafetySet(np.array([1.0]), np.array([-1.0]))


def random_instance(rng, with_linear):
    vals, rng = rng.uniform(8)
    u_r = vals[:4] * 2 - 1
    u_g = vals[4:] * 2 - 1
    qv, rng = rng.uniform(8)
    weights = CooperationWeights(0.5 + qv[:4] * 3, 0.5 + qv[4:] * 3)
    bv, rng = rng.uniform(8)
    lo = -1.0 + 0.6 * bv[:4]
    hi = 1.0 - 0.6 * bv[4:]
    a = b = None
    if with_linear:
        cv, rng = rng.uniform(4)
        axes, rng = rng.shuffled_indices(4)
        i, j = int(axes[0]), int(axes[1])
        row = np.zeros(4)
        row[i] = cv[0] * 2 - 1 or 0.5
        row[j] = cv[1] * 2 - 1 or -0.5
        center = (lo + hi) / 2
        # keep a fat feasible slab through the box center
        b_val = float(row @ center) + 0.3 + cv[2]
        a = row[None, :]
        b = np.array([b_val])
    iv, rng = rng.uniform()
    flag = 1 if iv < 0.7 else 0
    return u_r, u_g, flag, weights, SafetySet(lo, hi, a, b), rng


class TestOracleAgreement:
    def test_oracle_returns_nearest_grid_point_when_passive(self):
        w = CooperationWeights.uniform()
        u_r = np.array([0.123, -0.456, 0.0, 0.987])
        got = qp_oracle(u_r, np.zeros(4), 0, w, SafetySet.unit_box(), 0.01)
        np.testing.assert_allclose(got, np.round(u_r * 100) / 100, atol=1e-12)

    def test_degenerate_axis_fixed(self):
        w = CooperationWeights.uniform()
        s = SafetySet(np.array([-1.0, 0.3, -1.0, -1.0]),
                      np.array([1.0, 0.3, 1.0, 1.0]))
        got = qp_oracle(np.zeros(4), np.ones(4), 1, w, s, 0.01)
        assert got[1] == pytest.approx(0.3)

    def test_cooperate_matches_oracle_box_only(self):
        rng = Rng.from_seed(31)
        for _ in range(120):
            u_r, u_g, flag, w, s, rng = random_instance(rng, with_linear=False)
            d = InterventionDecision(flag, 2.0, 1.0, "amplitude")
            u, _ = cooperate(u_r, u_g, d, w, s)
            ref = qp_oracle(u_r, u_g, flag, w, s, 0.01)
            assert np.max(np.abs(u - ref)) <= 0.02

    def test_cooperate_matches_oracle_with_linear_cuts(self):
        rng = Rng.from_seed(37)
        for _ in range(80):
            u_r, u_g, flag, w, s, rng = random_instance(rng, with_linear=True)
            d = InterventionDecision(flag, 2.0, 1.0, "amplitude")
            u, _ = cooperate(u_r, u_g, d, w, s)
            assert s.contains(u, tol=1e-7)
            ref = qp_oracle(u_r, u_g, flag, w, s, 0.01)
            assert np.max(np.abs(u - ref)) <= 0.02

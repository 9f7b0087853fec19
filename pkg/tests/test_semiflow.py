import math

import numpy as np
import pytest

from conftest import logistic_exact
from koopmanlab.observables import CompactSample
from koopmanlab.report import DomainExitError, NonConvergenceError, PreconditionError
from koopmanlab.semiflow import (
    AccretiveRelation, DomainChart, Semiflow, check_semiflow_laws, continuity_modulus,
    crandall_liggett_evolve, crandall_liggett_flow, crandall_liggett_limit, cubic_relation,
    linear_field, linear_relation, logistic_field, make_compactified_translation_flow,
    make_ode_flow, make_rotation_flow, make_translation_flow, soft_threshold_relation, zero_field,
)


class TestDomainChart:
    def test_bounds_validated(self):
        with pytest.raises(ValueError):
            DomainChart((1.0,), (0.0,))
        with pytest.raises(ValueError):
            DomainChart((0.0, 0.0), (1.0,))

    def test_excess_and_clamp(self):
        chart = DomainChart.interval(0.0, 1.0)
        X = np.array([[-0.5], [0.5], [1.25]])
        np.testing.assert_allclose(chart.excess(X), [0.5, 0.0, 0.25])
        np.testing.assert_allclose(chart.clamp(X).ravel(), [0.0, 0.5, 1.0])

    def test_encode_decode_round_trip(self):
        chart = DomainChart.compactified_half_line()
        X = np.array([[0.0], [1.0], [3.0], [np.inf]])
        Y = chart.encode(X)
        np.testing.assert_allclose(Y.ravel(), [0.0, 0.5, 0.75, 1.0])
        np.testing.assert_allclose(chart.decode(Y).ravel(), X.ravel())

    def test_finite_box_cuts_infinite_sides(self):
        lo, hi = DomainChart.half_line().finite_box(span=4.0)
        assert lo[0] == 0.0 and hi[0] == 4.0


class TestTranslation:
    def test_examples(self):
        tr = make_translation_flow()
        assert tr(0.0, 5.0) == 5.0
        assert tr(2.0, 3.0) == 5.0
        assert tr(0.5, tr(1.5, 0.0)) == tr(2.0, 0.0) == 2.0

    def test_metadata(self):
        tr = make_translation_flow()
        assert tr.kind == "closed-form" and tr.accuracy == 0.0

    def test_rejects_negative_time_and_outside_points(self):
        tr = make_translation_flow()
        with pytest.raises(ValueError):
            tr(-1.0, 0.0)
        with pytest.raises(ValueError):
            tr(1.0, -1.0)
        with pytest.raises(ValueError):
            tr(1.0, float("nan"))

    def test_batch_shapes(self):
        tr = make_translation_flow()
        assert tr(1.0, np.array([0.0, 1.0])).shape == (2,)
        assert np.shape(tr(1.0, 0.0)) == ()


class TestODEFlow:
    def test_logistic_at_ln3(self, logistic_flow):
        # closed form: 0.5 * 3 / (0.5 + 1.5) = 0.75
        assert logistic_flow(math.log(3.0), 0.5) == pytest.approx(0.75, abs=1e-12)

    def test_zero_field_is_identity(self):
        flow = make_ode_flow(zero_field(), DomainChart.interval(), 0.1)
        np.testing.assert_array_equal(flow(3.7, np.array([-1.0, 0.0, 2.5])), [-1.0, 0.0, 2.5])

    def test_linear_decay(self):
        flow = make_ode_flow(linear_field(1.0), DomainChart.interval(), 1e-3)
        assert abs(flow(1.0, 1.0) - math.exp(-1.0)) < 1e-8

    def test_final_partial_step(self):
        flow = make_ode_flow(linear_field(1.0), DomainChart.interval(), 0.3)
        # 1.0 = 3 * 0.3 + 0.1; RK4 stays accurate to O(step^4)
        assert abs(flow(1.0, 1.0) - math.exp(-1.0)) < 1e-4

    def test_fourth_order(self):
        grid = np.linspace(0.1, 2.0, 20)
        errs = []
        for step in (0.1, 0.05):
            flow = make_ode_flow(logistic_field(), DomainChart.interval(0.0, math.inf), step)
            errs.append(np.max(np.abs(flow(1.0, grid) - logistic_exact(1.0, grid))))
        assert errs[0] / errs[1] >= 8.0

    def test_domain_exit(self):
        flow = make_ode_flow(lambda X: X, DomainChart.interval(0.0, 1.0), 0.01)
        with pytest.raises(DomainExitError):
            flow(1.0, 0.9)

    def test_step_validated(self):
        with pytest.raises(ValueError):
            make_ode_flow(zero_field(), DomainChart.interval(), 0.0)

    def test_accuracy_metadata(self, logistic_flow):
        assert logistic_flow.kind == "ode" and logistic_flow.order == 4
        assert logistic_flow.accuracy == pytest.approx(1e-12)


class TestCrandallLiggett:
    def test_k4(self):
        assert crandall_liggett_evolve(linear_relation(), 1.0, 1.0, 4) == pytest.approx(0.4096,
                                                                                       abs=1e-15)

    def test_zero_time(self):
        for k in (1, 7, 1024):
            assert crandall_liggett_evolve(linear_relation(), 0.0, 1.0, k) == 1.0

    def test_k1024(self):
        val = crandall_liggett_evolve(linear_relation(), 1.0, 1.0, 1024)
        assert val == pytest.approx((1 + 1 / 1024) ** -1024, rel=1e-13)
        assert abs(val - math.exp(-1.0)) < 2e-4

    def test_k_validated(self):
        with pytest.raises(ValueError):
            crandall_liggett_evolve(linear_relation(), 1.0, 1.0, 0)
        with pytest.raises(ValueError):
            crandall_liggett_evolve(linear_relation(), 1.0, 1.0, 2.5)

    def test_lambda_range(self):
        rel = AccretiveRelation(lambda lam, X: X / (1 + lam), DomainChart.interval(),
                                lambda_max=0.1)
        with pytest.raises(ValueError):
            crandall_liggett_evolve(rel, 1.0, 1.0, 4)
        assert crandall_liggett_evolve(rel, 1.0, 1.0, 16) == pytest.approx((1 + 1 / 16) ** -16)

    def test_monotone_in_k(self):
        errs = [abs(crandall_liggett_evolve(linear_relation(), 1.0, 1.0, k) - math.exp(-1))
                for k in (8, 16, 32, 64, 128)]
        assert all(b < a for a, b in zip(errs, errs[1:]))

    def test_flow_tolerance(self):
        flow = crandall_liggett_flow(linear_relation(), 1e-4)
        assert abs(flow(1.0, 1.0) - math.exp(-1.0)) < 1e-4
        assert flow(0.0, 1.0) == 1.0
        assert flow.kind == "crandall-liggett" and flow.accuracy == 1e-4

    def test_precondition(self):
        rel = AccretiveRelation(lambda lam, X: 2.0 * X, DomainChart.interval(-1.0, 1.0))
        with pytest.raises(PreconditionError):
            crandall_liggett_flow(rel, 1e-4)

    def test_non_convergence(self):
        with pytest.raises(NonConvergenceError):
            crandall_liggett_limit(linear_relation(), 1.0, np.array([[1.0]]), 1e-9, k_max=64)

    def test_soft_threshold_reaches_zero(self):
        # subgradient flow of |x|: x(t) = sign(x) max(|x| - t, 0), exact for any k
        flow = crandall_liggett_flow(soft_threshold_relation(), 1e-8)
        np.testing.assert_allclose(flow(0.5, np.array([2.0, -0.25, 0.0])), [1.5, 0.0, 0.0],
                                   atol=1e-12)

    def test_cubic_relation(self):
        # x' = -x^3 from x0 = 1: x(t) = 1 / sqrt(1 + 2t)
        flow = crandall_liggett_flow(cubic_relation(), 1e-4)
        assert abs(flow(1.0, 1.0) - 1.0 / math.sqrt(3.0)) < 2e-4

    def test_lipschitz_report(self):
        rep = linear_relation(2.0).check_lipschitz()
        assert rep.passed and rep.residuals["max_ratio"] <= 1.0


class TestLaws:
    def test_translation_exact(self):
        grid = CompactSample.interval(0.0, 5.0, 17)
        rep = check_semiflow_laws(make_translation_flow(), grid, [0.0, 0.3, 1.0, 2.5], 1e-12)
        assert rep.passed
        assert rep.residuals["identity"] == 0.0
        # only rounding of x + s + t vs x + (s + t) remains
        assert rep.residuals["composition"] <= 1e-15

    def test_logistic(self, logistic_flow):
        grid = CompactSample.interval(0.1, 2.0, 50)
        rep = check_semiflow_laws(logistic_flow, grid, [0.25, 0.5, 1.0], 1e-6)
        assert rep.passed

    def test_broken_map(self, broken_flow):
        grid = CompactSample.from_points([0.0, 1.0])
        rep = check_semiflow_laws(broken_flow, grid, [1.0], 1e-6)
        assert not rep.passed
        # (x + 1 + 1) vs (x + 4): residual 2 s t = 2
        assert rep.residuals["composition"] == pytest.approx(2.0)
        assert rep.residuals["identity"] == 0.0

    def test_identity_probe_uses_raw_map(self):
        shifted = Semiflow(DomainChart.half_line(), lambda t, X: X + t + 0.5, label="off")
        rep = check_semiflow_laws(shifted, CompactSample.from_points([1.0]), [1.0], 1e-6)
        assert rep.residuals["identity"] == pytest.approx(0.5)

    def test_grid_outside_chart(self):
        with pytest.raises(ValueError):
            check_semiflow_laws(make_translation_flow(), CompactSample.from_points([-1.0]),
                                [1.0], 1e-6)


class TestCompactifiedAndRotation:
    def test_compactified_translation(self):
        flow = make_compactified_translation_flow()
        np.testing.assert_allclose(flow(1.0, np.array([0.0, 0.5, 1.0])), [0.5, 2 / 3, 1.0])

    def test_compactified_laws(self):
        flow = make_compactified_translation_flow()
        rep = check_semiflow_laws(flow, CompactSample.interval(0.0, 1.0, 11), [0.5, 2.0], 1e-12)
        assert rep.passed

    def test_rotation_preserves_radius(self):
        flow = make_rotation_flow(1.0)
        X = np.array([[1.0, 0.0], [0.0, 0.5]])
        Y = flow.evaluate_batch(math.pi / 2, X)
        np.testing.assert_allclose(Y, [[0.0, 1.0], [-0.5, 0.0]], atol=1e-15)


class TestContinuityModulus:
    def test_translation_isometry(self):
        cm = continuity_modulus(make_translation_flow(), CompactSample.interval(0.0, 2.0, 5),
                                [0.0, 1.0], 1e-3)
        assert cm.max_ratio_x == pytest.approx(1.0, abs=1e-9)
        assert cm.max_ratio_t == pytest.approx(1.0, abs=1e-9)

    def test_constant_flow(self):
        flow = make_ode_flow(zero_field(), DomainChart.interval(), 0.1)
        cm = continuity_modulus(flow, CompactSample.interval(0.0, 1.0, 5), [0.5], 1e-3)
        assert cm.max_ratio_x == pytest.approx(1.0)
        assert cm.max_ratio_t == 0.0

    def test_logistic_gronwall(self, coarse_logistic_flow):
        cm = continuity_modulus(coarse_logistic_flow, CompactSample.interval(0.1, 2.0, 20),
                                [0.25, 0.5, 1.0], 1e-3)
        assert 0.0 < cm.max_ratio_x <= math.e

    def test_probe_radius_validated(self):
        with pytest.raises(ValueError):
            continuity_modulus(make_translation_flow(), CompactSample.from_points([0.0]), [1.0], 0)

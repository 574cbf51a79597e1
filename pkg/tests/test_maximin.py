import numpy as np
import pytest

from omt.baselines import StoufferMinPolicy
from omt.evaluate import error_rate
from omt.maximin import (
    MaximinPolicy,
    MaximinSpec,
    find_theta_A,
    solve_maximin,
    solve_two_theta,
    verify_control,
)
from omt.problem import ProblemSpec
from omt.quadrature import QuadConfig
from omt.solver import solve


@pytest.fixture(scope="module")
def quad():
    return QuadConfig(grid_n=64)


@pytest.fixture(scope="module")
def k2_base():
    return ProblemSpec(k=2, alpha=0.05, error="fwer", power="avg", L=2, theta_obj=-0.5)


@pytest.fixture(scope="module")
def k2_maximin(k2_base, quad):
    return solve_maximin(MaximinSpec(base=k2_base), quad=quad)


class TestTwoTheta:
    def test_equal_signals_reduce_to_plain_solve(self, k2_base, quad):
        rep = solve_two_theta(-0.5, -0.5, k2_base, quad)
        plain = solve(k2_base, quad=quad)
        np.testing.assert_allclose(rep.mu_star, plain.mu_star, rtol=1e-6, atol=1e-12)
        assert rep.objective == pytest.approx(plain.objective, abs=1e-9)

    def test_signs_validated(self, k2_base, quad):
        with pytest.raises(ValueError):
            solve_two_theta(-0.5, 0.5, k2_base, quad)


class TestFindThetaA:
    def test_k2_fwer_location(self, k2_base, quad):
        found = find_theta_A(MaximinSpec(base=k2_base), quad=quad)
        assert found["theta_A"] == pytest.approx(-1.29, abs=0.06)
        assert found["min_power"] == pytest.approx(0.099, abs=0.003)
        # minimality: every probe of the curve sits at or above the minimum
        floor = found["min_power"] - 5e-4
        assert all(p >= floor for _, p in found["power_curve"])

    def test_boundary_minimum_rejected(self, k2_base, quad):
        from omt.solver import SolverError

        spec = MaximinSpec(base=k2_base, theta_grid=(-0.6, -0.55, -0.5125))
        with pytest.raises(SolverError):
            find_theta_A(spec, quad=quad)


class TestVerification:
    def test_k2_certificate(self, k2_maximin):
        _, report = k2_maximin
        assert report.certified
        assert all(r["pass"] for r in report.control_check)
        assert all(r["pass"] for r in report.dominance_check)
        # the null check appears once; its value has no signal dependence
        null_rows = [r for r in report.control_check if r["L"] == 0]
        assert len(null_rows) == 1

    def test_dominance_floor_is_objective(self, k2_maximin):
        _, report = k2_maximin
        at_theta0 = [r for r in report.dominance_check
                     if np.allclose(r["thetas"], report.theta0)]
        assert at_theta0, "the objective signal belongs to the dominance grid"
        assert at_theta0[0]["avg_power"] == pytest.approx(report.min_power, abs=2e-3)

    def test_misspecified_rule_fails_control(self, quad):
        # the minimum-p rule cut at the global statistic over-rejects in the
        # middle signal range when one null is false
        pol = StoufferMinPolicy(k=3, alpha=0.05).fit()
        val = error_rate(pol, [1, 0, 0], -1.2, "fwer", quad=QuadConfig(grid_n=96))
        assert val > 0.05 + 5e-4
        base = ProblemSpec(k=3, alpha=0.05, error="fwer", power="avg", L=3, theta_obj=-1.2)
        rows = verify_control(pol, MaximinSpec(base=base), quad=QuadConfig(grid_n=96))
        assert any(not r["pass"] for r in rows)

    def test_control_grid_covers_strong_signals(self, k2_maximin):
        _, report = k2_maximin
        thetas = [min(r["thetas"]) for r in report.control_check if r["thetas"]]
        assert min(thetas) <= -8.0 + 1e-9

    def test_certified_flag_recomputable(self, k2_maximin):
        _, report = k2_maximin
        recomputed = all(r["pass"] for r in report.control_check) and all(
            r["pass"] for r in report.dominance_check
        )
        assert report.certified == recomputed


class TestReport:
    def test_json_round_trip_fields(self, k2_maximin):
        import json

        _, report = k2_maximin
        doc = json.loads(report.to_json())
        assert doc["format"] == 1
        assert doc["theta0"] == -0.5
        assert doc["certified"] is True
        assert len(doc["power_curve"]) >= 10
        assert doc["spec"]["theta_con"] == pytest.approx(report.theta_A)


class TestEstimator:
    def test_fit_predict_surface(self, quad):
        est = MaximinPolicy(k=2, alpha=0.05, error="fwer", power="avg",
                            theta0=-0.5, quad=quad)
        est.fit()
        assert est.certified_
        assert est.theta_A_ == pytest.approx(-1.29, abs=0.06)
        U = np.array([[0.001, 0.9], [0.5, 0.6]])
        mask = est.predict(U)
        assert mask.shape == (2, 2)
        assert not mask[1].any()

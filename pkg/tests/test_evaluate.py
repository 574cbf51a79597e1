import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from omt.baselines import (
    HolmPolicy,
    MABHPolicy,
    StoufferAllOrNothingPolicy,
    StoufferMinPolicy,
)
from omt.evaluate import (
    closed_form_fdr,
    error_rate,
    misspec_sweep,
    power,
    region_slice,
    theta_star,
)
from omt.quadrature import QuadConfig


class TestClosedFormFdr:
    def test_boundary_value(self):
        assert closed_form_fdr(3, 1, -0.356, 0.05) == pytest.approx(0.05, abs=2e-4)

    def test_zero_shift_reduces_to_scaled_alpha(self):
        assert closed_form_fdr(3, 2, 0.0, 0.05) == pytest.approx(0.05 / 3, rel=1e-12)

    def test_agrees_with_quadrature(self, fast_quad):
        pol = StoufferAllOrNothingPolicy(k=3, alpha=0.05).fit()
        for theta in (-0.6, -0.35, -0.1):
            for L in (1, 2):
                h = [1] * L + [0] * (3 - L)
                got = error_rate(pol, h, theta, "fdr", quad=fast_quad)
                assert got == pytest.approx(closed_form_fdr(3, L, theta, 0.05), abs=5e-4)

    def test_invalid_L(self):
        with pytest.raises(ValueError):
            closed_form_fdr(3, 3, -1.0, 0.05)


class TestThetaStar:
    def test_k3_value_and_binding(self):
        theta, binding = theta_star(3, 0.05)
        assert theta == pytest.approx(-0.356, abs=1e-3)
        assert binding == 1

    def test_l2_standalone_boundary(self):
        # the two-false-null bound alone would allow far weaker signals
        from scipy.optimize import brentq

        f = lambda t: closed_form_fdr(3, 2, t, 0.05) - 0.05
        assert brentq(f, -1.0, -0.1) == pytest.approx(-0.527, abs=1e-3)

    def test_k2_root(self):
        theta, binding = theta_star(2, 0.05)
        assert closed_form_fdr(2, 1, theta, 0.05) == pytest.approx(0.05, abs=1e-8)
        assert binding == 1

    def test_control_on_the_feasible_side(self):
        theta, _ = theta_star(3, 0.05)
        assert max(closed_form_fdr(3, L, theta, 0.05) for L in (1, 2)) <= 0.05 + 1e-9
        assert max(closed_form_fdr(3, L, theta - 0.05, 0.05) for L in (1, 2)) > 0.05


class TestErrorRate:
    def test_global_null_fwer_equals_fdr(self, fast_quad):
        pol = StoufferMinPolicy(k=3, alpha=0.05).fit()
        f = error_rate(pol, [0, 0, 0], [], "fwer", quad=fast_quad)
        d = error_rate(pol, [0, 0, 0], [], "fdr", quad=fast_quad)
        assert f == pytest.approx(d, rel=1e-12)
        assert f == pytest.approx(0.05, abs=2e-4)

    def test_all_or_nothing_second_boundary(self, fast_quad):
        pol = StoufferAllOrNothingPolicy(k=3, alpha=0.05).fit()
        got = error_rate(pol, [1, 1, 0], -0.527, "fdr", quad=fast_quad)
        assert got == pytest.approx(0.05, abs=5e-4)


class TestPower:
    def test_all_or_nothing_avg_power_closed_form(self, fast_quad):
        # rejects all three iff the global statistic passes, so the average
        # power equals the acceptance probability at the shifted mean
        pol = StoufferAllOrNothingPolicy(k=3, alpha=0.05).fit()
        for theta in (-0.35, -1.0):
            rep = power(pol, theta, quad=fast_quad)
            exact = ndtr(ndtri(0.05) - np.sqrt(3.0) * theta)
            assert rep.avg_power == pytest.approx(exact, abs=1.5e-3)
            assert rep.any_power == pytest.approx(exact, abs=1.5e-3)
            assert rep.expected_rejections == pytest.approx(3 * exact, abs=4.5e-3)

    def test_weak_signal_any_power_near_level(self, fast_quad):
        pol = StoufferMinPolicy(k=3, alpha=0.05).fit()
        rep = power(pol, -0.01, quad=fast_quad)
        err0 = error_rate(pol, [0, 0, 0], [], "fwer", quad=fast_quad)
        assert rep.any_power <= err0 + 0.01

    def test_vector_thetas(self, fast_quad):
        pol = HolmPolicy(k=3, alpha=0.05).fit()
        rep = power(pol, [-0.5, -1.0, -2.0], quad=fast_quad)
        assert 0.0 < rep.avg_power < 1.0
        assert rep.L == 3 and rep.thetas == (-0.5, -1.0, -2.0)

    def test_mismatched_L_rejected(self, fast_quad):
        pol = HolmPolicy(k=3, alpha=0.05).fit()
        with pytest.raises(ValueError):
            power(pol, [-1.0, -2.0], L=3, quad=fast_quad)


class TestRegionSlice:
    def test_holm_slice_above_first_level_is_empty(self):
        pol = HolmPolicy(k=3, alpha=0.05).fit()
        sl = region_slice(pol, 0.02, n=64)
        assert sl.max_count == 0

    def test_mabh_slice_above_level_is_empty(self):
        pol = MABHPolicy(k=3, alpha=0.05).fit()
        sl = region_slice(pol, 0.106, n=64)
        assert sl.max_count == 0

    def test_holm_slice_below_first_level(self):
        pol = HolmPolicy(k=3, alpha=0.05).fit()
        sl = region_slice(pol, 0.01, n=64)
        assert sl.max_count == 3
        # counts match direct prediction at a spot point
        i, j = 3, 5
        row = np.array([[0.01, sl.axis[i], sl.axis[j]]])
        assert sl.counts[i, j] == pol.predict(row).sum()

    def test_csv_header_names_policy(self):
        pol = HolmPolicy(k=3, alpha=0.05).fit()
        text = region_slice(pol, 0.01, n=16, policy_id="holm").to_csv()
        head, cols, first = text.splitlines()[:3]
        assert head.startswith("# policy=holm u1=0.01 n=16")
        assert cols == "u2,u3,count"
        assert len(first.split(",")) == 3

    def test_validation(self):
        pol = HolmPolicy(k=3, alpha=0.05).fit()
        with pytest.raises(ValueError):
            region_slice(pol, 1.5, n=64)
        with pytest.raises(ValueError):
            region_slice(pol, 0.5, n=4)


class TestMisspecSweep:
    def test_shapes_and_calibration(self):
        pol = StoufferMinPolicy(k=3, alpha=0.05).fit()
        rows = misspec_sweep(pol, [0.0, 0.5], [[0.0, 0.0, 0.0], [0.0, 0.0, -1.33]],
                             n=120_000, seed=9)
        assert len(rows) == 4
        null_rows = {r["rho"]: r for r in rows if r["thetas"] == [0.0, 0.0, 0.0]}
        assert null_rows[0.0]["fwer"] == pytest.approx(0.05, abs=3 * null_rows[0.0]["fwer_se"])
        assert null_rows[0.5]["fwer"] > 0.05  # positive correlation inflates
        single = [r for r in rows if r["thetas"] == [0.0, 0.0, -1.33]][0]
        assert "avg_power" in single

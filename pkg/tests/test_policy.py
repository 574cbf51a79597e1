import json

import numpy as np
import pytest
from scipy.special import ndtri

from omt.baselines import StoufferMinPolicy
from omt.gaussian import alt_density
from omt.policy import OmtPolicy, depths_from_residuals, load_policy, save_policy
from omt.problem import ProblemSpec


def fdr_policy(mu, theta=-2.0):
    spec = ProblemSpec(k=3, alpha=0.05, error="fdr", power="avg", L=3, theta_obj=theta)
    return OmtPolicy.from_multipliers(spec, mu)


class TestDepthRule:
    def test_all_positive(self):
        assert depths_from_residuals([[1.0, 1.0, 1.0]])[0] == 3

    def test_stops_after_first(self):
        # positive head, no positive partial sum from the second entry on
        assert depths_from_residuals([[5.0, -1.0, -1.0]])[0] == 1

    def test_rescued_by_later_sum(self):
        # depth 1 via R1+R2, depth 2 via R2, depth 3 blocked
        assert depths_from_residuals([[-1.0, 3.0, -1.0]])[0] == 2

    def test_nothing(self):
        assert depths_from_residuals([[-1.0, -0.5, -0.2]])[0] == 0

    def test_exact_zero_blocks(self):
        # identically-zero tails never deepen the rejection
        assert depths_from_residuals([[2.0, 0.0, 0.0]])[0] == 1

    def test_vectorized_matches_scalar(self, rng):
        R = rng.normal(0, 1, (500, 4))
        batch = depths_from_residuals(R)
        single = np.array([depths_from_residuals(r[None, :])[0] for r in R])
        assert np.array_equal(batch, single)


class TestResiduals:
    """Residuals must reproduce the worked three-hypothesis FDR instance."""

    u = np.array([0.03, 0.25, 0.6])

    def worked_residuals(self, mu, a_scale):
        # printed forms, with the objective weight carrying scale a_scale
        g = alt_density(self.u, -2.0)
        p = np.prod(g)
        m0, m1, m2 = mu
        r1 = a_scale * p - 6 * m0 - 2 * m1 * (g[1] + g[2]) - 2 * m2 * g[1] * g[2]
        r2 = a_scale * p - m1 * (g[0] - g[1]) - m2 * (g[0] * g[2] - g[1] * g[2])
        r3 = (a_scale * p - 2 * m1 * (g[0] + g[1] - 2 * g[2]) / 6
              - 2 * m2 * (2 * g[0] * g[1] - g[0] * g[2] - g[1] * g[2]) / 6)
        return np.array([r1, r2, r3])

    def test_zero_multipliers_give_objective(self):
        pol = fdr_policy([0.0, 0.0, 0.0])
        g = alt_density(self.u, -2.0)
        np.testing.assert_allclose(pol.residuals(self.u), 2 * np.prod(g), rtol=1e-12)

    def test_matches_worked_instance(self):
        # the objective here carries its full combinatorial weight (2x the
        # worked instance's normalization), so residuals at mu equal twice
        # the printed forms at mu/2
        mu = np.array([0.3, 0.7, 1.1])
        pol = fdr_policy(mu)
        expect = 2.0 * self.worked_residuals(mu / 2.0, a_scale=1.0)
        np.testing.assert_allclose(pol.residuals(self.u), expect, rtol=1e-12)

    def test_constraint_parts_match_printed_forms(self):
        # residual differences isolate the constraint weights exactly
        base = fdr_policy([0.0, 0.0, 0.0]).residuals(self.u)
        for L, mu in enumerate(np.eye(3)):
            got = base - fdr_policy(mu).residuals(self.u)
            expect = self.worked_residuals(np.zeros(3), 2.0) - 2.0 * self.worked_residuals(
                mu / 2.0, a_scale=1.0
            )
            np.testing.assert_allclose(got, expect, rtol=1e-12)


class TestDecide:
    def test_prefix_property(self, rng):
        pol = fdr_policy([0.2, 0.5, 0.8])
        U = np.sort(rng.uniform(0.001, 0.999, (2000, 3)), axis=1)
        depths = pol.rejection_depths(U)
        masks = pol.predict(U)
        for d, m in zip(depths, masks):
            assert m.tolist() == [i < d for i in range(3)]

    def test_decide_full_permutation_bookkeeping(self):
        from omt.baselines import HolmPolicy

        pol = HolmPolicy(k=3, alpha=0.05).fit()
        # depth on sorted input is 1; the smallest entry sits at index 1
        rs = pol.decide_full([0.9, 0.001, 0.4])
        assert rs.rejected == frozenset({1})

    def test_symmetry(self, rng):
        pol = fdr_policy([0.3, 0.6, 0.2])
        for _ in range(50):
            u = rng.uniform(0.001, 0.999, 3)
            perm = rng.permutation(3)
            base = pol.predict(u[None, :])[0]
            moved = pol.predict(u[perm][None, :])[0]
            assert np.array_equal(moved, base[perm])

    def test_empty_rejection(self):
        pol = fdr_policy([50.0, 50.0, 50.0])
        assert pol.decide_full([0.5, 0.6, 0.7]).count == 0

    def test_global_statistic_equivalence(self, rng):
        # with only the global-null multiplier active, the any-power rule
        # rejects the smallest p-value exactly on the z-score-sum region
        theta, alpha, k = -2.0, 0.05, 3
        mu0 = np.exp(theta * np.sqrt(k) * ndtri(alpha) - k * theta**2 / 2)
        spec = ProblemSpec(k=k, alpha=alpha, error="fwer", power="any", theta_obj=theta)
        pol = OmtPolicy.from_multipliers(spec, [mu0, 0.0, 0.0])
        ref = StoufferMinPolicy(k=k, alpha=alpha).fit()
        U = rng.uniform(0.0005, 0.9995, (100_000, 3))
        np.testing.assert_array_equal(pol.predict(U), ref.predict(U))


class TestPersistence:
    def test_round_trip_identical_decisions(self, tmp_path, rng):
        pol = fdr_policy([0.31234567890123, 0.7, 1.1], theta=-1.33)
        path = tmp_path / "policy.json"
        save_policy(pol, path)
        back = load_policy(path)
        assert back.mu_.tolist() == pol.mu_.tolist()
        assert back.spec == pol.spec
        U = rng.uniform(0, 1, (100_000, 3))
        np.testing.assert_array_equal(back.predict(U), pol.predict(U))

    def test_schema_fields(self, tmp_path):
        pol = fdr_policy([0.1, 0.2, 0.3])
        path = tmp_path / "p.json"
        save_policy(pol, path)
        doc = json.loads(path.read_text())
        assert doc["format"] == 1
        assert set(doc) >= {"spec", "mu", "solver", "provenance"}
        assert doc["spec"]["error"] == "fdr"
        assert len(doc["mu"]) == 3

    def test_unknown_format_rejected(self):
        with pytest.raises(ValueError):
            OmtPolicy.from_dict({"format": 99, "spec": {}, "mu": []})

    def test_negative_multipliers_rejected(self):
        spec = ProblemSpec(k=3, error="fwer", power="avg", L=3, theta_obj=-1.0)
        with pytest.raises(ValueError):
            OmtPolicy.from_multipliers(spec, [-0.1, 0.0, 0.0])


def test_estimator_params_round_trip():
    pol = OmtPolicy(k=3, alpha=0.01, error="fdr", power="avg", L=2, theta_obj=-1.5)
    params = pol.get_params()
    clone = OmtPolicy(**params)
    assert clone.spec == pol.spec


class TestMonotoneResponse:
    def test_fwer_depth_never_grows_with_multipliers(self, rng):
        # familywise weights are nonnegative, so raising any multiplier
        # shrinks every residual and the rejection depth cannot increase
        spec = ProblemSpec(k=3, error="fwer", power="avg", L=3, theta_obj=-1.0)
        U = np.sort(rng.uniform(0.001, 0.999, (3000, 3)), axis=1)
        base_mu = np.array([0.2, 0.4, 0.6])
        base = OmtPolicy.from_multipliers(spec, base_mu).rejection_depths(U)
        for L in range(3):
            for bump in (0.1, 1.0):
                mu = base_mu.copy()
                mu[L] += bump
                deeper = OmtPolicy.from_multipliers(spec, mu).rejection_depths(U)
                assert np.all(deeper <= base)

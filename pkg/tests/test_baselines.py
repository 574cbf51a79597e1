import numpy as np
import pytest
from scipy.special import ndtr

from omt.baselines import (
    BHPolicy,
    ClosedStoufferPolicy,
    HolmPolicy,
    MABHPolicy,
    SidakStepDownPolicy,
    baseline_by_name,
    bh,
    closed_stouffer,
    holm,
    mabh,
    sidak_stepdown,
)


class TestHolm:
    def test_two_of_three(self):
        assert holm([0.01, 0.02, 0.2], 0.05).rejected == frozenset({0, 1})

    def test_none(self):
        assert holm([0.3, 0.4, 0.5], 0.05).count == 0

    def test_all(self):
        assert holm([0.001, 0.002, 0.003], 0.05).count == 3

    def test_stops_at_first_failure(self):
        # rank 1 fails even though rank 2 would pass its own level
        assert holm([0.02, 0.02, 0.02], 0.05).count == 0


class TestSidak:
    def test_all_rejected_near_thresholds(self):
        assert sidak_stepdown([0.0169, 0.02, 0.04], 0.05).count == 3

    def test_first_threshold_blocks(self):
        # 1 - 0.95^(1/3) = 0.016952; 0.018 exceeds it
        assert sidak_stepdown([0.018, 0.02, 0.04], 0.05).count == 0

    def test_small_difference_from_holm(self, rng):
        # the per-rank levels differ by ~3e-4, so disagreements are rare
        # and the step-down power gap stays well under a percent
        u = ndtr(rng.standard_normal((1_000_000, 3)) - 1.33)
        h = HolmPolicy(k=3, alpha=0.05).fit().predict(u)
        s = SidakStepDownPolicy(k=3, alpha=0.05).fit().predict(u)
        assert np.all(s.sum(axis=1) >= h.sum(axis=1))  # Sidak levels dominate
        assert np.mean((h != s).any(axis=1)) < 0.01
        assert abs(s.sum() - h.sum()) / (3 * len(u)) < 0.003


class TestBH:
    def test_reject_two(self):
        assert bh([0.01, 0.03, 0.2], 0.05).count == 2

    def test_reject_none(self):
        assert bh([0.04, 0.2, 0.9], 0.05).count == 0

    def test_reject_one(self):
        assert bh([0.016, 0.2, 0.9], 0.05).count == 1


class TestMABH:
    def test_second_stage_extends(self):
        assert mabh([0.01, 0.03, 0.2], 0.05).count == 2

    def test_trigger_via_second_rank(self):
        assert mabh([0.02, 0.026, 0.9], 0.05).count == 2

    def test_no_trigger(self):
        assert mabh([0.02, 0.04, 0.9], 0.05).count == 0

    def test_dominates_bh(self, rng):
        u = rng.uniform(0, 1, (1_000_000, 3)) ** 2
        b = BHPolicy(k=3, alpha=0.05).fit().predict(u)
        m = MABHPolicy(k=3, alpha=0.05).fit().predict(u)
        assert np.all(m.sum(axis=1) >= b.sum(axis=1))
        assert not np.any(b & ~m)


class TestClosedStouffer:
    def test_global_statistic_blocks_everything(self):
        assert closed_stouffer([0.001, 0.2, 0.9], 0.05).count == 0

    def test_single_rejection(self):
        assert closed_stouffer([0.001, 0.5, 0.5], 0.05).rejected == frozenset({0})

    def test_median_point(self):
        assert closed_stouffer([0.5, 0.5, 0.5], 0.05).count == 0


class TestMonotonicity:
    """Lowering rejected p-values and raising non-rejected ones keeps the set."""

    @pytest.mark.parametrize("cls", [HolmPolicy, SidakStepDownPolicy, BHPolicy, MABHPolicy])
    def test_stepwise_monotone(self, cls, rng):
        pol = cls(k=3, alpha=0.05).fit()
        for _ in range(300):
            u = rng.uniform(0.0, 0.4, 3)
            mask = pol.predict(u[None, :])[0]
            v = u.copy()
            v[mask] *= rng.uniform(0.0, 1.0, mask.sum())
            v[~mask] += rng.uniform(0.0, 1.0, (~mask).sum()) * (1.0 - v[~mask])
            mask2 = pol.predict(v[None, :])[0]
            assert np.array_equal(mask, mask2)


class TestErrorControlMC:
    @pytest.mark.parametrize("k", [3, 6])
    def test_holm_fwer_under_global_null(self, k, rng):
        n = 400_000
        u = rng.uniform(0, 1, (n, k))
        mask = HolmPolicy(k=k, alpha=0.05).fit().predict(u)
        fwer = mask.any(axis=1).mean()
        se = np.sqrt(0.05 * 0.95 / n)
        assert fwer <= 0.05 + 3 * se

    @pytest.mark.parametrize("L", [1, 2, 3])
    def test_bh_fdr_under_independence(self, L, rng):
        n = 400_000
        k = 3
        x = rng.standard_normal((n, k))
        x[:, :L] -= 1.5
        u = ndtr(x)
        mask = BHPolicy(k=k, alpha=0.05).fit().predict(u)
        V = mask[:, L:].sum(axis=1)
        R = mask.sum(axis=1)
        fdr = np.where(R > 0, V / np.maximum(R, 1), 0.0).mean()
        se = fdr / np.sqrt(n) * 3 + 3e-4
        assert fdr <= 0.05 + 3 * se


def test_baseline_by_name():
    assert isinstance(baseline_by_name("holm", 3, 0.05), HolmPolicy)
    assert isinstance(baseline_by_name("closed-stouffer", 3, 0.05), ClosedStoufferPolicy)
    with pytest.raises(ValueError):
        baseline_by_name("bonferroni", 3, 0.05)

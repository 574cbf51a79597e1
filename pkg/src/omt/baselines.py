"""Classical comparison procedures and analytic reference rules.

All of these are symmetric policies whose rejection set on sorted
p-values is a prefix, so they share the depth-based prediction surface
with the optimal policies.
"""

from __future__ import annotations

import itertools
from math import sqrt

import numpy as np
from scipy.special import ndtri
from sklearn.base import BaseEstimator

from .policy import RejectionRuleMixin, RejectionSet
from .validation import check_alpha, check_pvalue_vector

__all__ = [
    "HolmPolicy",
    "SidakStepDownPolicy",
    "BHPolicy",
    "MABHPolicy",
    "ClosedStoufferPolicy",
    "StoufferAllOrNothingPolicy",
    "StoufferMinPolicy",
    "holm",
    "sidak_stepdown",
    "bh",
    "mabh",
    "closed_stouffer",
    "baseline_by_name",
]


class _BaselineBase(RejectionRuleMixin, BaseEstimator):
    def __init__(self, k: int = 3, alpha: float = 0.05):
        self.k = k
        self.alpha = alpha

    def fit(self, X=None, y=None):
        check_alpha(self.alpha)
        return self

    def _inner_thresholds(self) -> list:
        raise NotImplementedError

    def inner_roots(self, z_outer, lo, hi):
        """Depth breakpoints along the innermost sorted coordinate (z-space).

        For threshold procedures the inner coordinate only interacts with
        its own per-rank levels, so the breakpoints are constants.
        """
        t = [v for v in self._inner_thresholds() if 0.0 < v < 1.0]
        zs = ndtri(np.asarray(t)) if t else np.empty(0)
        return np.broadcast_to(zs, (len(lo), len(zs)))

    def _all_thresholds(self) -> list:
        raise NotImplementedError

    def outer_splits(self):
        """Fixed z values where the rule jumps along outer axes, plus line splits."""
        t = [v for v in self._all_thresholds() if 0.0 < v < 1.0]
        return ndtri(np.asarray(t)).tolist() if t else [], None


def _stepdown_depths(u_sorted: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Depth of the first threshold failure (rejects while u_(i) <= t_i)."""
    ok = u_sorted <= thresholds[None, :]
    return np.cumprod(ok, axis=1).sum(axis=1)


def _stepup_depths(u_sorted: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    """Largest index i with u_(i) <= t_i, or 0."""
    ok = u_sorted <= thresholds[None, :]
    any_ok = ok.any(axis=1)
    last = ok.shape[1] - np.argmax(ok[:, ::-1], axis=1)
    return np.where(any_ok, last, 0)


class HolmPolicy(_BaselineBase):
    """Holm's sequentially rejective procedure (step-down Bonferroni)."""

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        u_sorted = np.atleast_2d(np.asarray(u_sorted, dtype=float))
        k = self.k
        t = self.alpha / (k - np.arange(k))
        return _stepdown_depths(u_sorted, t)

    def _inner_thresholds(self):
        return [self.alpha]

    def _all_thresholds(self):
        return list(self.alpha / (self.k - np.arange(self.k)))


class SidakStepDownPolicy(_BaselineBase):
    """Step-down with per-rank Sidak levels 1 - (1 - alpha)^(1 / (K - i + 1))."""

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        u_sorted = np.atleast_2d(np.asarray(u_sorted, dtype=float))
        k = self.k
        t = 1.0 - (1.0 - self.alpha) ** (1.0 / (k - np.arange(k)))
        return _stepdown_depths(u_sorted, t)

    def _inner_thresholds(self):
        return [self.alpha]

    def _all_thresholds(self):
        return list(1.0 - (1.0 - self.alpha) ** (1.0 / (self.k - np.arange(self.k))))


class BHPolicy(_BaselineBase):
    """Benjamini-Hochberg step-up procedure."""

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        u_sorted = np.atleast_2d(np.asarray(u_sorted, dtype=float))
        k = self.k
        t = self.alpha * np.arange(1, k + 1) / k
        return _stepup_depths(u_sorted, t)

    def _inner_thresholds(self):
        return [self.alpha]

    def _all_thresholds(self):
        return list(self.alpha * np.arange(1, self.k + 1) / self.k)


class MABHPolicy(_BaselineBase):
    """Minimally adaptive BH: BH trigger, rejection depth at level alpha/(K-1).

    If some u_(i) <= i * alpha / K, rejects all hypotheses up to
    max{i : u_(i) <= i * alpha / (K - 1)}; otherwise rejects nothing.
    """

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        u_sorted = np.atleast_2d(np.asarray(u_sorted, dtype=float))
        k = self.k
        ranks = np.arange(1, k + 1)
        trigger = (u_sorted <= self.alpha * ranks[None, :] / k).any(axis=1)
        depth = _stepup_depths(u_sorted, self.alpha * ranks / (k - 1))
        return np.where(trigger, depth, 0)

    def _inner_thresholds(self):
        return [self.alpha, self.k * self.alpha / (self.k - 1)]

    def _all_thresholds(self):
        ranks = np.arange(1, self.k + 1)
        return list(self.alpha * ranks / self.k) + list(self.alpha * ranks / (self.k - 1))


class ClosedStoufferPolicy(_BaselineBase):
    """Closed testing with the normalized z-score sum as intersection test.

    A hypothesis is rejected iff every subset containing it has
    sum of z-scores / sqrt(|subset|) below the alpha normal quantile.
    """

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        u_sorted = np.atleast_2d(np.asarray(u_sorted, dtype=float))
        k = self.k
        if k > 16:
            raise ValueError("closed testing enumerates 2^K - 1 subsets; K > 16 unsupported")
        z_alpha = ndtri(self.alpha)
        with np.errstate(divide="ignore"):
            z = ndtri(u_sorted)
        rejected = np.ones((len(u_sorted), k), dtype=bool)
        for size in range(1, k + 1):
            for sub in itertools.combinations(range(k), size):
                stat = z[:, sub].sum(axis=1) / sqrt(size)
                fail = ~(stat < z_alpha)
                for j in sub:
                    rejected[fail, j] = False
        # rejections form a prefix of the sorted order
        return np.cumprod(rejected, axis=1).sum(axis=1)

    def inner_roots(self, z_outer, lo, hi):
        k = self.k
        z_alpha = ndtri(self.alpha)
        cols = []
        for size in range(1, k + 1):
            for sub in itertools.combinations(range(k - 1), size - 1):
                outer_sum = z_outer[:, sub].sum(axis=1) if sub else np.zeros(len(z_outer))
                cols.append(sqrt(size) * z_alpha - outer_sum)
        return np.column_stack(cols)

    def outer_splits(self):
        z_alpha = ndtri(self.alpha)
        constants = [sqrt(s) * z_alpha for s in range(1, self.k)]
        if self.k == 2:
            return constants, None

        def lines(z2):
            return np.column_stack([sqrt(2.0) * z_alpha - z2])

        return constants, lines


class StoufferAllOrNothingPolicy(_BaselineBase):
    """Reject all K hypotheses iff the global z-score sum test rejects."""

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        u_sorted = np.atleast_2d(np.asarray(u_sorted, dtype=float))
        with np.errstate(divide="ignore"):
            z = ndtri(u_sorted)
        stat = z.sum(axis=1) / sqrt(self.k)
        return np.where(stat < ndtri(self.alpha), self.k, 0)

    def inner_roots(self, z_outer, lo, hi):
        return (sqrt(self.k) * ndtri(self.alpha) - z_outer.sum(axis=1))[:, None]

    def outer_splits(self):
        return [], None


class StoufferMinPolicy(_BaselineBase):
    """Reject only the smallest p-value iff the global z-score sum test rejects."""

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        u_sorted = np.atleast_2d(np.asarray(u_sorted, dtype=float))
        with np.errstate(divide="ignore"):
            z = ndtri(u_sorted)
        stat = z.sum(axis=1) / sqrt(self.k)
        return np.where(stat < ndtri(self.alpha), 1, 0)

    def inner_roots(self, z_outer, lo, hi):
        return (sqrt(self.k) * ndtri(self.alpha) - z_outer.sum(axis=1))[:, None]

    def outer_splits(self):
        return [], None


def _one_shot(policy_cls, u, alpha) -> RejectionSet:
    u = np.asarray(u, dtype=float)
    pol = policy_cls(k=u.shape[-1], alpha=alpha).fit()
    return pol.decide_full(check_pvalue_vector(u, u.shape[-1]))


def holm(u, alpha: float) -> RejectionSet:
    """Apply Holm's procedure to one p-value vector."""
    return _one_shot(HolmPolicy, u, alpha)


def sidak_stepdown(u, alpha: float) -> RejectionSet:
    """Apply the Sidak step-down procedure to one p-value vector."""
    return _one_shot(SidakStepDownPolicy, u, alpha)


def bh(u, alpha: float) -> RejectionSet:
    """Apply the Benjamini-Hochberg procedure to one p-value vector."""
    return _one_shot(BHPolicy, u, alpha)


def mabh(u, alpha: float) -> RejectionSet:
    """Apply the minimally adaptive BH procedure to one p-value vector."""
    return _one_shot(MABHPolicy, u, alpha)


def closed_stouffer(u, alpha: float) -> RejectionSet:
    """Apply closed testing with z-score-sum intersection tests."""
    return _one_shot(ClosedStoufferPolicy, u, alpha)


_BASELINES = {
    "holm": HolmPolicy,
    "sidak": SidakStepDownPolicy,
    "bh": BHPolicy,
    "mabh": MABHPolicy,
    "closed-stouffer": ClosedStoufferPolicy,
}


def baseline_by_name(name: str, k: int, alpha: float):
    try:
        cls = _BASELINES[name]
    except KeyError:
        raise ValueError(f"unknown baseline {name!r}; choose from {sorted(_BASELINES)}") from None
    return cls(k=k, alpha=alpha).fit()

"""Power and error-rate evaluation, closed forms, region slices, and sweeps."""

from __future__ import annotations

import io
from dataclasses import dataclass
from math import sqrt

import numpy as np
from scipy.special import ndtr, ndtri

from .integrals import SegmentTable, config_expectations
from .problem import ErrorMeasure
from .quadrature import QuadConfig, mc_summary
from .validation import check_alpha

__all__ = [
    "PowerReport",
    "RegionSlice",
    "power",
    "error_rate",
    "closed_form_fdr",
    "theta_star",
    "region_slice",
    "misspec_sweep",
]


@dataclass(frozen=True)
class PowerReport:
    """Power summary of one policy at one alternative."""

    avg_power: float
    any_power: float
    expected_rejections: float
    thetas: tuple
    L: int
    scheme: str
    n_points: int

    def to_dict(self) -> dict:
        return {
            "avg_power": self.avg_power,
            "any_power": self.any_power,
            "expected_rejections": self.expected_rejections,
            "thetas": list(self.thetas),
            "L": self.L,
            "scheme": self.scheme,
            "n_points": self.n_points,
        }


def _normalize_thetas(thetas, k: int, L: int | None):
    th = np.atleast_1d(np.asarray(thetas, dtype=float))
    if th.size == 1 and (L or k) > 1:
        th = np.repeat(th, L or k)
    if L is None:
        L = len(th)
    if len(th) != L:
        raise ValueError(f"expected {L} shifts, got {len(th)}")
    if not 1 <= L <= k:
        raise ValueError(f"number of false nulls must be in [1, {k}]")
    return th, L


def power(policy, thetas, L: int | None = None, quad: QuadConfig | None = None,
          n: int | None = None, table: SegmentTable | None = None) -> PowerReport:
    """Quadrature power of a policy at a (possibly vector) alternative.

    ``thetas`` is a scalar or a vector of shifts for the false nulls;
    ``L`` (default: all k) selects the canonical configuration with the
    first L nulls false.  Average power is the expected fraction of the
    false nulls rejected; any-power is the probability of at least one
    rejection.
    """
    k = policy.k
    th, L = _normalize_thetas(thetas, k, L)
    h = [1] * L + [0] * (k - L)
    cfg = quad or QuadConfig()
    res = config_expectations(policy, h, th, quad=cfg, n=n, table=table)
    # config_expectations widens the z-box automatically when |theta| is large
    rule_n = (n or cfg.grid_n)
    return PowerReport(
        avg_power=res["avg_power"],
        any_power=res["any"],
        expected_rejections=res["rejections"],
        thetas=tuple(float(t) for t in th),
        L=L,
        scheme="TensorGrid",
        n_points=rule_n,
    )


def error_rate(policy, h, thetas, measure, quad: QuadConfig | None = None,
               n: int | None = None, table: SegmentTable | None = None) -> float:
    """Exact-quadrature error rate of a policy under one configuration.

    ``measure`` is ``fwer`` or ``fdr``; ``h`` marks the false nulls and
    ``thetas`` their shifts (scalar broadcasts).
    """
    measure = ErrorMeasure(measure)
    res = config_expectations(policy, h, thetas, quad=quad, n=n, table=table)
    return res[measure.value]


def closed_form_fdr(k: int, L: int, theta: float, alpha: float) -> float:
    """False discovery rate of the all-or-nothing global-statistic rule.

    For the rule rejecting all k hypotheses exactly when the normalized
    z-score sum falls below the alpha quantile, with L false nulls at
    shift theta: (k - L)/k * Phi(z_alpha - L*theta/sqrt(k)).
    """
    check_alpha(alpha)
    if not 1 <= L <= k - 1:
        raise ValueError(f"L must be in [1, {k - 1}]")
    return (k - L) / k * float(ndtr(ndtri(alpha) - L * theta / sqrt(k)))


def theta_star(k: int, alpha: float, tol: float = 1e-10) -> tuple:
    """Weakest shift at which the all-or-nothing rule still controls FDR strongly.

    Returns ``(theta, binding_L)``: the smallest (most negative) theta
    whose worst-case closed-form FDR over L = 1..k-1 stays at alpha, and
    the L attaining the worst case there.
    """
    check_alpha(alpha)

    def excess(theta):
        return max(closed_form_fdr(k, L, theta, alpha) for L in range(1, k)) - alpha

    lo = -0.05
    while excess(lo) > 0:
        lo /= 2.0  # should not happen: excess(0-) < 0
    hi = lo
    while excess(hi) <= 0:
        lo = hi
        hi *= 2.0
        if hi < -64:
            raise RuntimeError("no control boundary found")
    # excess(lo) <= 0 < excess(hi), hi < lo < 0
    while lo - hi > tol:
        mid = 0.5 * (lo + hi)
        if excess(mid) <= 0:
            lo = mid
        else:
            hi = mid
    theta = lo
    binding = max(range(1, k), key=lambda L: closed_form_fdr(k, L, theta, alpha))
    return theta, binding


@dataclass
class RegionSlice:
    """Decision counts over a 2-d slice of the rejection region at fixed smallest p."""

    u1: float
    axis: np.ndarray  # shared u2/u3 grid, ascending, within [u1, 1]
    counts: np.ndarray  # (n, n) ints; counts[i, j] at (u2 = axis[i], u3 = axis[j])
    policy_id: str

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# policy={self.policy_id} u1={self.u1:.6g} n={len(self.axis)}\n")
        buf.write("u2,u3,count\n")
        for i, u2 in enumerate(self.axis):
            for j, u3 in enumerate(self.axis):
                buf.write(f"{u2:.6g},{u3:.6g},{self.counts[i, j]}\n")
        return buf.getvalue()

    @property
    def max_count(self) -> int:
        return int(self.counts.max())


def region_slice(policy, u1: float, n: int = 512, policy_id: str = "") -> RegionSlice:
    """Evaluate a policy on the plane of the two larger p-values.

    The slice fixes the smallest p-value at ``u1`` and scans
    (u2, u3) over [u1, 1]^2 (both orderings, matching the display
    convention of keeping the region in the quadrant above (u1, u1)).
    """
    if not 0.0 < u1 < 1.0:
        raise ValueError("u1 must be in (0, 1)")
    if n < 16:
        raise ValueError("slice resolution must be at least 16")
    if policy.k != 3:
        raise ValueError("region slices are defined for k = 3")
    axis = np.linspace(u1, 1.0, n)
    u2, u3 = np.meshgrid(axis, axis, indexing="ij")
    U = np.column_stack([np.full(u2.size, u1), u2.ravel(), u3.ravel()])
    counts = policy.predict(U).sum(axis=1).reshape(n, n)
    return RegionSlice(u1=u1, axis=axis, counts=counts.astype(np.int8),
                       policy_id=policy_id or policy.__class__.__name__)


def misspec_sweep(policy, rho_grid, theta_vectors, n: int = 1_000_000, seed: int = 0) -> list:
    """Monte Carlo power/error table across correlation strengths and alternatives.

    Each entry of ``theta_vectors`` is a length-k vector of shifts (zeros
    mark true nulls).  Returns one row per (rho, theta vector) with the
    estimated FWER, average power over the false nulls, any-rejection
    probability, and standard errors.
    """
    rows = []
    for rho in rho_grid:
        for tv in theta_vectors:
            tv = np.asarray(tv, dtype=float)
            h = (tv != 0).astype(int)
            th = tv[tv != 0]
            summary = mc_summary(policy, h, th, rho=float(rho), n=n, seed=seed)
            row = {
                "rho": float(rho),
                "thetas": [float(v) for v in tv],
                "fwer": summary["fwer"][0],
                "fwer_se": summary["fwer"][1],
                "any_power": summary["any"][0],
                "any_power_se": summary["any"][1],
                "rejections": summary["rejections"][0],
            }
            if h.sum():
                row["avg_power"] = summary["avg_power"][0]
                row["avg_power_se"] = summary["avg_power"][1]
            rows.append(row)
    return rows

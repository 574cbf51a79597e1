"""Rejection policies: the multiplier-defined optimal rule and its estimator API.

A candidate multiplier vector ``mu`` (one nonnegative entry per error
constraint) induces residual weights

    R_i(u) = a_i(u) - sum_L mu_L * b_{L,i}(u)

on the sorted corner, and a rejection depth through nested partial sums:
depth 1 is reached when some partial sum of R starting at 1 is positive,
and depth i is reached when depth i-1 was and some partial sum starting
at i is positive.  Exactly-zero partial sums (a measure-zero boundary for
non-degenerate problems) do not reject, so a residual row that vanishes
identically never deepens the rejection; this keeps the any-rejection
objective at depth one, where its optimum lives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri
from sklearn.base import BaseEstimator

from . import coeffs
from .gaussian import alt_density_z
from .problem import ProblemSpec
from .validation import check_pvalue_matrix, check_pvalue_vector

__all__ = [
    "RejectionSet",
    "RejectionRuleMixin",
    "OmtPolicy",
    "depths_from_residuals",
    "save_policy",
    "load_policy",
]

POLICY_FORMAT = 1


@dataclass(frozen=True)
class RejectionSet:
    """Outcome of applying a policy to one p-value vector."""

    rejected: frozenset

    @property
    def count(self) -> int:
        return len(self.rejected)

    def indicator(self, k: int) -> np.ndarray:
        out = np.zeros(k, dtype=bool)
        for i in self.rejected:
            out[i] = True
        return out


def depths_from_residuals(R: np.ndarray) -> np.ndarray:
    """Rejection depth per row from residual rows, by nested partial sums.

    Parameters
    ----------
    R : ndarray of shape (n, k)

    Returns
    -------
    ndarray of shape (n,), dtype int
        Largest depth i such that every gate 1..i has a strictly positive
        partial sum max(sum_{j=g}^{l} R_j, l = g..k); 0 if none.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, k = R.shape
    csum = np.cumsum(R, axis=1)
    # suffix running maximum of the prefix sums: SM[:, i] = max_{l >= i} csum[:, l]
    smax = np.maximum.accumulate(csum[:, ::-1], axis=1)[:, ::-1]
    depth = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    for i in range(k):
        base = csum[:, i - 1] if i > 0 else 0.0
        alive = alive & (smax[:, i] - base > 0.0)
        depth += alive
    return depth


class RejectionRuleMixin:
    """Shared prediction surface for every rejection policy.

    Concrete policies implement ``rejection_depths`` on sorted rows; the
    mixin turns depths into per-hypothesis decisions in original order.
    """

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict(self, U: np.ndarray) -> np.ndarray:
        """Boolean rejection mask of shape (n, k) for p-value rows ``U``."""
        U = check_pvalue_matrix(U, self.k)
        order = np.argsort(U, axis=1, kind="stable")
        u_sorted = np.take_along_axis(U, order, axis=1)
        depth = self.rejection_depths(u_sorted)
        ranks = np.empty_like(order)
        np.put_along_axis(ranks, order, np.arange(self.k)[None, :].repeat(len(U), 0), axis=1)
        return ranks < depth[:, None]

    def decide_full(self, u) -> RejectionSet:
        """Apply the policy to one (unsorted) p-value vector."""
        u = check_pvalue_vector(u, self.k)
        mask = self.predict(u[None, :])[0]
        return RejectionSet(frozenset(np.flatnonzero(mask).tolist()))

    def decide(self, u_sorted) -> int:
        """Rejection depth on one sorted p-value vector."""
        u_sorted = check_pvalue_vector(u_sorted, self.k, sorted_input=True)
        return int(self.rejection_depths(u_sorted[None, :])[0])


class OmtPolicy(RejectionRuleMixin, BaseEstimator):
    """Optimal multiple-testing policy for exchangeable normal means.

    The policy is parameterized by the problem definition; ``fit`` runs the
    multiplier search and stores the solved multipliers in ``mu_`` together
    with the solve report in ``report_``.  ``predict`` maps rows of K
    p-values to boolean rejection masks.

    Parameters mirror :class:`~omt.problem.ProblemSpec`; ``quad`` and
    ``search`` take :class:`~omt.quadrature.QuadConfig` and
    :class:`~omt.solver.SearchConfig` overrides.
    """

    def __init__(
        self,
        k: int = 3,
        alpha: float = 0.05,
        error: str = "fwer",
        power: str = "avg",
        L: int | None = None,
        theta_obj: float = -1.0,
        theta_con: float | None = None,
        quad=None,
        search=None,
    ):
        self.k = k
        self.alpha = alpha
        self.error = error
        self.power = power
        self.L = L
        self.theta_obj = theta_obj
        self.theta_con = theta_con
        self.quad = quad
        self.search = search

    # -- construction ---------------------------------------------------------

    @property
    def spec(self) -> ProblemSpec:
        return ProblemSpec(
            k=self.k,
            alpha=self.alpha,
            error=self.error,
            power=self.power,
            L=self.L,
            theta_obj=self.theta_obj,
            theta_con=self.theta_con,
        )

    def fit(self, X=None, y=None):
        """Solve for the optimal multipliers.  ``X`` and ``y`` are ignored."""
        from .solver import solve  # local import: solver depends on this module

        report = solve(self.spec, quad=self.quad, search=self.search)
        self.mu_ = report.mu_star.copy()
        self.report_ = report
        self.provenance_ = "solved"
        return self

    @classmethod
    def from_multipliers(cls, spec: ProblemSpec, mu, provenance: str = "loaded", quad=None) -> "OmtPolicy":
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (spec.k,):
            raise ValueError(f"expected {spec.k} multipliers, got shape {mu.shape}")
        if np.any(mu < 0):
            raise ValueError("multipliers must be nonnegative")
        pol = cls(
            k=spec.k,
            alpha=spec.alpha,
            error=spec.error.value,
            power=spec.power.value,
            L=spec.L,
            theta_obj=spec.theta_obj,
            theta_con=spec.theta_con,
            quad=quad,
        )
        pol.mu_ = mu.copy()
        pol.report_ = None
        pol.provenance_ = provenance
        return pol

    # -- rule evaluation ------------------------------------------------------

    def _check_fitted(self):
        if not hasattr(self, "mu_"):
            raise RuntimeError("policy has no multipliers; call fit() or from_multipliers()")

    def residual_rows(self, z_sorted: np.ndarray) -> np.ndarray:
        """Residuals R_i at sorted z-coordinates, shape (n, k)."""
        self._check_fitted()
        spec = self.spec
        G_obj = alt_density_z(z_sorted, spec.theta_obj)
        A = coeffs.objective_fields(spec.power, spec.objective_L, spec.k, G_obj)
        if spec.theta_constraint == spec.theta_obj:
            G_con = G_obj
        else:
            G_con = alt_density_z(z_sorted, spec.theta_constraint)
        B = coeffs.constraint_fields(spec.error, spec.k, G_con)
        return A - np.einsum("nlk,l->nk", B, self.mu_)

    def residuals(self, u_sorted) -> np.ndarray:
        """Residuals R_1..R_K at one sorted p-value vector."""
        u_sorted = check_pvalue_vector(u_sorted, self.k, sorted_input=True)
        with np.errstate(divide="ignore"):
            z = ndtri(u_sorted)
        return self.residual_rows(z[None, :])[0]

    def depths_from_z(self, z_sorted: np.ndarray) -> np.ndarray:
        """Rejection depths from sorted z-coordinates (the quadrature hot path)."""
        return depths_from_residuals(self.residual_rows(z_sorted))

    def rejection_depths(self, u_sorted: np.ndarray) -> np.ndarray:
        u_sorted = np.atleast_2d(np.asarray(u_sorted, dtype=float))
        with np.errstate(divide="ignore"):
            z = ndtri(u_sorted)
        return self.depths_from_z(z)

    def inner_roots(self, z_outer, lo, hi) -> np.ndarray:
        """Depth breakpoints along the innermost sorted coordinate (z-space)."""
        from .integrals import omt_inner_roots

        self._check_fitted()
        return omt_inner_roots(self.spec, self.mu_, z_outer, lo, hi)

    # -- persistence ----------------------------------------------------------

    def to_dict(self) -> dict:
        self._check_fitted()
        solver_meta = {}
        if getattr(self, "report_", None) is not None:
            solver_meta = {
                "tol": self.report_.search.solve_tol,
                "grid": self.report_.quad.grid_n,
            }
        return {
            "format": POLICY_FORMAT,
            "spec": self.spec.to_dict(),
            "mu": [float(v) for v in self.mu_],
            "solver": solver_meta,
            "provenance": getattr(self, "provenance_", "loaded"),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OmtPolicy":
        if d.get("format") != POLICY_FORMAT:
            raise ValueError(f"unsupported policy format: {d.get('format')!r}")
        spec = ProblemSpec.from_dict(d["spec"])
        provenance = d.get("provenance", "loaded")
        return cls.from_multipliers(spec, np.asarray(d["mu"], dtype=float), provenance=provenance)


def save_policy(policy: OmtPolicy, path) -> None:
    Path(path).write_text(json.dumps(policy.to_dict(), indent=2) + "\n")


def load_policy(path) -> OmtPolicy:
    return OmtPolicy.from_dict(json.loads(Path(path).read_text()))

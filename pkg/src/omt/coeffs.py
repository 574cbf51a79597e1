"""Pointwise coefficients of the linear power/error functionals on the sorted region.

For a symmetric, weakly monotone rule on the sorted corner, every power
objective and every FWER/FDR constraint is a linear functional

    integral over Q of  sum_i  c_i(u) * D_i(u)  du,

where c_i collects products of per-coordinate alternative densities over
subsets of coordinates.  This module evaluates the objective weights
``a_i(u)`` and the constraint weights ``b_{L,i}(u)`` for L = 0..K-1, both
pointwise and vectorized over arrays of evaluation points, by explicit
subset enumeration (the reference path) and by a dynamic-programming path
over elementary symmetric polynomials (the fast path; identical output).

Conventions: hypothesis indices are 0-based, rejection depths are 1-based
counts, and the combinatorial prefactor L!(K-L)! of the exchangeability
reduction is kept in every coefficient.  The false-discovery increment
``r`` at depth k uses the convention 0/0 = 0, so r at depth 1 is simply
the indicator that the smallest p-value belongs to a true null.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np

from .gaussian import alt_density
from .problem import ErrorMeasure, PowerKind, ProblemSpec

__all__ = [
    "r_coefficient",
    "objective_coeffs",
    "fwer_coeffs",
    "fdr_coeffs",
    "dp_coeffs",
    "objective_fields",
    "constraint_fields",
    "constraint_fields_dp",
    "objective_support",
    "constraint_support",
]


def r_coefficient(depth: int, false_nulls, k: int) -> Fraction:
    """Change in false-discovery proportion when deepening to ``depth`` rejections.

    Parameters
    ----------
    depth : int
        Rejection depth, 1-based, in [1, k].
    false_nulls : iterable of int
        0-based positions (in the sorted order) of the false nulls.
    k : int
        Number of hypotheses.

    Returns
    -------
    Fraction
        FDP(depth) - FDP(depth - 1) as an exact rational, with FDP(0) = 0.
    """
    if not 1 <= depth <= k:
        raise ValueError(f"depth must be in [1, {k}]")
    fn = frozenset(false_nulls)
    if any(j < 0 or j >= k for j in fn):
        raise ValueError("false-null index out of range")
    true_in = sum(1 for j in range(depth) if j not in fn)
    if depth == 1:
        return Fraction(true_in, 1)
    true_in_prev = true_in - (1 if depth - 1 not in fn else 0)
    return Fraction(true_in, depth) - Fraction(true_in_prev, depth - 1)


@lru_cache(maxsize=None)
def _subsets(k: int, L: int) -> tuple:
    return tuple(itertools.combinations(range(k), L))


@lru_cache(maxsize=None)
def _r_table(k: int, L: int) -> tuple:
    """r values per (subset of C(k, L), depth), as exact Fractions."""
    return tuple(
        tuple(r_coefficient(d, sub, k) for d in range(1, k + 1))
        for sub in _subsets(k, L)
    )


@lru_cache(maxsize=None)
def _imin_complement(k: int, L: int) -> tuple:
    """Smallest index outside each subset of C(k, L) (the first true null)."""
    out = []
    for sub in _subsets(k, L):
        s = set(sub)
        out.append(min(j for j in range(k) if j not in s))
    return tuple(out)


def _as_density_matrix(u, theta, k: int) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != k:
        raise ValueError(f"expected {k} coordinates, got {u.shape[-1]}")
    if np.any(np.diff(u, axis=-1) < 0):
        raise ValueError("coordinates must be sorted ascending")
    return np.asarray(alt_density(u, theta), dtype=float).reshape(-1, k)


def _subset_products(G: np.ndarray, subsets) -> list:
    """Product of selected density columns for each subset; empty set gives 1."""
    n = G.shape[0]
    out = []
    for sub in subsets:
        if len(sub) == 0:
            out.append(np.ones(n))
        else:
            p = G[:, sub[0]].copy()
            for j in sub[1:]:
                p *= G[:, j]
            out.append(p)
    return out


def objective_fields(power: PowerKind, L: int, k: int, G_obj: np.ndarray) -> np.ndarray:
    """Objective weights a_i at each evaluation point.

    Parameters
    ----------
    power : PowerKind
        Average power (over ``L`` false nulls) or any-rejection power.
    L : int
        Number of false nulls the average-power objective assumes.
    k : int
    G_obj : ndarray of shape (n, k)
        Objective-signal density values per sorted coordinate.

    Returns
    -------
    ndarray of shape (n, k)
        With the full combinatorial prefactor, so that the integral
        of the weighted rule over the sorted region equals the power.
    """
    n = G_obj.shape[0]
    A = np.zeros((n, k))
    if power is PowerKind.ANY:
        A[:, 0] = factorial(k) * np.prod(G_obj, axis=1)
        return A
    scale = factorial(L) * factorial(k - L) / L
    for sub, prod in zip(_subsets(k, L), _subset_products(G_obj, _subsets(k, L))):
        for j in sub:
            A[:, j] += scale * prod
    return A


def constraint_fields(error: ErrorMeasure, k: int, G_con: np.ndarray) -> np.ndarray:
    """Constraint weights b_{L,i} at each evaluation point (enumeration path).

    Returns
    -------
    ndarray of shape (n, k, k)
        Indexed ``[point, L, depth - 1]``.
    """
    n = G_con.shape[0]
    B = np.zeros((n, k, k))
    for L in range(k):
        scale = float(factorial(L) * factorial(k - L))
        subs = _subsets(k, L)
        prods = _subset_products(G_con, subs)
        if error is ErrorMeasure.FWER:
            for imin, prod in zip(_imin_complement(k, L), prods):
                B[:, L, imin] += scale * prod
        else:
            rtab = _r_table(k, L)
            for rrow, prod in zip(rtab, prods):
                for d in range(k):
                    r = rrow[d]
                    if r != 0:
                        B[:, L, d] += (scale * float(r)) * prod
    return B


def _elem_sym_prefix(G: np.ndarray) -> list:
    """Tables e_j(G[:, :m]) for m = 0..k, j = 0..m (each an (n,) array)."""
    n, k = G.shape
    tables = [[np.ones(n)]]
    for m in range(1, k + 1):
        prev = tables[m - 1]
        x = G[:, m - 1]
        row = [np.ones(n)]
        for j in range(1, m + 1):
            val = x * prev[j - 1]
            if j < m:
                val = val + prev[j]
            row.append(val)
        tables.append(row)
    return tables


def constraint_fields_dp(error: ErrorMeasure, k: int, G_con: np.ndarray) -> np.ndarray:
    """Constraint weights via dynamic programming over symmetric polynomials.

    Avoids the C(k, L) subset enumeration; output matches
    :func:`constraint_fields` to floating-point roundoff.
    """
    n = G_con.shape[0]
    pre = _elem_sym_prefix(G_con)
    suf = _elem_sym_prefix(G_con[:, ::-1])

    def e_prefix(m, j):
        # e_j of the first m coordinates
        if j < 0 or j > m:
            return None
        return pre[m][j]

    def e_suffix(m, j):
        # e_j of the last m coordinates
        if j < 0 or j > m:
            return None
        return suf[m][j]

    B = np.zeros((n, k, k))
    for L in range(k):
        scale = float(factorial(L) * factorial(k - L))
        for depth in range(1, k + 1):
            i = depth - 1  # sorted position of the deepest rejection
            acc = np.zeros(n)
            if error is ErrorMeasure.FWER:
                # first true null exactly at position i: all of 0..i-1 false,
                # position i true, L - i false among the k - i - 1 above
                head = e_prefix(i, i)
                tail = e_suffix(k - i - 1, L - i)
                if head is not None and tail is not None:
                    acc = head * tail
            else:
                for a in range(0, min(i, L) + 1):
                    head = e_prefix(i, a)
                    if head is None:
                        continue
                    for s in (0, 1):
                        rest = L - a - s
                        tail = e_suffix(k - i - 1, rest)
                        if tail is None:
                            continue
                        r = _r_from_counts(depth, a, s)
                        if r == 0:
                            continue
                        term = head * tail * float(r)
                        if s:
                            term = term * G_con[:, i]
                        acc = acc + term
            B[:, L, depth - 1] = scale * acc
    return B


def _r_from_counts(depth: int, a: int, s: int) -> Fraction:
    """r at ``depth`` for a subset with ``a`` false nulls below and ``s`` at the depth."""
    true_in = depth - a - s
    if depth == 1:
        return Fraction(true_in, 1)
    return Fraction(true_in, depth) - Fraction(depth - 1 - a, depth - 1)


def objective_support(power: PowerKind, L: int, k: int) -> np.ndarray:
    """Which a_i are not identically zero as functions."""
    if power is PowerKind.ANY:
        return np.arange(k) == 0
    return np.ones(k, dtype=bool)


def constraint_support(error: ErrorMeasure, k: int) -> np.ndarray:
    """Which b_{L,i} are not identically zero as functions; shape (k, k)."""
    out = np.zeros((k, k), dtype=bool)
    for L in range(k):
        for depth in range(1, k + 1):
            if error is ErrorMeasure.FWER:
                out[L, depth - 1] = depth - 1 <= L
            else:
                rtab = _r_table(k, L)
                out[L, depth - 1] = any(row[depth - 1] != 0 for row in rtab)
    return out


# -- scalar wrappers ----------------------------------------------------------


def objective_coeffs(spec: ProblemSpec, u) -> np.ndarray:
    """Objective weights a_1..a_K at one sorted point."""
    G = _as_density_matrix(u, spec.theta_obj, spec.k)
    return objective_fields(spec.power, spec.objective_L, spec.k, G)[0]


def fwer_coeffs(spec: ProblemSpec, L: int, u) -> np.ndarray:
    """Familywise-error constraint weights b_{L,1}..b_{L,K} at one sorted point."""
    if not 0 <= L < spec.k:
        raise ValueError(f"L must be in [0, {spec.k - 1}]")
    G = _as_density_matrix(u, spec.theta_constraint, spec.k)
    return constraint_fields(ErrorMeasure.FWER, spec.k, G)[0, L]


def fdr_coeffs(spec: ProblemSpec, L: int, u) -> np.ndarray:
    """False-discovery-rate constraint weights at one sorted point."""
    if not 0 <= L < spec.k:
        raise ValueError(f"L must be in [0, {spec.k - 1}]")
    G = _as_density_matrix(u, spec.theta_constraint, spec.k)
    return constraint_fields(ErrorMeasure.FDR, spec.k, G)[0, L]


def dp_coeffs(spec: ProblemSpec, L: int, u) -> np.ndarray:
    """Constraint weights by the dynamic-programming path (same output)."""
    if not 0 <= L < spec.k:
        raise ValueError(f"L must be in [0, {spec.k - 1}]")
    G = _as_density_matrix(u, spec.theta_constraint, spec.k)
    return constraint_fields_dp(spec.error, spec.k, G)[0, L]

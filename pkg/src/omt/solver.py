"""Multiplier search: primal feasibility plus complementary slackness, certified.

The search walks candidate active sets in order of size (at most 2^K for
K <= 3), solving ``constraint_L = alpha`` for each candidate's multipliers
by damped coordinate root finding, and accepts the first fixed point
whose inactive constraints are all slack.  A derivative-free simplex
fallback with multistarts covers the rare case where coordinate iteration
cycles (possible under the sign-indefinite FDR weights).  Optimality is
certified after the fact through the explicit strong-duality identity:
the dual value alpha * sum(mu) + integral(lambda_1) must match the primal
power up to quadrature accuracy, with the pointwise dual slack lambda_1
nonnegative.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import coeffs
from .integrals import PolicyEvaluator
from .problem import MAX_SOLVE_K, ProblemSpec
from .quadrature import IntegralResult, QuadConfig

__all__ = [
    "SearchConfig",
    "SolveReport",
    "DualCertificate",
    "SolverError",
    "solve",
    "constraint_value",
    "duality_certificate",
    "integrality_audit",
]


class SolverError(RuntimeError):
    """Search failed to converge; carries the best iterate found."""

    def __init__(self, message, mu=None, residual=None):
        super().__init__(message)
        self.mu = mu
        self.residual = residual


@dataclass(frozen=True)
class SearchConfig:
    """Tolerances and search controls for the multiplier solve.

    ``feas_tol`` bounds constraint violation and active-constraint slack,
    ``solve_tol`` bounds the complementary-slackness residual, ``gap_tol``
    the certified duality gap; all three match the three-decimal accuracy
    of the published comparisons.
    """

    feas_tol: float = 5e-4
    solve_tol: float = 5e-4
    gap_tol: float = 2e-3
    mu_zero_tol: float = 1e-9
    max_sweeps: int = 8
    bracket_expansions: int = 3
    fallback_starts: int = 10
    seed: int = 0
    mu_init: tuple | None = None


@dataclass
class SolveReport:
    """Solved multipliers with the evidence backing them."""

    spec: ProblemSpec
    mu_star: np.ndarray
    constraint_values: np.ndarray
    active_set: tuple
    objective: float
    lambda1_integral: float
    dual_objective: float
    duality_gap: float
    residual_norm: float
    converged: bool
    n_evaluations: int
    quad: QuadConfig
    search: SearchConfig
    constraint_error_est: np.ndarray | None = None
    objective_error_est: float | None = None

    def to_dict(self) -> dict:
        return {
            "format": 1,
            "spec": self.spec.to_dict(),
            "mu_star": [float(v) for v in self.mu_star],
            "constraint_values": [float(v) for v in self.constraint_values],
            "active_set": list(self.active_set),
            "objective": self.objective,
            "lambda1_integral": self.lambda1_integral,
            "dual_objective": self.dual_objective,
            "duality_gap": self.duality_gap,
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "n_evaluations": self.n_evaluations,
            "quad": {
                "scheme": self.quad.scheme,
                "grid_n": self.quad.grid_n,
                "z_max": self.quad.z_max,
                "target_tol": self.quad.target_tol,
            },
            "tolerances": {
                "feas_tol": self.search.feas_tol,
                "solve_tol": self.search.solve_tol,
                "gap_tol": self.search.gap_tol,
                "mu_zero_tol": self.search.mu_zero_tol,
            },
            "constraint_error_est": None
            if self.constraint_error_est is None
            else [float(v) for v in self.constraint_error_est],
            "objective_error_est": self.objective_error_est,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class DualCertificate:
    """Strong-duality evidence for one solved instance."""

    lambda1_integral: float
    dual_objective: float
    primal_objective: float
    gap: float
    min_lambda1: float
    negative_fraction: float
    certified: bool


def _residual_norm(mu, cons, alpha) -> float:
    viol = np.maximum(cons - alpha, 0.0)
    slack = mu * np.maximum(alpha - cons, 0.0)
    return float(np.max(viol + slack))


def _bracket_scale(ev: PolicyEvaluator, L: int) -> float:
    A0, Ay, B0, Bx = ev.split
    a_scale = max(np.abs(A0).max(), np.abs(Ay).max(), 1e-12)
    b_vals = np.abs(np.concatenate([B0[:, L, :].ravel(), Bx[:, L, :].ravel()]))
    b_vals = b_vals[b_vals > 0]
    b_scale = np.median(b_vals) if len(b_vals) else 1.0
    return max(a_scale / b_scale, 1e-6)


def _coordinate_root(ev, mu, L, alpha, search, guess=None):
    """Solve constraint_L(mu_L) = alpha in mu_L >= 0, holding the rest fixed."""
    from scipy.optimize import brentq

    def f(x):
        trial = mu.copy()
        trial[L] = x
        return ev.evaluate(trial)[1][L] - alpha

    f0 = f(0.0)
    if f0 <= 0.0:
        return 0.0, False  # constraint already slack: cannot be active here
    cap = _bracket_scale(ev, L) * 10.0 ** search.bracket_expansions
    if guess:
        lo, hi = guess / 4.0, guess * 4.0
        flo, fhi = f(lo), f(hi)
        if flo > 0.0 > fhi:
            root = brentq(f, lo, hi, xtol=1e-13 * max(1.0, hi), rtol=1e-14, maxiter=200)
            return float(root), True
    # geometric climb: cheap tight bracket below the sup-a/inf-b cap
    lo, hi = 0.0, 1.0
    fhi = f(hi)
    while fhi > 0.0 and hi < cap:
        lo, hi = hi, hi * 10.0
        fhi = f(hi)
    if fhi > 0.0:
        raise SolverError(f"could not bracket constraint {L} (still violated at mu={hi:g})")
    root = brentq(f, lo, hi, xtol=1e-13 * max(1.0, hi), rtol=1e-14, maxiter=200)
    return float(root), True


def _newton_polish(ev, S, mu, alpha, search, max_iter=15):
    """Finite-difference Newton on the active subsystem c_S(mu_S) = alpha."""
    S = list(S)
    mu = mu.copy()
    _, cons = ev.evaluate(mu)
    err = np.abs(cons[S] - alpha).max()
    for _ in range(max_iter):
        if err <= 0.4 * search.solve_tol:
            return mu
        J = np.empty((len(S), len(S)))
        for j, L in enumerate(S):
            h = max(1e-5 * mu[L], 1e-7 * _bracket_scale(ev, L))
            trial = mu.copy()
            trial[L] += h
            _, cons_h = ev.evaluate(trial)
            J[:, j] = (cons_h[S] - cons[S]) / h
        try:
            step = np.linalg.solve(J, alpha - cons[S])
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        improved = False
        while lam >= 1.0 / 64:
            trial = mu.copy()
            trial[S] = np.clip(trial[S] + lam * step, 0.0, None)
            _, cons_t = ev.evaluate(trial)
            err_t = np.abs(cons_t[S] - alpha).max()
            if err_t < err:
                mu, cons, err = trial, cons_t, err_t
                improved = True
                break
            lam /= 2.0
        if not improved:
            return None
    return mu if err <= 0.4 * search.solve_tol else None


def _try_active_set(ev, S, alpha, search, mu0=None, order=None):
    """Coordinate root finding to a joint fixed point over one candidate set.

    One damped Gauss-Seidel pass brings each active multiplier to its
    one-dimensional root; a Newton polish then solves the coupled system,
    with further damped sweeps as the fallback when Newton stalls.
    ``order`` picks the coordinate update order (branch selection matters
    when constraint responses are strongly coupled).
    """
    k = ev.spec.k
    sweep_order = list(order if order is not None else S)
    mu = np.zeros(k)
    if mu0 is not None:
        mu = np.asarray(mu0, dtype=float).copy()
        mu[[L for L in range(k) if L not in S]] = 0.0
    if not S:
        obj, cons = ev.evaluate(mu)
        return mu, obj, cons
    prev_gap = np.inf
    prev_mu = mu.copy()
    stalls = 0
    guesses = {L: (mu[L] if mu[L] > 0 else None) for L in S}
    for sweep in range(search.max_sweeps):
        for L in sweep_order:
            root, _ = _coordinate_root(ev, mu, L, alpha, search, guess=guesses[L])
            mu[L] = root
            guesses[L] = root if root > 0 else None
        obj, cons = ev.evaluate(mu)
        gap = max(abs(cons[L] - alpha) for L in S if mu[L] > 0) if any(mu[L] > 0 for L in S) else 0.0
        if gap <= 0.5 * search.solve_tol:
            return mu, obj, cons
        if len(S) > 1 and sweep in (0, 3):
            polished = _newton_polish(ev, S, mu, alpha, search)
            if polished is not None:
                obj, cons = ev.evaluate(polished)
                return polished, obj, cons
        if gap > 0.9 * prev_gap:
            stalls += 1
            if stalls >= 2:
                break  # no joint fixed point in reach for this candidate
            mu = 0.5 * (mu + prev_mu)
        prev_gap = min(gap, prev_gap)
        prev_mu = mu.copy()
    obj, cons = ev.evaluate(mu)
    return mu, obj, cons


def _accepts(mu, cons, alpha, search) -> bool:
    if np.any(cons > alpha + search.feas_tol):
        return False
    active = mu > search.mu_zero_tol
    if np.any(np.abs(cons[active] - alpha) > search.feas_tol):
        return False
    return _residual_norm(mu, cons, alpha) <= search.solve_tol


def _fallback_simplex(ev, alpha, search):
    from scipy.optimize import minimize

    k = ev.spec.k
    rng = np.random.default_rng(search.seed)
    scales = np.array([_bracket_scale(ev, L) for L in range(k)])
    best = None
    for _ in range(search.fallback_starts):
        x0 = scales * rng.uniform(0.0, 1.0, size=k)

        def obj_fn(x):
            m = np.clip(x, 0.0, None)
            _, cons = ev.evaluate(m)
            return _residual_norm(m, cons, alpha)

        res = minimize(obj_fn, x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-10, "maxiter": 400})
        mu = np.clip(res.x, 0.0, None)
        o, cons = ev.evaluate(mu)
        r = _residual_norm(mu, cons, alpha)
        if best is None or r < best[0]:
            best = (r, mu, o, cons)
        if r <= search.solve_tol and _accepts(mu, cons, alpha, search):
            return mu, o, cons
    raise SolverError("multiplier search did not converge", mu=best[1], residual=best[0])


def _candidate_sets(k: int, first=None):
    """All active-set candidates by size, optionally led by a warm guess."""
    sets = [S for size in range(k + 1) for S in itertools.combinations(range(k), size)]
    if first is not None:
        first = tuple(sorted(int(v) for v in first))
        if first in sets:
            sets.remove(first)
            sets.insert(0, first)
    return sets


def solve(spec: ProblemSpec, quad: QuadConfig | None = None, search: SearchConfig | None = None,
          evaluator: PolicyEvaluator | None = None, active_set_hint=None) -> SolveReport:
    """Find the optimal multipliers for one problem instance.

    Walks candidate active sets by size, root-finding each active
    constraint to the level, and accepts the first candidate satisfying
    primal feasibility and complementary slackness at the configured
    tolerances; falls back to simplex multistarts otherwise.
    ``evaluator`` allows reusing the bound coefficient fields across
    repeated solves of the same instance (multistarts);
    ``active_set_hint`` promotes a candidate to the front of the walk
    (acceptance checks are unchanged, so a wrong hint only costs time).

    Raises
    ------
    SolverError
        If no candidate reaches the tolerances.
    """
    if spec.k > MAX_SOLVE_K:
        raise ValueError(f"deterministic solving supports k <= {MAX_SOLVE_K}")
    quad = quad or QuadConfig()
    search = search or SearchConfig()
    ev = evaluator if evaluator is not None else PolicyEvaluator(spec, quad)
    alpha = spec.alpha
    mu0 = None if search.mu_init is None else np.asarray(search.mu_init, dtype=float)

    solution = None
    for S in _candidate_sets(spec.k, active_set_hint):
        orders = [S] if len(S) < 2 else [tuple(S[j:] + S[:j]) for j in range(len(S))]
        for order in orders:
            try:
                mu, obj, cons = _try_active_set(ev, S, alpha, search, mu0, order=order)
            except SolverError:
                continue
            if _accepts(mu, cons, alpha, search):
                solution = (mu, obj, cons)
                break
        if solution:
            break
    if solution is None:
        solution = _fallback_simplex(ev, alpha, search)

    mu, obj, cons = solution
    obj, cons, lam = ev.evaluate(mu, want_lambda=True)
    dual = alpha * float(mu.sum()) + lam
    active = tuple(int(L) for L in range(spec.k) if mu[L] > search.mu_zero_tol)

    coarse = PolicyEvaluator(spec, quad.coarse())
    obj_c, cons_c = coarse.evaluate(mu)

    return SolveReport(
        spec=spec,
        mu_star=mu,
        constraint_values=cons,
        active_set=active,
        objective=obj,
        lambda1_integral=lam,
        dual_objective=dual,
        duality_gap=abs(dual - obj),
        residual_norm=_residual_norm(mu, cons, alpha),
        converged=True,
        n_evaluations=ev.n_evaluations,
        quad=quad,
        search=search,
        constraint_error_est=np.abs(cons - cons_c),
        objective_error_est=abs(obj - obj_c),
    )


def constraint_value(spec: ProblemSpec, mu, L: int, quad: QuadConfig | None = None) -> IntegralResult:
    """Error value of constraint ``L`` for the rule induced by ``mu``."""
    if not 0 <= L < spec.k:
        raise ValueError(f"L must be in [0, {spec.k - 1}]")
    quad = quad or QuadConfig()
    ev = PolicyEvaluator(spec, quad)
    _, cons = ev.evaluate(mu)
    coarse = PolicyEvaluator(spec, quad.coarse())
    _, cons_c = coarse.evaluate(mu)
    err = abs(cons[L] - cons_c[L])
    return IntegralResult(float(cons[L]), float(err), "TensorGrid", ev.rule.n_lines, err <= quad.target_tol)


def duality_certificate(report: SolveReport, quad: QuadConfig | None = None,
                        cert_tol: float | None = None) -> DualCertificate:
    """Recompute the strong-duality identity for a solve and check dual feasibility.

    The pointwise dual slack is evaluated independently on the grid; the
    certificate fails if it dips below ``-cert_tol`` on more than 0.01%
    of evaluation cells, or if the recomputed gap exceeds ``gap_tol``.
    """
    quad = quad or report.quad
    ev = PolicyEvaluator(report.spec, quad)
    mu = report.mu_star
    obj, cons, lam = ev.evaluate(mu, want_lambda=True)
    vals = ev.lambda1_segment_values(mu)
    if cert_tol is None:
        cert_tol = 1e-8 * max(float(np.abs(vals).max()), 1.0)
    neg = float(np.mean(vals < -cert_tol))
    dual = report.spec.alpha * float(np.sum(mu)) + lam
    gap = abs(dual - obj)
    certified = neg <= 1e-4 and gap <= report.search.gap_tol
    return DualCertificate(
        lambda1_integral=lam,
        dual_objective=dual,
        primal_objective=obj,
        gap=gap,
        min_lambda1=float(vals.min()),
        negative_fraction=neg,
        certified=certified,
    )


def integrality_audit(policy, n_samples: int = 1_000_000, seed: int = 0, tol: float = 1e-10) -> float:
    """Fraction of random points whose decision rides on a near-zero partial sum.

    Gates whose residual components are identically zero as functions
    (possible when the any-rejection objective leaves inactive rows) are
    skipped: their exact zeros are structural, not near-degeneracies.
    A nonzero fraction signals a near-redundant density family, under
    which the rule stops being almost-everywhere integral.
    """
    spec = policy.spec
    k = spec.k
    mu = policy.mu_
    a_sup = coeffs.objective_support(spec.power, spec.objective_L, k)
    b_sup = coeffs.constraint_support(spec.error, k)
    comp = a_sup.copy()
    for L in range(k):
        if mu[L] > 1e-12:
            comp |= b_sup[L]
    gate_relevant = np.array([comp[i:].any() for i in range(k)])

    rng = np.random.default_rng(seed)
    flagged = 0
    done = 0
    batch = 200_000
    while done < n_samples:
        m = min(batch, n_samples - done)
        u = np.sort(rng.random((m, k)), axis=1)
        z = ndtri(u)
        R = policy.residual_rows(z)
        csum = np.cumsum(R, axis=1)
        smax = np.maximum.accumulate(csum[:, ::-1], axis=1)[:, ::-1]
        alive = np.ones(m, dtype=bool)
        bad = np.zeros(m, dtype=bool)
        for i in range(k):
            base = csum[:, i - 1] if i > 0 else 0.0
            gate = smax[:, i] - base
            if gate_relevant[i]:
                bad |= alive & (np.abs(gate) <= tol)
            alive = alive & (gate > 0.0)
        flagged += int(bad.sum())
        done += m
    return flagged / n_samples

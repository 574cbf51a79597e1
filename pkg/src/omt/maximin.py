"""Complex alternatives: two-signal solves, the least-favorable constraint
signal, and grid-certified maximin policies.

The pipeline solves the two-signal problem (objective at theta_0,
constraints at theta) across a grid of candidate constraint signals,
locates the theta with minimal objective power (refined by golden
section), and then certifies the winner two ways: error control at every
configuration over a sweep of constraint-signal vectors, and power
dominance over the weaker-signal region.  The certificate names its
grids; it asserts nothing between grid points.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace

import numpy as np
from sklearn.base import BaseEstimator

from .evaluate import power
from .integrals import required_z_max, segment_table
from .policy import OmtPolicy, RejectionRuleMixin
from .problem import ProblemSpec
from .quadrature import QuadConfig
from .solver import SearchConfig, SolveReport, SolverError, solve

__all__ = [
    "MaximinSpec",
    "MaximinReport",
    "MaximinPolicy",
    "solve_two_theta",
    "find_theta_A",
    "verify_control",
    "verify_dominance",
    "solve_maximin",
]

CONTROL_LATTICE = (-3.0, -2.0, -1.0, -0.5, -0.25)


def _log_grid(lo: float, hi: float, num: int) -> tuple:
    """Log-spaced negative shifts from lo to hi (both < 0), ascending in value."""
    mags = np.geomspace(-lo, -hi, num)
    return tuple(-m for m in mags)


@dataclass(frozen=True)
class MaximinSpec:
    """Search and verification grids around a base problem.

    ``base.theta_obj`` is the objective signal theta_0; its constraint
    signal is replaced during the search.  Defaults: a 9-point candidate
    grid covering [4 theta_0, theta_0 / 8]; a 25-point equal-signal
    control sweep over [-8, -0.05] plus an unequal lattice per
    configuration size; a 25-point dominance sweep over [-8, theta_0]
    plus unequal spot vectors at multiples of theta_0.
    """

    base: ProblemSpec
    theta_grid: tuple = ()
    control_equal_grid: tuple = ()
    control_lattice: tuple = CONTROL_LATTICE
    dominance_equal_grid: tuple = ()
    dominance_multipliers: tuple = (1.0, 1.5, 2.0, 3.0, 4.0)
    max_spot_vectors: int = 20
    refine_width: float = 0.01

    def __post_init__(self):
        t0 = self.base.theta_obj
        if not self.theta_grid:
            object.__setattr__(self, "theta_grid", _log_grid(4.0 * t0, t0 / 8.0, 9))
        if not self.control_equal_grid:
            object.__setattr__(self, "control_equal_grid", _log_grid(-8.0, -0.05, 25))
        if not self.dominance_equal_grid:
            object.__setattr__(self, "dominance_equal_grid", _log_grid(4.0 * t0, t0, 25))
        if any(t >= 0 for t in self.theta_grid):
            raise ValueError("candidate constraint signals must be negative")

    @property
    def theta0(self) -> float:
        return self.base.theta_obj

    def control_vectors(self, L: int) -> list:
        """Unequal-component shift vectors for configurations with L false nulls."""
        if L < 2:
            return [(t,) for t in self.control_lattice]
        vecs = [v for v in itertools.product(self.control_lattice, repeat=L) if len(set(v)) > 1]
        return vecs[: self.max_spot_vectors]

    def dominance_vectors(self) -> list:
        """Unequal spot vectors inside the dominance region (components <= theta_0)."""
        vals = [m * self.theta0 for m in self.dominance_multipliers]
        vecs = [v for v in itertools.product(vals, repeat=self.base.k) if len(set(v)) > 1]
        return vecs[: self.max_spot_vectors]


@dataclass
class MaximinReport:
    """Outcome of the maximin pipeline: the chosen signal and its evidence.

    The certificate is grid-based: ``grids`` names every signal value the
    two verification sweeps actually visited, and ``certified`` asserts
    nothing in between.
    """

    spec: ProblemSpec  # solved spec: objective at theta_0, constraints at theta_A
    theta0: float
    theta_A: float
    min_power: float
    power_curve: list  # (theta, objective power) including refinement points
    control_check: list
    dominance_check: list
    certified: bool
    solve_report: SolveReport
    grids: dict

    def to_dict(self) -> dict:
        return {
            "format": 1,
            "spec": self.spec.to_dict(),
            "theta0": self.theta0,
            "theta_A": self.theta_A,
            "min_power": self.min_power,
            "power_curve": [[t, p] for t, p in self.power_curve],
            "grids": self.grids,
            "control_check": self.control_check,
            "dominance_check": self.dominance_check,
            "certified": self.certified,
            "solve": self.solve_report.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def solve_two_theta(theta0: float, theta: float, base: ProblemSpec,
                    quad: QuadConfig | None = None, search: SearchConfig | None = None,
                    active_set_hint=None) -> SolveReport:
    """Solve with the objective signal at theta0 and the constraints at theta."""
    if not (theta0 < 0 and theta < 0):
        raise ValueError("signals must be negative")
    spec = base.with_thetas(theta0, theta)
    try:
        return solve(spec, quad=quad, search=search, active_set_hint=active_set_hint)
    except SolverError as exc:
        raise SolverError(f"two-signal solve failed at (theta0={theta0}, theta={theta}): {exc}",
                          mu=exc.mu, residual=exc.residual) from exc


def find_theta_A(mspec: MaximinSpec, quad: QuadConfig | None = None,
                 search: SearchConfig | None = None, verbose: bool = False,
                 probe_quad: QuadConfig | None = None) -> dict:
    """Locate the constraint signal whose two-signal solution has minimal power.

    Solves across the candidate grid, requires the minimum to be interior,
    rescans a narrow window, and takes the vertex of a quadratic through
    the window probes.  ``probe_quad`` allows running the curve stage at a
    reduced resolution; the returned solve at the chosen signal always
    uses the full ``quad``.
    """
    t0 = mspec.theta0
    curve = []
    reports = {}
    soft = set()
    hints = {}

    def probe(theta: float, allow_soft: bool = False, full: bool = False) -> float:
        q = quad if (full or probe_quad is None) else probe_quad
        # neighboring probes usually share the active set; hint from the
        # nearest previously solved signal (a wrong hint only costs time)
        hint = None
        if hints:
            hint = hints[min(hints, key=lambda s: abs(s - theta))]
        try:
            rep = solve_two_theta(t0, theta, mspec.base, q, search, active_set_hint=hint)
        except SolverError:
            if not allow_soft:
                raise
            # near-degenerate instance (weak constraint signal): a relaxed
            # solve still pins the curve value well enough off the minimum
            relaxed = replace(search or SearchConfig(), feas_tol=2e-2, solve_tol=2e-2)
            rep = solve_two_theta(t0, theta, mspec.base, q, relaxed)
            soft.add(theta)
        reports[theta] = rep
        if theta not in soft:
            hints[theta] = rep.active_set
        curve.append((theta, rep.objective))
        if verbose:
            tag = " (soft)" if theta in soft else ""
            print(f"  theta={theta:+.4f}  power={rep.objective:.5f}  active={rep.active_set}{tag}", flush=True)
        return rep.objective

    grid = sorted(mspec.theta_grid)  # ascending: most negative first
    values = [probe(t, allow_soft=True) for t in grid]
    i_min = int(np.argmin(values))
    if i_min in (0, len(grid) - 1):
        raise SolverError(
            f"power minimum at candidate-grid boundary (theta={grid[i_min]}); extend theta_grid"
        )
    if any(grid[j] in soft for j in (i_min - 1, i_min, i_min + 1)):
        raise SolverError(
            f"candidate solves near the power minimum (theta~{grid[i_min]:.3f}) did not converge"
        )

    # refinement: scan the bracket around the grid minimum, rescan a narrow
    # window around the best probe, then smooth those probes with a
    # quadratic and take its vertex (the curve is flat near the minimum, so
    # a raw argmin would inherit per-solve noise, while a wide fit window
    # would pick up the curve's asymmetry)
    lo, hi = grid[i_min - 1], grid[i_min + 1]
    for t in np.linspace(lo, hi, 9)[1:-1]:
        probe(float(t))
    best = min((tp for tp in curve if lo <= tp[0] <= hi), key=lambda tp: tp[1])[0]
    width = (hi - lo) / 4.0
    w_lo, w_hi = max(lo, best - width), min(hi, best + width)
    for t in np.linspace(w_lo, w_hi, 7)[1:-1]:
        if not any(abs(t - s) < 1e-9 for s, _ in curve):
            probe(float(t))
    local = [(t, p) for t, p in curve if w_lo <= t <= w_hi and t not in soft]
    ts = np.array([t for t, _ in local])
    ps = np.array([p for _, p in local])
    coef = np.polyfit(ts, ps, 2)
    if coef[0] > 0:
        vertex = float(np.clip(-coef[1] / (2 * coef[0]), w_lo, w_hi))
    else:
        vertex = float(min(local, key=lambda tp: tp[1])[0])
    min_power = probe(vertex, full=True)
    return {
        "theta_A": vertex,
        "min_power": min_power,
        "report": reports[vertex],
        "power_curve": sorted(curve),
    }


def verify_control(policy, mspec: MaximinSpec, quad: QuadConfig | None = None,
                   feas_tol: float = 5e-4) -> list:
    """Error control of the policy at every configuration over the verify grids.

    Covers the global null once (no signal dependence), every canonical
    configuration size with the equal-signal sweep, and unequal-signal
    lattice vectors.  Returns one row per check with a pass flag.
    """
    spec = mspec.base
    k = spec.k
    alpha = spec.alpha
    measure = spec.error.value
    extremes = list(mspec.control_equal_grid) + list(mspec.control_lattice)
    table = segment_table(policy, quad=quad, z_max=required_z_max(extremes, quad))
    rows = []

    def check(h, thetas):
        from .integrals import config_expectations

        val = config_expectations(policy, h, thetas, quad=quad, table=table)[measure]
        rows.append({
            "L": int(sum(h)),
            "h": list(map(int, h)),
            "thetas": [float(t) for t in np.atleast_1d(thetas)] if np.size(thetas) else [],
            "measure": measure,
            "value": float(val),
            "limit": alpha + feas_tol,
            "pass": bool(val <= alpha + feas_tol),
        })

    check([0] * k, [])
    for L in range(1, k):
        h = [1] * L + [0] * (k - L)
        for t in mspec.control_equal_grid:
            check(h, [t] * L)
        for vec in mspec.control_vectors(L):
            if len(set(vec)) > 1 or L < 2:
                check(h, list(vec))
    return rows


def verify_dominance(policy, mspec: MaximinSpec, reference_power: float,
                     quad: QuadConfig | None = None, feas_tol: float = 5e-4) -> list:
    """Power of the policy across the weaker-signal region versus its floor."""
    k = mspec.base.k
    sweep = list(mspec.dominance_equal_grid)
    table = segment_table(policy, quad=quad, z_max=required_z_max(sweep, quad))
    rows = []

    def check(thetas):
        rep = power(policy, thetas, L=k, quad=quad, table=table)
        rows.append({
            "thetas": [float(t) for t in np.atleast_1d(thetas)],
            "avg_power": rep.avg_power,
            "any_power": rep.any_power,
            "floor": reference_power - feas_tol,
            "pass": bool(rep.avg_power >= reference_power - feas_tol),
        })

    for t in mspec.dominance_equal_grid:
        check([t] * k)
    for vec in mspec.dominance_vectors():
        check(list(vec))
    return rows


def solve_maximin(mspec: MaximinSpec, quad: QuadConfig | None = None,
                  search: SearchConfig | None = None, verbose: bool = False,
                  probe_quad: QuadConfig | None = None) -> tuple:
    """Run the full maximin pipeline; returns (policy, MaximinReport)."""
    found = find_theta_A(mspec, quad=quad, search=search, verbose=verbose,
                         probe_quad=probe_quad)
    rep = found["report"]
    policy = OmtPolicy.from_multipliers(rep.spec, rep.mu_star, provenance="maximin")
    policy.report_ = rep
    feas = (search or SearchConfig()).feas_tol
    control = verify_control(policy, mspec, quad=quad, feas_tol=feas)
    dominance = verify_dominance(policy, mspec, found["min_power"], quad=quad, feas_tol=feas)
    certified = all(r["pass"] for r in control) and all(r["pass"] for r in dominance)
    k = mspec.base.k
    grids = {
        "candidate": [float(t) for t in sorted(mspec.theta_grid)],
        "control_equal": [float(t) for t in mspec.control_equal_grid],
        "control_vectors": {L: [list(v) for v in mspec.control_vectors(L)] for L in range(1, k)},
        "dominance_equal": [float(t) for t in mspec.dominance_equal_grid],
        "dominance_vectors": [list(v) for v in mspec.dominance_vectors()],
    }
    report = MaximinReport(
        spec=rep.spec,
        theta0=mspec.theta0,
        theta_A=found["theta_A"],
        min_power=found["min_power"],
        power_curve=found["power_curve"],
        control_check=control,
        dominance_check=dominance,
        certified=certified,
        solve_report=rep,
        grids=grids,
    )
    return policy, report


class MaximinPolicy(RejectionRuleMixin, BaseEstimator):
    """Estimator facade for the maximin pipeline.

    ``fit`` searches the candidate constraint signals, verifies control
    and dominance on the configured grids, and exposes the certified
    policy; ``predict`` maps p-value rows to rejection masks.
    """

    def __init__(self, k: int = 3, alpha: float = 0.05, error: str = "fwer",
                 power: str = "avg", L: int | None = None, theta0: float = -2.0,
                 theta_grid: tuple = (), quad=None, search=None):
        self.k = k
        self.alpha = alpha
        self.error = error
        self.power = power
        self.L = L
        self.theta0 = theta0
        self.theta_grid = theta_grid
        self.quad = quad
        self.search = search

    def _mspec(self) -> MaximinSpec:
        base = ProblemSpec(k=self.k, alpha=self.alpha, error=self.error,
                           power=self.power, L=self.L, theta_obj=self.theta0)
        return MaximinSpec(base=base, theta_grid=tuple(self.theta_grid))

    def fit(self, X=None, y=None):
        policy, report = solve_maximin(self._mspec(), quad=self.quad, search=self.search)
        self.policy_ = policy
        self.report_ = report
        self.mu_ = policy.mu_.copy()
        self.theta_A_ = report.theta_A
        self.certified_ = report.certified
        return self

    def rejection_depths(self, u_sorted):
        return self.policy_.rejection_depths(u_sorted)

    def depths_from_z(self, z_sorted):
        return self.policy_.depths_from_z(z_sorted)

    def inner_roots(self, z_outer, lo, hi):
        return self.policy_.inner_roots(z_outer, lo, hi)

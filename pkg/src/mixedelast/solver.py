"""Sparse direct solves, damped Newton iteration and load continuation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg  # noqa: F401  (sp.linalg.norm)
from scipy.sparse.linalg import splu

from .material import InadmissibleState

log = logging.getLogger(__name__)


class SingularSystem(RuntimeError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-10
    rel_tol: float = 1e-12
    max_iter: int = 25
    max_halvings: int = 8
    pivot_tol: float = 1e-14
    line_search: bool = True
    # a full increment below step_tol * |x| means round-off has been reached
    step_tol: float = 1e-8

    def __post_init__(self):
        if min(self.abs_tol, self.rel_tol, self.pivot_tol, self.step_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1 or self.max_halvings < 0:
            raise ValueError("max_iter must be >= 1 and max_halvings >= 0")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    load_factor: float = 1.0
    tolerance: float = 0.0
    stop: str = ""


def _equilibrate(A):
    """Row then column max-norm scaling: returns (R A C, r, c)."""
    r = abs(A).max(axis=1).toarray().ravel()
    if np.any(r == 0):
        raise SingularSystem("zero row")
    A = sp.diags(1.0 / r) @ A
    c = abs(A).max(axis=0).toarray().ravel()
    if np.any(c == 0):
        raise SingularSystem("zero column")
    return sp.csc_matrix(A @ sp.diags(1.0 / c)), 1.0 / r, 1.0 / c


class Factorization:
    """Equilibrated sparse LU factors of a square matrix.

    :class:`SingularSystem` is raised when the smallest pivot falls below
    ``pivot_tol`` times the largest or when the factorization breaks down.
    """

    def __init__(self, A, pivot_tol=1e-14):
        A = sp.csr_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise SingularSystem("matrix is not square")
        self.A = A
        self.n = A.shape[0]
        if self.n == 0:
            return
        As, self.r, self.c = _equilibrate(A)
        try:
            self.lu = splu(As)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        d = np.abs(self.lu.U.diagonal())
        if d.min() <= pivot_tol * d.max():
            raise SingularSystem(f"pivot ratio {d.min() / d.max():.2e}")
        self.norm_inf = sp.linalg.norm(A, np.inf)

    def solve(self, b, refine=3, berr_tol=1e-10):
        """Solve with iterative refinement; the normwise backward error
        ``|Ax - b| / (|A| |x| + |b|)`` (max norms) must end below ``berr_tol``."""
        b = np.asarray(b, dtype=float)
        if self.n == 0:
            return np.zeros(0)
        A, lu, r, c = self.A, self.lu, self.r, self.c
        x = c * lu.solve(r * b)
        nb = np.linalg.norm(b)
        for _ in range(refine):
            if not np.all(np.isfinite(x)):
                raise SingularSystem("non-finite solution")
            res = b - A @ x
            if np.linalg.norm(res) <= 1e-12 * nb:
                break
            x = x + c * lu.solve(r * res)
        if not np.all(np.isfinite(x)):
            raise SingularSystem("non-finite solution")
        scale = self.norm_inf * np.abs(x).max() + np.abs(b).max()
        berr = np.abs(A @ x - b).max() / scale if scale > 0 else 0.0
        if berr > berr_tol:
            raise SingularSystem(f"backward error too large ({berr:.2e})")
        return x


def solve_linear(A, b, pivot_tol=1e-14):
    """Direct sparse LU solve of ``A x = b`` (see :class:`Factorization`)."""
    return Factorization(A, pivot_tol).solve(b)


def _safe_residual(problem, x, scale):
    try:
        r = problem.residual(x, scale)
    except InadmissibleState:
        return None
    return r


def newton(problem, x0, scale=1.0, config: NewtonConfig = NewtonConfig(), callback=None):
    """Solve ``residual(x, scale) = 0`` on the free dofs, Dirichlet values fixed.

    Convergence is declared when the residual norm drops below
    ``max(abs_tol, rel_tol * |r0|)``, or when a full Newton increment is
    below ``step_tol * max(1, |x|)`` in the max norm (the residual has then
    reached its round-off floor); ``report.stop`` records which.

    With ``line_search`` the step is halved until the Newton-metric residual
    ``|J(x)^{-1} r(x + t dx)|`` has decreased by the factor ``1 - t/4``
    relative to ``|dx|``; this measure does not depend on how the three
    equation blocks are scaled.  Trial states with det F <= 0 are always
    rejected.  ``callback(it, x)`` sees the starting state (it = 0) and
    every accepted iterate.  Returns ``(x, report)``; raises
    :class:`NonConvergence`.
    """
    x = np.array(x0, dtype=float)
    fixed = problem.constrained
    free = problem.free
    x[fixed] = problem.dirichlet_values(scale)[fixed]
    r = problem.residual(x, scale)[free]
    r0 = np.linalg.norm(r)
    report = SolveReport(False, 0, [float(r0)], load_factor=scale)
    tol = max(config.abs_tol, config.rel_tol * r0)
    report.tolerance = tol
    if callback is not None:
        callback(0, x)
    for it in range(1, config.max_iter + 1):
        if np.linalg.norm(r) <= tol:
            report.converged = True
            report.iterations = it - 1
            report.stop = "residual"
            return x, report
        lu = Factorization(problem.tangent(x).matrix()[free][:, free], config.pivot_tol)
        dx = lu.solve(-r)
        ndx = np.linalg.norm(dx)
        if np.abs(dx).max() <= config.step_tol * max(1.0, np.abs(x).max()):
            x[free] += dx
            r = problem.residual(x, scale)[free]
            report.converged = True
            report.iterations = it
            report.stop = "increment"
            report.residuals.append(float(np.linalg.norm(r)))
            report.steps.append(1.0)
            if callback is not None:
                callback(it, x)
            return x, report
        t = 1.0
        fallback = None
        for _ in range(config.max_halvings + 1):
            trial = x.copy()
            trial[free] += t * dx
            rt = _safe_residual(problem, trial, scale)
            if rt is not None:
                if not config.line_search:
                    break
                try:
                    bar = np.linalg.norm(lu.solve(-rt[free]))
                except SingularSystem:
                    bar = np.inf
                if bar <= (1.0 - 0.25 * t) * ndx:
                    break
                if fallback is None:
                    fallback = (t, trial, rt)
            t *= 0.5
        else:
            # no monotone step found: take the longest admissible step instead
            if fallback is None:
                report.iterations = it
                raise NonConvergence(f"no admissible step at iteration {it}", report)
            t, trial, rt = fallback
        x, r = trial, rt[free]
        report.residuals.append(float(np.linalg.norm(r)))
        report.steps.append(t)
        if callback is not None:
            callback(it, x)
        log.debug("newton it=%d |r|=%.3e |dx|=%.3e step=%.3g", it, report.residuals[-1], ndx, t)
    if np.linalg.norm(r) <= tol:
        report.converged = True
        report.iterations = config.max_iter
        report.stop = "residual"
        return x, report
    report.iterations = config.max_iter
    raise NonConvergence(f"no convergence in {config.max_iter} iterations "
                         f"(|r|={np.linalg.norm(r):.3e})", report)


def continuation(problem, n_steps, x0=None, config: NewtonConfig = NewtonConfig(),
                 max_cuts: int = 12, callback=None):
    """Ramp the load factor from 0 to 1 with nominal increment ``1 / n_steps``.

    A failed increment is retried with half the step, at most ``max_cuts``
    times in a row; after two consecutive successes a reduced step is doubled
    again (never beyond the nominal one).  With no failures the load factors
    are exactly ``1/n, 2/n, ..., 1``.  Each increment starts from a secant
    extrapolation of the last two accepted states when it is admissible.
    Returns ``(x, reports)`` with one report per accepted increment.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    x = np.zeros(problem.space.dim) if x0 is None else np.array(x0, dtype=float)
    nominal = 1.0 / n_steps
    s, ds = 0.0, nominal
    reports = []
    cuts = streak = 0
    prev = None  # (load factor, state) of the previous accepted increment
    while s < 1.0 - 1e-14:
        target = min(1.0, s + ds)
        guess = x
        if prev is not None and s > prev[0]:
            trial = x + (target - s) / (s - prev[0]) * (x - prev[1])
            if _safe_residual(problem, trial, target) is not None:
                guess = trial
        try:
            xn, rep = newton(problem, guess, target, config)
        except (NonConvergence, SingularSystem, InadmissibleState) as exc:
            cuts += 1
            streak = 0
            if cuts > max_cuts:
                raise NonConvergence(f"continuation stalled at load factor {s:.4g}: {exc}") from exc
            ds *= 0.5
            log.info("cutting load step to %.3g at s=%.4g (%s)", ds, s, exc)
            continue
        cuts = 0
        streak += 1
        prev = (s, x)
        x, s = xn, target
        rep.load_factor = s
        reports.append(rep)
        if callback is not None:
            callback(s, x, rep)
        if streak >= 2 and ds < nominal:
            ds = min(nominal, 2.0 * ds)
            streak = 0
    return x, reports

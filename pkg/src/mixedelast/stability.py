"""Inf-sup diagnostics of the linearized mixed system.

Norms are ``|z|^2 = z^T D z`` with the metric blocks of
:meth:`MixedProblem.metrics`.  A normalized constant is the smallest
singular value of ``L^{-1} B L^{-T}`` where ``D = L L^T`` (Cholesky) on each
side.  Ranks are obtained from the unnormalized blocks with the threshold
``1e-10 * s_max * max(rows, cols)``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, eigsh, splu

from .mesh import MeshStats

RANK_RTOL = 1e-10
DENSE_CAP = 5000


def numerical_rank(M):
    """Rank and singular values of a dense matrix."""
    M = np.asarray(M.toarray() if sp.issparse(M) else M, dtype=float)
    if M.size == 0:
        return 0, np.zeros(0)
    s = sla.svdvals(M)
    if s[0] == 0.0:
        return 0, s
    return int(np.sum(s > RANK_RTOL * s[0] * max(M.shape))), s


@dataclass
class InfSupBlocks:
    """Tangent and metric blocks restricted to the free displacement dofs."""
    S1d: sp.csr_matrix
    Sc1: sp.csr_matrix
    Scc: sp.csr_matrix
    Sdc: sp.csr_matrix
    Sdd: sp.csr_matrix
    D1: sp.csr_matrix
    Dc: sp.csr_matrix
    Dd: sp.csr_matrix

    @property
    def dims(self):
        return self.S1d.shape[0], self.Scc.shape[0], self.Sdd.shape[0]

    def S(self):
        n1 = self.dims[0]
        Z11 = sp.csr_matrix((n1, n1))
        return sp.bmat([[Z11, None, self.S1d],
                        [self.Sc1, self.Scc, None],
                        [None, self.Sdc, self.Sdd]], format="csr")

    def G(self):
        n1, nc, _ = self.dims
        return sp.bmat([[sp.csr_matrix((n1, nc)), self.S1d],
                        [self.Sdc, self.Sdd]], format="csr")

    def D(self):
        return sp.block_diag([self.D1, self.Dc, self.Dd], format="csr")


def infsup_blocks(problem, x=None) -> InfSupBlocks:
    """Blocks at state ``x`` (default: reference configuration K = 0)."""
    if x is None:
        x = np.zeros(problem.space.dim)
    t = problem.tangent(x)
    m = problem.metrics
    free_u = problem.free[problem.free < problem.space.U.dim]
    return InfSupBlocks(t.S1d[free_u], t.Sc1[:, free_u], t.Scc, t.Sdc, t.Sdd,
                        m.D1[free_u][:, free_u], m.Dc, m.Dd)


# -- counting --------------------------------------------------------------


@dataclass(frozen=True)
class CountVerdict:
    n1: int
    nc: int
    nd: int

    @property
    def nd_lt_n1(self):
        return self.nd < self.n1

    @property
    def nc_lt_n1(self):
        return self.nc < self.n1

    @property
    def flagged(self):
        return self.nd_lt_n1 or self.nc_lt_n1


def count_check(problem) -> CountVerdict:
    n1 = int(np.sum(problem.free < problem.space.U.dim))
    _, nc, nd = problem.space.sizes
    return CountVerdict(n1, nc, nd)


# -- ranks -------------------------------------------------------------------


def rank_s1d(blocks: InfSupBlocks):
    return numerical_rank(blocks.S1d)[0]


def rank_ratio_s1d(problem, x=None):
    blocks = infsup_blocks(problem, x)
    n1 = blocks.dims[0]
    return 1.0 if n1 == 0 else rank_s1d(blocks) / n1


def _schur_w(blocks):
    """S1d Sdd^{-1} Sdc, dense (n1 x nc)."""
    X = splu(sp.csc_matrix(blocks.Sdd)).solve(blocks.Sdc.toarray())
    return blocks.S1d @ X


def rank_g(blocks):
    """rank G = n_d + rank(S1d Sdd^{-1} Sdc) since Sdd is nonsingular."""
    n1, _, nd = blocks.dims
    if n1 == 0:
        return nd
    return nd + numerical_rank(_schur_w(blocks))[0]


def rank_s(blocks):
    """rank S = n_c + n_d + rank(S1d Sdd^{-1} Sdc Scc^{-1} Sc1)."""
    n1, nc, nd = blocks.dims
    if n1 == 0:
        return nc + nd
    Y = splu(sp.csc_matrix(blocks.Scc)).solve(blocks.Sc1.toarray())
    return nc + nd + numerical_rank(_schur_w(blocks) @ Y)[0]


# -- normalized constants ----------------------------------------------------


def _chol(D):
    return sla.cholesky(D.toarray() if sp.issparse(D) else D, lower=True)


def _normalized(B, Drow, Dcol, normalization="inverse"):
    """Dense ``L_r^{-1} B L_c^{-T}``, or ``R_r B R_c`` with symmetric roots
    ``R^2 = D`` when ``normalization == "root"``."""
    B = B.toarray() if sp.issparse(B) else np.asarray(B)
    if normalization == "root":
        Rr = sla.sqrtm(Drow.toarray() if sp.issparse(Drow) else Drow).real
        Rc = sla.sqrtm(Dcol.toarray() if sp.issparse(Dcol) else Dcol).real
        return Rr @ B @ Rc
    if normalization != "inverse":
        raise ValueError(f"unknown normalization {normalization!r}")
    Lr, Lc = _chol(Drow), _chol(Dcol)
    X = sla.solve_triangular(Lr, B, lower=True)
    return sla.solve_triangular(Lc, X.T, lower=True).T


def _surjectivity_constant(B, Drow, Dcol, normalization):
    rows, cols = B.shape
    if rows == 0:
        return math.inf
    if rows > cols:
        return 0.0
    s = sla.svdvals(_normalized(B, Drow, Dcol, normalization))
    return float(s[rows - 1])


def alpha_infsup(problem, x=None, blocks=None, normalization="inverse"):
    """inf over displacements of sup over stresses of <pi, grad v> (normalized).

    ``inf`` when there is no free displacement dof (condition vacuous).
    """
    b = blocks or infsup_blocks(problem, x)
    return _surjectivity_constant(b.S1d, b.D1, b.Dd, normalization)


def gamma_infsup(problem, x=None, blocks=None, normalization="inverse"):
    b = blocks or infsup_blocks(problem, x)
    Drow = sp.block_diag([b.D1, b.Dd])
    Dcol = sp.block_diag([b.Dc, b.Dd])
    return _surjectivity_constant(b.G(), Drow, Dcol, normalization)


def beta_infsup(problem, x=None, blocks=None, method="auto", normalization="inverse"):
    """Smallest singular value of the metric-normalized tangent.

    ``method`` is ``dense`` (full SVD), ``sparse`` (ARPACK on the
    generalized problem ``D z = mu S^T D^{-1} S z``, beta = mu_max^{-1/2})
    or ``auto`` (dense up to 1500 unknowns).  The ``root`` normalization
    is dense only.
    """
    b = blocks or infsup_blocks(problem, x)
    S, D = b.S(), b.D()
    n = S.shape[0]
    if method == "auto":
        method = "dense" if n <= 1500 or normalization == "root" else "sparse"
    if method == "dense":
        return float(sla.svdvals(_normalized(S, D, D, normalization))[-1])
    if normalization != "inverse":
        raise ValueError("the sparse path only supports the inverse normalization")
    try:
        lu_s = splu(sp.csc_matrix(S))
    except RuntimeError:
        return 0.0
    lu_d = splu(sp.csc_matrix(D))
    St = sp.csr_matrix(S.T)
    Mop = LinearOperator((n, n), matvec=lambda z: St @ lu_d.solve(S @ z), dtype=float)
    Minv = LinearOperator((n, n), matvec=lambda z: lu_s.solve(D @ lu_s.solve(z, trans="T")),
                          dtype=float)
    mu = eigsh(D, k=1, M=Mop, Minv=Minv, which="LA", tol=1e-10, return_eigenvectors=False)
    if not np.isfinite(mu[0]) or mu[0] <= 0:
        return 0.0
    return float(1.0 / np.sqrt(mu[0]))


# -- report ------------------------------------------------------------------


@dataclass
class InfSupReport:
    label: str
    dim: int
    stats: MeshStats
    n1: int
    nc: int
    nd: int
    rank_s1d: int
    rank_g: int
    rank_s: int
    alpha: float | None = None
    gamma: float | None = None
    beta: float | None = None
    verdicts: dict = field(default_factory=dict)

    @property
    def n_t(self):
        return self.n1 + self.nc + self.nd

    @property
    def rank_ratio(self):
        return 1.0 if self.n1 == 0 else self.rank_s1d / self.n1

    @property
    def stable(self):
        return all(self.verdicts.values())


def analyze(problem, x=None, constants=True, cap=DENSE_CAP, normalization="inverse") -> InfSupReport:
    """Ranks, counting verdicts and (when ``n_t <= cap``) the three constants."""
    blocks = infsup_blocks(problem, x)
    n1, nc, nd = blocks.dims
    counts = CountVerdict(n1, nc, nd)
    r1 = rank_s1d(blocks)
    rg = rank_g(blocks)
    rs = rank_s(blocks)
    rep = InfSupReport(problem.triple.label, problem.mesh.dim, problem.mesh.stats(),
                       n1, nc, nd, r1, rg, rs)
    rep.verdicts = {
        "count_nd": not counts.nd_lt_n1,
        "count_nc": not counts.nc_lt_n1,
        "s1d_full_rank": r1 == n1,
        "g_full_rank": rg == n1 + nd,
        "s_nonsingular": rs == n1 + nc + nd,
    }
    if constants and rep.n_t <= cap:
        kw = dict(blocks=blocks, normalization=normalization)
        rep.alpha = alpha_infsup(problem, **kw)
        rep.gamma = gamma_infsup(problem, **kw)
        rep.beta = 0.0 if rs < rep.n_t else beta_infsup(problem, **kw)
    return rep


CSV_COLUMNS = ["elements", "dim", "N_e", "h", "n_1", "n_c", "n_d", "rank_s1d", "rank_g",
               "rank_s", "rank_ratio", "alpha", "gamma", "beta", "count_nd", "count_nc",
               "s1d_full_rank", "g_full_rank", "s_nonsingular", "stable"]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.6e}"


def report_row(rep: InfSupReport):
    vals = [rep.label, rep.dim, rep.stats.N_e, rep.stats.h, rep.n1, rep.nc, rep.nd, rep.rank_s1d,
            rep.rank_g, rep.rank_s, rep.rank_ratio, rep.alpha, rep.gamma, rep.beta]
    vals += [rep.verdicts.get(k) for k in CSV_COLUMNS[14:19]] + [rep.stable]
    return [_fmt(v) if not isinstance(v, str) else v for v in vals]


def write_reports_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for rep in reports:
            w.writerow(report_row(rep))


def report_dict(rep: InfSupReport):
    d = asdict(rep)
    d["stats"] = asdict(rep.stats)
    d["stable"] = rep.stable
    return d

"""First-order conic solver for the assembled moment problems.

Operator splitting over y (moment classes) and X (stacked PSD blocks):
the y-step solves an equality-constrained least-squares system through a
cached sparse factorization, the X-step projects blockwise onto the PSD
cone, and the multiplier update keeps the cone dual sign-definite for free.
The reported bound is always the dual value reduced by a correction that
stays valid because every moment-class variable of a feasible point lies in
[-1, 1] (forced by the minor chain of the moment matrix).
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field
from typing import IO

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .moments import MomentProblem


def _default_abstol() -> float:
    return float(os.environ.get("KCBS_SELFTEST_TOL", "1e-6"))


@dataclass(frozen=True)
class SolverSettings:
    max_iterations: int = 200_000
    abstol: float = field(default_factory=_default_abstol)
    reltol: float = 1e-7
    over_relaxation: float = 1.6
    scaling: bool = True
    rho: float = 1.0
    adaptive_rho: bool = True
    check_every: int = 100
    infeasibility_tol: float = 1e-7
    polish: bool = True
    log: IO[str] | None = None

    def __post_init__(self) -> None:
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.abstol <= 0 or self.reltol <= 0:
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.over_relaxation < 2.0:
            raise ValueError("over-relaxation parameter must lie in (0, 2)")


@dataclass(frozen=True)
class SolveResult:
    bound: float
    objective: float
    status: str
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    seconds: float
    correction: float
    dual_value: float
    y: np.ndarray
    nu: np.ndarray

    @property
    def converged(self) -> bool:
        return self.status in ("optimal", "near-optimal")


class _Blocks:
    """Scatter/gather between class variables and the stacked PSD blocks."""

    def __init__(self, problem: MomentProblem):
        self.nc = problem.n_classes
        cells = problem.classes.cell_class
        self.m = cells.shape[0]
        flat = cells.ravel()
        self.valid = flat >= 0
        self.gather = flat[self.valid]
        self.shapes = [self.m]
        self.loc = []
        for block in problem.localizing:
            cell = np.repeat(np.arange(block.size**2), np.diff(block.ptr))
            self.loc.append((block.size, cell, block.cls, block.coef))
            self.shapes.append(block.size)

    def apply(self, y: np.ndarray) -> list[np.ndarray]:
        gamma = np.zeros(self.m * self.m)
        gamma[self.valid] = y[self.gather]
        out = [gamma.reshape(self.m, self.m)]
        for size, cell, cls, coef in self.loc:
            vals = np.bincount(cell, weights=coef * y[cls], minlength=size * size)
            out.append(vals.reshape(size, size))
        return out

    def adjoint(self, blocks: list[np.ndarray]) -> np.ndarray:
        flat = blocks[0].ravel()
        out = np.bincount(self.gather, weights=flat[self.valid], minlength=self.nc)
        for (size, cell, cls, coef), mat in zip(self.loc, blocks[1:]):
            out += np.bincount(cls, weights=coef * mat.ravel()[cell], minlength=self.nc)
        return out

    def gram(self) -> sp.csc_matrix:
        diag = np.bincount(self.gather, minlength=self.nc).astype(float)
        rows = [np.arange(self.nc)]
        cols = [np.arange(self.nc)]
        vals = [diag]
        for size, cell, cls, coef in self.loc:
            edges = np.searchsorted(cell, np.arange(size * size + 1))
            for a in range(size * size):
                ks = slice(edges[a], edges[a + 1])
                cs = cls[ks]
                if cs.size == 0:
                    continue
                rows.append(np.repeat(cs, cs.size))
                cols.append(np.tile(cs, cs.size))
                vals.append(np.outer(coef[ks], coef[ks]).ravel())
        coo = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(self.nc, self.nc),
        )
        return coo.tocsc()

    @staticmethod
    def norm(blocks: list[np.ndarray]) -> float:
        return float(np.sqrt(sum(np.sum(b * b) for b in blocks)))


def _project_psd(mat: np.ndarray) -> np.ndarray:
    sym = (mat + mat.T) / 2
    w, q = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    out = (q * w) @ q.T
    return (out + out.T) / 2


def _equality_matrix(problem: MomentProblem) -> tuple[sp.csr_matrix, np.ndarray]:
    rows, cols, vals = [], [], []
    rhs = []
    for r, eq in enumerate(problem.equalities):
        for cid, coef in zip(eq.cls, eq.coef):
            rows.append(r)
            cols.append(cid)
            vals.append(coef)
        rhs.append(eq.rhs)
    mat = sp.csr_matrix(
        (vals, (rows, cols)), shape=(len(problem.equalities), problem.n_classes)
    )
    return mat, np.asarray(rhs, dtype=float)


def _polish_certificate(
    c: np.ndarray,
    e_mat: sp.csr_matrix,
    b: np.ndarray,
    pool: list[tuple[np.ndarray, np.ndarray]],
) -> tuple[float, np.ndarray, float, float] | None:
    """Best certified bound over conic mixtures of stored dual candidates.

    Each pool entry is (A*(lam_i), nu_i) with lam_i PSD, so lam = sum s_i lam_i
    stays PSD for s >= 0 and the mixture's correction term is exact:
    maximize b.nu - ||c - sum s_i g_i - E^T nu||_1 over (s, nu), a linear
    program once the norm is split into elementwise bounds.  The optimum can
    only improve on the pool members it contains.
    """
    from scipy.optimize import linprog

    g_cols = np.column_stack([g for g, _ in pool])
    n = len(c)
    m = g_cols.shape[1]
    q = len(b)
    et = e_mat.T.tocsc()
    eye = sp.identity(n, format="csc")
    a_ub = sp.bmat(
        [[-g_cols, -et, -eye], [g_cols, et, -eye]], format="csc"
    )
    b_ub = np.concatenate([-c, c])
    cost = np.concatenate([np.zeros(m), -b, np.ones(n)])
    bounds = [(0, None)] * m + [(None, None)] * q + [(0, None)] * n
    lp = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not lp.success:
        return None
    s = lp.x[:m]
    nu = lp.x[m : m + q]
    delta = c - g_cols @ s - e_mat.T @ nu
    correction = float(np.sum(np.abs(delta)))
    dual_value = float(b @ nu)
    return dual_value - correction, nu, correction, dual_value


def solve(
    problem: MomentProblem,
    settings: SolverSettings | None = None,
    warm_y: np.ndarray | None = None,
) -> SolveResult:
    """Run the splitting iteration and return a certified result.

    For minimization the reported bound never exceeds the true optimum; for
    maximization problems the sign flips and the bound never undershoots.
    A warm-start vector seeds the cone iterate with the projected moment
    matrix of that point; the certificate math is unaffected.
    """
    if settings is None:
        settings = SolverSettings()
    start = time.perf_counter()

    ops = _Blocks(problem)
    nc = ops.nc
    e_mat, b = _equality_matrix(problem)
    c = problem.objective.copy()

    # diagonal variable scaling by stacked column norms; rows of E normalized
    if settings.scaling:
        col = np.bincount(ops.gather, minlength=nc).astype(float)
        for _, _, cls, coef in ops.loc:
            col += np.bincount(cls, weights=coef**2, minlength=nc)
        d = 1.0 / np.sqrt(np.sqrt(np.maximum(col, 1e-12)))
        row_norm = np.sqrt(np.asarray(e_mat.multiply(e_mat).sum(axis=1)).ravel())
        row_norm = np.maximum(row_norm, 1e-12)
    else:
        d = np.ones(nc)
        row_norm = np.ones(len(b))

    def scale_problem():
        e_s = sp.diags(1.0 / row_norm) @ e_mat @ sp.diags(d)
        b_s = b / row_norm
        c_s = c * d
        return e_s.tocsr(), b_s, c_s

    e_s, b_s, c_s = scale_problem()

    class _ScaledOps:
        def apply(self, ys: np.ndarray) -> list[np.ndarray]:
            return ops.apply(d * ys)

        def adjoint(self, blocks: list[np.ndarray]) -> np.ndarray:
            return d * ops.adjoint(blocks)

    sops = _ScaledOps()

    gram = sp.diags(d) @ ops.gram() @ sp.diags(d)
    rho = settings.rho

    def factor(rho_value: float):
        k = sp.bmat(
            [[rho_value * gram, e_s.T], [e_s, None]], format="csc"
        )
        return spla.splu(k)

    lu = factor(rho)

    if warm_y is not None:
        x = [_project_psd(blk) for blk in ops.apply(np.asarray(warm_y, dtype=float))]
    else:
        x = [np.zeros((s, s)) for s in ops.shapes]
    z = [np.zeros((s, s)) for s in ops.shapes]
    y_s = np.zeros(nc)
    nu_s = np.zeros(len(b))
    refactors = 0

    alpha = settings.over_relaxation
    dim_x = float(sum(s * s for s in ops.shapes))
    sqrt_dim_x = np.sqrt(dim_x)
    sqrt_nc = np.sqrt(nc)

    status = "iteration-limit"
    pr = dr = gap = np.inf
    best = None
    prev_cert: tuple[np.ndarray, list[np.ndarray]] | None = None
    pool: list[tuple[np.ndarray, np.ndarray]] = []
    x_prev = [blk.copy() for blk in x]
    iterations = 0

    if settings.log is not None:
        settings.log.write("iteration,primal_residual,dual_residual,gap\n")

    for k in range(1, settings.max_iterations + 1):
        iterations = k
        rhs_top = rho * sops.adjoint([xb - zb for xb, zb in zip(x, z)]) - c_s
        sol = lu.solve(np.concatenate([rhs_top, b_s]))
        y_s = sol[:nc]
        nu_s = sol[nc:]
        my = sops.apply(y_s)
        x_prev = x
        v = [alpha * m + (1 - alpha) * xb + zb for m, xb, zb in zip(my, x_prev, z)]
        x = [_project_psd(vb) for vb in v]
        z = [vb - xb for vb, xb in zip(v, x)]

        if k % settings.check_every and k != settings.max_iterations:
            continue

        pr_abs = _Blocks.norm([m - xb for m, xb in zip(my, x)])
        dr_abs = rho * np.linalg.norm(sops.adjoint([xb - xo for xb, xo in zip(x, x_prev)]))
        pr = pr_abs / (1.0 + _Blocks.norm(my) + _Blocks.norm(x))
        dr = dr_abs / (1.0 + np.linalg.norm(c_s))

        # dual candidate: cone multiplier is -rho * z, PSD by construction
        lam = [-rho * zb for zb in z]
        nu_dual = -(nu_s / row_norm)
        delta = c - ops.adjoint(lam) - e_mat.T @ nu_dual
        dual_value = float(b @ nu_dual)
        correction = float(np.sum(np.abs(delta)))
        certified = dual_value - correction
        primal_obj = float(c @ (d * y_s) + problem.objective_offset)
        gap = abs(primal_obj - (dual_value + problem.objective_offset)) / max(
            1.0, abs(primal_obj)
        )

        if settings.log is not None:
            settings.log.write(f"{k},{pr:.3e},{dr:.3e},{gap:.3e}\n")

        # every checkpoint certificate is a valid bound; keep the tightest
        if best is None or certified > best[2]:
            best = (y_s.copy(), nu_dual.copy(), certified, primal_obj, correction, dual_value)

        if k % (10 * settings.check_every) == 0 or k == settings.max_iterations:
            pool.append((ops.adjoint(lam), nu_dual.copy()))
            if len(pool) > 24:
                pool.pop(0)

        tol_p = settings.abstol + settings.reltol * sqrt_dim_x
        tol_gap = max(10 * settings.abstol, 1e-9)
        if pr <= tol_p and dr <= tol_p and gap <= tol_gap:
            status = "optimal"
            break

        if prev_cert is not None and k % (10 * settings.check_every) == 0:
            d_nu = nu_dual - prev_cert[0]
            d_lam = [_project_psd(lb - pb) for lb, pb in zip(lam, prev_cert[1])]
            scale = np.linalg.norm(d_nu) + sum(np.linalg.norm(bk) for bk in d_lam)
            if scale > 1e-12:
                farkas = ops.adjoint(d_lam) + e_mat.T @ d_nu
                if (
                    np.max(np.abs(farkas)) <= settings.infeasibility_tol * scale
                    and b @ d_nu > settings.infeasibility_tol * scale
                ):
                    status = "infeasible"
                    break
        if k % (10 * settings.check_every) == 0:
            prev_cert = (nu_dual.copy(), [lb.copy() for lb in lam])

        if (
            settings.adaptive_rho
            and refactors < 30
            and k % (10 * settings.check_every) == 0
        ):
            ratio = pr / max(dr, 1e-16)
            if ratio > 5.0 or ratio < 0.2:
                step = float(np.clip(np.sqrt(ratio), 0.33, 3.0))
                new_rho = float(np.clip(rho * step, 1e-4, 1e4))
                if new_rho != rho:
                    z = [zb * (rho / new_rho) for zb in z]
                    rho = new_rho
                    lu = factor(rho)
                    refactors += 1

    if best is None:
        raise AssertionError("solver made no certificate checkpoint")
    y_scaled, nu_dual, certified, primal_obj, correction, dual_value = best

    if settings.polish and status != "infeasible" and pool:
        polished = _polish_certificate(c, e_mat, b, pool)
        if polished is not None and polished[0] > certified:
            certified, nu_dual, correction, dual_value = polished

    if status == "iteration-limit" and pr <= 50 * (settings.abstol + settings.reltol * sqrt_dim_x) and dr <= 50 * (
        settings.abstol + settings.reltol * sqrt_dim_x
    ):
        status = "near-optimal"

    y_out = d * y_scaled
    seconds = time.perf_counter() - start

    if problem.maximize:
        bound = -(certified + problem.objective_offset)
        objective = -primal_obj
        dual_out = -(dual_value + problem.objective_offset)
    else:
        bound = certified + problem.objective_offset
        objective = primal_obj
        dual_out = dual_value + problem.objective_offset

    if status == "infeasible":
        bound = float("nan")
        objective = float("nan")

    return SolveResult(
        bound=float(bound),
        objective=float(objective),
        status=status,
        primal_residual=float(pr),
        dual_residual=float(dr),
        gap=float(gap),
        iterations=iterations,
        seconds=seconds,
        correction=float(correction),
        dual_value=float(dual_out),
        y=y_out,
        nu=nu_dual,
    )

"""Sparse Levenberg-Marquardt on SE(2)/SE(3) with per-factor robust weights.

Loop factors carry a SIG kernel with their own ``mu``; prior and odometry
factors stay quadratic. Robust weights are frozen inside a linear solve and
refreshed after each accepted step (IRLS).
"""

from __future__ import annotations

import glob
import logging
import os
import sys
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import geometry as geo
from . import kernel
from .graph import PoseGraph

log = logging.getLogger(__name__)

LINEAR_SOLVERS = ("auto", "pardiso", "qdldl")


class SolverDiverged(RuntimeError):
    pass


class IndefiniteSystem(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100
    lambda_init: float = 1e-4
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    rel_cost_tol: float = 1e-6
    step_norm_tol: float = 1e-8
    lambda_max: float = 1e12
    linear_solver: str = "auto"

    def __post_init__(self):
        for name in ("max_iterations", "lambda_init", "rel_cost_tol", "step_norm_tol", "lambda_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_up <= 1 or self.lambda_down <= 1:
            raise ValueError("lambda_up and lambda_down must both exceed 1")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise ValueError(f"linear_solver must be one of {LINEAR_SOLVERS}")


@dataclass
class LinearSystem:
    """Weighted, whitened linearization: rows of J and r are scaled by sqrt(w)."""

    J: sp.csr_matrix
    r: np.ndarray
    w: np.ndarray  # one weight per factor (priors first, then between factors)
    cost: float

    @property
    def hessian(self) -> sp.csc_matrix:
        return (self.J.T @ self.J).tocsc()

    @property
    def gradient(self) -> np.ndarray:
        return self.J.T @ self.r


@dataclass
class SolveResult:
    poses: np.ndarray
    cost: float
    iterations: int
    converged: bool
    whitened_residuals: np.ndarray  # (n_factors, d), in graph.factors order
    costs: list = field(default_factory=list)  # cost after every accepted step


def _loop_mu(graph: PoseGraph, mu) -> np.ndarray:
    """Per-between-factor mu (NaN marks a quadratic factor)."""
    tab = graph.between_table
    out = np.full(len(tab), np.nan)
    if mu is not None:
        mu = np.asarray(mu, dtype=float)
        if mu.shape != (int(tab.is_loop.sum()),):
            raise ValueError(f"expected {int(tab.is_loop.sum())} loop mu values, got {mu.shape}")
        out[tab.is_loop] = mu
    return out


def _residuals(graph: PoseGraph, x: np.ndarray):
    """Whitened residuals of priors and between factors at ``x``."""
    pt, bt = graph.prior_table, graph.between_table
    d = graph.tangent_dim
    rp = np.zeros((0, d))
    if len(pt):
        e, _ = geo.batch_prior_jacobian(pt.z, x[pt.i])
        rp = np.einsum("nij,nj->ni", pt.sqrt_info, e)
    rb = np.zeros((0, d))
    if len(bt):
        e = geo.batch_relative_residual(bt.z, x[bt.i], x[bt.j])
        rb = np.einsum("nij,nj->ni", bt.sqrt_info, e)
    return rp, rb


def _robust_cost(rp, rb, loop_mu, c) -> float:
    cost = 0.5 * float(np.sum(rp * rp))
    if len(rb):
        nrm = np.linalg.norm(rb, axis=1)
        robust = ~np.isnan(loop_mu)
        cost += 0.5 * float(np.sum(nrm[~robust] ** 2))
        if np.any(robust):
            cost += float(np.sum(kernel.rho(nrm[robust], loop_mu[robust], c)))
    return cost


def evaluate_cost(graph: PoseGraph, x: np.ndarray, mu=None, c: float = kernel.DEFAULT_C) -> float:
    """Sum of rho over loop factors plus half squared norms of the rest."""
    rp, rb = _residuals(graph, x)
    return _robust_cost(rp, rb, _loop_mu(graph, mu), c)


def _factor_weights(rb, loop_mu, c):
    w = np.ones(len(rb))
    robust = ~np.isnan(loop_mu)
    if np.any(robust):
        w[robust] = kernel.weight(np.linalg.norm(rb[robust], axis=1), loop_mu[robust], c)
    return w


def linearize(graph: PoseGraph, mu, x: np.ndarray, c: float = kernel.DEFAULT_C) -> LinearSystem:
    """Whitened, robustly weighted Jacobian and residual at ``x``.

    ``mu`` holds one value per loop factor (graph loop order), or ``None`` for
    an all-quadratic system.
    """
    pt, bt = graph.prior_table, graph.between_table
    d = graph.tangent_dim
    n = len(graph.poses)
    loop_mu = _loop_mu(graph, mu)

    blocks_r, blocks_J, cols = [], [], []
    cost = 0.0
    wp = np.ones(len(pt))
    wb = np.ones(len(bt))
    if len(pt):
        e, Ji = geo.batch_prior_jacobian(pt.z, x[pt.i])
        r = np.einsum("nij,nj->ni", pt.sqrt_info, e)
        J = pt.sqrt_info @ Ji
        cost += 0.5 * float(np.sum(r * r))
        blocks_r.append(r)
        # pad to two column blocks so priors and between factors stack together
        blocks_J.append(np.concatenate([J, np.zeros_like(J)], axis=2))
        cols.append(np.stack([pt.i, pt.i], axis=1))
    if len(bt):
        e, Ji, Jj = geo.batch_relative_jacobians(bt.z, x[bt.i], x[bt.j])
        r = np.einsum("nij,nj->ni", bt.sqrt_info, e)
        wb = _factor_weights(r, loop_mu, c)
        cost += _robust_cost(np.zeros((0, d)), r, loop_mu, c)
        s = np.sqrt(wb)[:, None]
        blocks_r.append(r * s)
        blocks_J.append(np.concatenate([bt.sqrt_info @ Ji, bt.sqrt_info @ Jj], axis=2) * s[:, :, None])
        cols.append(np.stack([bt.i, bt.j], axis=1))
    if not blocks_r:
        return LinearSystem(sp.csr_matrix((0, n * d)), np.zeros(0), np.zeros(0), 0.0)

    r = np.concatenate(blocks_r).ravel()
    Jb = np.concatenate(blocks_J)  # (m, d, 2d)
    nodes = np.concatenate(cols)  # (m, 2)
    m = len(Jb)
    rows = np.broadcast_to((np.arange(m)[:, None] * d + np.arange(d))[:, :, None], (m, d, 2 * d))
    colidx = (nodes[:, :, None] * d + np.arange(d)).reshape(m, 2 * d)
    colidx = np.broadcast_to(colidx[:, None, :], (m, d, 2 * d))
    J = sp.csr_matrix((Jb.ravel(), (rows.ravel(), colidx.ravel())), shape=(m * d, n * d))
    return LinearSystem(J, r, np.concatenate([wp, wb]), cost)


def _solve_qdldl(A: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    # LDL^T with AMD ordering; a non-positive pivot means A is not SPD
    import qdldl

    try:
        f = qdldl.Solver(sp.triu(A, format="csc"), upper=True)
    except (ValueError, RuntimeError) as exc:
        raise IndefiniteSystem(str(exc)) from None
    D = f.factors()[1]
    if not np.all(np.isfinite(D)) or np.any(D <= 0):
        raise IndefiniteSystem("matrix is not positive definite")
    return f.solve(b)


def _locate_mkl_rt() -> None:
    # wheels install libmkl_rt.so.<N> without the unversioned name that
    # pypardiso searches for
    if os.environ.get("PYPARDISO_MKL_RT"):
        return
    prefixes = {sys.prefix, sys.base_prefix, "/usr/local", "/usr"}
    for prefix in sorted(prefixes):
        hits = sorted(glob.glob(os.path.join(prefix, "lib", "libmkl_rt.so*")))
        if hits:
            os.environ["PYPARDISO_MKL_RT"] = hits[0]
            return


@lru_cache(maxsize=1)
def _pardiso_module():
    """The pypardiso module, or None when it (or MKL) is unavailable."""
    _locate_mkl_rt()
    try:
        import pypardiso
    except (ImportError, OSError):
        return None
    # factorization stays single-threaded so results are bit-reproducible
    pypardiso.ps.libmkl.MKL_Set_Num_Threads(1)
    return pypardiso


def _solve_pardiso(A: sp.csc_matrix, b: np.ndarray) -> np.ndarray:
    # supernodal Cholesky (MKL PARDISO, real SPD mode); a zero or negative
    # pivot is reported as error -4
    pp = _pardiso_module()
    pardiso_error = pp.pardiso_wrapper.PyPardisoError
    solver = pp.PyPardisoSolver(mtype=2)
    solver.set_statistical_info_off()
    U = sp.triu(A, format="csr")
    U.sort_indices()
    try:
        solver.factorize(U)
        x = solver.solve(U, np.asarray(b, dtype=float))
    except (pardiso_error, ValueError) as exc:
        raise IndefiniteSystem(f"PARDISO error {exc}") from None
    finally:
        solver.free_memory(everything=True)
    if not np.all(np.isfinite(x)):
        raise IndefiniteSystem("non-finite solution")
    return x


def linear_backend(name: str = "auto") -> str:
    if name not in LINEAR_SOLVERS:
        raise ValueError(f"linear solver must be one of {LINEAR_SOLVERS}")
    if name == "auto":
        return "pardiso" if _pardiso_module() is not None else "qdldl"
    if name == "pardiso" and _pardiso_module() is None:
        raise ImportError("pypardiso with MKL is not available")
    return name


def solve_spd(A: sp.spmatrix, b: np.ndarray, backend: str = "auto") -> np.ndarray:
    """Solve A x = b for sparse SPD A; raises IndefiniteSystem otherwise."""
    A = sp.csc_matrix(A)
    if linear_backend(backend) == "pardiso":
        return _solve_pardiso(A, b)
    return _solve_qdldl(A, b)


def solve_normal_equations(system: LinearSystem, lam: float, backend: str = "auto") -> np.ndarray:
    """Solve (H + lam * diag(H)) delta = -g by sparse Cholesky."""
    H = system.hessian
    g = system.gradient
    if lam > 0:
        H = (H + sp.diags(lam * H.diagonal())).tocsc()
    return -solve_spd(H, g, backend)


def optimize(
    graph: PoseGraph,
    mu=None,
    initial: Optional[np.ndarray] = None,
    cfg: SolverConfig = SolverConfig(),
    c: float = kernel.DEFAULT_C,
) -> SolveResult:
    """Levenberg-Marquardt on the robust cost, starting at ``initial``."""
    x = np.array(graph.pose_array if initial is None else initial, dtype=float)
    system = linearize(graph, mu, x, c)
    cost = system.cost
    if not np.isfinite(cost):
        raise SolverDiverged("initial cost is not finite")
    costs = [cost]
    lam = cfg.lambda_init
    iterations = 0
    converged = False
    if not np.any(system.gradient):
        converged = True
    while not converged and iterations < cfg.max_iterations:
        iterations += 1
        try:
            delta = solve_normal_equations(system, lam, cfg.linear_solver)
        except IndefiniteSystem:
            lam *= cfg.lambda_up
            if lam > cfg.lambda_max:
                raise
            continue
        if np.linalg.norm(delta) < cfg.step_norm_tol:
            converged = True
            break
        x_new = geo.batch_retract(x, delta.reshape(x.shape[0], -1))
        new_cost = evaluate_cost(graph, x_new, mu, c)
        if not np.isfinite(new_cost):
            raise SolverDiverged(f"cost became {new_cost} at iteration {iterations}")
        if new_cost <= cost:
            rel = (cost - new_cost) / max(cost, 1e-300)
            x, cost = x_new, new_cost
            costs.append(cost)
            lam = max(lam / cfg.lambda_down, 1e-12)
            system = linearize(graph, mu, x, c)
            if rel < cfg.rel_cost_tol or cost == 0.0:
                converged = True
        else:
            lam *= cfg.lambda_up
            if lam > cfg.lambda_max:
                # no descent is possible from here at any damping
                converged = True
    rp, rb = _residuals(graph, x)
    residuals = np.zeros((len(graph.factors), graph.tangent_dim))
    residuals[graph.prior_table.index] = rp
    residuals[graph.between_table.index] = rb
    log.debug("LM finished: %d iterations, cost %.6g, converged=%s", iterations, cost, converged)
    return SolveResult(x, cost, iterations, converged, residuals, costs)

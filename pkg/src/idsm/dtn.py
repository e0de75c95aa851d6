"""
Regularized Dirichlet-to-Neumann map through Robin solves.

For boundary data ``v`` the regularized map returns ``p = (v - T w) / alpha``
where ``w`` solves

    <A w, z> + (1/alpha) (T w, T z)_Gamma = (1/alpha) (v, T z)_Gamma.

The Robin term is positive on constants, so no mean-zero constraint is needed
even when ``A`` is a pure Neumann operator.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import fem
from .fem import SpdSolver
from .mesh import Mesh


class DtnContext:
    """
    Factorized Robin system ``A + (1/alpha) T^T M_Gamma T`` for one background
    operator ``A``.

    Parameters
    ----------
    A : sparse matrix
        Background operator (possibly with constants in its kernel).
    mesh : Mesh
    alpha : float
        Regularization, must be positive.
    singular : bool
        Whether ``A`` annihilates constants. The pullback then returns the
        boundary-mean-free representative, matching the mean-zero inverse of
        ``A`` used by the forward sensitivity.
    """

    def __init__(self, A, mesh: Mesh, alpha: float, singular: bool = False):
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.A = sp.csr_matrix(A)
        self.mesh = mesh
        self.alpha = float(alpha)
        self.singular = singular
        self.T = fem.trace_matrix(mesh)
        self.M_gamma = fem.boundary_mass(mesh)
        robin = (self.A + (self.T.T @ self.M_gamma @ self.T) / self.alpha).tocsr()
        self.robin = robin
        self._solver = SpdSolver(robin)
        self._perimeter = self.M_gamma.sum()

    def robin_solve(self, v) -> np.ndarray:
        """Domain field ``w`` of the Robin problem with datum ``v``."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.mesh.n_boundary,):
            raise ValueError(f"boundary datum must have {self.mesh.n_boundary} values")
        return self._solver.solve(self.T.T @ (self.M_gamma @ v) / self.alpha)

    def _mean_free(self, w):
        tw = w[self.mesh.boundary_nodes]
        return w - (self.M_gamma @ tw).sum() / self._perimeter


def dtn_apply(ctx: DtnContext, v) -> np.ndarray:
    """Boundary field ``Lambda_alpha(A) v``."""
    v = np.asarray(v, dtype=float)
    w = ctx.robin_solve(v)
    return (v - w[ctx.mesh.boundary_nodes]) / ctx.alpha


def dtn_pullback(ctx: DtnContext, v) -> np.ndarray:
    """
    Domain field ``w`` with ``B_tau[y]^* w = G^* Lambda^* Lambda v``.

    Two Robin solves sharing one factorization: the first recovers
    ``p = Lambda v`` from ``z + alpha dz/dn = v``, the second solves the Robin
    problem with datum ``p``. Pass the result to
    :func:`idsm.models.apply_btau_star`; no sign change is needed.
    """
    p = dtn_apply(ctx, v)
    w = ctx.robin_solve(p)
    return ctx._mean_free(w) if ctx.singular else w


def dtn_matrix(ctx: DtnContext) -> np.ndarray:
    """Dense matrix of ``Lambda_alpha(A)`` on boundary values (small meshes only)."""
    nb = ctx.mesh.n_boundary
    return np.column_stack([dtn_apply(ctx, e) for e in np.eye(nb)])


def dtn_apply_kkt(ctx: DtnContext, v) -> np.ndarray:
    """
    ``Lambda_alpha(A) v`` from the saddle-point form

        A w - T^T M_Gamma p = 0,   M_Gamma T w + alpha M_Gamma p = M_Gamma v.

    Kept as an independent check of the Robin elimination.
    """
    v = np.asarray(v, dtype=float)
    MT = ctx.M_gamma @ ctx.T
    K = sp.bmat([[ctx.A, -MT.T], [MT, ctx.alpha * ctx.M_gamma]], format="csc")
    rhs = np.concatenate([np.zeros(ctx.mesh.n_nodes), ctx.M_gamma @ v])
    sol = spla.spsolve(K, rhs)
    return sol[ctx.mesh.n_nodes :]

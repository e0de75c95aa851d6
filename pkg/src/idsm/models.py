"""
Elliptic models of the form ``A[y] y + B[u](y) = f`` and their discrete
operators.

Five models are supported:

========== ============================================ ==================
kind       equation                                     channels
========== ============================================ ==================
eit        -div((s0 + u) grad y) = 0, s0 dy/dn = f      u
cond_pot   -div((1 + uc) grad y) + (1 + uv) y = 0       u_c, u_v
dot        -lap y + u y = 0, dy/dn = f                  u
cardiac    -div(s~ grad y) + (1 - u) y^3 = f            u  (s~ = 1 + u(s-1))
nonsmooth  -lap y + y + u |y| y = f                     u
========== ============================================ ==================

The first three take a boundary current ``f``; the last two a domain source
with homogeneous Neumann data. Zero-order coefficient terms that carry the
inhomogeneity are discretized with the lumped mass, so that
:func:`apply_btau_star` is the exact adjoint of :func:`btau_apply` under the
lumped duality product.
"""

import ast
from dataclasses import dataclass, field
from functools import cached_property
import operator

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import SpdSolver
from .mesh import Mesh

KINDS = ("eit", "cond_pot", "dot", "cardiac", "nonsmooth")


class AdmissibilityError(ValueError):
    """Inhomogeneity outside the admissible set of the model."""


class NonlinearSolveError(RuntimeError):
    """Newton iteration failed to converge."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    sigma0: float = 1.0
    sigma: float = 1e-4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "eit" and not self.sigma0 > 0:
            raise ValueError("EIT background conductivity must be positive")
        if self.kind == "cardiac" and not 0 < self.sigma < 1:
            raise ValueError("cardiac inclusion conductivity must lie in (0, 1)")

    @property
    def channels(self) -> tuple:
        return ("u_c", "u_v") if self.kind == "cond_pot" else ("u",)

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def boundary_source(self) -> bool:
        return self.kind in ("eit", "cond_pot", "dot")

    @property
    def nonlinear_state(self) -> bool:
        """The state equation needs a Newton solve."""
        return self.kind in ("cardiac", "nonsmooth")

    @property
    def nonlinear_background(self) -> bool:
        """The background operator depends on the state."""
        return self.kind == "cardiac"


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "ln": np.log, "abs": np.abs}


def _compile(node):
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        v = float(node.value)
        return lambda x1, x2: v
    if isinstance(node, ast.Name) and node.id in ("x1", "x2"):
        return (lambda x1, x2: x1) if node.id == "x1" else (lambda x1, x2: x2)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op, lhs, rhs = _BINOPS[type(node.op)], _compile(node.left), _compile(node.right)
        return lambda x1, x2: op(lhs(x1, x2), rhs(x1, x2))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        arg = _compile(node.operand)
        sign = -1.0 if isinstance(node.op, ast.USub) else 1.0
        return lambda x1, x2: sign * arg(x1, x2)
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in _FUNCS
        and len(node.args) == 1
        and not node.keywords
    ):
        fn, arg = _FUNCS[node.func.id], _compile(node.args[0])
        return lambda x1, x2: fn(arg(x1, x2))
    raise ValueError(f"unsupported construct in source expression: {ast.dump(node)}")


def parse_expression(text: str):
    """
    Compile a closed-form expression in ``x1`` and ``x2``.

    Supports ``+ - * / ^``, unary minus, numbers and the functions
    ``sin cos exp ln abs``.
    """
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"cannot parse source expression {text!r}") from exc
    fn = _compile(tree)

    def evaluate(points):
        p = np.atleast_2d(points)
        return np.broadcast_to(np.asarray(fn(p[:, 0], p[:, 1]), dtype=float), (len(p),)).copy()

    return evaluate


@dataclass(frozen=True)
class SourceSpec:
    """Closed-form source ``f(x1, x2)`` placed on the boundary or in the domain."""

    expression: str
    placement: str = "boundary"

    def __post_init__(self):
        if self.placement not in ("boundary", "domain"):
            raise ValueError(f"placement must be 'boundary' or 'domain', got {self.placement!r}")
        parse_expression(self.expression)

    def __call__(self, points) -> np.ndarray:
        return parse_expression(self.expression)(points)


def as_inhomogeneity(model: ModelSpec, mesh: Mesh, u) -> np.ndarray:
    """Return ``u`` as an array of shape ``(n_channels, N)``."""
    if u is None or np.isscalar(u) and u == 0:
        return np.zeros((model.n_channels, mesh.n_nodes))
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u[None, :]
    if u.shape != (model.n_channels, mesh.n_nodes):
        raise ValueError(
            f"inhomogeneity shape {u.shape} does not match ({model.n_channels}, {mesh.n_nodes})"
        )
    if not np.all(np.isfinite(u)):
        raise ValueError("inhomogeneity has non-finite values")
    return u


def check_admissible(model: ModelSpec, u: np.ndarray, tol: float = 1e-12) -> None:
    k = model.kind
    if k == "eit" and np.any(model.sigma0 + u[0] < 0.01 - tol):
        raise AdmissibilityError("conductivity sigma0 + u drops below 0.01")
    if k == "cond_pot" and (np.any(1 + u[0] < 0.01 - tol) or np.any(1 + u[1] < 0.01 - tol)):
        raise AdmissibilityError("conductivity or potential coefficient drops below 0.01")
    if k in ("dot", "nonsmooth") and np.any(u[0] < -tol):
        raise AdmissibilityError(f"{k} coefficient must be nonnegative")
    if k == "cardiac" and (np.any(u[0] < -tol) or np.any(u[0] > 1 + tol)):
        raise AdmissibilityError("cardiac indicator must lie in [0, 1]")


class Discretization:
    """Cached mesh-level matrices shared by all model operations on one mesh."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh

    @cached_property
    def stiffness(self):
        return fem.assemble_weighted_stiffness(self.mesh, 1.0)

    @cached_property
    def mass(self):
        return fem.assemble_weighted_mass(self.mesh, 1.0)

    @cached_property
    def lumped(self):
        return fem.lumped_mass(self.mesh)

    @cached_property
    def local_stiffness(self):
        return fem.local_stiffness(self.mesh)


_DISC_CACHE = {}


def discretization(mesh: Mesh) -> Discretization:
    key = id(mesh)
    d = _DISC_CACHE.get(key)
    if d is None or d.mesh is not mesh:
        if len(_DISC_CACHE) > 16:
            _DISC_CACHE.clear()
        d = Discretization(mesh)
        _DISC_CACHE[key] = d
    return d


def source_load(model: ModelSpec, mesh: Mesh, source: SourceSpec) -> np.ndarray:
    """Dual vector of ``<f, v>`` for a boundary or domain source."""
    if source.placement == "boundary":
        g = source(mesh.nodes[mesh.boundary_nodes])
        return fem.assemble_boundary_load(mesh, g)
    return discretization(mesh).mass @ source(mesh.nodes)


def background_matrix(model: ModelSpec, mesh: Mesh, y_ref=None) -> sp.csr_matrix:
    """Discrete background operator ``A[y_ref]`` (``y_ref`` ignored unless cardiac)."""
    d = discretization(mesh)
    k = model.kind
    if k == "eit":
        return model.sigma0 * d.stiffness
    if k == "dot":
        return d.stiffness
    if k in ("cond_pot", "nonsmooth"):
        return (d.stiffness + d.mass).tocsr()
    y_ref = np.zeros(mesh.n_nodes) if y_ref is None else np.asarray(y_ref, dtype=float)
    return (d.stiffness + sp.diags(d.lumped * y_ref**2)).tocsr()


def background_singular(model: ModelSpec, y_ref=None) -> bool:
    """Whether ``A[y_ref]`` has the constants in its kernel."""
    if model.kind in ("eit", "dot"):
        return True
    if model.kind == "cardiac":
        return y_ref is None or not np.any(np.asarray(y_ref) != 0)
    return False


def background_solver(model: ModelSpec, mesh: Mesh, y_ref=None) -> SpdSolver:
    A = background_matrix(model, mesh, y_ref)
    constraint = "mean_zero_on_boundary" if background_singular(model, y_ref) else "none"
    return SpdSolver(A, constraint=constraint, mesh=mesh)


def btau_apply(model: ModelSpec, mesh: Mesh, y, u) -> np.ndarray:
    """Dual vector ``B_tau[y] u = B[u](y)``."""
    u = as_inhomogeneity(model, mesh, u)
    d = discretization(mesh)
    y = np.asarray(y, dtype=float)
    k = model.kind
    if k == "eit":
        return fem.assemble_weighted_stiffness(mesh, u[0]) @ y
    if k == "dot":
        return d.lumped * u[0] * y
    if k == "cond_pot":
        return fem.assemble_weighted_stiffness(mesh, u[0]) @ y + d.lumped * u[1] * y
    if k == "cardiac":
        return (model.sigma - 1.0) * (
            fem.assemble_weighted_stiffness(mesh, u[0]) @ y
        ) - d.lumped * u[0] * y**3
    return d.lumped * u[0] * np.abs(y) * y


def _grad_columns(mesh: Mesh, y, scale=1.0):
    """Sparse matrix of ``u -> K[u] y`` (nodal weight averaged per triangle)."""
    d = discretization(mesh)
    t = mesh.triangles
    local = np.einsum("tij,tj->ti", d.local_stiffness, y[t]) * (scale / 3.0)
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    vals = np.repeat(local, 3, axis=1).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def btau_matrix(model: ModelSpec, mesh: Mesh, y) -> sp.csr_matrix:
    """Matrix of ``u -> B_tau[y] u`` with channels stacked column-wise, (N, C*N)."""
    d = discretization(mesh)
    y = np.asarray(y, dtype=float)
    k = model.kind
    if k == "eit":
        return _grad_columns(mesh, y)
    if k == "dot":
        return sp.diags(d.lumped * y).tocsr()
    if k == "cond_pot":
        return sp.hstack([_grad_columns(mesh, y), sp.diags(d.lumped * y)]).tocsr()
    if k == "cardiac":
        return (_grad_columns(mesh, y, model.sigma - 1.0) - sp.diags(d.lumped * y**3)).tocsr()
    return sp.diags(d.lumped * np.abs(y) * y).tocsr()


def apply_btau_star(model: ModelSpec, mesh: Mesh, y, w) -> np.ndarray:
    """
    Adjoint ``B_tau[y]^* w`` as nodal fields, shape ``(n_channels, N)``.

    Gradient products are per-triangle constants lifted to nodes by area
    weighted averaging; zero-order terms are pointwise products.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    k = model.kind
    if k == "eit":
        return fem.gradient_product(mesh, y, w)[None]
    if k == "dot":
        return (y * w)[None]
    if k == "cond_pot":
        return np.stack([fem.gradient_product(mesh, y, w), y * w])
    if k == "cardiac":
        return ((model.sigma - 1.0) * fem.gradient_product(mesh, y, w) - y**3 * w)[None]
    return (np.abs(y) * y * w)[None]


def _linear_state_matrix(model: ModelSpec, mesh: Mesh, u):
    d = discretization(mesh)
    k = model.kind
    if k == "eit":
        return fem.assemble_weighted_stiffness(mesh, model.sigma0 + u[0])
    if k == "dot":
        return (d.stiffness + sp.diags(d.lumped * u[0])).tocsr()
    return (
        fem.assemble_weighted_stiffness(mesh, 1.0 + u[0]) + d.mass + sp.diags(d.lumped * u[1])
    ).tocsr()


def state_solver(model: ModelSpec, mesh: Mesh, u) -> SpdSolver:
    """Factorized ``A + B[u]`` for models linear in the state."""
    u = as_inhomogeneity(model, mesh, u)
    check_admissible(model, u)
    singular = model.kind == "eit" or (model.kind == "dot" and not np.any(u[0] != 0))
    constraint = "mean_zero_on_boundary" if singular else "none"
    return SpdSolver(_linear_state_matrix(model, mesh, u), constraint=constraint, mesh=mesh)


def _residual_and_jacobian(model, mesh, u, load, y, want_jac=True):
    d = discretization(mesh)
    if model.kind == "cardiac":
        K = fem.assemble_weighted_stiffness(mesh, 1.0 + (model.sigma - 1.0) * u[0])
        c = d.lumped * (1.0 - u[0])
        res = K @ y + c * y**3 - load
        jac = (K + sp.diags(3.0 * c * y**2)).tocsr() if want_jac else None
        size = abs(K) @ np.abs(y) + np.abs(c * y**3) + np.abs(load)
        return res, jac, size
    A = (d.stiffness + d.mass).tocsr()
    c = d.lumped * u[0]
    res = A @ y + c * np.abs(y) * y - load
    jac = (A + sp.diags(2.0 * c * np.abs(y))).tocsr() if want_jac else None
    size = abs(A) @ np.abs(y) + np.abs(c * y * y) + np.abs(load)
    return res, jac, size


def _default_init(model, mesh, u, load):
    if model.kind != "cardiac":
        return np.zeros(mesh.n_nodes)
    d = discretization(mesh)
    denom = np.sum(d.lumped * (1.0 - u[0]))
    total = load.sum()
    c = np.cbrt(total / denom) if denom > 0 else 0.0
    if c == 0.0 and np.any(load != 0):
        c = 0.1
    return np.full(mesh.n_nodes, c)


def newton_solve(
    model: ModelSpec,
    u,
    load,
    mesh: Mesh,
    init=None,
    rtol: float = 1e-10,
    maxiter: int = 50,
    max_halvings: int = 10,
):
    """
    Damped Newton iteration for the semilinear models.

    Stops when the residual is below ``rtol * |load|`` or, for tiny loads,
    below the rounding floor of the residual evaluation.

    Returns
    -------
    y : array, shape (N,)
    iterations : int
        Number of Newton steps taken.
    """
    u = as_inhomogeneity(model, mesh, u)
    load = np.asarray(load, dtype=float)
    y = _default_init(model, mesh, u, load) if init is None else np.array(init, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("Newton initial guess has non-finite values")
    target = rtol * np.linalg.norm(load)
    res, jac, size = _residual_and_jacobian(model, mesh, u, load, y)
    rnorm = np.linalg.norm(res)
    for it in range(maxiter + 1):
        floor = 64 * np.finfo(float).eps * np.linalg.norm(size)
        if rnorm <= max(target, floor):
            return y, it
        if it == maxiter:
            break
        step = -SpdSolver(jac, rtol=1e-8).solve(res)
        t = 1.0
        for _ in range(max_halvings + 1):
            y_new = y + t * step
            res_new, _, _ = _residual_and_jacobian(model, mesh, u, load, y_new, want_jac=False)
            if np.linalg.norm(res_new) < rnorm:
                break
            t *= 0.5
        y = y_new
        res, jac, size = _residual_and_jacobian(model, mesh, u, load, y)
        rnorm = np.linalg.norm(res)
    raise NonlinearSolveError(
        f"Newton did not converge in {maxiter} iterations (residual {rnorm:.3e})", rnorm
    )


def solve_state(model: ModelSpec, u, load, mesh: Mesh, init=None) -> np.ndarray:
    """Solve ``A[y] y + B[u](y) = load`` for a given dual load vector."""
    u = as_inhomogeneity(model, mesh, u)
    check_admissible(model, u)
    if model.nonlinear_state:
        return newton_solve(model, u, load, mesh, init=init)[0]
    return state_solver(model, mesh, u).solve(load)


def forward_solve(model: ModelSpec, u, source: SourceSpec, mesh: Mesh, init=None) -> np.ndarray:
    """Discrete weak solution of the model with inhomogeneity ``u`` and source ``f``."""
    return solve_state(model, u, source_load(model, mesh, source), mesh, init=init)


def background_solve(model: ModelSpec, y_ref, source: SourceSpec, mesh: Mesh) -> np.ndarray:
    """Solve ``A[y_ref] y0 = f``; ``y_ref`` only matters for the cardiac model."""
    load = source_load(model, mesh, source)
    return background_solver(model, mesh, y_ref).solve(load)

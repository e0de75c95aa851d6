"""
P1 finite elements on :class:`~idsm.mesh.Mesh`.

Coefficients are nodal fields averaged per triangle. All products of P1
functions are integrated exactly. The domain duality product used by the
sampling code is the row-sum lumped mass, see :func:`lumped_mass`.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh


class CompatibilityError(ValueError):
    """Right-hand side not orthogonal to the kernel of a singular system."""


class SolverError(RuntimeError):
    """A linear solve failed or did not reach the residual tolerance."""


def _check_nodal(mesh: Mesh, a, name="field"):
    a = np.asarray(a, dtype=float)
    if a.shape[-1] != mesh.n_nodes:
        raise ValueError(f"{name} has {a.shape[-1]} values, mesh has {mesh.n_nodes} nodes")
    return a


def _triangle_mean(mesh: Mesh, weight) -> np.ndarray:
    if np.isscalar(weight):
        return np.full(len(mesh.triangles), float(weight))
    w = _check_nodal(mesh, weight, "weight")
    return w[mesh.triangles].mean(axis=1)


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def local_stiffness(mesh: Mesh) -> np.ndarray:
    """Unweighted element stiffness matrices, shape (M, 3, 3)."""
    g = mesh.basis_gradients
    return np.einsum("tik,tjk->tij", g, g) * mesh.areas[:, None, None]


_MASS_PATTERN = (np.ones((3, 3)) + np.eye(3)) / 12.0


def local_mass(mesh: Mesh) -> np.ndarray:
    """Unweighted element mass matrices, shape (M, 3, 3)."""
    return mesh.areas[:, None, None] * _MASS_PATTERN[None]


def assemble_weighted_stiffness(mesh: Mesh, weight=1.0) -> sp.csr_matrix:
    """Matrix of ``(w grad phi_j, grad phi_i)`` with ``w`` averaged per triangle."""
    wbar = _triangle_mean(mesh, weight)
    return _scatter(mesh, wbar[:, None, None] * local_stiffness(mesh))


def assemble_weighted_mass(mesh: Mesh, weight=1.0) -> sp.csr_matrix:
    """Consistent mass matrix of ``(w phi_j, phi_i)`` with ``w`` averaged per triangle."""
    wbar = _triangle_mean(mesh, weight)
    return _scatter(mesh, wbar[:, None, None] * local_mass(mesh))


def lumped_mass(mesh: Mesh) -> np.ndarray:
    """
    Row sums of the unweighted mass matrix, i.e. one third of the area of the
    triangles sharing each node.

    These weights realize the duality product between nodal fields,
    ``<a, b> = sum_i m_i a_i b_i``. With this product the pointwise and
    area-averaged formulas used for adjoint coefficient maps are exact
    discrete adjoints.
    """
    m = np.zeros(mesh.n_nodes)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(mesh.areas / 3.0, 3))
    return m


def boundary_mass(mesh: Mesh) -> sp.csr_matrix:
    """Boundary mass matrix acting on boundary-ordered values, shape (B, B)."""
    nb = mesh.n_boundary
    L = mesh.edge_lengths_boundary
    i = np.arange(nb)
    j = (i + 1) % nb
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([L / 3.0, L / 3.0, L / 6.0, L / 6.0])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nb, nb))


def trace_matrix(mesh: Mesh) -> sp.csr_matrix:
    """Restriction from nodal values to boundary-ordered values, shape (B, N)."""
    nb = mesh.n_boundary
    return sp.csr_matrix(
        (np.ones(nb), (np.arange(nb), mesh.boundary_nodes)), shape=(nb, mesh.n_nodes)
    )


def assemble_boundary_mass(mesh: Mesh) -> sp.csr_matrix:
    """Boundary mass embedded in the full nodal space, shape (N, N)."""
    T = trace_matrix(mesh)
    return (T.T @ boundary_mass(mesh) @ T).tocsr()


def trace(mesh: Mesh, y) -> np.ndarray:
    return np.asarray(y)[..., mesh.boundary_nodes]


def extend_by_zero(mesh: Mesh, g) -> np.ndarray:
    out = np.zeros(mesh.n_nodes)
    out[mesh.boundary_nodes] = g
    return out


def assemble_boundary_load(mesh: Mesh, g) -> np.ndarray:
    """Dual vector of ``int_Gamma g v ds`` for boundary-ordered ``g``."""
    g = np.asarray(g, dtype=float)
    if g.shape != (mesh.n_boundary,):
        raise ValueError(f"boundary field must have {mesh.n_boundary} values")
    return extend_by_zero(mesh, boundary_mass(mesh) @ g)


def triangle_gradients(mesh: Mesh, y) -> np.ndarray:
    """Per-triangle gradient of a P1 field, shape (M, 2)."""
    y = _check_nodal(mesh, y)
    return np.einsum("tik,ti->tk", mesh.basis_gradients, y[mesh.triangles])


def area_average(mesh: Mesh, per_triangle) -> np.ndarray:
    """Lift a per-triangle constant to nodes by area-weighted averaging."""
    acc = np.zeros(mesh.n_nodes)
    np.add.at(acc, mesh.triangles.ravel(), np.repeat(per_triangle * mesh.areas, 3))
    wsum = np.zeros(mesh.n_nodes)
    np.add.at(wsum, mesh.triangles.ravel(), np.repeat(mesh.areas, 3))
    return acc / wsum


def gradient_product(mesh: Mesh, y, w) -> np.ndarray:
    """Nodal ``grad y . grad w``, area-averaged from the triangle values."""
    gy = triangle_gradients(mesh, y)
    gw = triangle_gradients(mesh, w)
    return area_average(mesh, np.einsum("tk,tk->t", gy, gw))


def inner_domain(mesh: Mesh, a, b) -> float:
    """Duality product ``sum_i m_i a_i b_i`` summed over any leading channel axis."""
    a = _check_nodal(mesh, a)
    b = _check_nodal(mesh, b)
    return float(np.sum(lumped_mass(mesh) * a * b))


def inner_boundary(mesh: Mesh, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape[-1] != mesh.n_boundary or b.shape[-1] != mesh.n_boundary:
        raise ValueError("boundary field size does not match the mesh")
    return float(a @ (boundary_mass(mesh) @ b))


def norm_l1_domain(mesh: Mesh, a) -> float:
    """Sum over triangles and channels of ``area * mean(|a|)``."""
    a = np.abs(_check_nodal(mesh, a))
    return float(np.sum(a[..., mesh.triangles].mean(axis=-1) * mesh.areas))


def norm_l2_domain(mesh: Mesh, a) -> float:
    return float(np.sqrt(max(inner_domain(mesh, a, a), 0.0)))


class SpdSolver:
    """
    Sparse direct factorization of a symmetric system, reusable across
    right-hand sides.

    With ``constraint="mean_zero_on_boundary"`` the matrix is bordered by the
    functional ``v -> int_Gamma v ds``, which removes a constant kernel and
    pins the boundary mean of the solution to zero.
    """

    def __init__(self, system, constraint: str = "none", mesh: Mesh = None, rtol: float = 1e-10):
        system = sp.csr_matrix(system)
        self.n = system.shape[0]
        self.system = system
        self.constraint = constraint
        self.rtol = rtol
        if constraint == "mean_zero_on_boundary":
            if mesh is None:
                raise ValueError("mean-zero constraint needs the mesh")
            c = assemble_boundary_load(mesh, np.ones(mesh.n_boundary))
            self._c = c
            scale = abs(system).max() / max(c.max(), 1e-300)
            self._scale = scale
            border = sp.csr_matrix(scale * c[None, :])
            bordered = sp.bmat([[system, border.T], [border, None]], format="csc")
            self._lu = self._factor(bordered)
        elif constraint == "none":
            self._lu = self._factor(system.tocsc())
        else:
            raise ValueError(f"unknown constraint {constraint!r}")

    @staticmethod
    def _factor(mat):
        try:
            return spla.splu(mat, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(f"factorization failed: {exc}") from exc

    def solve(self, rhs, strict: bool = True) -> np.ndarray:
        """
        Solve for one or several right-hand sides (last axis is the node axis
        for 2-D input). With ``strict=False`` an incompatible right-hand side
        is projected onto the range instead of raising.
        """
        rhs = np.asarray(rhs, dtype=float)
        if rhs.ndim == 2:
            return np.stack([self.solve(r, strict) for r in rhs])
        if self.constraint == "mean_zero_on_boundary":
            total = rhs.sum()
            if strict and abs(total) > 1e-8 * max(np.abs(rhs).sum(), 1e-300):
                raise CompatibilityError(
                    f"right-hand side has nonzero total {total:.3e} for a singular system"
                )
            sol = self._lu.solve(np.append(rhs, 0.0))
            x = sol[:-1]
            lam = sol[-1] * self._scale
            resid = self.system @ x + lam * self._c - rhs
        else:
            x = self._lu.solve(rhs)
            resid = self.system @ x - rhs
        if not np.all(np.isfinite(x)):
            raise SolverError("solve produced non-finite values")
        bnorm = np.linalg.norm(rhs)
        if np.linalg.norm(resid) > self.rtol * max(bnorm, 1e-300) and bnorm > 0:
            x = self._refine(x, rhs)
        return x

    def _refine(self, x, rhs):
        # one step of iterative refinement for mildly ill-conditioned systems
        for _ in range(3):
            if self.constraint == "mean_zero_on_boundary":
                r = rhs - self.system @ x
                r = r - self._c * (r.sum() / self._c.sum())
                dx = self._lu.solve(np.append(r, 0.0))[:-1]
            else:
                r = rhs - self.system @ x
                dx = self._lu.solve(r)
            x = x + dx
            r = rhs - self.system @ x
            if self.constraint == "mean_zero_on_boundary":
                r = r - self._c * (r.sum() / self._c.sum())
            if np.linalg.norm(r) <= self.rtol * np.linalg.norm(rhs):
                return x
        raise SolverError(
            f"residual {np.linalg.norm(r) / np.linalg.norm(rhs):.3e} above tolerance {self.rtol:g}"
        )


def solve_spd(system, rhs, constraint: str = "none", mesh: Mesh = None) -> np.ndarray:
    """One-shot convenience wrapper around :class:`SpdSolver`."""
    return SpdSolver(system, constraint=constraint, mesh=mesh).solve(rhs)

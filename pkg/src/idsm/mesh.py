"""
Triangular meshes of elliptical domains.

The generator maps a structured ring triangulation of the unit disk through
``(x1, x2) -> (a x1, b x2)`` and relaxes interior nodes with a few Laplacian
smoothing passes. Boundary nodes stay on the ellipse and are ordered
counterclockwise starting from the point ``(a, 0)``.
"""

from dataclasses import dataclass
from functools import cached_property
import math

import numpy as np
from scipy.spatial import cKDTree


class MeshError(ValueError):
    """Invalid domain specification or malformed triangulation."""


class OutOfDomainError(ValueError):
    """A point lies outside the source mesh beyond the allowed tolerance."""


@dataclass(frozen=True)
class DomainSpec:
    """Ellipse ``x1^2/a^2 + x2^2/b^2 < 1`` meshed with target edge length ``h``."""

    a: float = 1.0
    b: float = 0.8
    h: float = 0.04

    def validate(self):
        vals = (self.a, self.b, self.h)
        if not all(np.isfinite(vals)):
            raise MeshError(f"non-finite domain spec {self}")
        if self.a <= 0 or self.b <= 0 or self.h <= 0:
            raise MeshError(f"semi-axes and h must be positive, got {self}")
        if self.h >= min(self.a, self.b):
            raise MeshError(f"h={self.h} must be smaller than min(a, b)")


@dataclass(frozen=True, eq=False)
class Mesh:
    """
    Conforming P1 triangulation with an ordered boundary polyline.

    Parameters
    ----------
    nodes : array, shape (N, 2)
    triangles : array, shape (M, 3)
        Counterclockwise node indices.
    boundary_nodes : array, shape (B,)
        Boundary node indices in counterclockwise order; the polyline closes
        from the last entry back to the first.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=float)
        tris = np.ascontiguousarray(self.triangles, dtype=np.int64)
        bnd = np.ascontiguousarray(self.boundary_nodes, dtype=np.int64)
        for arr in (nodes, tris, bnd):
            arr.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_nodes", bnd)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_nodes.shape[0]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        b = self.boundary_nodes
        return np.column_stack([b, np.roll(b, -1)])

    @cached_property
    def edge_lengths_boundary(self) -> np.ndarray:
        e = self.boundary_edges
        return np.linalg.norm(self.nodes[e[:, 1]] - self.nodes[e[:, 0]], axis=1)

    @cached_property
    def arclength(self) -> np.ndarray:
        """Cumulative arclength at each boundary node, zero at the first one."""
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths_boundary)[:-1]])

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths_boundary.sum())

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Constant gradients of the three hat functions per triangle, (M, 3, 2)."""
        p = self.nodes[self.triangles]
        x, y = p[..., 0], p[..., 1]
        twice = 2.0 * self.areas
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([gx, gy], axis=2) / twice[:, None, None]

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted node pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def max_edge_length(self) -> float:
        e = self.edges
        return float(np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1).max())

    @cached_property
    def _centroid_tree(self):
        return cKDTree(self.nodes[self.triangles].mean(axis=1))


def check_mesh(mesh: Mesh) -> None:
    """Raise :class:`MeshError` unless the mesh is a valid edge-manifold disk."""
    tris = mesh.triangles
    n = mesh.n_nodes
    if tris.min() < 0 or tris.max() >= n:
        raise MeshError("triangle index out of range")
    if np.any(mesh.areas <= 0):
        raise MeshError(f"{int(np.sum(mesh.areas <= 0))} triangles with non-positive area")

    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    undirected, counts = np.unique(np.sort(directed, axis=1), axis=0, return_counts=True)
    if np.any(counts > 2):
        raise MeshError("edge shared by more than two triangles")
    # a boundary edge appears once, oriented along the ccw boundary
    once = undirected[counts == 1]
    bedges = mesh.boundary_edges
    if len(once) != len(bedges):
        raise MeshError("boundary polyline does not match the single-triangle edges")
    dset = {tuple(e) for e in directed.tolist()}
    for i, j in bedges.tolist():
        if (i, j) not in dset:
            raise MeshError(f"boundary edge ({i}, {j}) not counterclockwise")
    if set(map(tuple, np.sort(bedges, axis=1).tolist())) != set(map(tuple, once.tolist())):
        raise MeshError("boundary polyline is not the mesh boundary")
    if len(np.unique(mesh.boundary_nodes)) != mesh.n_boundary:
        raise MeshError("boundary polyline is not simple")
    if np.any(np.diff(mesh.arclength) <= 0):
        raise MeshError("arclength is not strictly increasing")


def _ring_angles(count: int, offset: float) -> np.ndarray:
    return offset + 2.0 * np.pi * np.arange(count) / count


def _stitch(inner_idx, inner_ang, outer_idx, outer_ang):
    """Triangulate the annulus between two rings by merging their angles."""
    ni, no = len(inner_idx), len(outer_idx)
    ia = np.append(inner_ang, inner_ang[0] + 2 * np.pi)
    oa = np.append(outer_ang, outer_ang[0] + 2 * np.pi)
    tris = []
    i = j = 0
    while i < ni or j < no:
        advance_outer = i == ni or (j < no and oa[j + 1] <= ia[i + 1])
        a, b = inner_idx[i % ni], outer_idx[j % no]
        if advance_outer:
            tris.append((a, b, outer_idx[(j + 1) % no]))
            j += 1
        else:
            tris.append((a, b, inner_idx[(i + 1) % ni]))
            i += 1
    return tris


def _laplace_smooth(nodes, triangles, fixed, passes):
    n = len(nodes)
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.unique(np.sort(e, axis=1), axis=0)
    deg = np.bincount(e.ravel(), minlength=n).astype(float)
    free = ~fixed
    for _ in range(passes):
        acc = np.zeros_like(nodes)
        np.add.at(acc, e[:, 0], nodes[e[:, 1]])
        np.add.at(acc, e[:, 1], nodes[e[:, 0]])
        trial = nodes.copy()
        trial[free] = acc[free] / deg[free, None]
        p = trial[triangles]
        area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 1, 1] - p[:, 0, 1]
        ) * (p[:, 2, 0] - p[:, 0, 0])
        if np.any(area <= 0):
            break
        nodes = trial
    return nodes


def build_ellipse_mesh(spec: DomainSpec, twist: float = 0.0, smoothing_passes: int = 5) -> Mesh:
    """
    Triangulate the ellipse described by ``spec``.

    Parameters
    ----------
    spec : DomainSpec
    twist : float
        Angular offset of interior rings as a fraction of the local node
        spacing. A nonzero twist yields a triangulation that does not nest
        with the untwisted one, which is used for data meshes.
    smoothing_passes : int
        Laplacian smoothing sweeps over interior nodes.

    Returns
    -------
    Mesh
    """
    spec.validate()
    n = int(math.ceil(max(spec.a, spec.b) / spec.h - 1e-9))
    n = max(n, 2)
    coords = [(0.0, 0.0)]
    rings_idx = [np.array([0])]
    rings_ang = [np.array([0.0])]
    for i in range(1, n + 1):
        count = 6 * i
        off = 0.0 if i == n else twist * (2 * np.pi / count) * (i % 2)
        ang = _ring_angles(count, off)
        r = i / n
        start = len(coords)
        coords.extend(zip(r * np.cos(ang), r * np.sin(ang)))
        rings_idx.append(np.arange(start, start + count))
        rings_ang.append(ang)

    tris = []
    first = rings_idx[1]
    for j in range(len(first)):
        tris.append((0, first[j], first[(j + 1) % len(first)]))
    for i in range(1, n):
        tris.extend(_stitch(rings_idx[i], rings_ang[i], rings_idx[i + 1], rings_ang[i + 1]))

    nodes = np.array(coords)
    nodes[:, 0] *= spec.a
    nodes[:, 1] *= spec.b
    triangles = np.array(tris, dtype=np.int64)
    boundary = rings_idx[n]
    # exact placement on the ellipse
    nodes[boundary, 0] = spec.a * np.cos(rings_ang[n])
    nodes[boundary, 1] = spec.b * np.sin(rings_ang[n])
    fixed = np.zeros(len(nodes), dtype=bool)
    fixed[boundary] = True
    nodes = _laplace_smooth(nodes, triangles, fixed, smoothing_passes)

    mesh = Mesh(nodes, triangles, boundary)
    check_mesh(mesh)
    return mesh


def _point_segment_distance(points, a, b):
    """Distances from every point to every segment, shape (P, S)."""
    ab = b - a
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ap = points[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("psk,sk->ps", ap, ab) / ab2[None, :], 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


def distance_to_boundary(mesh: Mesh, chunk: int = 2048) -> np.ndarray:
    """Euclidean distance from each node to the boundary polyline."""
    e = mesh.boundary_edges
    a, b = mesh.nodes[e[:, 0]], mesh.nodes[e[:, 1]]
    out = np.empty(mesh.n_nodes)
    for s in range(0, mesh.n_nodes, chunk):
        out[s:s + chunk] = _point_segment_distance(mesh.nodes[s:s + chunk], a, b).min(axis=1)
    out[mesh.boundary_nodes] = 0.0
    return out


def _barycentric(mesh, tri_ids, points):
    p = mesh.nodes[mesh.triangles[tri_ids]]
    v0 = p[:, 1] - p[:, 0]
    v1 = p[:, 2] - p[:, 0]
    v2 = points - p[:, 0]
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    return np.stack([1.0 - l1 - l2, l1, l2], axis=1)


def locate_points(mesh: Mesh, points: np.ndarray, tol: float = 1e-10, k: int = 12):
    """
    Find containing triangles and barycentric weights for ``points``.

    Points outside the mesh but within ``tol`` of it are snapped onto the
    nearest triangle. Anything farther raises :class:`OutOfDomainError`.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    npts = len(points)
    k = min(k, len(mesh.triangles))
    _, cand = mesh._centroid_tree.query(points, k=k)
    cand = np.atleast_2d(cand).reshape(npts, k)
    best_tri = np.full(npts, -1)
    best_lam = np.zeros((npts, 3))
    best_min = np.full(npts, -np.inf)
    for c in range(k):
        lam = _barycentric(mesh, cand[:, c], points)
        m = lam.min(axis=1)
        better = m > best_min
        best_min[better] = m[better]
        best_tri[better] = cand[better, c]
        best_lam[better] = lam[better]
    missing = np.flatnonzero(best_min < -1e-12)
    for idx in missing:
        tri, lam = _nearest_triangle(mesh, points[idx], tol)
        best_tri[idx], best_lam[idx] = tri, lam
    return best_tri, best_lam


def _nearest_triangle(mesh, point, tol):
    all_t = np.arange(len(mesh.triangles))
    lam = _barycentric(mesh, all_t, np.broadcast_to(point, (len(all_t), 2)))
    inside = np.flatnonzero(lam.min(axis=1) >= -1e-12)
    if len(inside):
        return inside[0], lam[inside[0]]
    p = mesh.nodes[mesh.triangles]
    dist = np.full(len(all_t), np.inf)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        d = _point_segment_distance(point[None], p[:, a], p[:, b])[0]
        dist = np.minimum(dist, d)
    t = int(np.argmin(dist))
    if dist[t] > tol:
        raise OutOfDomainError(f"point {point.tolist()} lies {dist[t]:.3e} outside the mesh")
    l = np.clip(lam[t], 0.0, None)
    return t, l / l.sum()


def interpolate(field: np.ndarray, source: Mesh, target, tol: float = 1e-10) -> np.ndarray:
    """
    P1 interpolation of a nodal field from ``source`` to the nodes of ``target``.

    ``target`` may be a :class:`Mesh` or an array of points.
    """
    pts = target.nodes if isinstance(target, Mesh) else np.asarray(target, dtype=float)
    field = np.asarray(field, dtype=float)
    tri, lam = locate_points(source, pts, tol=tol)
    vals = field[..., source.triangles[tri]]
    return np.einsum("...pk,pk->...p", vals, lam)

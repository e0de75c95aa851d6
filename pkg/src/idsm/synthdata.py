"""
Synthetic inclusions and noisy Cauchy data.

Exact data are produced on a fine mesh and transferred to the boundary of
the reconstruction mesh by arclength-linear interpolation along the fine
polyline. Noise follows

    y_d = y* + eps * delta * |y_0 - y*|,    delta ~ U(-1, 1) i.i.d. per node,

where ``y_0`` is the trace of the solution without inclusion.
"""

from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh
from .models import ModelSpec, SourceSpec, forward_solve


class GeometryError(ValueError):
    """Inclusion shapes overlap, leave the domain or are malformed."""


@dataclass(frozen=True)
class Square:
    """Axis-aligned square; ``values`` holds one coefficient per channel."""

    cx: float
    cy: float
    half: float
    values: tuple

    def contains(self, pts, tol=1e-12):
        return (np.abs(pts[:, 0] - self.cx) <= self.half + tol) & (
            np.abs(pts[:, 1] - self.cy) <= self.half + tol
        )

    def outline(self, n=400):
        t = np.linspace(-1, 1, n // 4, endpoint=False)
        h = self.half
        xs = np.concatenate([t, np.ones_like(t), -t, -np.ones_like(t)]) * h + self.cx
        ys = np.concatenate([-np.ones_like(t), t, np.ones_like(t), -t]) * h + self.cy
        return np.column_stack([xs, ys])

    def distance(self, p):
        """Euclidean distance from points to the closed square."""
        dx = np.maximum(np.abs(p[:, 0] - self.cx) - self.half, 0.0)
        dy = np.maximum(np.abs(p[:, 1] - self.cy) - self.half, 0.0)
        return np.hypot(dx, dy)


@dataclass(frozen=True)
class Circle:
    cx: float
    cy: float
    r: float
    values: tuple

    def contains(self, pts, tol=1e-12):
        return np.hypot(pts[:, 0] - self.cx, pts[:, 1] - self.cy) <= self.r + tol

    def outline(self, n=400):
        t = np.linspace(0, 2 * np.pi, n, endpoint=False)
        return np.column_stack([self.cx + self.r * np.cos(t), self.cy + self.r * np.sin(t)])

    def distance(self, p):
        return np.maximum(np.hypot(p[:, 0] - self.cx, p[:, 1] - self.cy) - self.r, 0.0)


def _size(shape):
    return shape.half if isinstance(shape, Square) else shape.r


@dataclass(frozen=True)
class InclusionGeometry:
    shapes: tuple = ()
    n_channels: int = 1

    def validate(self, a: float = 1.0, b: float = 0.8, margin: float = 0.0):
        """
        Check shape sizes, channel counts, pairwise disjointness and a
        clearance of at least ``margin`` from the ellipse boundary.
        """
        theta = np.linspace(0, 2 * np.pi, 4096, endpoint=False)
        ellipse = np.column_stack([a * np.cos(theta), b * np.sin(theta)])
        for s in self.shapes:
            if not _size(s) > 0:
                raise GeometryError(f"shape {s} has nonpositive size")
            if len(s.values) != self.n_channels:
                raise GeometryError(f"shape {s} needs {self.n_channels} channel values")
            pts = s.outline()
            inside = (pts[:, 0] / a) ** 2 + (pts[:, 1] / b) ** 2 < 1
            if not np.all(inside) or s.distance(ellipse).min() < margin:
                raise GeometryError(f"shape {s} is not at least {margin} inside the domain")
        self.check_disjoint()

    def check_disjoint(self):
        for i, s in enumerate(self.shapes):
            for t in self.shapes[i + 1 :]:
                if _overlap(s, t):
                    raise GeometryError(f"shapes {s} and {t} overlap")


def _overlap(s, t):
    if isinstance(s, Square) and isinstance(t, Square):
        return abs(s.cx - t.cx) <= s.half + t.half and abs(s.cy - t.cy) <= s.half + t.half
    if isinstance(s, Circle) and isinstance(t, Circle):
        return np.hypot(s.cx - t.cx, s.cy - t.cy) <= s.r + t.r
    sq, ci = (s, t) if isinstance(s, Square) else (t, s)
    return sq.distance(np.array([[ci.cx, ci.cy]]))[0] <= ci.r


def rasterize_truth(geom: InclusionGeometry, mesh: Mesh) -> np.ndarray:
    """Nodal coefficient field, shape (C, N): shape values inside, zero outside."""
    geom.check_disjoint()
    u = np.zeros((geom.n_channels, mesh.n_nodes))
    for s in geom.shapes:
        mask = s.contains(mesh.nodes)
        u[:, mask] = np.asarray(s.values, dtype=float)[:, None]
    return u


def transfer_boundary(source: Mesh, values, target: Mesh) -> np.ndarray:
    """
    Move boundary values from ``source`` to the boundary nodes of ``target``.

    Each target node is projected onto the closest segment of the source
    boundary polyline and the values at the segment ends are interpolated
    linearly along it.
    """
    values = np.asarray(values, dtype=float)
    p = source.nodes[source.boundary_nodes]
    q = np.roll(p, -1, axis=0)
    vq = np.roll(values, -1)
    d = q - p
    seg2 = (d**2).sum(axis=1)
    pts = target.nodes[target.boundary_nodes]
    out = np.empty(len(pts))
    for i, x in enumerate(pts):
        t = np.clip(((x - p) * d).sum(axis=1) / seg2, 0.0, 1.0)
        dist = (((p + t[:, None] * d) - x) ** 2).sum(axis=1)
        j = int(np.argmin(dist))
        out[i] = (1 - t[j]) * values[j] + t[j] * vq[j]
    return out


def simulate_measurement(
    model: ModelSpec, geom: InclusionGeometry, source: SourceSpec, fine: Mesh, coarse: Mesh
):
    """
    Exact trace of the state with inclusion ``geom`` and of the state without
    inclusion, both computed on ``fine`` and transferred to ``coarse``.

    Returns
    -------
    exact, background0 : arrays of shape (coarse.n_boundary,)
    """
    u = rasterize_truth(geom, fine)
    y = forward_solve(model, u, source, fine)
    y0 = forward_solve(model, 0, source, fine)
    bn = fine.boundary_nodes
    return transfer_boundary(fine, y[bn], coarse), transfer_boundary(fine, y0[bn], coarse)


def pair_rng(seed: int, index: int) -> np.random.Generator:
    """PCG64 stream for pair ``index``, split from the master ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def add_noise(y_exact, y_background0, epsilon: float, seed: int = 0, index: int = 0, delta=None):
    """
    Multiplicative uniform noise on the scattering amplitude.

    ``delta`` overrides the random draw (test hook); otherwise it is drawn from
    :func:`pair_rng` with ``(seed, index)``.
    """
    y_exact = np.asarray(y_exact, dtype=float)
    amp = np.abs(np.asarray(y_background0, dtype=float) - y_exact)
    if epsilon < 0:
        raise ValueError("noise level must be nonnegative")
    if delta is None:
        delta = pair_rng(seed, index).uniform(-1.0, 1.0, size=y_exact.shape)
    return y_exact + epsilon * np.asarray(delta) * amp


@dataclass
class CauchyPair:
    source: SourceSpec
    measurement: np.ndarray
    epsilon: float = 0.0
    seed: int = 0
    exact: np.ndarray = None
    background0: np.ndarray = None


@dataclass
class Dataset:
    pairs: list
    truth: np.ndarray
    geometry: InclusionGeometry
    model: ModelSpec
    meta: dict = field(default_factory=dict)


def generate_dataset(
    model: ModelSpec,
    geom: InclusionGeometry,
    sources,
    fine: Mesh,
    coarse: Mesh,
    epsilon: float,
    seed: int,
) -> Dataset:
    """
    Noisy Cauchy pairs on ``coarse`` for every source, with independent noise
    streams per pair.

    For models whose inclusion-free problem is pure Neumann the background
    trace is only defined up to a constant; it is shifted to match the
    boundary mean of the exact trace before entering the noise amplitude.
    """
    if model.n_channels != geom.n_channels:
        raise GeometryError("geometry channels do not match the model")
    pairs = []
    for idx, src in enumerate(sources):
        exact, bg0 = simulate_measurement(model, geom, src, fine, coarse)
        if model.kind == "dot":
            w = coarse.edge_lengths_boundary
            wts = 0.5 * (w + np.roll(w, 1))
            bg0 = bg0 + np.sum(wts * (exact - bg0)) / wts.sum()
        yd = add_noise(exact, bg0, epsilon, seed, idx)
        pairs.append(CauchyPair(src, yd, epsilon, seed, exact, bg0))
    return Dataset(pairs, rasterize_truth(geom, coarse), geom, model)

"""
Quantitative scores for reconstructions.

Supports are taken where ``|field| >= 0.5 * max|field|`` (per channel,
united across channels) and measured with the lumped nodal mass.
"""

import numpy as np

from . import fem
from .mesh import Mesh


def relative_l2_error(mesh: Mesh, u, u_true) -> float:
    """``|u - u*| / |u*|`` in L2, or the absolute error when ``u* = 0``."""
    u = np.atleast_2d(u)
    u_true = np.atleast_2d(u_true)
    err = fem.norm_l2_domain(mesh, u - u_true)
    ref = fem.norm_l2_domain(mesh, u_true)
    return err / ref if ref > 0 else err


def support_mask(field, threshold: float = 0.5) -> np.ndarray:
    field = np.abs(np.atleast_2d(field))
    peak = field.max(axis=1, keepdims=True)
    mask = (field >= threshold * peak) & (peak > 0)
    return mask.any(axis=0)


def support_centroid(mesh: Mesh, mask):
    m = fem.lumped_mass(mesh) * mask
    total = m.sum()
    if total == 0:
        return None
    return (m[:, None] * mesh.nodes).sum(axis=0) / total


def centroid_error(mesh: Mesh, u, u_true, threshold: float = 0.5) -> float:
    """Distance between the support centroids; ``nan`` when either support is empty."""
    a = support_centroid(mesh, support_mask(u, threshold))
    b = support_centroid(mesh, (np.atleast_2d(u_true) != 0).any(axis=0))
    if a is None or b is None:
        return float("nan")
    return float(np.hypot(*(a - b)))


def jaccard_index(mesh: Mesh, u, u_true, threshold: float = 0.5) -> float:
    """Mass-weighted intersection over union of estimated and true supports."""
    est = support_mask(u, threshold)
    tru = (np.atleast_2d(u_true) != 0).any(axis=0)
    m = fem.lumped_mass(mesh)
    union = m[est | tru].sum()
    if union == 0:
        return 1.0
    return float(m[est & tru].sum() / union)


def evaluate(mesh: Mesh, u, u_true) -> dict:
    return {
        "l2_error": relative_l2_error(mesh, u, u_true),
        "centroid_error": centroid_error(mesh, u, u_true),
        "jaccard": jaccard_index(mesh, u, u_true),
    }

import numpy as np
import pytest

from idsm import fem
from idsm.metrics import centroid_error, evaluate, jaccard_index, relative_l2_error, support_centroid, support_mask
from idsm.synthdata import InclusionGeometry, Square, rasterize_truth


@pytest.fixture
def truth(medium_mesh):
    return rasterize_truth(InclusionGeometry((Square(0.3, 0.2, 0.2, (-0.7,)),)), medium_mesh)


def test_perfect_reconstruction(medium_mesh, truth):
    m = evaluate(medium_mesh, truth, truth)
    assert m["l2_error"] == 0 and m["centroid_error"] == pytest.approx(0, abs=1e-15) and m["jaccard"] == 1


def test_zero_estimate(medium_mesh, truth):
    zero = np.zeros_like(truth)
    assert relative_l2_error(medium_mesh, zero, truth) == pytest.approx(1.0)
    assert np.isnan(centroid_error(medium_mesh, zero, truth))
    assert jaccard_index(medium_mesh, zero, truth) == 0


def test_absolute_error_for_zero_truth(medium_mesh):
    u = np.full((1, medium_mesh.n_nodes), 2.0)
    err = relative_l2_error(medium_mesh, u, np.zeros_like(u))
    assert err == pytest.approx(2 * np.sqrt(fem.lumped_mass(medium_mesh).sum()))
    assert jaccard_index(medium_mesh, np.zeros_like(u), np.zeros_like(u)) == 1


def test_threshold_is_half_of_peak_per_channel():
    field = np.array([[0.0, -0.4, -1.0, 0.6], [0.0, 10.0, 0.0, 4.0]])
    np.testing.assert_array_equal(support_mask(field), [False, True, True, True])


def test_shifted_square_centroid(medium_mesh, truth):
    moved = rasterize_truth(InclusionGeometry((Square(0.0, 0.2, 0.2, (-0.7,)),)), medium_mesh)
    assert centroid_error(medium_mesh, moved, truth) == pytest.approx(0.3, abs=0.03)
    assert jaccard_index(medium_mesh, moved, truth) < 0.35


def test_centroid_of_symmetric_support(disk_mesh):
    mask = np.linalg.norm(disk_mesh.nodes, axis=1) < 0.5
    # the unstructured mesh is only approximately symmetric, O(h^2) offset
    np.testing.assert_allclose(support_centroid(disk_mesh, mask), [0, 0], atol=5e-3)

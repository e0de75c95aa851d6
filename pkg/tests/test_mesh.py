import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idsm.mesh import (
    DomainSpec,
    Mesh,
    MeshError,
    OutOfDomainError,
    build_ellipse_mesh,
    check_mesh,
    distance_to_boundary,
    interpolate,
    locate_points,
)


def test_boundary_nodes_lie_on_ellipse(small_mesh):
    p = small_mesh.nodes[small_mesh.boundary_nodes]
    np.testing.assert_allclose((p[:, 0] / 1.0) ** 2 + (p[:, 1] / 0.8) ** 2, 1.0, atol=1e-14)


def test_boundary_starts_at_a_and_runs_counterclockwise(small_mesh):
    p = small_mesh.nodes[small_mesh.boundary_nodes]
    np.testing.assert_allclose(p[0], [1.0, 0.0], atol=1e-14)
    ang = np.unwrap(np.arctan2(p[:, 1], p[:, 0]))
    assert np.all(np.diff(ang) > 0)


def test_area_converges_to_ellipse_area():
    errs = []
    for h in (0.1, 0.05):
        m = build_ellipse_mesh(DomainSpec(1.0, 0.8, h))
        errs.append(abs(m.areas.sum() - np.pi * 0.8))
    assert errs[1] < errs[0] / 3


def test_perimeter_and_arclength(small_mesh):
    assert small_mesh.arclength[0] == 0.0
    assert small_mesh.perimeter == pytest.approx(small_mesh.edge_lengths_boundary.sum())
    # Ramanujan's approximation of the ellipse perimeter
    a, b = 1.0, 0.8
    ram = np.pi * (3 * (a + b) - np.sqrt((3 * a + b) * (a + 3 * b)))
    assert small_mesh.perimeter == pytest.approx(ram, rel=5e-3)


def test_edge_length_close_to_target():
    m = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.05))
    assert m.max_edge_length() < 2.5 * 0.05


def test_twisted_mesh_is_valid_and_different():
    a = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.1))
    b = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.1), twist=0.5)
    check_mesh(b)
    assert not np.allclose(a.nodes, b.nodes)
    np.testing.assert_allclose(a.nodes[a.boundary_nodes], b.nodes[b.boundary_nodes])


@pytest.mark.parametrize("spec", [DomainSpec(-1, 1, 0.1), DomainSpec(1, 0.8, 0), DomainSpec(1, 0.8, 2.0), DomainSpec(np.nan, 1, 0.1)])
def test_invalid_domain_spec(spec):
    with pytest.raises(MeshError):
        build_ellipse_mesh(spec)


def test_check_mesh_rejects_flipped_triangle(small_mesh):
    tris = small_mesh.triangles.copy()
    tris[0] = tris[0, ::-1]
    with pytest.raises(MeshError):
        check_mesh(Mesh(small_mesh.nodes, tris, small_mesh.boundary_nodes))


def test_check_mesh_rejects_reversed_boundary(small_mesh):
    with pytest.raises(MeshError):
        check_mesh(Mesh(small_mesh.nodes, small_mesh.triangles, small_mesh.boundary_nodes[::-1]))


def test_distance_on_disk_matches_one_minus_radius():
    m = build_ellipse_mesh(DomainSpec(1.0, 1.0, 0.05))
    d = distance_to_boundary(m)
    r = np.linalg.norm(m.nodes, axis=1)
    # polygon sagitta is at most h^2 / 8
    assert np.max(np.abs(d - (1 - r))) < 0.05**2
    assert np.all(d[m.boundary_nodes] == 0)


@settings(max_examples=40, deadline=None)
@given(
    st.floats(-0.9, 0.9), st.floats(-0.9, 0.9), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3)
)
def test_interpolation_reproduces_linear_fields(x, y, c0, c1, c2):
    mesh = _MESH
    if (x / 1.0) ** 2 + (y / 0.8) ** 2 > 0.9:
        return
    field = c0 + c1 * mesh.nodes[:, 0] + c2 * mesh.nodes[:, 1]
    val = interpolate(field, mesh, np.array([[x, y]]))
    assert val[0] == pytest.approx(c0 + c1 * x + c2 * y, abs=1e-10)


_MESH = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.1))


def test_locate_points_barycentric_weights_sum_to_one(small_mesh, rng):
    pts = rng.uniform(-0.5, 0.5, size=(50, 2))
    tri, lam = locate_points(small_mesh, pts)
    np.testing.assert_allclose(lam.sum(axis=1), 1.0)
    assert np.all(lam >= -1e-12)
    rec = np.einsum("pk,pkd->pd", lam, small_mesh.nodes[small_mesh.triangles[tri]])
    np.testing.assert_allclose(rec, pts, atol=1e-12)


def test_point_outside_raises(small_mesh):
    with pytest.raises(OutOfDomainError):
        locate_points(small_mesh, np.array([[1.5, 0.0]]))


def test_interpolation_between_meshes_is_second_order():
    errs = []
    for h in (0.1, 0.05):
        src = build_ellipse_mesh(DomainSpec(1.0, 0.8, h), twist=0.5)
        tgt = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.04))
        f = lambda p: np.sin(2 * p[:, 0]) * np.cos(p[:, 1])
        inner = distance_to_boundary(tgt) > 0.1
        vals = interpolate(f(src.nodes), src, tgt.nodes[inner])
        errs.append(np.max(np.abs(vals - f(tgt.nodes[inner]))))
    assert errs[0] / errs[1] > 3.0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idsm import fem
from idsm.mesh import DomainSpec, build_ellipse_mesh
from idsm.models import ModelSpec, SourceSpec
from idsm.synthdata import (
    Circle,
    GeometryError,
    InclusionGeometry,
    Square,
    add_noise,
    generate_dataset,
    pair_rng,
    rasterize_truth,
    simulate_measurement,
    transfer_boundary,
)


def test_empty_geometry_is_zero(small_mesh):
    assert np.all(rasterize_truth(InclusionGeometry(), small_mesh) == 0)


def test_square_rasterization(medium_mesh):
    sq = Square(0.3, 0.2, 0.2, (-0.7,))
    u = rasterize_truth(InclusionGeometry((sq,)), medium_mesh)[0]
    inside = sq.contains(medium_mesh.nodes)
    assert inside.any()
    assert np.all(u[inside] == -0.7) and np.all(u[~inside] == 0)


def test_rasterization_is_idempotent(medium_mesh):
    geom = InclusionGeometry((Circle(0.0, 0.0, 0.3, (2.0,)),))
    u = rasterize_truth(geom, medium_mesh)
    assert np.array_equal(u, rasterize_truth(geom, medium_mesh))


@pytest.mark.parametrize("r", [0.15, 0.3])
def test_circle_area_within_rasterization_bound(r):
    h = 0.05
    mesh = build_ellipse_mesh(DomainSpec(1.0, 0.8, h))
    u = rasterize_truth(InclusionGeometry((Circle(-0.1, 0.05, r, (1.0,)),)), mesh)[0]
    area = np.sum(fem.lumped_mass(mesh) * u)
    assert abs(area - np.pi * r**2) <= 2 * h * 2 * np.pi * r


def test_multichannel_values(small_mesh):
    geom = InclusionGeometry(
        (Square(-0.4, 0.0, 0.2, (-0.7, 0.0)), Square(0.4, 0.0, 0.2, (0.0, 5.0))), n_channels=2
    )
    u = rasterize_truth(geom, small_mesh)
    assert u.shape == (2, small_mesh.n_nodes)
    assert set(np.unique(u[0])) <= {-0.7, 0.0} and set(np.unique(u[1])) <= {0.0, 5.0}


@pytest.mark.parametrize(
    "shapes",
    [
        (Square(0.0, 0.0, 0.2, (1.0,)), Square(0.3, 0.0, 0.2, (1.0,))),
        (Circle(0.0, 0.0, 0.2, (1.0,)), Circle(0.35, 0.0, 0.2, (1.0,))),
        (Square(0.0, 0.0, 0.2, (1.0,)), Circle(0.3, 0.0, 0.15, (1.0,))),
    ],
)
def test_overlap_detected(shapes, small_mesh):
    with pytest.raises(GeometryError):
        rasterize_truth(InclusionGeometry(shapes), small_mesh)


def test_touching_square_circle_corner_distance():
    # circle near the corner but outside the corner's reach
    geom = InclusionGeometry((Square(0.0, 0.0, 0.2, (1.0,)), Circle(0.35, 0.35, 0.2, (1.0,))))
    geom.check_disjoint()


@pytest.mark.parametrize(
    "geom",
    [
        InclusionGeometry((Circle(0.9, 0.0, 0.2, (1.0,)),)),
        InclusionGeometry((Square(0.0, 0.0, 0.0, (1.0,)),)),
        InclusionGeometry((Square(0.0, 0.0, 0.2, (1.0, 2.0)),)),
        InclusionGeometry((Square(0.0, 0.7, 0.08, (1.0,)),)),
    ],
)
def test_validation_failures(geom):
    with pytest.raises(GeometryError):
        geom.validate(1.0, 0.8, margin=0.04)


def test_trace_of_homogeneous_eit_is_x1():
    errs = []
    for h in (0.1, 0.05):
        coarse = build_ellipse_mesh(DomainSpec(1.0, 1.0, h))
        fine = build_ellipse_mesh(DomainSpec(1.0, 1.0, h / 2), twist=0.5)
        exact, bg0 = simulate_measurement(ModelSpec("eit"), InclusionGeometry(), SourceSpec("x1"), fine, coarse)
        np.testing.assert_array_equal(exact, bg0)
        errs.append(np.abs(exact - coarse.nodes[coarse.boundary_nodes, 0]).max())
    assert errs[0] / errs[1] > 3.0


def test_fine_mesh_self_convergence():
    coarse = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.1))
    geom = InclusionGeometry((Square(0.2, 0.1, 0.2, (-0.7,)),))
    traces = []
    for h in (0.05, 0.025, 0.0125):
        fine = build_ellipse_mesh(DomainSpec(1.0, 0.8, h), twist=0.5)
        traces.append(simulate_measurement(ModelSpec("eit"), geom, SourceSpec("x1"), fine, coarse)[0])
    d1 = np.abs(traces[0] - traces[1]).max()
    d2 = np.abs(traces[1] - traces[2]).max()
    # rasterized inclusion edges limit the rate below two; it must still contract
    assert d2 < 0.7 * d1


def test_mirror_symmetry():
    coarse = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.1))
    fine = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.025), twist=0.5)
    geom = InclusionGeometry((Circle(0.3, 0.0, 0.2, (-0.5,)),))
    exact, _ = simulate_measurement(ModelSpec("eit"), geom, SourceSpec("x1"), fine, coarse)
    p = coarse.nodes[coarse.boundary_nodes]
    # boundary node i mirrors to node (B - i) mod B
    mirror = (-np.arange(coarse.n_boundary)) % coarse.n_boundary
    np.testing.assert_allclose(p[mirror], p * [1, -1], atol=1e-12)
    assert np.abs(exact - exact[mirror]).max() < 0.02 * np.abs(exact).max()


def test_transfer_boundary_identity_and_linear(small_mesh):
    v = np.sin(small_mesh.arclength)
    np.testing.assert_allclose(transfer_boundary(small_mesh, v, small_mesh), v, atol=1e-14)
    fine = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.05))
    lin = fine.nodes[fine.boundary_nodes] @ [0.3, -1.2]
    got = transfer_boundary(fine, lin, small_mesh)
    ref = small_mesh.nodes[small_mesh.boundary_nodes] @ [0.3, -1.2]
    assert np.abs(got - ref).max() < 0.05**2


def test_noise_free_is_exact():
    y = np.linspace(0, 1, 10)
    assert np.array_equal(add_noise(y, y + 1, 0.0, seed=1), y)


def test_forced_delta_hook():
    y, y0 = np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, -1.0])
    got = add_noise(y, y0, 0.3, delta=np.ones(3))
    np.testing.assert_allclose(got - y, 0.3 * np.abs(y0 - y))


def test_zero_amplitude_nodes_stay_exact():
    y = np.array([0.0, 1.0, 2.0])
    got = add_noise(y, np.array([0.0, 5.0, 2.0]), 0.5, seed=3)
    assert got[0] == y[0] and got[2] == y[2] and got[1] != y[1]


def test_negative_noise_level():
    with pytest.raises(ValueError):
        add_noise(np.zeros(2), np.ones(2), -0.1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63), st.integers(0, 50))
def test_noise_is_reproducible_and_bounded(seed, index):
    y = np.linspace(-1, 1, 40)
    y0 = y + np.cos(np.arange(40))
    a = add_noise(y, y0, 0.2, seed, index)
    assert np.array_equal(a, add_noise(y, y0, 0.2, seed, index))
    assert np.all(np.abs(a - y) <= 0.2 * np.abs(y0 - y) + 1e-15)


def test_pair_streams_differ():
    a = pair_rng(7, 0).random(5)
    b = pair_rng(7, 1).random(5)
    assert not np.allclose(a, b)
    assert np.array_equal(a, pair_rng(7, 0).random(5))


def test_generate_dataset(small_mesh):
    fine = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.05), twist=0.5)
    geom = InclusionGeometry((Square(0.2, 0.1, 0.2, (-0.7,)),))
    ds = generate_dataset(ModelSpec("eit"), geom, [SourceSpec("x1"), SourceSpec("x2")], fine, small_mesh, 0.1, 5)
    assert len(ds.pairs) == 2
    assert ds.truth.shape == (1, small_mesh.n_nodes)
    for p in ds.pairs:
        assert p.measurement.shape == (small_mesh.n_boundary,)
        assert np.all(np.abs(p.measurement - p.exact) <= 0.1 * np.abs(p.background0 - p.exact) + 1e-15)
    with pytest.raises(GeometryError):
        generate_dataset(ModelSpec("cond_pot"), geom, [SourceSpec("x1")], fine, small_mesh, 0.1, 5)


def test_dot_background_shift_matches_boundary_mean(small_mesh):
    fine = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.05), twist=0.5)
    geom = InclusionGeometry((Square(0.2, 0.1, 0.2, (6.0,)),))
    ds = generate_dataset(ModelSpec("dot"), geom, [SourceSpec("x1")], fine, small_mesh, 0.0, 5)
    p = ds.pairs[0]
    L = small_mesh.edge_lengths_boundary
    w = 0.5 * (L + np.roll(L, 1))
    assert np.sum(w * (p.exact - p.background0)) == pytest.approx(0, abs=1e-12)

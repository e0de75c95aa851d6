import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from idsm import fem
from idsm.mesh import DomainSpec, build_ellipse_mesh
from idsm.models import (
    KINDS,
    AdmissibilityError,
    ModelSpec,
    NonlinearSolveError,
    SourceSpec,
    apply_btau_star,
    background_matrix,
    background_solve,
    background_solver,
    btau_apply,
    btau_matrix,
    check_admissible,
    forward_solve,
    newton_solve,
    parse_expression,
    solve_state,
    source_load,
)

_MESH = build_ellipse_mesh(DomainSpec(1.0, 0.8, 0.12))


def _admissible_u(model, mesh, rng, scale=0.5):
    u = rng.random((model.n_channels, mesh.n_nodes)) * scale
    if model.kind == "eit" or model.kind == "cond_pot":
        u[0] = -u[0]
    return u


def _source(model, expr="x1"):
    return SourceSpec(expr, "boundary" if model.boundary_source else "domain")


@pytest.mark.parametrize("kind", KINDS)
def test_btau_matrix_matches_apply(kind, small_mesh, rng):
    model = ModelSpec(kind)
    y = rng.standard_normal(small_mesh.n_nodes)
    u = rng.standard_normal((model.n_channels, small_mesh.n_nodes))
    B = btau_matrix(model, small_mesh, y)
    assert B.shape == (small_mesh.n_nodes, model.n_channels * small_mesh.n_nodes)
    np.testing.assert_allclose(B @ u.ravel(), btau_apply(model, small_mesh, y, u), atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_btau_star_is_lumped_adjoint(kind, seed):
    rng = np.random.default_rng(seed)
    model = ModelSpec(kind)
    m = _MESH
    y, w = rng.standard_normal((2, m.n_nodes))
    u = rng.standard_normal((model.n_channels, m.n_nodes))
    lhs = w @ btau_apply(model, m, y, u)
    rhs = np.sum(fem.lumped_mass(m) * u * apply_btau_star(model, m, y, w))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_state_splits_into_background_and_btau(kind, small_mesh, rng):
    model = ModelSpec(kind)
    u = _admissible_u(model, small_mesh, rng)
    load = source_load(model, small_mesh, _source(model, "x1 + 0.5" if not model.boundary_source else "x1"))
    y = solve_state(model, u, load, small_mesh)
    A = background_matrix(model, small_mesh, y)
    res = A @ y + btau_apply(model, small_mesh, y, u) - load
    assert np.linalg.norm(res) <= 1e-8 * np.linalg.norm(load)


@pytest.mark.parametrize("kind", ["eit", "cond_pot", "dot", "nonsmooth"])
def test_sensitivity_identity(kind, small_mesh, rng):
    """A (y_0 - y) = B_tau[y] u holds exactly for a state-independent A."""
    model = ModelSpec(kind)
    u = _admissible_u(model, small_mesh, rng)
    f = source_load(model, small_mesh, _source(model, "x1 + 0.5" if not model.boundary_source else "x1"))
    y = solve_state(model, u, f, small_mesh)
    y0 = background_solver(model, small_mesh).solve(f)
    A = background_matrix(model, small_mesh)
    lhs = A @ (y0 - y)
    np.testing.assert_allclose(lhs, btau_apply(model, small_mesh, y, u), atol=1e-9 * np.abs(lhs).max())


def test_eit_harmonic_oracle():
    """f = x1 on the unit disk gives y = x1 (sigma0 = 1)."""
    errs = []
    for h in (0.1, 0.05):
        m = build_ellipse_mesh(DomainSpec(1.0, 1.0, h))
        y = forward_solve(ModelSpec("eit"), 0, SourceSpec("x1"), m)
        errs.append(np.abs(y - m.nodes[:, 0]).max())
    assert errs[1] < 0.01
    assert errs[0] / errs[1] > 3.0


def test_eit_background_conductivity_scales_solution(small_mesh):
    y1 = forward_solve(ModelSpec("eit", sigma0=1.0), 0, SourceSpec("x1"), small_mesh)
    y2 = forward_solve(ModelSpec("eit", sigma0=2.0), 0, SourceSpec("x1"), small_mesh)
    np.testing.assert_allclose(y2, y1 / 2, atol=1e-12)


def test_dot_with_positive_absorption_is_regular(small_mesh):
    model = ModelSpec("dot")
    u = np.full(small_mesh.n_nodes, 2.0)
    y = forward_solve(model, u, SourceSpec("1"), small_mesh)
    # testing with v = 1: absorbed mass equals the injected flux
    absorbed = np.sum(fem.lumped_mass(small_mesh) * u * y)
    assert absorbed == pytest.approx(small_mesh.perimeter, rel=1e-10)


@pytest.mark.parametrize("kind", ["cardiac", "nonsmooth"])
def test_newton_converges_quadratically(kind, small_mesh):
    model = ModelSpec(kind)
    u = np.zeros(small_mesh.n_nodes)
    u[np.linalg.norm(small_mesh.nodes, axis=1) < 0.3] = 1.0 if kind == "cardiac" else 20.0
    load = source_load(model, small_mesh, SourceSpec("x1^2+0.1", "domain"))
    y, its = newton_solve(model, u, load, small_mesh)
    assert its <= 12
    # warm start from the solution needs no step
    _, again = newton_solve(model, u, load, small_mesh, init=y)
    assert again == 0


def test_newton_reports_failure(small_mesh):
    model = ModelSpec("cardiac")
    load = source_load(model, small_mesh, SourceSpec("x1^2+0.1", "domain"))
    with pytest.raises(NonlinearSolveError) as err:
        newton_solve(model, 0, load, small_mesh, init=np.full(small_mesh.n_nodes, 50.0), maxiter=1)
    assert err.value.residual > 0


def test_cardiac_background_at_state_reproduces_state(small_mesh):
    model = ModelSpec("cardiac")
    src = SourceSpec("x1^2+0.1", "domain")
    y = forward_solve(model, 0, src, small_mesh)
    y0 = background_solve(model, y, src, small_mesh)
    np.testing.assert_allclose(y0, y, atol=1e-9)


@pytest.mark.parametrize(
    "kind,bad",
    [("eit", -1.5), ("cond_pot", -2.0), ("dot", -0.1), ("nonsmooth", -1.0), ("cardiac", 1.5)],
)
def test_admissibility(kind, bad, small_mesh):
    model = ModelSpec(kind)
    u = np.zeros((model.n_channels, small_mesh.n_nodes))
    u[0, 3] = bad
    with pytest.raises(AdmissibilityError):
        check_admissible(model, u)


def test_model_spec_validation():
    with pytest.raises(ValueError):
        ModelSpec("helmholtz")
    with pytest.raises(ValueError):
        ModelSpec("eit", sigma0=0.0)
    with pytest.raises(ValueError):
        ModelSpec("cardiac", sigma=1.0)
    assert ModelSpec("cond_pot").channels == ("u_c", "u_v")


def test_inhomogeneity_shape_checked(small_mesh):
    with pytest.raises(ValueError):
        forward_solve(ModelSpec("eit"), np.zeros(5), SourceSpec("x1"), small_mesh)


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3))
def test_expression_evaluation(x1, x2, c):
    f = parse_expression(f"{c!r} * x1^2 - sin(x2) + exp(0.1 * x1) / 2 + abs(x2)")
    expected = c * x1**2 - np.sin(x2) + np.exp(0.1 * x1) / 2 + abs(x2)
    assert f(np.array([[x1, x2]]))[0] == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_constant_expression_broadcasts():
    assert np.all(parse_expression("2")(np.zeros((4, 2))) == 2.0)


@pytest.mark.parametrize("text", ["__import__('os')", "x3", "x1.real", "tan(x1)", "x1 +", "lambda: 1", "[x1]"])
def test_expression_rejects_unsafe_or_unknown(text):
    with pytest.raises(ValueError):
        parse_expression(text)


def test_source_placement(small_mesh):
    with pytest.raises(ValueError):
        SourceSpec("x1", "edge")
    model = ModelSpec("eit")
    load = source_load(model, small_mesh, SourceSpec("1"))
    assert load.sum() == pytest.approx(small_mesh.perimeter)
    assert np.all(load[~small_mesh.is_boundary] == 0)
    load = source_load(ModelSpec("cardiac"), small_mesh, SourceSpec("1", "domain"))
    assert load.sum() == pytest.approx(small_mesh.areas.sum())

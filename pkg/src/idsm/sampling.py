"""
Direct sampling indicators and the iterative resolver scheme.

The resolver ``R`` approximates the inverse of the kernel operator
``(Lambda G)^* (Lambda G)``. It starts as a pointwise multiplier and is refined
by rank-two secant corrections so that ``R zeta~ = u`` holds for every
accepted pair ``(u, zeta~)``.

All duality products are ``<a, b> = sum_c sum_i m_i a_ci b_ci`` with the
lumped mass ``m``.
"""

from dataclasses import dataclass, field
import logging

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from . import fem
from .dtn import DtnContext, dtn_pullback
from .mesh import Mesh, distance_to_boundary
from .models import (
    ModelSpec,
    apply_btau_star,
    background_matrix,
    background_singular,
    background_solver,
    newton_solve,
    source_load,
    state_solver,
)

log = logging.getLogger(__name__)

INIT_KINDS = ("distance_power", "fundamental_grad_l2", "fundamental_grad_h1_cubed")


class DegenerateScalingError(ArithmeticError):
    """The resolver rescaling factor is zero or undefined."""


class IdsmError(RuntimeError):
    """A solve inside the iteration failed; carries the iteration index."""

    def __init__(self, message, iteration):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class Correction:
    """One rank-two term. ``r = R_k zeta~``, ``c = <zeta~, u>``, ``b = <zeta~, r>``."""

    kind: str
    u: np.ndarray
    r: np.ndarray
    c: float
    b: float

    def apply(self, inner, xi):
        xu = inner(xi, self.u) / self.c
        if self.kind == "dfp":
            return xu * self.u - (inner(xi, self.r) / self.b) * self.r
        xr = inner(xi, self.r) / self.c
        return ((1.0 + self.b / self.c) * xu - xr) * self.u - xu * self.r


class Resolver:
    """
    Pointwise base multiplier plus an ordered list of rank-two corrections.

    Parameters
    ----------
    mesh : Mesh
    base : array, shape (C, N)
        Multiplier per channel.
    corrections : sequence of Correction
    """

    def __init__(self, mesh: Mesh, base, corrections=(), n_skipped=0, scale=1.0):
        self.mesh = mesh
        self.base = np.atleast_2d(np.asarray(base, dtype=float))
        self.corrections = tuple(corrections)
        self.n_skipped = n_skipped
        self.scale = scale
        self._m = fem.lumped_mass(mesh)

    @property
    def n_channels(self):
        return self.base.shape[0]

    def inner(self, a, b) -> float:
        return float(np.sum(self._m * a * b))

    def apply(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float).reshape(self.base.shape)
        out = self.base * xi
        for corr in self.corrections:
            out = out + corr.apply(self.inner, xi)
        return out

    __call__ = apply

    def _with(self, **kw):
        args = dict(
            mesh=self.mesh,
            base=self.base,
            corrections=self.corrections,
            n_skipped=self.n_skipped,
            scale=self.scale,
        )
        args.update(kw)
        return Resolver(**args)


def resolver_apply(R: Resolver, xi) -> np.ndarray:
    return R.apply(xi)


def _interior_fill(mesh: Mesh, values):
    """Replace boundary values by the value at the nearest interior node."""
    interior = np.flatnonzero(~mesh.is_boundary)
    _, idx = cKDTree(mesh.nodes[interior]).query(mesh.nodes[mesh.boundary_nodes])
    values = values.copy()
    values[mesh.boundary_nodes] = values[interior[idx]]
    return values


def _boundary_trapezoid_weights(mesh: Mesh):
    L = mesh.edge_lengths_boundary
    return 0.5 * (L + np.roll(L, 1))


def fundamental_boundary_norms(mesh: Mesh, chunk: int = 1024):
    """
    Squared boundary norms of ``grad Phi_x`` at every node, with
    ``Phi_x(x') = -ln|x - x'| / (2 pi)``.

    Returns ``(l2sq, h1sq)``: the trapezoid-rule values of
    ``int_Gamma |grad Phi_x|^2 ds`` and of that plus the squared tangential
    derivative. Boundary nodes take the nearest interior value.
    """
    wts = _boundary_trapezoid_weights(mesh)
    bpts = mesh.nodes[mesh.boundary_nodes]
    l2 = np.empty(mesh.n_nodes)
    d1 = np.empty(mesh.n_nodes)
    with np.errstate(divide="ignore"):
        for s in range(0, mesh.n_nodes, chunk):
            p = mesh.nodes[s : s + chunk]
            r2 = ((p[:, None, :] - bpts[None]) ** 2).sum(axis=-1)
            inv = 1.0 / (4 * np.pi**2 * r2)
            l2[s : s + chunk] = inv @ wts
            d1[s : s + chunk] = (inv / r2) @ wts
    l2 = _interior_fill(mesh, l2)
    d1 = _interior_fill(mesh, d1)
    return l2, l2 + d1


def resolver_init(kind: str, mesh: Mesh, gamma: float = 1.0, n_channels: int = 1) -> Resolver:
    """
    Initial resolver ``R_0`` as a pointwise multiplier.

    ``R_0`` multiplies by the reciprocal of an approximation of
    ``(G(x, .), G(x, .))_Gamma``, which grows as ``x`` approaches the boundary:

    * ``distance_power``: ``d(x, Gamma)^gamma``;
    * ``fundamental_grad_l2``: ``|grad Phi_x|_{L2(Gamma)}^-2``, the reciprocal
      of the squared boundary norm of the fundamental solution's gradient;
    * ``fundamental_grad_h1_cubed``: ``|grad Phi_x|_{H1(Gamma)}^-3``.
    """
    if kind == "distance_power":
        if gamma < 0:
            raise ValueError("gamma must be nonnegative")
        base = np.ones(mesh.n_nodes) if gamma == 0 else distance_to_boundary(mesh) ** gamma
    elif kind == "fundamental_grad_l2":
        base = 1.0 / fundamental_boundary_norms(mesh)[0]
    elif kind == "fundamental_grad_h1_cubed":
        base = fundamental_boundary_norms(mesh)[1] ** -1.5
    else:
        raise ValueError(f"unknown resolver init {kind!r}; expected one of {INIT_KINDS}")
    return Resolver(mesh, np.tile(base, (n_channels, 1)))


def _update(R: Resolver, u, zt, kind, threshold):
    u = np.asarray(u, dtype=float).reshape(R.base.shape)
    zt = np.asarray(zt, dtype=float).reshape(R.base.shape)
    r = R.apply(zt)
    nz, nu, nr = (np.sqrt(max(R.inner(a, a), 0.0)) for a in (zt, u, r))
    c = R.inner(zt, u)
    b = R.inner(zt, r)
    if (
        nz == 0
        or nu == 0
        or nr == 0
        or abs(c) <= threshold * nz * nu
        or abs(b) <= threshold * nz * nr
    ):
        return R._with(n_skipped=R.n_skipped + 1)
    return R._with(corrections=R.corrections + (Correction(kind, u.copy(), r, c, b),))


def dfp_update(R: Resolver, u_next, zeta_tilde, threshold: float = 1e-12) -> Resolver:
    """
    DFP correction ``dR xi = <xi,u>/<z,u> u - <xi,Rz>/<z,Rz> Rz``.

    A pair with negligible curvature is skipped; the returned resolver then
    has ``n_skipped`` incremented and no new term.
    """
    return _update(R, u_next, zeta_tilde, "dfp", threshold)


def bfg_update(R: Resolver, u_next, zeta_tilde, threshold: float = 1e-12) -> Resolver:
    """
    BFG correction::

        dR xi = (1 + <z,Rz>/<z,u>) <xi,u>/<z,u> u
                - <xi,u>/<z,u> Rz - <xi,Rz>/<z,u> u

    Skipping rules as in :func:`dfp_update`.
    """
    return _update(R, u_next, zeta_tilde, "bfg", threshold)


def rescale_resolver(R: Resolver, u1, zeta_tilde1) -> Resolver:
    """Scale the base multiplier by ``|u1|_L1 / |R zeta~1|_L1``."""
    mesh = R.mesh
    num = fem.norm_l1_domain(mesh, np.reshape(u1, R.base.shape))
    rz = R.apply(zeta_tilde1)
    den = fem.norm_l1_domain(mesh, rz)
    ref = fem.norm_l1_domain(mesh, np.reshape(zeta_tilde1, R.base.shape))
    if not den > 1e-14 * ref or den == 0:
        raise DegenerateScalingError(f"|R zeta~|_L1 = {den:.3e} is negligible")
    if num == 0:
        raise DegenerateScalingError("u1 vanishes; scaling would annihilate the resolver")
    factor = num / den
    return R._with(base=R.base * factor, scale=R.scale * factor)


@dataclass(frozen=True)
class ProjectionRule:
    """
    Admissibility map ``P``.

    ``box_clamp`` clamps channel ``c`` to ``[lower[c], upper[c]]``.
    ``relaxed_normalize`` returns ``w0 u_prev + w1 (eta - min) / (max - min)``.
    """

    kind: str = "box_clamp"
    lower: tuple = (-np.inf,)
    upper: tuple = (np.inf,)
    weights: tuple = (0.8, 0.2)

    def __post_init__(self):
        if self.kind not in ("box_clamp", "relaxed_normalize"):
            raise ValueError(f"unknown projection kind {self.kind!r}")
        if self.kind == "box_clamp":
            if len(self.lower) != len(self.upper):
                raise ValueError("lower and upper bounds differ in length")
            if any(lo > hi for lo, hi in zip(self.lower, self.upper)):
                raise ValueError("lower bound exceeds upper bound")
        elif abs(sum(self.weights) - 1.0) > 1e-12:
            raise ValueError("relaxation weights must sum to 1")


def apply_projection(rule: ProjectionRule, eta, u_prev=None):
    """
    Apply ``P`` to ``eta`` of shape (C, N).

    Returns
    -------
    u : array (C, N)
    degenerate : bool
        True when relaxed normalization met a constant ``eta``. A nonzero
        constant normalizes to the mid value 0.5; ``eta == 0`` normalizes to 0
        so that a vanishing indicator leaves the estimate decaying toward 0.
    """
    eta = np.atleast_2d(np.asarray(eta, dtype=float))
    if rule.kind == "box_clamp":
        lo = np.asarray(rule.lower, dtype=float)[:, None]
        hi = np.asarray(rule.upper, dtype=float)[:, None]
        if lo.shape[0] != eta.shape[0]:
            raise ValueError("projection bounds do not match the channel count")
        return np.clip(eta, lo, hi), False
    u_prev = np.zeros_like(eta) if u_prev is None else np.atleast_2d(u_prev)
    lo, hi = eta.min(axis=1, keepdims=True), eta.max(axis=1, keepdims=True)
    span = hi - lo
    degenerate = bool(np.any(span <= 0))
    safe = np.where(span > 0, span, 1.0)
    mid = np.where(np.all(eta == 0, axis=1, keepdims=True), 0.0, 0.5)
    normalized = np.where(span > 0, (eta - lo) / safe, mid)
    w0, w1 = rule.weights
    return w0 * u_prev + w1 * normalized, degenerate


def aggregate_zeta(model: ModelSpec, mesh: Mesh, states, pullbacks) -> np.ndarray:
    """Sum of ``B_tau[y_l]^* w_l`` over pairs in the given order."""
    out = np.zeros((model.n_channels, mesh.n_nodes))
    for y, w in zip(states, pullbacks):
        out = out + apply_btau_star(model, mesh, y, w)
    return out


def fractional_laplacian(mesh: Mesh, g, gamma: float) -> np.ndarray:
    """
    ``(-Delta_Gamma)^gamma g`` on the boundary polyline.

    ``g`` is resampled to a uniform arclength grid by periodic cubic splines,
    multiplied by ``(2 pi k / L)^(2 gamma)`` in Fourier space with the mean
    mode removed, and sampled back at the boundary nodes. The result has zero
    boundary integral.
    """
    g = np.asarray(g, dtype=float)
    s = mesh.arclength
    L = mesh.perimeter
    n = 1 << int(np.ceil(np.log2(4 * mesh.n_boundary)))
    knots = np.append(s, L)
    spline = CubicSpline(knots, np.append(g, g[0]), bc_type="periodic")
    grid = np.arange(n) * (L / n)
    coef = np.fft.rfft(spline(grid))
    k = np.arange(coef.size)
    symbol = (2 * np.pi * k / L) ** (2 * gamma)
    symbol[0] = 0.0
    vals = np.fft.irfft(coef * symbol, n)
    back = CubicSpline(np.append(grid, L), np.append(vals, vals[0]), bc_type="periodic")(s)
    mg = fem.boundary_mass(mesh)
    return back - (mg @ back).sum() / mg.sum()


def dsm_index_baseline(
    model: ModelSpec, mesh: Mesh, scattering, gamma: float = 1.0, y_ref=None
) -> np.ndarray:
    """
    Classical sampling index for one or several scattering fields.

    Each field ``y^s`` is mapped to ``(-Delta_Gamma)^gamma y^s``, lifted by the
    background Neumann problem (boundary-mean-free when the operator is
    singular), weighted by ``d(x, Gamma)^gamma`` and summed over fields.

    Parameters
    ----------
    scattering : array, shape (B,) or (L, B)
    y_ref : array, optional
        Linearization state(s) for state-dependent background operators.

    Returns
    -------
    eta : array, shape (N,)
    """
    scattering = np.atleast_2d(scattering)
    d = distance_to_boundary(mesh) ** gamma
    refs = [None] * len(scattering) if y_ref is None else list(np.atleast_2d(y_ref))
    eta = np.zeros(mesh.n_nodes)
    cache = {}
    for ys, yr in zip(scattering, refs):
        key = None if yr is None or not model.nonlinear_background else id(yr)
        if key not in cache:
            cache[key] = background_solver(model, mesh, yr)
        datum = fractional_laplacian(mesh, ys, gamma)
        lifted = cache[key].solve(fem.assemble_boundary_load(mesh, datum), strict=False)
        eta += lifted
    return d * eta


def baseline_estimate(eta, rule: ProjectionRule) -> np.ndarray:
    """
    Map a baseline index to an admissible coefficient estimate.

    The index is scaled so that its largest-magnitude value lands on the bound
    of largest magnitude (keeping the sign of that bound), then projected.
    """
    eta = np.atleast_2d(eta)
    if rule.kind == "relaxed_normalize":
        return apply_projection(rule, eta)[0]
    out = np.empty_like(eta)
    for c, row in enumerate(eta):
        lo, hi = rule.lower[c], rule.upper[c]
        bound = lo if abs(lo) > abs(hi) else hi
        i = np.argmax(np.abs(row))
        peak = row[i]
        kappa = 0.0 if peak == 0 else bound / peak
        out[c] = np.clip(kappa * row, lo, hi)
    return out


def dsm_baseline_run(model: ModelSpec, mesh: Mesh, pairs, gamma: float = 1.0, rule=None):
    """
    Baseline index from Cauchy pairs and its admissible estimate.

    The scattering field of each pair is ``T y_0 - y_d`` with ``y_0`` the
    background solution (the state at ``u = 0`` for state-dependent
    operators, which is also the linearization point). A single index is
    shared by all channels.

    Returns
    -------
    eta : array (C, N)
    u : array (C, N), or None when ``rule`` is None
    """
    bn = mesh.boundary_nodes
    scattering, refs = [], []
    for p in pairs:
        f = source_load(model, mesh, p.source)
        if model.nonlinear_state:
            y0 = newton_solve(model, np.zeros((model.n_channels, mesh.n_nodes)), f, mesh)[0]
        else:
            y0 = background_solver(model, mesh).solve(f)
        scattering.append(y0[bn] - np.asarray(p.measurement, dtype=float))
        refs.append(y0)
    y_ref = np.array(refs) if model.nonlinear_background else None
    eta = dsm_index_baseline(model, mesh, np.array(scattering), gamma, y_ref)
    eta = np.repeat(eta[None, :], model.n_channels, axis=0)
    return eta, (None if rule is None else baseline_estimate(eta, rule))


@dataclass(frozen=True)
class IdsmConfig:
    """
    Parameters of one IDSM run.

    ``seed`` is carried along for provenance only; the iteration itself is
    deterministic.
    """

    alpha: float = 1.0
    K: int = 11
    correction: str = "dfp"
    init: str = "distance_power"
    gamma: float = 1.0
    skip_threshold: float = 1e-12
    projection: ProjectionRule = field(default_factory=ProjectionRule)
    snap: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.correction not in ("dfp", "bfg"):
            raise ValueError(f"unknown correction {self.correction!r}")
        if self.init not in INIT_KINDS:
            raise ValueError(f"unknown resolver init {self.init!r}")


@dataclass
class IterationTrace:
    """
    Record of one IDSM run.

    ``u[k]`` is ``u_{k+1}`` and ``eta[k]`` is ``eta_k`` for ``k = 0..K-1``.
    ``misfit[k]`` is the boundary L2 misfit of the state at ``u_{k+1}``
    against the data, summed over pairs.
    """

    u: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    zeta: list = field(default_factory=list)
    zeta_tilde: list = field(default_factory=list)
    rescale_factor: float = 1.0
    skipped: list = field(default_factory=list)
    degenerate_projection: list = field(default_factory=list)
    misfit: list = field(default_factory=list)
    eta_scale: float = 0.0

    @property
    def n_iterations(self):
        return len(self.u)


_UPDATES = {"dfp": dfp_update, "bfg": bfg_update}


class _Loop:
    """Shared bookkeeping for the linear and nonlinear variants."""

    def __init__(self, model, config, mesh, pairs):
        if not pairs:
            raise ValueError("at least one Cauchy pair is required")
        self.model, self.config, self.mesh = model, config, mesh
        self.pairs = list(pairs)
        self.loads = [source_load(model, mesh, p.source) for p in self.pairs]
        self.data = [np.asarray(p.measurement, dtype=float) for p in self.pairs]
        for yd in self.data:
            if yd.shape != (mesh.n_boundary,):
                raise ValueError("measurement does not match the boundary of the mesh")
        self.mg = fem.boundary_mass(mesh)
        self.R = resolver_init(config.init, mesh, config.gamma, model.n_channels)
        self.R0_base = self.R.base.copy()
        self.trace = IterationTrace()
        self.rescaled = False
        self.update = _UPDATES[config.correction]

    def misfit(self, states):
        total = 0.0
        for y, yd in zip(states, self.data):
            r = y[self.mesh.boundary_nodes] - yd
            total += float(r @ (self.mg @ r))
        return np.sqrt(total)

    def step(self, k, zeta, u_prev):
        """Indicator, projection and bookkeeping; returns ``u_{k+1}``."""
        eta = self.R.apply(zeta)
        if np.max(np.abs(eta)) <= self.config.snap * self.trace.eta_scale:
            eta = np.zeros_like(eta)
        u_next, degenerate = apply_projection(self.config.projection, eta, u_prev)
        self.trace.zeta.append(zeta)
        self.trace.eta.append(eta)
        self.trace.u.append(u_next)
        self.trace.degenerate_projection.append(degenerate)
        return u_next

    def secant(self, u_next, zt):
        self.trace.zeta_tilde.append(zt)
        if not self.rescaled:
            try:
                self.R = rescale_resolver(self.R, u_next, zt)
                self.rescaled = True
                self.trace.rescale_factor = self.R.scale
            except DegenerateScalingError as exc:
                log.debug("rescale deferred: %s", exc)
                self.trace.skipped.append(True)
                return
        before = self.R.n_skipped
        self.R = self.update(self.R, u_next, zt, self.config.skip_threshold)
        self.trace.skipped.append(self.R.n_skipped > before)

    def eta_scale(self, states, pullbacks_of_trace):
        """Size of the indicator the full background trace would produce."""
        z = aggregate_zeta(self.model, self.mesh, states, pullbacks_of_trace)
        return float(np.max(np.abs(self.R0_base * z)))


def idsm_run_linear(model: ModelSpec, config: IdsmConfig, pairs, mesh: Mesh) -> IterationTrace:
    """
    IDSM for a background operator independent of the state.

    The background solutions, the Robin factorization and the data pullbacks
    ``w_l`` are computed once. Each iteration forms
    ``zeta_k = sum_l B_tau[y_kl]^* w_l``, applies the resolver and the
    projection, re-solves the states at ``u_{k+1}`` and updates the resolver
    with ``zeta~ = sum_l B_tau[y_{k+1,l}]^* pullback(T(y_0l - y_{k+1,l}))``,
    where ``y_0l`` is the background solution.

    Parameters
    ----------
    pairs : sequence
        Objects with ``source`` (SourceSpec) and ``measurement`` (boundary
        values on ``mesh``).
    """
    if model.nonlinear_background:
        raise ValueError(f"{model.kind} needs idsm_run_nonlinear")
    L = _Loop(model, config, mesh, pairs)
    bsolver = background_solver(model, mesh)
    ctx = DtnContext(background_matrix(model, mesh), mesh, config.alpha, background_singular(model))
    bn = mesh.boundary_nodes
    y_bg = [bsolver.solve(f) for f in L.loads]
    w = [dtn_pullback(ctx, yb[bn] - yd) for yb, yd in zip(y_bg, L.data)]

    u = np.zeros((model.n_channels, mesh.n_nodes))
    states = _solve_states(model, mesh, u, L.loads, None, 0)
    L.trace.eta_scale = L.eta_scale(states, [dtn_pullback(ctx, yb[bn]) for yb in y_bg])

    for k in range(config.K):
        zeta = aggregate_zeta(model, mesh, states, w)
        u = L.step(k, zeta, u)
        states = _solve_states(model, mesh, u, L.loads, states, k + 1)
        L.trace.misfit.append(L.misfit(states))
        zt = aggregate_zeta(
            model, mesh, states, [dtn_pullback(ctx, (yb - y)[bn]) for yb, y in zip(y_bg, states)]
        )
        L.secant(u, zt)
    return L.trace


def _solve_states(model, mesh, u, loads, previous, k):
    try:
        if model.nonlinear_state:
            inits = previous if previous is not None else [None] * len(loads)
            return [
                newton_solve(model, u, f, mesh, init=y0)[0] for f, y0 in zip(loads, inits)
            ]
        solver = state_solver(model, mesh, u)
        return [solver.solve(f) for f in loads]
    except Exception as exc:
        raise IdsmError(str(exc), k) from exc


def _linearized(model, mesh, alpha, states, loads, k):
    """Background solutions and Robin contexts linearized at each state."""
    bgs, ctxs = [], []
    try:
        for y, f in zip(states, loads):
            bgs.append(background_solver(model, mesh, y).solve(f))
            ctxs.append(
                DtnContext(
                    background_matrix(model, mesh, y), mesh, alpha, background_singular(model, y)
                )
            )
    except Exception as exc:
        raise IdsmError(str(exc), k) from exc
    return bgs, ctxs


def idsm_run_nonlinear(model: ModelSpec, config: IdsmConfig, pairs, mesh: Mesh) -> IterationTrace:
    """
    IDSM for a state-dependent background operator ``A[y]``.

    Every iteration linearizes at the current states: the background
    solutions ``A[y_k]^{-1} f_l`` and the Robin factorizations are rebuilt, and
    the states are re-solved by Newton warm-started from the previous ones.
    The quantities built at ``u_{k+1}`` for the secant pair are reused as the
    starting point of the next iteration.
    """
    L = _Loop(model, config, mesh, pairs)
    bn = mesh.boundary_nodes
    u = np.zeros((model.n_channels, mesh.n_nodes))
    states = _solve_states(model, mesh, u, L.loads, None, 0)
    bgs, ctxs = _linearized(model, mesh, config.alpha, states, L.loads, 0)
    L.trace.eta_scale = L.eta_scale(
        states, [dtn_pullback(c, yb[bn]) for c, yb in zip(ctxs, bgs)]
    )

    for k in range(config.K):
        w = [dtn_pullback(c, yb[bn] - yd) for c, yb, yd in zip(ctxs, bgs, L.data)]
        zeta = aggregate_zeta(model, mesh, states, w)
        u = L.step(k, zeta, u)
        states = _solve_states(model, mesh, u, L.loads, states, k + 1)
        L.trace.misfit.append(L.misfit(states))
        bgs, ctxs = _linearized(model, mesh, config.alpha, states, L.loads, k + 1)
        zt = aggregate_zeta(
            model,
            mesh,
            states,
            [dtn_pullback(c, (yb - y)[bn]) for c, yb, y in zip(ctxs, bgs, states)],
        )
        L.secant(u, zt)
    return L.trace


def idsm_run(model: ModelSpec, config: IdsmConfig, pairs, mesh: Mesh) -> IterationTrace:
    """Dispatch to the linear or nonlinear variant."""
    if model.nonlinear_background:
        return idsm_run_nonlinear(model, config, pairs, mesh)
    return idsm_run_linear(model, config, pairs, mesh)

"""
Experiment configuration in a flat ``section.key = value`` text format.

One assignment per line; blank lines and lines starting with ``#`` are
ignored. Keys:

=========================== ==================================================
key                         meaning
=========================== ==================================================
name                        free label copied into outputs
model.kind                  eit, cond_pot, dot, cardiac or nonsmooth
model.sigma0                EIT background conductivity
model.sigma                 cardiac conductivity inside the ischemia
domain.a, domain.b          ellipse semi-axes
mesh.h                      target edge length of the reconstruction mesh
mesh.h_fine                 edge length of the data mesh (at most h/2)
mesh.twist                  ring rotation of the data mesh, decorrelates meshes
inclusion.<i>               ``square cx cy half v...`` or ``circle cx cy r v...``
                            with one value per channel
source.<i>                  source expression in ``x1, x2``
data.epsilon                relative noise level
data.seed                   master seed of the noise streams
idsm.alpha                  Robin regularization of the DtN map
idsm.K                      number of iterations
idsm.correction             dfp or bfg
idsm.init                   resolver base multiplier
idsm.gamma                  exponent of the distance multiplier
idsm.skip_threshold         relative curvature threshold for skipping updates
projection.kind             box_clamp or relaxed_normalize
projection.lower            comma-separated lower bounds per channel
projection.upper            comma-separated upper bounds per channel
projection.weights          relaxation weights ``w0, w1``
baseline.gamma              order of the boundary fractional Laplacian
output.dir                  default output directory
=========================== ==================================================

Floats are written with ``repr`` so that parse and serialize round-trip
exactly.
"""

from dataclasses import dataclass, replace
from importlib import resources
import re

import numpy as np

from .mesh import DomainSpec
from .models import KINDS, ModelSpec, SourceSpec
from .sampling import IdsmConfig, ProjectionRule
from .synthdata import Circle, InclusionGeometry, Square


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*)\s*=\s*(.*?)\s*$")


def parse_flat(text: str) -> dict:
    """Ordered ``key -> raw string`` mapping of a flat key-value document."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _LINE.match(line)
        if m is None:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = m.groups()
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def format_flat(items) -> str:
    """Inverse of :func:`parse_flat` for ``(key, value)`` pairs."""
    lines = []
    for key, value in items:
        value = str(value)
        if "\n" in value:
            raise ConfigError(f"value of {key!r} spans several lines")
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def format_float(x) -> str:
    return repr(float(x))


def _float(key, s):
    try:
        return float(s)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {s!r}") from None


def _int(key, s):
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {s!r}") from None


def _floats(key, s):
    return tuple(_float(key, t.strip()) for t in s.split(",") if t.strip())


def format_shape(shape) -> str:
    kind = "square" if isinstance(shape, Square) else "circle"
    size = shape.half if isinstance(shape, Square) else shape.r
    nums = [shape.cx, shape.cy, size, *shape.values]
    return " ".join([kind] + [format_float(v) for v in nums])


def _parse_shape(key, s):
    parts = s.split()
    if len(parts) < 5 or parts[0] not in ("square", "circle"):
        raise ConfigError(f"{key}: expected 'square|circle cx cy size v...', got {s!r}")
    cx, cy, size, *values = (_float(key, p) for p in parts[1:])
    cls = Square if parts[0] == "square" else Circle
    return cls(cx, cy, size, tuple(values))


@dataclass(frozen=True)
class ExperimentConfig:
    """All settings of one synthetic experiment and its reconstruction."""

    name: str = "experiment"
    model_kind: str = "eit"
    sigma0: float = 1.0
    sigma: float = 1e-4
    a: float = 1.0
    b: float = 0.8
    h: float = 0.033
    h_fine: float = 0.0165
    twist: float = 0.5
    inclusions: tuple = ()
    sources: tuple = ("x1",)
    epsilon: float = 0.1
    seed: int = 0
    alpha: float = 1.0
    K: int = 11
    correction: str = "dfp"
    init: str = "distance_power"
    gamma: float = 1.0
    skip_threshold: float = 1e-12
    projection_kind: str = "box_clamp"
    lower: tuple = (-np.inf,)
    upper: tuple = (np.inf,)
    weights: tuple = (0.8, 0.2)
    baseline_gamma: float = 1.0
    out_dir: str = "out"

    def validate(self):
        if self.model_kind not in KINDS:
            raise ConfigError(f"model.kind: unknown model {self.model_kind!r}")
        if not self.sources:
            raise ConfigError("at least one source.<i> entry is required")
        if self.epsilon < 0:
            raise ConfigError("data.epsilon must be nonnegative")
        if self.seed < 0:
            raise ConfigError("data.seed must be nonnegative")
        if not 0 < self.h_fine <= self.h / 2 + 1e-15:
            raise ConfigError("mesh.h_fine must be positive and at most mesh.h / 2")
        try:
            self.domain.validate()
            model = self.model
            self.source_specs
            geom = self.geometry
            geom.validate(self.a, self.b, margin=self.h)
            self.idsm_config
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.projection_kind == "box_clamp" and len(self.lower) != model.n_channels:
            raise ConfigError("projection bounds must list one value per channel")
        return self

    @property
    def model(self) -> ModelSpec:
        return ModelSpec(self.model_kind, self.sigma0, self.sigma)

    @property
    def domain(self) -> DomainSpec:
        return DomainSpec(self.a, self.b, self.h)

    @property
    def fine_domain(self) -> DomainSpec:
        return DomainSpec(self.a, self.b, self.h_fine)

    @property
    def geometry(self) -> InclusionGeometry:
        return InclusionGeometry(tuple(self.inclusions), self.model.n_channels)

    @property
    def source_specs(self) -> list:
        placement = "boundary" if self.model.boundary_source else "domain"
        return [SourceSpec(e, placement) for e in self.sources]

    @property
    def projection(self) -> ProjectionRule:
        return ProjectionRule(self.projection_kind, self.lower, self.upper, self.weights)

    @property
    def idsm_config(self) -> IdsmConfig:
        return IdsmConfig(
            alpha=self.alpha,
            K=self.K,
            correction=self.correction,
            init=self.init,
            gamma=self.gamma,
            skip_threshold=self.skip_threshold,
            projection=self.projection,
            seed=self.seed,
        )

    def with_seed(self, seed: int):
        return replace(self, seed=int(seed))


# key, attribute, parser, formatter
_SCALARS = [
    ("name", "name", lambda k, s: s, str),
    ("model.kind", "model_kind", lambda k, s: s, str),
    ("model.sigma0", "sigma0", _float, format_float),
    ("model.sigma", "sigma", _float, format_float),
    ("domain.a", "a", _float, format_float),
    ("domain.b", "b", _float, format_float),
    ("mesh.h", "h", _float, format_float),
    ("mesh.h_fine", "h_fine", _float, format_float),
    ("mesh.twist", "twist", _float, format_float),
    ("data.epsilon", "epsilon", _float, format_float),
    ("data.seed", "seed", _int, str),
    ("idsm.alpha", "alpha", _float, format_float),
    ("idsm.K", "K", _int, str),
    ("idsm.correction", "correction", lambda k, s: s, str),
    ("idsm.init", "init", lambda k, s: s, str),
    ("idsm.gamma", "gamma", _float, format_float),
    ("idsm.skip_threshold", "skip_threshold", _float, format_float),
    ("projection.kind", "projection_kind", lambda k, s: s, str),
    ("projection.lower", "lower", _floats, lambda v: ", ".join(map(format_float, v))),
    ("projection.upper", "upper", _floats, lambda v: ", ".join(map(format_float, v))),
    ("projection.weights", "weights", _floats, lambda v: ", ".join(map(format_float, v))),
    ("baseline.gamma", "baseline_gamma", _float, format_float),
    ("output.dir", "out_dir", lambda k, s: s, str),
]
_KEYS = {k: (attr, parse) for k, attr, parse, _ in _SCALARS}
_INDEXED = re.compile(r"^(inclusion|source)\.(\d+)$")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a configuration document; missing keys take defaults."""
    kv = parse_flat(text)
    values, shapes, sources = {}, {}, {}
    for key, raw in kv.items():
        m = _INDEXED.match(key)
        if m:
            idx = int(m.group(2))
            if m.group(1) == "inclusion":
                shapes[idx] = _parse_shape(key, raw)
            else:
                sources[idx] = raw
            continue
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        attr, parse = _KEYS[key]
        values[attr] = parse(key, raw)
    values["inclusions"] = tuple(shapes[i] for i in sorted(shapes))
    if sources:
        values["sources"] = tuple(sources[i] for i in sorted(sources))
    return ExperimentConfig(**values).validate()


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text of ``cfg``; ``format_config(parse_config(t))`` is a fixed point."""
    items = []
    for key, attr, _, fmt in _SCALARS:
        items.append((key, fmt(getattr(cfg, attr))))
        if key == "mesh.twist":
            items += [(f"inclusion.{i}", format_shape(s)) for i, s in enumerate(cfg.inclusions)]
            items += [(f"source.{i}", e) for i, e in enumerate(cfg.sources)]
    return format_flat(items)


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def preset_names() -> list:
    root = resources.files("idsm") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def load_preset(name: str) -> ExperimentConfig:
    """Configuration shipped with the package, e.g. ``example1_eps10``."""
    path = resources.files("idsm") / "presets" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {preset_names()}")
    return parse_config(path.read_text(encoding="utf-8"))


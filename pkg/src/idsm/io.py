"""
Plain-text files for meshes, nodal fields and data bundles.

Mesh file::

    mesh 2d tri
    nodes N
    x y            (N lines)
    triangles M
    i j k          (M lines, zero-based)
    boundary B
    i              (B lines, counterclockwise)

Field files are CSV with header ``node_index,value`` (domain fields) or
``boundary_index,arclength,value`` (boundary fields). Floats are written
with ``repr`` so reading gives back the same doubles.

A data bundle is a directory::

    mesh.txt  mesh_fine.txt  meta  truth_<channel>.csv
    pair_<l>/source.txt  measurement.csv  exact.csv  background0.csv
"""

import csv
from dataclasses import dataclass, field
import hashlib
from pathlib import Path

import numpy as np

from .config import format_flat, format_float, parse_flat, ConfigError
from .mesh import Mesh, MeshError, check_mesh
from .models import ModelSpec, SourceSpec
from .synthdata import CauchyPair, Dataset


class FormatError(ValueError):
    """A mesh or field file does not parse."""


class BundleError(ValueError):
    """A data bundle is missing, corrupt or does not match the mesh."""


def format_mesh(mesh: Mesh) -> str:
    lines = ["mesh 2d tri", f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.nodes.tolist()]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles.tolist()]
    lines.append(f"boundary {mesh.n_boundary}")
    lines += [str(i) for i in mesh.boundary_nodes.tolist()]
    return "\n".join(lines) + "\n"


def mesh_hash(mesh: Mesh) -> str:
    """SHA-256 of the canonical mesh file text."""
    return hashlib.sha256(format_mesh(mesh).encode()).hexdigest()


def write_mesh(path, mesh: Mesh) -> None:
    Path(path).write_text(format_mesh(mesh), encoding="utf-8")


def _section(lines, pos, name):
    if pos >= len(lines):
        raise FormatError(f"missing '{name}' section")
    parts = lines[pos].split()
    if len(parts) != 2 or parts[0] != name:
        raise FormatError(f"line {pos + 1}: expected '{name} <count>', got {lines[pos]!r}")
    try:
        count = int(parts[1])
    except ValueError:
        raise FormatError(f"line {pos + 1}: bad count {parts[1]!r}") from None
    block = lines[pos + 1 : pos + 1 + count]
    if len(block) != count:
        raise FormatError(f"'{name}' section truncated: {len(block)} of {count} lines")
    return block, pos + 1 + count


def _table(block, dtype, width, name):
    try:
        arr = np.array([row.split() for row in block], dtype=dtype)
    except ValueError as exc:
        raise FormatError(f"bad entry in '{name}' section: {exc}") from None
    if block and (arr.ndim != 2 or arr.shape[1] != width):
        raise FormatError(f"'{name}' rows must have {width} entries")
    return arr.reshape(len(block), width)


def read_mesh(path) -> Mesh:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read mesh {path}: {exc}") from exc
    if not lines or lines[0].strip() != "mesh 2d tri":
        raise FormatError(f"{path}: missing 'mesh 2d tri' header")
    nodes, pos = _section(lines, 1, "nodes")
    tris, pos = _section(lines, pos, "triangles")
    bnd, pos = _section(lines, pos, "boundary")
    mesh = Mesh(
        _table(nodes, float, 2, "nodes"),
        _table(tris, np.int64, 3, "triangles"),
        _table(bnd, np.int64, 1, "boundary")[:, 0],
    )
    try:
        check_mesh(mesh)
    except (MeshError, IndexError) as exc:
        raise FormatError(f"{path}: invalid mesh: {exc}") from exc
    return mesh


def write_nodal(path, values) -> None:
    values = np.asarray(values, dtype=float).ravel()
    rows = [f"{i},{v!r}" for i, v in enumerate(values.tolist())]
    Path(path).write_text("node_index,value\n" + "\n".join(rows) + "\n", encoding="utf-8")


def write_boundary(path, mesh: Mesh, values) -> None:
    values = np.asarray(values, dtype=float).ravel()
    if values.shape != (mesh.n_boundary,):
        raise ValueError(f"expected {mesh.n_boundary} boundary values, got {values.shape}")
    rows = [f"{i},{s!r},{v!r}" for i, (s, v) in enumerate(zip(mesh.arclength.tolist(), values.tolist()))]
    text = "boundary_index,arclength,value\n" + "\n".join(rows) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _read_csv(path, header, size):
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows or rows[0] != header:
        raise FormatError(f"{path}: expected header {','.join(header)}")
    body = [r for r in rows[1:] if r]
    out = np.empty(len(body))
    for lineno, row in enumerate(body, 2):
        if len(row) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} columns, got {row}")
        try:
            idx, val = int(row[0]), float(row[-1])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: cannot parse {row}") from None
        if idx != lineno - 2:
            raise FormatError(f"{path}:{lineno}: index {idx} out of order")
        out[idx] = val
    if size is not None and len(out) != size:
        raise FormatError(f"{path}: expected {size} rows, found {len(out)}")
    return out


def read_nodal(path, n_nodes=None) -> np.ndarray:
    return _read_csv(path, ["node_index", "value"], n_nodes)


def read_boundary(path, n_boundary=None) -> np.ndarray:
    return _read_csv(path, ["boundary_index", "arclength", "value"], n_boundary)


@dataclass
class Bundle:
    mesh: Mesh
    pairs: list
    truth: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def model(self) -> ModelSpec:
        m = self.meta
        return ModelSpec(m["model.kind"], float(m["model.sigma0"]), float(m["model.sigma"]))


def write_bundle(path, dataset: Dataset, coarse: Mesh, fine: Mesh, extra_meta=None) -> Path:
    """
    Write ``dataset`` under ``path``. The output depends only on its inputs,
    so equal inputs give byte-identical bundles.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    write_mesh(root / "mesh.txt", coarse)
    write_mesh(root / "mesh_fine.txt", fine)
    model = dataset.model
    for name, values in zip(model.channels, np.atleast_2d(dataset.truth)):
        write_nodal(root / f"truth_{name}.csv", values)
    for ell, pair in enumerate(dataset.pairs):
        d = root / f"pair_{ell}"
        d.mkdir(exist_ok=True)
        (d / "source.txt").write_text(pair.source.expression + "\n", encoding="utf-8")
        write_boundary(d / "measurement.csv", coarse, pair.measurement)
        if pair.exact is not None:
            write_boundary(d / "exact.csv", coarse, pair.exact)
        if pair.background0 is not None:
            write_boundary(d / "background0.csv", coarse, pair.background0)
    items = [
        ("model.kind", model.kind),
        ("model.sigma0", format_float(model.sigma0)),
        ("model.sigma", format_float(model.sigma)),
        ("channels", ", ".join(model.channels)),
        ("pairs", str(len(dataset.pairs))),
    ]
    for ell, pair in enumerate(dataset.pairs):
        items += [
            (f"pair.{ell}.epsilon", format_float(pair.epsilon)),
            (f"pair.{ell}.seed", str(pair.seed)),
            (f"pair.{ell}.stream", f"SeedSequence({pair.seed}, spawn_key=({ell},)) PCG64"),
        ]
    items += [("mesh.sha256", mesh_hash(coarse)), ("mesh_fine.sha256", mesh_hash(fine))]
    items += list((extra_meta or {}).items())
    (root / "meta").write_text(format_flat(items), encoding="utf-8")
    return root


def read_bundle(path, expected_hash=None) -> Bundle:
    """
    Load a bundle written by :func:`write_bundle`.

    Raises :class:`BundleError` when files are missing or corrupt, when the
    stored mesh does not match its recorded hash, or when ``expected_hash``
    is given and differs from it.
    """
    root = Path(path)
    if not root.is_dir():
        raise BundleError(f"bundle directory {root} does not exist")
    try:
        meta = parse_flat((root / "meta").read_text(encoding="utf-8"))
        mesh = read_mesh(root / "mesh.txt")
        recorded = meta["mesh.sha256"]
        if mesh_hash(mesh) != recorded:
            raise BundleError(f"{root}: mesh.txt does not match the recorded hash")
        if expected_hash is not None and expected_hash != recorded:
            raise BundleError(
                f"{root}: bundle mesh {recorded[:12]} differs from configured mesh {expected_hash[:12]}"
            )
        model = ModelSpec(meta["model.kind"], float(meta["model.sigma0"]), float(meta["model.sigma"]))
        placement = "boundary" if model.boundary_source else "domain"
        truth = np.array(
            [read_nodal(root / f"truth_{c}.csv", mesh.n_nodes) for c in model.channels]
        )
        pairs = []
        for ell in range(int(meta["pairs"])):
            d = root / f"pair_{ell}"
            expr = (d / "source.txt").read_text(encoding="utf-8").strip()
            opt = {}
            for name in ("exact", "background0"):
                if (d / f"{name}.csv").exists():
                    opt[name] = read_boundary(d / f"{name}.csv", mesh.n_boundary)
            pairs.append(
                CauchyPair(
                    SourceSpec(expr, placement),
                    read_boundary(d / "measurement.csv", mesh.n_boundary),
                    float(meta[f"pair.{ell}.epsilon"]),
                    int(meta[f"pair.{ell}.seed"]),
                    opt.get("exact"),
                    opt.get("background0"),
                )
            )
    except BundleError:
        raise
    except KeyError as exc:
        raise BundleError(f"{root}: meta lacks key {exc}") from exc
    except (OSError, FormatError, ConfigError, ValueError) as exc:
        raise BundleError(f"{root}: {exc}") from exc
    return Bundle(mesh, pairs, truth, meta)

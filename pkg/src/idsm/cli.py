"""
Command-line driver.

::

    idsm generate    --config CFG [--out DIR] [--seed S]
    idsm reconstruct --config CFG --bundle DIR [--out DIR]
    idsm compare     --config CFG --bundle DIR [--out DIR]
    idsm plot        --field CSV --mesh MESH [--config CFG] [--out PNG]

``--config`` takes a file path or the name of a shipped preset (see
``idsm presets``). Exit codes: 0 success, 2 configuration or parse error,
3 solver failure, 4 bundle missing, corrupt or built on another mesh.
"""

import argparse
import logging
from pathlib import Path
import sys

import numpy as np

from . import io
from .config import (
    ConfigError,
    format_config,
    format_flat,
    format_float,
    format_shape,
    load_config,
    load_preset,
    preset_names,
)
from .fem import CompatibilityError, SolverError
from .mesh import MeshError, build_ellipse_mesh
from .metrics import evaluate
from .models import AdmissibilityError, NonlinearSolveError
from .sampling import IdsmError, dsm_baseline_run, idsm_run
from .synthdata import GeometryError, generate_dataset

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_BUNDLE = 0, 2, 3, 4
_SOLVER_ERRORS = (SolverError, NonlinearSolveError, IdsmError, AdmissibilityError, np.linalg.LinAlgError)


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def resolve_config(ref, seed=None):
    """Load a config file, or a preset when no file of that name exists."""
    try:
        cfg = load_config(ref) if Path(ref).is_file() else load_preset(ref)
        return cfg if seed is None else cfg.with_seed(seed).validate()
    except (ConfigError, GeometryError, MeshError) as exc:
        raise CliError(f"invalid config {ref}: {exc}", EXIT_CONFIG) from exc


def build_meshes(cfg):
    coarse = build_ellipse_mesh(cfg.domain)
    fine = build_ellipse_mesh(cfg.fine_domain, twist=cfg.twist)
    return coarse, fine


def cmd_generate(cfg, out) -> Path:
    """Simulate the data bundle of ``cfg`` into ``out``."""
    coarse, fine = build_meshes(cfg)
    try:
        ds = generate_dataset(
            cfg.model, cfg.geometry, cfg.source_specs, fine, coarse, cfg.epsilon, cfg.seed
        )
    except CompatibilityError as exc:
        raise CliError(f"sources do not fit the model: {exc}", EXIT_CONFIG) from exc
    except _SOLVER_ERRORS as exc:
        raise CliError(f"forward solve failed: {exc}", EXIT_SOLVER) from exc
    meta = {"config.name": cfg.name}
    meta.update({f"inclusion.{i}": format_shape(s) for i, s in enumerate(cfg.inclusions)})
    root = io.write_bundle(out, ds, coarse, fine, meta)
    (root / "config.cfg").write_text(format_config(cfg), encoding="utf-8")
    return root


def _load_bundle(cfg, bundle):
    coarse = build_ellipse_mesh(cfg.domain)
    try:
        b = io.read_bundle(bundle, expected_hash=io.mesh_hash(coarse))
    except io.BundleError as exc:
        raise CliError(str(exc), EXIT_BUNDLE) from exc
    if b.model.kind != cfg.model_kind:
        raise CliError(f"bundle holds {b.model.kind} data, config is {cfg.model_kind}", EXIT_BUNDLE)
    return b


def _num(x) -> str:
    return format_float(x)


def summarize(trace, mesh, truth, cfg=None) -> str:
    """Deterministic run summary with metrics per iteration."""
    items = []
    if cfg is not None:
        items += [("config.name", cfg.name), ("model.kind", cfg.model_kind)]
    items += [
        ("run.iterations", str(trace.n_iterations)),
        ("run.rescale_factor", _num(trace.rescale_factor)),
        ("run.eta_scale", _num(trace.eta_scale)),
        ("run.skipped_updates", str(sum(trace.skipped))),
    ]
    for k, u in enumerate(trace.u):
        m = evaluate(mesh, u, truth)
        tag = f"iter.{k + 1:02d}"
        items += [
            (f"{tag}.l2_error", _num(m["l2_error"])),
            (f"{tag}.centroid_error", _num(m["centroid_error"])),
            (f"{tag}.jaccard", _num(m["jaccard"])),
            (f"{tag}.misfit", _num(trace.misfit[k])),
            (f"{tag}.skipped", str(trace.skipped[k]).lower()),
            (f"{tag}.degenerate_projection", str(trace.degenerate_projection[k]).lower()),
        ]
    return format_flat(items)


def _field_name(prefix, k, channels, c):
    return f"{prefix}_{k:02d}.csv" if len(channels) == 1 else f"{prefix}_{k:02d}_{channels[c]}.csv"


def write_trace(out, trace, channels) -> None:
    """``u_<k>`` for ``k = 1..K`` and ``eta_<k>`` for ``k = 0..K-1``, one file per channel."""
    out = Path(out)
    for k, (u, eta) in enumerate(zip(trace.u, trace.eta)):
        for c in range(len(channels)):
            io.write_nodal(out / _field_name("u", k + 1, channels, c), u[c])
            io.write_nodal(out / _field_name("eta", k, channels, c), eta[c])


def cmd_reconstruct(cfg, bundle, out) -> Path:
    b = _load_bundle(cfg, bundle)
    try:
        trace = idsm_run(b.model, cfg.idsm_config, b.pairs, b.mesh)
    except _SOLVER_ERRORS as exc:
        raise CliError(f"reconstruction failed: {exc}", EXIT_SOLVER) from exc
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_trace(out, trace, b.model.channels)
    (out / "summary.txt").write_text(summarize(trace, b.mesh, b.truth, cfg), encoding="utf-8")
    return out


def compare_report(cfg, bundle_obj) -> dict:
    b = bundle_obj
    try:
        eta_b, u_b = dsm_baseline_run(b.model, b.mesh, b.pairs, cfg.baseline_gamma, cfg.projection)
        trace = idsm_run(b.model, cfg.idsm_config, b.pairs, b.mesh)
    except _SOLVER_ERRORS as exc:
        raise CliError(f"comparison failed: {exc}", EXIT_SOLVER) from exc
    return {
        "dsm": evaluate(b.mesh, u_b, b.truth),
        "idsm": evaluate(b.mesh, trace.u[-1], b.truth),
        "dsm_max_eta": float(np.abs(eta_b).max()),
        "idsm_max_eta": float(np.abs(trace.eta[-1]).max()),
    }


def format_report(report) -> str:
    items = []
    for method in ("dsm", "idsm"):
        for key, val in report[method].items():
            items.append((f"{method}.{key}", _num(val)))
        items.append((f"{method}.max_abs_eta", _num(report[f"{method}_max_eta"])))
    return format_flat(items)


def format_table(report) -> str:
    rows = [f"{'method':<8}{'l2_error':>12}{'centroid':>12}{'jaccard':>12}"]
    for method in ("dsm", "idsm"):
        m = report[method]
        rows.append(
            f"{method:<8}{m['l2_error']:>12.4f}{m['centroid_error']:>12.4f}{m['jaccard']:>12.4f}"
        )
    return "\n".join(rows)


def cmd_compare(cfg, bundle, out) -> Path:
    report = compare_report(cfg, _load_bundle(cfg, bundle))
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.txt").write_text(format_report(report), encoding="utf-8")
    print(format_table(report))
    return out


def cmd_plot(field, mesh_path, out, cfg=None) -> Path:
    from .plotting import render_field

    try:
        mesh = io.read_mesh(mesh_path)
        values = io.read_nodal(field, mesh.n_nodes)
    except io.FormatError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc
    shapes = cfg.inclusions if cfg is not None else ()
    render_field(mesh, values, out, shapes)
    return Path(out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idsm", description="Iterative direct sampling experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a noisy data bundle")
    g.add_argument("--config", required=True)
    g.add_argument("--out")
    g.add_argument("--seed", type=int)

    for name, text in (("reconstruct", "run IDSM on a bundle"), ("compare", "IDSM against baseline DSM")):
        r = sub.add_parser(name, help=text)
        r.add_argument("--config", required=True)
        r.add_argument("--bundle", required=True)
        r.add_argument("--out")
        r.add_argument("--seed", type=int)

    pl = sub.add_parser("plot", help="render a nodal field CSV")
    pl.add_argument("--field", required=True)
    pl.add_argument("--mesh", required=True)
    pl.add_argument("--config", help="draw the inclusions of this config on top")
    pl.add_argument("--out")

    sub.add_parser("presets", help="list shipped configurations")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        if args.command == "presets":
            print("\n".join(preset_names()))
        elif args.command == "plot":
            cfg = resolve_config(args.config) if args.config else None
            out = args.out or str(Path(args.field).with_suffix(".png"))
            print(cmd_plot(args.field, args.mesh, out, cfg))
        else:
            cfg = resolve_config(args.config, args.seed)
            if args.command == "generate":
                print(cmd_generate(cfg, args.out or str(Path(cfg.out_dir) / "bundle")))
            elif args.command == "reconstruct":
                print(cmd_reconstruct(cfg, args.bundle, args.out or str(Path(cfg.out_dir) / "idsm")))
            else:
                cmd_compare(cfg, args.bundle, args.out or str(Path(cfg.out_dir) / "compare"))
    except CliError as exc:
        print(f"idsm: error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))

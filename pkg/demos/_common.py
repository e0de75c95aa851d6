"""Helpers shared by the demo scripts: run a preset and save figures."""

from dataclasses import replace
from pathlib import Path
import time

import numpy as np

from idsm.cli import build_meshes
from idsm.config import load_preset
from idsm.metrics import evaluate
from idsm.plotting import render_field
from idsm.sampling import dsm_baseline_run, idsm_run
from idsm.synthdata import generate_dataset


def simulate(preset, **overrides):
    """Config, reconstruction mesh and noisy data of a shipped preset."""
    cfg = replace(load_preset(preset), **overrides).validate()
    coarse, fine = build_meshes(cfg)
    ds = generate_dataset(cfg.model, cfg.geometry, cfg.source_specs, fine, coarse, cfg.epsilon, cfg.seed)
    return cfg, coarse, ds


def reconstruct(cfg, mesh, ds, **overrides):
    t0 = time.perf_counter()
    trace = idsm_run(ds.model, replace(cfg.idsm_config, **overrides), ds.pairs, mesh)
    print(f"  {trace.n_iterations} iterations in {time.perf_counter() - t0:.1f} s")
    return trace


def baseline(cfg, mesh, ds):
    return dsm_baseline_run(ds.model, mesh, ds.pairs, cfg.baseline_gamma, cfg.projection)[1]


def print_history(mesh, trace, truth):
    print(f"  {'k':>3} {'l2':>8} {'centroid':>9} {'jaccard':>8}")
    for k, u in enumerate(trace.u, 1):
        m = evaluate(mesh, u, truth)
        print(f"  {k:>3} {m['l2_error']:8.4f} {m['centroid_error']:9.4f} {m['jaccard']:8.4f}")


def save_fields(out, mesh, cfg, fields):
    """Write one PNG per ``(name, (C, N) array)``, one image per channel."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    channels = cfg.model.channels
    for name, values in fields:
        values = np.atleast_2d(values)
        for c, ch in enumerate(channels):
            tag = name if len(channels) == 1 else f"{name}_{ch}"
            render_field(mesh, values[c], out / f"{tag}.png", cfg.inclusions)
    print(f"  figures in {out}/")

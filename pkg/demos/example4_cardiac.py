"""
Nonlinear cardiac-type model with two ischemic regions.

The state equation is nonlinear, so every iterate re-solves it by Newton's
method around the current estimate. The coefficient bounds are unknown and
the projection only rescales the indicator into [0, 1].
"""

import sys

from _common import print_history, reconstruct, save_fields, simulate


def main(out="out/demo_example4"):
    cfg, mesh, ds = simulate("example4")
    print(f"example4: sigma {cfg.sigma}, source {cfg.sources[0]}")
    trace = reconstruct(cfg, mesh, ds)
    print_history(mesh, trace, ds.truth)
    save_fields(out, mesh, cfg, [("truth", ds.truth), ("u_01", trace.u[0]), ("u_11", trace.u[-1])])


if __name__ == "__main__":
    main(*sys.argv[1:])

"""
Diffuse optical tomography with a single source.

The absorption inclusion is recovered from one Cauchy pair. A small Robin
parameter alpha lets the regularized DtN map act almost like the exact one
and needs more iterations; alpha = 1 smooths strongly and settles quickly.
"""

import sys

from _common import print_history, reconstruct, save_fields, simulate


def main(out="out/demo_example3"):
    for preset in ("example3_alpha1e-3", "example3_alpha1"):
        cfg, mesh, ds = simulate(preset)
        print(f"{preset}: alpha {cfg.alpha}, K {cfg.K}")
        trace = reconstruct(cfg, mesh, ds)
        print_history(mesh, trace, ds.truth)
        save_fields(f"{out}/{preset}", mesh, cfg, [("truth", ds.truth), ("u_01", trace.u[0]), ("u_last", trace.u[-1])])


if __name__ == "__main__":
    main(*sys.argv[1:])

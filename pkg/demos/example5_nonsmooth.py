"""
Nonsmooth semilinear model with two absorbing circles.

The reaction term is only Lipschitz, so the linearization uses a
generalized derivative. Two circles of different strength test whether the
indicator keeps the weaker one visible.
"""

import sys

from _common import print_history, reconstruct, save_fields, simulate


def main(out="out/demo_example5"):
    cfg, mesh, ds = simulate("example5")
    print(f"example5: {len(cfg.inclusions)} inclusions, alpha {cfg.alpha}")
    trace = reconstruct(cfg, mesh, ds)
    print_history(mesh, trace, ds.truth)
    save_fields(out, mesh, cfg, [("truth", ds.truth), ("u_01", trace.u[0]), ("u_11", trace.u[-1])])


if __name__ == "__main__":
    main(*sys.argv[1:])

"""
Simultaneous conductivity and potential recovery.

Two squares are placed side by side: the left one perturbs only the
conductivity, the right one only the potential. Both channels share the
same boundary data, so the test is whether the indicator separates them.
"""

import sys

from _common import print_history, reconstruct, save_fields, simulate


def main(out="out/demo_example2"):
    cfg, mesh, ds = simulate("example2")
    print(f"example2: channels {', '.join(cfg.model.channels)}, alpha {cfg.alpha}")
    trace = reconstruct(cfg, mesh, ds)
    print_history(mesh, trace, ds.truth)
    save_fields(out, mesh, cfg, [("truth", ds.truth), ("u_01", trace.u[0]), ("u_11", trace.u[-1])])


if __name__ == "__main__":
    main(*sys.argv[1:])

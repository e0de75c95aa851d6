"""
Baseline DSM against IDSM over a range of noise levels.

For every noise level the same inclusion is simulated with a few seeds and
both reconstructions are scored. DFP and BFG corrections are run side by
side to show that they land on nearly the same indicator.
"""

import sys

import numpy as np

from _common import baseline, reconstruct, simulate
from idsm.metrics import relative_l2_error


def main(seeds=3):
    seeds = int(seeds)
    print(f"{'noise':>6} {'dsm':>8} {'idsm':>8} {'cos(dfp,bfg)':>13}")
    for eps in (0.0, 0.1, 0.2, 0.3):
        rows = []
        for seed in range(1, seeds + 1):
            cfg, mesh, ds = simulate("example1_eps10", epsilon=eps, seed=seed)
            dfp = reconstruct(cfg, mesh, ds)
            bfg = reconstruct(cfg, mesh, ds, correction="bfg")
            a, b = dfp.eta[-1].ravel(), bfg.eta[-1].ravel()
            rows.append(
                (
                    relative_l2_error(mesh, baseline(cfg, mesh, ds), ds.truth),
                    relative_l2_error(mesh, dfp.u[-1], ds.truth),
                    a @ b / (np.linalg.norm(a) * np.linalg.norm(b)),
                )
            )
        d, i, c = np.mean(rows, axis=0)
        print(f"{eps:>6.1f} {d:8.4f} {i:8.4f} {c:13.4f}")


if __name__ == "__main__":
    main(*sys.argv[1:])

"""
Raster heatmaps of nodal fields with inclusion outlines.

Images are 800 x 640 pixels with the axes filling the canvas, so a point
``(x1, x2)`` maps to pixel column ``(x1 + X) / (2 X) * 800`` and row
``(Y - x2) / (2 Y) * 640`` where ``[-X, X] x [-Y, Y]`` is the plotted window
returned by :func:`plot_window`.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

from .mesh import Mesh  # noqa: E402

WIDTH, HEIGHT, DPI = 800, 640, 100


def plot_window(mesh: Mesh, pad: float = 0.02):
    """Half-extents ``(X, Y)`` of the window, with the image aspect ratio."""
    ext = np.abs(mesh.nodes).max(axis=0) * (1 + pad)
    ratio = WIDTH / HEIGHT
    X = max(ext[0], ext[1] * ratio)
    return X, X / ratio


def to_pixels(mesh: Mesh, points):
    """Pixel ``(column, row)`` of data points, row 0 at the top."""
    X, Y = plot_window(mesh)
    p = np.atleast_2d(points)
    return np.column_stack([(p[:, 0] + X) / (2 * X) * WIDTH, (Y - p[:, 1]) / (2 * Y) * HEIGHT])


def render_field(mesh: Mesh, values, path=None, shapes=(), cmap="viridis", outline="white"):
    """
    Draw ``values`` on the triangulation and optionally save it.

    Parameters
    ----------
    shapes : sequence
        Objects with an ``outline()`` method returning an (n, 2) polyline,
        drawn closed on top of the field.

    Returns
    -------
    fig : matplotlib Figure (closed when ``path`` is given)
    """
    values = np.asarray(values, dtype=float).ravel()
    if values.shape != (mesh.n_nodes,):
        raise ValueError(f"field has {values.size} values, mesh has {mesh.n_nodes} nodes")
    fig = plt.figure(figsize=(WIDTH / DPI, HEIGHT / DPI), dpi=DPI)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.set_axis_off()
    X, Y = plot_window(mesh)
    ax.set_xlim(-X, X)
    ax.set_ylim(-Y, Y)
    tri = mtri.Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)
    lo, hi = values.min(), values.max()
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    ax.tripcolor(tri, values, shading="gouraud", cmap=cmap, vmin=lo, vmax=hi)
    for s in shapes:
        pts = s.outline()
        pts = np.vstack([pts, pts[:1]])
        ax.plot(pts[:, 0], pts[:, 1], color=outline, lw=1.5, antialiased=False)
    if path is not None:
        fig.savefig(path, dpi=DPI)
        plt.close(fig)
    return fig

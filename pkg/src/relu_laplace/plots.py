"""Confidence lattices and SVG heatmaps with the decision boundary drawn by marching squares."""
import numpy as np

from .predictive import predict


def lattice(radius, resolution):
    """Row-major (x, y) points of a square lattice over [-radius, radius]^2; y varies slowest."""
    t = np.linspace(-radius, radius, resolution)
    xx, yy = np.meshgrid(t, t)
    return t, np.stack([xx.ravel(), yy.ravel()], axis=1)


def boundary_fields(probs):
    """Scalar fields whose zero level sets are the decision boundaries.

    Binary: p(y=1) - 1/2. Multiclass: for each class c, p_c - max_{j != c} p_j.
    """
    if probs.ndim == 1:
        return [probs - 0.5]
    fields = []
    for c in range(probs.shape[1]):
        others = np.delete(probs, c, axis=1).max(axis=1)
        fields.append(probs[:, c] - others)
    return fields


def _cross(a, b, va, vb):
    t = va / (va - vb)
    return a + t * (b - a)


def marching_squares(t, field):
    """Line segments approximating the zero level set of ``field`` on the lattice ``t x t``."""
    n = t.size
    F = np.asarray(field, dtype=float).reshape(n, n)
    segs = []
    for i in range(n - 1):
        for j in range(n - 1):
            corners = [
                (np.array([t[j], t[i]]), F[i, j]),
                (np.array([t[j + 1], t[i]]), F[i, j + 1]),
                (np.array([t[j + 1], t[i + 1]]), F[i + 1, j + 1]),
                (np.array([t[j], t[i + 1]]), F[i + 1, j]),
            ]
            pts = []
            for (pa, va), (pb, vb) in zip(corners, corners[1:] + corners[:1]):
                if (va > 0) != (vb > 0):
                    pts.append(_cross(pa, pb, va, vb))
            if len(pts) == 2:
                segs.append((pts[0], pts[1]))
            elif len(pts) == 4:
                # saddle: resolve with the cell-centre value
                centre = np.mean([v for _, v in corners])
                order = (0, 1, 2, 3) if (centre > 0) == (corners[0][1] > 0) else (0, 3, 2, 1)
                segs.append((pts[order[0]], pts[order[1]]))
                segs.append((pts[order[2]], pts[order[3]]))
    return segs


def confidence_grid(net, post, radius, resolution, cfg=None):
    t, P = lattice(radius, resolution)
    out = predict(net, post, P, cfg)
    return t, P, out


def _colour(c, k):
    """White at chance level 1/k, dark blue at certainty."""
    s = np.clip((c - 1.0 / k) / (1.0 - 1.0 / k), 0.0, 1.0)
    r, g, b = (int(round(255 - s * (255 - v))) for v in (8, 48, 107))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(t, confidence, fields, k, points=None, labels=None, size=404):
    """SVG document: confidence cells, boundary polylines and optional data points."""
    n = t.size
    lo, hi = float(t[0]), float(t[-1])
    step = (hi - lo) / (n - 1)
    scale = size / (hi - lo + step)

    def sx(x):
        return (x - lo + step / 2) * scale

    def sy(y):
        return size - (y - lo + step / 2) * scale

    C = np.asarray(confidence).reshape(n, n)
    cell = step * scale
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    out.append('<g shape-rendering="crispEdges">')
    for i in range(n):
        for j in range(n):
            x0, y0 = sx(t[j]) - cell / 2, sy(t[i]) - cell / 2
            out.append(f'<rect x="{x0:.3f}" y="{y0:.3f}" width="{cell:.3f}" height="{cell:.3f}" '
                       f'fill="{_colour(C[i, j], k)}"/>')
    out.append("</g>")
    out.append('<g stroke="black" stroke-width="1.5" fill="none">')
    for field in fields:
        for a, b in marching_squares(t, field):
            out.append(f'<line x1="{sx(a[0]):.3f}" y1="{sy(a[1]):.3f}" x2="{sx(b[0]):.3f}" y2="{sy(b[1]):.3f}"/>')
    out.append("</g>")
    if points is not None:
        palette = ["#e41a1c", "#ffbf00", "#4daf4a", "#984ea3", "#ff7f00", "#a65628"]
        out.append('<g stroke="white" stroke-width="0.5">')
        for (x, y), lab in zip(points, labels):
            if lo <= x <= hi and lo <= y <= hi:
                out.append(f'<circle cx="{sx(x):.3f}" cy="{sy(y):.3f}" r="2.5" fill="{palette[int(lab) % len(palette)]}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"

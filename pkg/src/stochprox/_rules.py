"""Composite Gauss-Legendre rules on piecewise-uniform panels."""

from functools import lru_cache

import numpy as np

PANEL_ORDER = 16


@lru_cache(maxsize=None)
def _leggauss(order):
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def composite_rule(breaks, points_per_segment, order=PANEL_ORDER):
    """Nodes and weights of a composite Gauss-Legendre rule.

    Every interval ``[breaks[i], breaks[i+1]]`` is cut into
    ``ceil(points_per_segment / order)`` equal panels carrying an
    ``order``-point Gauss-Legendre rule each.
    """
    breaks = np.asarray(breaks, dtype=float)
    panels = max(1, -(-int(points_per_segment) // order))
    ref_x, ref_w = _leggauss(order)
    edges = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            edges.append(np.linspace(a, b, panels + 1))
    if not edges:
        return np.empty(0), np.empty(0)
    edges = np.concatenate([e[:-1] for e in edges] + [edges[-1][-1:]])
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = (mid[:, None] + half[:, None] * ref_x[None, :]).ravel()
    weights = (half[:, None] * ref_w[None, :]).ravel()
    return nodes, weights


def graded_breaks(lo, hi, anchors, outer, inner, ratio=4.0, limit=40):
    """Breakpoints in ``[lo, hi]`` refined geometrically toward ``anchors``.

    Around each anchor the points ``anchor +- outer * ratio**-j`` are added
    until the offset drops below ``inner``. The grading resolves boundary
    layers (kinks, indicator edges) whose width is much smaller than the
    core width ``outer``.
    """
    pts = {float(lo), float(hi)}
    for a in anchors:
        if not lo <= a <= hi:
            continue
        pts.add(float(a))
        off = float(outer)
        for _ in range(limit):
            for p in (a - off, a + off):
                if lo < p < hi:
                    pts.add(p)
            if off <= inner:
                break
            off /= ratio
    return np.array(sorted(pts))

"""Planar geometry helpers shared by the floorplan and optics code.

All coordinates are in micrometres. Node footprints and the focused laser
spot are both modelled as discs, so the only nontrivial primitive is the
circle-circle intersection area (the classic "lens" formula).
"""

from __future__ import annotations

import numpy as np


def disc_intersection_area(d, r1, r2):
    """Intersection area of two discs with centre distance ``d``.

    Vectorised over ``d``; ``r1``/``r2`` may be scalars or arrays of the
    same shape.
    """
    d = np.asarray(d, dtype=float)
    r1 = np.broadcast_to(np.asarray(r1, dtype=float), d.shape).copy()
    r2 = np.broadcast_to(np.asarray(r2, dtype=float), d.shape).copy()

    area = np.zeros_like(d)
    rmin = np.minimum(r1, r2)
    rmax = np.maximum(r1, r2)

    # the epsilon absorbs fp noise (and subnormal d) right at the containment
    # boundary, where the formula is continuous anyway
    contained = d <= (rmax - rmin) + 1e-12 * rmax
    area[contained] = np.pi * rmin[contained] ** 2

    partial = (~contained) & (d < r1 + r2)
    if np.any(partial):
        dp, ra, rb = d[partial], r1[partial], r2[partial]
        # circular-segment decomposition; clip guards fp noise at the limits
        a1 = np.arccos(np.clip((dp**2 + ra**2 - rb**2) / (2 * dp * ra), -1, 1))
        a2 = np.arccos(np.clip((dp**2 + rb**2 - ra**2) / (2 * dp * rb), -1, 1))
        tri = 0.5 * np.sqrt(
            np.clip((-dp + ra + rb) * (dp + ra - rb) * (dp - ra + rb) * (dp + ra + rb), 0, None)
        )
        area[partial] = ra**2 * a1 + rb**2 * a2 - tri
    return area


def overlap_weight(d, footprint_radius, disc_radius):
    """Normalised footprint/disc overlap in [0, 1].

    The intersection area is normalised by the smaller of the two discs, so
    a probe spot centred on a node reports weight 1 whether the spot covers
    the node or the node swallows the spot.
    """
    inter = disc_intersection_area(d, footprint_radius, disc_radius)
    norm = np.pi * np.minimum(
        np.asarray(footprint_radius, dtype=float), np.asarray(disc_radius, dtype=float)
    ) ** 2
    return inter / norm


def rect_contains(rect, x, y) -> bool:
    """Point-in-rectangle test for (x0, y0, x1, y1) rects."""
    x0, y0, x1, y1 = rect
    return x0 <= x <= x1 and y0 <= y <= y1


def rects_overlap(a, b) -> bool:
    """True when two (x0, y0, x1, y1) rectangles share interior area."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1

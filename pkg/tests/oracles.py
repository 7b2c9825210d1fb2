"""Brute-force reference solutions shared by the module and acceptance tests."""

import numpy as np

from flexregion.socp import ConicProblem, SocBlock

GRID = 2001


def random_box_disk(rng):
    """max c.x over a random box intersected with a disk whose centre is in the box."""
    lo = rng.uniform(-2, 0, 2)
    hi = lo + rng.uniform(0.2, 3, 2)
    centre = rng.uniform(lo, hi)
    r = rng.uniform(0.1, 2.0)
    c = rng.normal(size=2)
    prob = ConicProblem(c=c, lb=lo, ub=hi,
                        soc_blocks=[SocBlock(np.eye(2), -centre, np.zeros(2), r, "disk")])
    return prob, (lo, hi, centre, r)


def grid_search(c, lo, hi, centre, r):
    """Exhaustive search on a 2001 x 2001 grid, then again on the cells around the best point."""
    best = -np.inf
    box_lo, box_hi = np.asarray(lo, float), np.asarray(hi, float)
    for _ in range(4):
        xs = np.linspace(box_lo[0], box_hi[0], GRID)
        ys = np.linspace(box_lo[1], box_hi[1], GRID)
        X, Y = np.meshgrid(xs, ys, sparse=True)
        ok = (X - centre[0]) ** 2 + (Y - centre[1]) ** 2 <= r * r
        val = np.where(ok, c[0] * X + c[1] * Y, -np.inf)
        k = np.unravel_index(np.argmax(val), val.shape)
        best = max(best, val[k])
        pt = np.array([xs[k[1]], ys[k[0]]])
        step = (box_hi - box_lo) / (GRID - 1)
        # along a curved edge the best grid point can sit ~sqrt(step * r) from the optimum
        half = max(100 * step.max(), 3 * np.sqrt(2 * r * step.max()))
        box_lo = np.maximum(pt - half, lo)
        box_hi = np.minimum(pt + half, hi)
    return float(best)

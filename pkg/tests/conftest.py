"""Shared builders for randomized partition-tree fixtures."""

import math

import numpy as np
from scipy.special import betaln

from covermodels import (
    Box,
    CoverModelPosterior,
    DirichletMultinomial,
    ExactEnumerator,
    HistogramDensity,
    KdTreeCover,
    dirichlet_block_marginal,
    histogram_block_marginal,
)


def random_static_tree(rng, max_extra_splits=6, dim=None, depth_cap=3):
    """A kd partition tree grown by unconditional splits, no data yet."""
    dim = dim or int(rng.integers(1, 3))
    box = Box(np.zeros(dim), rng.uniform(0.5, 2.0, size=dim))
    cov = KdTreeCover(box, alpha=2.0, max_depth=depth_cap + 1)
    leaves = [cov.roots()[0]]
    for _ in range(int(rng.integers(1, max_extra_splits + 1))):
        # only leaves below the depth cap stay splittable
        open_leaves = [c for c in leaves if cov.contexts[c].depth <= depth_cap]
        if not open_leaves:
            break
        pick = open_leaves[int(rng.integers(len(open_leaves)))]
        leaves.remove(pick)
        leaves.extend(cov.split_leaf(pick))
    return cov


def attach_random_engine(rng, cov, kind="dirichlet", alphabet=3):
    """Engine over a static tree with per-context random stop weights."""
    if kind == "dirichlet":
        factory = lambda depth, region: DirichletMultinomial(alphabet, 0.5)
        marginal = dirichlet_block_marginal(alphabet, 0.5)
    else:
        edges = np.linspace(-1.0, 1.0, 5)
        factory = lambda depth, region: HistogramDensity(edges, 1.0)
        marginal = histogram_block_marginal(edges, 1.0)
    post = CoverModelPosterior(cov, factory, depth_weight="const:0.5", grow=False)
    w0 = {}
    for cid in cov.contexts:
        w = float(rng.uniform(0.05, 0.95))
        post.set_w0(cid, w)
        w0[cid] = w
    oracle = ExactEnumerator(cov, w0, marginal)
    return post, oracle


def random_xy(rng, cov, kind="dirichlet", alphabet=3):
    box = cov.root_box
    x = rng.uniform(box.lower, box.upper)
    if kind == "dirichlet":
        y = int(rng.integers(alphabet))
    else:
        y = float(rng.uniform(-1.0, 1.0))
    return x, y


def enum_stopped_trees(lo, hi, depth, max_depth, gamma, a, points):
    """Dyadic density-tree evidence by explicit recursion over stopping
    configurations. Deliberately cache-free and count-free."""
    n = len(points)
    width = hi - lo
    d = int(np.argmax(width))
    vol = float(np.prod(width))
    here = vol ** (-n)
    if depth == max_depth:
        return here
    mid = 0.5 * (lo[d] + hi[d])
    left = [p for p in points if p[d] < mid]
    right = [p for p in points if p[d] >= mid]
    hi_l = hi.copy()
    hi_l[d] = mid
    lo_r = lo.copy()
    lo_r[d] = mid
    split = (
        math.exp(betaln(a + len(left), a + len(right)) - betaln(a, a))
        * enum_stopped_trees(lo, hi_l, depth + 1, max_depth, gamma, a, left)
        * enum_stopped_trees(lo_r, hi, depth + 1, max_depth, gamma, a, right)
    )
    return gamma * here + (1 - gamma) * split

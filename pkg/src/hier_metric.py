"""Hierarchy-weighted label-set distance and the contrastive pair weights built on it."""
from typing import Tuple

import numpy as np

from core.exceptions import ShapeError
from src.taxonomy import LabelVector, Taxonomy


class MetricContext:
    """
    Per-taxonomy constants of the weighted Hamming distance.

    A differing coordinate k costs w_k = |L| - depth(k) + 1, so disagreements near
    the top of the tree weigh more. `C` is the largest attainable distance.
    """

    def __init__(self, taxonomy: Taxonomy):
        self.taxonomy = taxonomy
        self.level_weight = (taxonomy.max_depth - taxonomy.depths + 1).astype(np.float64)
        self.level_weight.setflags(write=False)
        self.C = float(self.level_weight.sum())

    def _check(self, op: str, *vectors) -> None:
        for v in vectors:
            if np.shape(v)[-1] != self.taxonomy.n:
                raise ShapeError(op, np.shape(v), (self.taxonomy.n,))


def rho(ctx: MetricContext, a: LabelVector, b: LabelVector) -> float:
    ctx._check("rho", a, b)
    differ = np.asarray(a) != np.asarray(b)
    return float(ctx.level_weight[differ].sum())


def hamming(a: LabelVector, b: LabelVector) -> int:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError("hamming", a.shape, b.shape)
    return int(np.count_nonzero(a != b))


def sigma_gamma(
    ctx: MetricContext, anchor: LabelVector, other: LabelVector, normalize_gamma: bool = False
) -> Tuple[float, float]:
    """
    Positive and negative pair weights.

    :param ctx: Metric context of the taxonomy.
    :param anchor: Label set of the anchor's sample.
    :param other: Label set of the compared sample.
    :param normalize_gamma: Divide gamma by C as well (off by default; gamma is
        otherwise left on the raw distance scale).
    :return: (sigma, gamma) with sigma = 1 - rho/C and gamma = rho.
    """
    distance = rho(ctx, anchor, other)
    sigma = 1.0 - distance / ctx.C
    gamma = distance / ctx.C if normalize_gamma else distance
    return sigma, gamma


def pairwise_distance(ctx: MetricContext, Y: np.ndarray, mode: str = "hilecon") -> np.ndarray:
    """
    All-pairs distance matrix between the rows of a (B x n) label matrix.

    `mode="lecon"` uses the unweighted Hamming distance.
    """
    Y = np.asarray(Y)
    if Y.ndim != 2:
        raise ShapeError("pairwise_distance", Y.shape, ("B", ctx.taxonomy.n))
    ctx._check("pairwise_distance", Y)
    weights = np.ones(ctx.taxonomy.n) if mode == "lecon" else ctx.level_weight
    differ = (Y[:, None, :] != Y[None, :, :]).astype(np.float64)
    return differ @ weights


def normalizer(ctx: MetricContext, mode: str = "hilecon") -> float:
    """rho(all-zeros, all-ones) under the chosen distance."""
    return float(ctx.taxonomy.n) if mode == "lecon" else ctx.C

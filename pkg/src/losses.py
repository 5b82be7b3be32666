"""
Training objectives over a batch of per-sample label embeddings.

Anchors of the label-level losses are the gold-label embeddings of the batch, taken
sample by sample in label order. Anchors without any positive contribute nothing.
"""
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import DataError, NumericError, ShapeError
from core.logger import get_logger
from data_model.pydantic_models.config import LossWeights
from data_model.pydantic_models.report import LossBreakdown
from src.hier_metric import MetricContext, normalizer, pairwise_distance
from src.taxonomy import Taxonomy
from src.tensor_core import ops
from src.tensor_core.tensor import Tensor

logger = get_logger(__name__, log_file="training.log")


@dataclass
class ContrastiveBatch:
    Z: List[Tensor]  # one (n x d) tensor per sample
    Y: np.ndarray  # (B x n) gold bits
    taxonomy: Taxonomy
    ids: Optional[List[str]] = field(default=None)

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=np.int8)
        if self.Y.ndim != 2 or self.Y.shape != (len(self.Z), self.taxonomy.n):
            raise ShapeError("contrastive_batch", self.Y.shape, (len(self.Z), self.taxonomy.n))
        for z in self.Z:
            if z.shape[0] != self.taxonomy.n or z.shape[1] != self.Z[0].shape[1]:
                raise ShapeError("contrastive_batch", z.shape, self.Z[0].shape)
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.Z))]

    @property
    def size(self) -> int:
        return len(self.Z)

    def gold_embeddings(self) -> Tuple[Tensor, np.ndarray, np.ndarray]:
        """
        Stack the gold-label embeddings.

        :return: (N x d) tensor, owning sample of each row, label of each row.
        """
        rows, owners, labels = [], [], []
        for i, z in enumerate(self.Z):
            active = np.flatnonzero(self.Y[i])
            if active.size == 0:
                continue
            rows.append(ops.gather_rows(z, active))
            owners.extend([i] * active.size)
            labels.extend(active.tolist())
        if not rows:
            raise DataError("batch has no gold label embeddings")
        return ops.concat_rows(rows), np.asarray(owners), np.asarray(labels)


def _positive_mask(owners: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """positive[a, b]: same label, other sample."""
    return (labels[:, None] == labels[None, :]) & (owners[:, None] != owners[None, :])


def _contrast(
    sims: Tensor, positive: np.ndarray, denominator: np.ndarray, log_weight: Optional[np.ndarray] = None
) -> Optional[Tensor]:
    """
    Sum over anchors with positives of LSE_w(s_a) - mean_p(s_ap + log w_ap).

    :param sims: (N x N) similarity logits.
    :param positive: (N x N) positive mask.
    :param denominator: (N x N) non-negative weights of the denominator.
    :param log_weight: (N x N) log weights of the numerators, or None.
    :return: 1x1 tensor, or None when no anchor has a positive.
    """
    anchors = np.flatnonzero(positive.any(axis=1))
    if anchors.size == 0:
        return None
    counts = positive[anchors].sum(axis=1, keepdims=True).astype(np.float64)
    pos_avg = positive[anchors] / counts

    rows = ops.gather_rows(sims, anchors)
    lse = ops.sum_all(ops.log_sum_exp_rows(rows, denominator[anchors]))
    attract = ops.sum_all(ops.mul(rows, ops.constant(pos_avg)))
    loss = ops.sub(lse, attract)
    if log_weight is not None:
        offset = float((pos_avg * np.where(positive[anchors], log_weight[anchors], 0.0)).sum())
        loss = ops.sub(loss, ops.constant(offset))
    return loss


def supcon(batch: ContrastiveBatch, tau: float) -> Tensor:
    """
    Supervised contrastive loss over gold-label embeddings, summed over anchors.

    Positives of an anchor are the embeddings of the same label in other samples; the
    denominator runs over every other gold-label embedding. Similarity is z_a . z_b / tau.
    """
    E, owners, labels = batch.gold_embeddings()
    sims = ops.scale(ops.matmul(E, ops.transpose(E)), 1.0 / tau)
    positive = _positive_mask(owners, labels)
    others = 1.0 - np.eye(len(owners))
    loss = _contrast(sims, positive, others)
    return loss if loss is not None else ops.constant(0.0)


def _check_norms(batch: ContrastiveBatch, E: Tensor, owners: np.ndarray, labels: np.ndarray) -> None:
    norms = np.sqrt((E.data * E.data).sum(axis=1))
    bad = np.flatnonzero(norms == 0)
    if bad.size:
        a = int(bad[0])
        raise NumericError(
            f"zero-norm embedding for sample '{batch.ids[owners[a]]}', "
            f"label '{batch.taxonomy.labels[labels[a]]}'; cosine similarity is undefined"
        )


def hilecon(
    batch: ContrastiveBatch,
    tau: float,
    ctx: MetricContext,
    mode: str = "hilecon",
    normalize_gamma: bool = False,
    prefactor: str = "anchors",
) -> Tensor:
    """
    Label-level contrastive loss weighted by the distance between the samples' label sets.

    A positive pair (anchor of sample i, same label in sample k) is weighted by
    sigma = 1 - rho(Y_i, Y_k)/C and every negative by gamma = rho(Y_i, Y_k), with
    f(u, v) = exp(cos(u, v)/tau). `mode="lecon"` swaps rho for the Hamming distance;
    `mode="supcon"` returns `supcon` unchanged.

    :param prefactor: "anchors" divides by the number of gold-label embeddings,
        "labels" by the number of taxonomy labels.
    """
    if mode == "supcon":
        return supcon(batch, tau)
    if mode not in ("hilecon", "lecon"):
        raise ValueError(f"unknown label-loss mode '{mode}'")

    E, owners, labels = batch.gold_embeddings()
    _check_norms(batch, E, owners, labels)
    sims = ops.scale(ops.cosine_similarity(E, E), 1.0 / tau)

    distance = pairwise_distance(ctx, batch.Y, mode=mode)
    scale_to = normalizer(ctx, mode=mode)
    sigma = (1.0 - distance / scale_to)[owners][:, owners]
    gamma = (distance / scale_to if normalize_gamma else distance)[owners][:, owners]

    positive = _positive_mask(owners, labels)
    negative = ~positive & ~np.eye(len(owners), dtype=bool)
    weights = np.where(positive, sigma, 0.0) + np.where(negative, gamma, 0.0)
    with np.errstate(divide="ignore"):
        log_sigma = np.where(positive, np.log(np.where(positive, sigma, 1.0)), 0.0)

    loss = _contrast(sims, positive, weights, log_weight=log_sigma)
    if loss is None:
        return ops.constant(0.0)
    count = len(owners) if prefactor == "anchors" else batch.taxonomy.n
    return ops.scale(loss, 1.0 / count)


def depth_penalty(level: int, max_depth: int, rule: str = "shifted") -> float:
    if rule == "shifted":
        return math.exp(1.0 / (max_depth - level + 1))
    if rule == "clamped":
        return math.exp(1.0 / max(max_depth - level, 1))
    raise ValueError(f"unknown penalty rule '{rule}'")


def instance_loss(
    batch: ContrastiveBatch,
    tau: float,
    taxonomy: Taxonomy,
    penalty: str = "shifted",
    denominator: str = "all",
    positive_rule: str = "exact",
) -> Tensor:
    """
    Per-level contrast of mean-pooled sample representations.

    At level l each sample is represented by the mean of its gold-label embeddings
    of depth <= l. Positives are other samples with the same truncated label set
    (`positive_rule="overlap"`: any shared truncated label). Every ordered positive
    pair contributes log-softmax of X_i . X_j / tau over the other samples
    (`denominator="strict"`: over the positive and the negatives only), weighted by
    the depth penalty. Levels are averaged; a level with no positive pair adds 0.
    """
    max_depth = taxonomy.max_depth
    depths = taxonomy.depths
    level_terms: List[Tensor] = []

    for level in range(1, max_depth + 1):
        truncated = batch.Y * (depths <= level)
        valid = [i for i in range(batch.size) if truncated[i].any()]
        skipped = batch.size - len(valid)
        if skipped:
            logger.warning(f"{skipped} samples have no gold labels at depth <= {level}; left out of that level")
        if len(valid) < 2:
            continue

        X = ops.concat_rows([ops.mean_rows(batch.Z[i], np.flatnonzero(truncated[i])) for i in valid])
        T = truncated[valid]
        if positive_rule == "exact":
            positive = (T[:, None, :] == T[None, :, :]).all(axis=2)
        elif positive_rule == "overlap":
            positive = (T[:, None, :] & T[None, :, :]).any(axis=2)
        else:
            raise ValueError(f"unknown positive rule '{positive_rule}'")
        np.fill_diagonal(positive, False)

        pairs = np.argwhere(positive)
        if pairs.size == 0:
            continue

        k = len(valid)
        anchor_rows = pairs[:, 0]
        if denominator == "all":
            weights = 1.0 - np.eye(k)[anchor_rows]
        elif denominator == "strict":
            weights = (~positive[anchor_rows] & ~np.eye(k, dtype=bool)[anchor_rows]).astype(np.float64)
            weights[np.arange(len(pairs)), pairs[:, 1]] = 1.0
        else:
            raise ValueError(f"unknown instance denominator '{denominator}'")
        target = np.zeros((len(pairs), k))
        target[np.arange(len(pairs)), pairs[:, 1]] = 1.0

        sims = ops.scale(ops.matmul(X, ops.transpose(X)), 1.0 / tau)
        rows = ops.gather_rows(sims, anchor_rows)
        neg_log_prob = ops.sub(
            ops.sum_all(ops.log_sum_exp_rows(rows, weights)),
            ops.sum_all(ops.mul(rows, ops.constant(target))),
        )
        factor = depth_penalty(level, max_depth, penalty) / len(pairs)
        level_terms.append(ops.scale(neg_log_prob, factor))

    if not level_terms:
        return ops.constant(0.0)
    return ops.scale(ops.sum_scalars(level_terms), 1.0 / max_depth)


def _check_logits(S: Tensor, gold: np.ndarray) -> np.ndarray:
    gold = np.asarray(gold).ravel()
    if S.shape != (gold.size, 1):
        raise ShapeError("classification_loss", S.shape, (gold.size, 1))
    if not np.all(np.isfinite(S.data)):
        raise NumericError("non-finite logits", tensor_name="S")
    return gold


def zlpr(S: Tensor, gold) -> Tensor:
    """log(1 + sum_pos e^-s) + log(1 + sum_neg e^s), via log-sum-exp with a zero column."""
    gold = _check_logits(S, gold)
    terms = []
    for members, sign in ((np.flatnonzero(gold == 1), -1.0), (np.flatnonzero(gold == 0), 1.0)):
        if members.size == 0:
            continue
        row = ops.transpose(ops.scale(ops.gather_rows(S, members), sign))
        terms.append(ops.log_sum_exp_rows(ops.concat_cols([ops.zeros(1, 1), row])))
    if not terms:
        return ops.constant(0.0)
    return terms[0] if len(terms) == 1 else ops.add(terms[0], terms[1])


def bce(S: Tensor, gold) -> Tensor:
    """Sigmoid binary cross-entropy averaged over labels: softplus(s) - y*s."""
    gold = _check_logits(S, gold)
    n = gold.size
    if n == 0:
        return ops.constant(0.0)
    softplus = ops.log_sum_exp_rows(ops.concat_cols([ops.zeros(n, 1), S]))
    target = ops.constant(gold.reshape(n, 1).astype(np.float64))
    return ops.scale(ops.sub(ops.sum_all(softplus), ops.sum_all(ops.mul(S, target))), 1.0 / n)


def total_loss(
    batch: ContrastiveBatch,
    S_batch: Sequence[Tensor],
    gold_batch: np.ndarray,
    weights: LossWeights,
    ctx: MetricContext,
    taxonomy: Taxonomy,
) -> Tuple[Tensor, LossBreakdown]:
    """
    Mean classification loss + lambda1 * instance loss + lambda2 * label loss.

    Terms whose weight is 0 are not built and are reported as 0.
    """
    gold_batch = np.asarray(gold_batch)
    if len(S_batch) != gold_batch.shape[0] or len(S_batch) != batch.size:
        raise ShapeError("total_loss", (len(S_batch),), gold_batch.shape, (batch.size,))
    classify = bce if weights.classification_loss == "bce" else zlpr
    per_sample = [classify(S, gold) for S, gold in zip(S_batch, gold_batch)]
    classification = ops.scale(ops.sum_scalars(per_sample), 1.0 / len(per_sample))

    total = classification
    inst_value = 0.0
    label_value = 0.0
    if weights.lambda1 > 0:
        inst = instance_loss(
            batch,
            weights.tau,
            taxonomy,
            penalty=weights.penalty,
            denominator=weights.instance_denominator,
            positive_rule=weights.positive_rule,
        )
        inst_value = inst.item()
        total = ops.add(total, ops.scale(inst, weights.lambda1))
    if weights.lambda2 > 0:
        label = hilecon(
            batch,
            weights.tau,
            ctx,
            mode=weights.mode,
            normalize_gamma=weights.normalize_gamma,
            prefactor=weights.hilecon_prefactor,
        )
        label_value = label.item()
        total = ops.add(total, ops.scale(label, weights.lambda2))

    breakdown = LossBreakdown(
        total=total.item(),
        classification=classification.item(),
        instance=inst_value,
        hilecon=label_value,
    )
    return total, breakdown

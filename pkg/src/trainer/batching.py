from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from core.exceptions import ConfigError, DataError
from core.logger import get_logger
from core.utils import make_rng
from data_model.pydantic_models.corpus import Document
from data_model.pydantic_models.report import BatchDiagnostics
from src.taxonomy import Taxonomy

logger = get_logger(__name__, log_file="training.log")


@dataclass
class BatchSchedule:
    batches: List[List[int]]
    diagnostics: List[BatchDiagnostics]
    coverage: float  # covered gold-label embeddings / all gold-label embeddings


def positive_coverage(Y: np.ndarray) -> float:
    """Share of gold-label embeddings in a batch that have a same-label partner in another sample."""
    Y = np.asarray(Y)
    counts = Y.sum(axis=0)
    total = int(counts.sum())
    if total == 0:
        return 0.0
    return float(counts[counts >= 2].sum()) / total


def _covered_and_total(Y: np.ndarray):
    counts = np.asarray(Y).sum(axis=0)
    return int(counts[counts >= 2].sum()), int(counts.sum())


def build_batches(
    documents: Sequence[Document], taxonomy: Taxonomy, batch_size: int, seed: int, epoch: int = 0
) -> BatchSchedule:
    """
    One epoch of label-stratified batches.

    Every document is keyed by its rarest gold label that at least one other
    document also carries. Documents sharing a key are dealt into the same stretch
    of the schedule so their shared labels have in-batch positives; documents with
    no shareable label go last in random order. The schedule is cut into
    consecutive batches and the final short batch is kept.

    :param documents: Training corpus.
    :param taxonomy: Taxonomy the gold vectors are aligned to.
    :param batch_size: Documents per batch.
    :param seed: Run seed.
    :param epoch: Epoch number, selects the shuffling stream.
    :return: BatchSchedule with per-batch coverage diagnostics.
    """
    if not documents:
        raise DataError("cannot batch an empty corpus")
    if batch_size > len(documents):
        raise ConfigError(f"batch_size {batch_size} exceeds corpus size {len(documents)}")

    rng = make_rng(seed, epoch, 11)
    Y = np.vstack([doc.gold_vector() for doc in documents])
    if Y.shape[1] != taxonomy.n:
        raise DataError(f"gold vectors have {Y.shape[1]} labels, taxonomy has {taxonomy.n}")
    frequency = Y.sum(axis=0)

    buckets: Dict[int, List[int]] = {}
    leftovers: List[int] = []
    for i in range(len(documents)):
        shared = [int(j) for j in np.flatnonzero(Y[i]) if frequency[j] >= 2]
        if not shared:
            leftovers.append(i)
            continue
        key = min(shared, key=lambda j: (frequency[j], j))
        buckets.setdefault(key, []).append(i)

    order: List[int] = []
    for key in rng.permutation(sorted(buckets)):
        members = buckets[int(key)]
        if len(members) == 1:
            leftovers.extend(members)
            continue
        order.extend(int(members[p]) for p in rng.permutation(len(members)))
    order.extend(int(leftovers[p]) for p in rng.permutation(len(leftovers)))

    batches = [order[start:start + batch_size] for start in range(0, len(order), batch_size)]
    diagnostics = []
    covered_total, anchors_total = 0, 0
    for index, batch in enumerate(batches):
        covered, anchors = _covered_and_total(Y[batch])
        covered_total += covered
        anchors_total += anchors
        diagnostics.append(
            BatchDiagnostics(
                batch_index=index, size=len(batch), coverage=covered / anchors if anchors else 0.0
            )
        )
    coverage = covered_total / anchors_total if anchors_total else 0.0

    if coverage == 0.0:
        logger.warning("No gold label has an in-batch positive; contrastive terms will vanish this epoch")
    logger.debug(f"Epoch {epoch}: {len(batches)} batches, positive coverage {coverage:.4f}")
    return BatchSchedule(batches=batches, diagnostics=diagnostics, coverage=coverage)


def random_batches(num_documents: int, batch_size: int, seed: int) -> List[List[int]]:
    """Uniformly shuffled batches, the baseline the stratified schedule is compared with."""
    order = make_rng(seed, 12).permutation(num_documents)
    return [order[s:s + batch_size].tolist() for s in range(0, num_documents, batch_size)]

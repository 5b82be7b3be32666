from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import ShapeError
from core.logger import get_logger
from data_model.pydantic_models.report import F1Pair, MetricsReport
from src.taxonomy import LabelVector, Taxonomy

logger = get_logger(__name__, log_file="evaluation.log")


@dataclass
class EvalPair:
    gold: LabelVector  # ancestor-closed
    pred: LabelVector  # may be unclosed


def make_pairs(gold: Sequence[LabelVector], pred: Sequence[LabelVector]) -> List[EvalPair]:
    if len(gold) != len(pred):
        raise ShapeError("make_pairs", (len(gold),), (len(pred),))
    return [
        EvalPair(np.asarray(g, dtype=np.int8), np.asarray(p, dtype=np.int8)) for g, p in zip(gold, pred)
    ]


def _stack(pairs: Sequence[EvalPair]) -> Tuple[np.ndarray, np.ndarray]:
    gold = np.vstack([p.gold for p in pairs]).astype(bool)
    pred = np.vstack([p.pred for p in pairs]).astype(bool)
    if gold.shape != pred.shape:
        raise ShapeError("f1_scores", gold.shape, pred.shape)
    return gold, pred


def _f1(tp, fp, fn):
    tp, fp, fn = (np.asarray(x, dtype=np.float64) for x in (tp, fp, fn))
    denominator = 2 * tp + fp + fn
    return np.divide(2 * tp, denominator, out=np.zeros_like(denominator), where=denominator > 0)


def _f1_on(gold: np.ndarray, pred: np.ndarray) -> Tuple[float, float, np.ndarray]:
    tp = (gold & pred).sum(axis=0)
    fp = (~gold & pred).sum(axis=0)
    fn = (gold & ~pred).sum(axis=0)
    per_label = _f1(tp, fp, fn)
    micro = float(_f1(tp.sum(), fp.sum(), fn.sum()))
    macro = float(per_label.mean()) if per_label.size else 0.0
    return micro, macro, per_label


def f1_scores(pairs: Sequence[EvalPair]) -> Tuple[float, float, np.ndarray]:
    """
    Micro-F1 over pooled counts and Macro-F1 as the plain mean of per-label F1.

    A label that is neither gold nor predicted anywhere scores 0 and still counts
    toward the macro mean.
    """
    if not pairs:
        return 0.0, 0.0, np.zeros(0)
    return _f1_on(*_stack(pairs))


def _true_positives(pair: EvalPair) -> LabelVector:
    return (np.asarray(pair.gold) & np.asarray(pair.pred)).astype(np.int8)


def path_accuracy(pairs: Sequence[EvalPair], taxonomy: Taxonomy, closure: bool = True) -> float:
    """
    Share of documents whose correctly predicted labels form as many paths as the gold set.

    With `closure=False` the raw intersection is counted by its leaves instead of
    being ancestor-closed first.
    """
    if not pairs:
        return 0.0
    consistent = 0
    for pair in pairs:
        hits = _true_positives(pair)
        if closure:
            hits = taxonomy.closure(hits)
        if taxonomy.count_paths(pair.gold) == taxonomy.count_paths(hits, require_closed=closure):
            consistent += 1
    return consistent / len(pairs)


def depth_accuracy(pairs: Sequence[EvalPair], taxonomy: Taxonomy) -> float:
    """Share of gold root-to-leaf chains whose every label was predicted."""
    matched, total = 0, 0
    for pair in pairs:
        hits = _true_positives(pair)
        for chain in taxonomy.decompose_paths(pair.gold):
            total += 1
            if all(hits[k] for k in chain):
                matched += 1
    return matched / total if total else 0.0


def path_histogram(pairs: Sequence[EvalPair], taxonomy: Taxonomy) -> Dict[str, int]:
    counts = Counter(taxonomy.count_paths(p.gold) for p in pairs)
    return {str(k): counts[k] for k in sorted(counts)}


def per_level_f1(pairs: Sequence[EvalPair], taxonomy: Taxonomy) -> Dict[str, F1Pair]:
    if not pairs:
        return {}
    gold, pred = _stack(pairs)
    levels = {}
    for level in range(1, taxonomy.max_depth + 1):
        columns = taxonomy.labels_at_level(level)
        micro, macro, _ = _f1_on(gold[:, columns], pred[:, columns])
        levels[str(level)] = F1Pair(micro_f1=micro, macro_f1=macro)
    return levels


def path_grouped_f1(pairs: Sequence[EvalPair], taxonomy: Taxonomy) -> Dict[str, F1Pair]:
    """F1 of the documents grouped by how many gold paths they have."""
    groups: Dict[int, List[EvalPair]] = {}
    for pair in pairs:
        groups.setdefault(taxonomy.count_paths(pair.gold), []).append(pair)
    grouped = {}
    for count in sorted(groups):
        micro, macro, _ = f1_scores(groups[count])
        grouped[str(count)] = F1Pair(micro_f1=micro, macro_f1=macro, documents=len(groups[count]))
    return grouped


def report(
    pairs: Sequence[EvalPair],
    taxonomy: Taxonomy,
    closure: bool = True,
    losses: Optional[Dict[str, float]] = None,
) -> MetricsReport:
    micro, macro, per_label = f1_scores(pairs)
    result = MetricsReport(
        num_documents=len(pairs),
        micro_f1=micro,
        macro_f1=macro,
        acc_p=path_accuracy(pairs, taxonomy, closure=closure),
        acc_d=depth_accuracy(pairs, taxonomy),
        per_label_f1={label: float(f) for label, f in zip(taxonomy.labels, per_label)},
        per_level=per_level_f1(pairs, taxonomy),
        by_path_count=path_grouped_f1(pairs, taxonomy),
        path_histogram=path_histogram(pairs, taxonomy),
        losses=losses,
    )
    logger.info(
        f"Scored {len(pairs)} documents: micro {micro:.4f}, macro {macro:.4f}, "
        f"acc_p {result.acc_p:.4f}, acc_d {result.acc_d:.4f}"
    )
    return result


def render_table(metrics: MetricsReport) -> str:
    """Plain ASCII table with 4 decimal places."""
    rows: List[Tuple[str, str]] = [
        ("documents", str(metrics.num_documents)),
        ("micro_f1", f"{metrics.micro_f1:.4f}"),
        ("macro_f1", f"{metrics.macro_f1:.4f}"),
        ("acc_p", f"{metrics.acc_p:.4f}"),
        ("acc_d", f"{metrics.acc_d:.4f}"),
    ]
    for level, pair in metrics.per_level.items():
        rows.append((f"level {level} micro/macro", f"{pair.micro_f1:.4f} / {pair.macro_f1:.4f}"))
    for count, pair in metrics.by_path_count.items():
        rows.append(
            (f"{count}-path docs ({pair.documents}) micro/macro", f"{pair.micro_f1:.4f} / {pair.macro_f1:.4f}")
        )
    for count, docs in metrics.path_histogram.items():
        rows.append((f"docs with {count} paths", str(docs)))
    if metrics.losses:
        for name in sorted(metrics.losses):
            rows.append((f"loss {name}", f"{metrics.losses[name]:.4f}"))

    width = max(len(name) for name, _ in rows)
    lines = [f"{'metric'.ljust(width)}  value", f"{'-' * width}  {'-' * 15}"]
    lines.extend(f"{name.ljust(width)}  {value}" for name, value in rows)
    return "\n".join(lines)

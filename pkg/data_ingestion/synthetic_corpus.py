import os
from typing import Dict, List, Optional, TextIO

import numpy as np

from core.logger import get_logger
from core.utils import dumps_json, ensure_dir, make_rng
from data_ingestion.taxonomy_loader import dump_taxonomy
from data_model.pydantic_models.config import SynthSpec
from src.taxonomy import Taxonomy

logger = get_logger(__name__, log_file="ingestion.log")

SPLITS = ("train", "val", "test")
OUTPUT_FILES = {
    "taxonomy": "taxonomy.tsv",
    "train": "train.jsonl",
    "val": "val.jsonl",
    "test": "test.jsonl",
}


def build_tree(depth: int, branching: int) -> Taxonomy:
    """Complete tree; labels are named by their child positions (c0, c0-1, c0-1-2, ...)."""
    labels: List[str] = []
    parents: Dict[str, Optional[str]] = {}
    frontier: List[Optional[str]] = [None]
    for _ in range(depth):
        next_frontier = []
        for parent in frontier:
            for j in range(branching):
                name = f"c{j}" if parent is None else f"{parent}-{j}"
                labels.append(name)
                parents[name] = parent
                next_frontier.append(name)
        frontier = next_frontier
    return Taxonomy(labels, parents)


def label_vocabulary(label: str, tokens_per_label: int) -> List[str]:
    # The first token is the label name itself so default descriptions hit the vocab.
    return [label.lower()] + [f"{label.lower()}.w{t}" for t in range(1, tokens_per_label)]


class SyntheticCorpus:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.taxonomy = build_tree(spec.depth, spec.branching)
        self.vocabularies = {
            label: label_vocabulary(label, spec.tokens_per_label) for label in self.taxonomy.labels
        }
        self.noise_vocabulary = [f"noise{k}" for k in range(spec.noise_vocab_size)]
        self.leaves = self.taxonomy.labels_at_level(spec.depth)

    def sample_document(self, rng: np.random.Generator, doc_id: str) -> Dict:
        lo, hi = self.spec.paths_per_doc
        num_paths = min(int(rng.integers(lo, hi + 1)), len(self.leaves))
        picked = rng.choice(len(self.leaves), size=num_paths, replace=False)
        bits = np.zeros(self.taxonomy.n, dtype=np.int8)
        for p in sorted(picked):
            bits[self.leaves[p]] = 1
        gold = self.taxonomy.closure(bits)
        names = self.taxonomy.names(gold)

        pool = [token for name in names for token in self.vocabularies[name]]
        tokens = []
        for _ in range(self.spec.doc_length):
            if rng.random() < self.spec.noise_ratio:
                tokens.append(self.noise_vocabulary[int(rng.integers(len(self.noise_vocabulary)))])
            else:
                tokens.append(pool[int(rng.integers(len(pool)))])
        return {"id": doc_id, "text": " ".join(tokens), "labels": names}

    def generate(self) -> Dict[str, List[Dict]]:
        """Sample every document and split 70/15/15 by a seeded shuffle."""
        rng = make_rng(self.spec.seed, 0)
        records = [self.sample_document(rng, f"doc{i:05d}") for i in range(self.spec.num_docs)]

        order = make_rng(self.spec.seed, 1).permutation(len(records))
        n_train = int(0.7 * len(records))
        n_val = int(0.15 * len(records))
        bounds = {
            "train": order[:n_train],
            "val": order[n_train:n_train + n_val],
            "test": order[n_train + n_val:],
        }
        return {split: [records[i] for i in sorted(idx)] for split, idx in bounds.items()}


def generate_synthetic(spec: SynthSpec, streams: Dict[str, TextIO]) -> Dict[str, int]:
    """
    Write a synthetic hierarchical corpus.

    :param spec: Generator parameters.
    :param streams: Text streams keyed by "taxonomy", "train", "val" and "test".

    :return: Number of documents written per split.
    """
    corpus = SyntheticCorpus(spec)
    dump_taxonomy(corpus.taxonomy, streams["taxonomy"])
    counts = {}
    for split, records in corpus.generate().items():
        for record in records:
            streams[split].write(dumps_json(record) + "\n")
        counts[split] = len(records)
    logger.info(
        f"Generated synthetic corpus: {corpus.taxonomy.n} labels, depth {spec.depth}, "
        f"splits {counts}, seed {spec.seed}"
    )
    return counts


def generate_synthetic_files(spec: SynthSpec, out_dir: str) -> Dict[str, str]:
    """Write the four corpus files into `out_dir` and return their paths."""
    ensure_dir(out_dir)
    paths = {key: os.path.join(out_dir, name) for key, name in OUTPUT_FILES.items()}
    handles = {key: open(path, "w", encoding="utf-8", newline="\n") for key, path in paths.items()}
    try:
        generate_synthetic(spec, handles)
    finally:
        for handle in handles.values():
            handle.close()
    return paths

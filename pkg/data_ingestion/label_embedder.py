from typing import Dict, List, Optional

import numpy as np

from core.exceptions import DataError, ShapeError
from core.logger import get_logger
from data_ingestion.corpus_loader import Vocab, tokenize
from src.taxonomy import Taxonomy

logger = get_logger(__name__, log_file="ingestion.log")


class LabelEmbedder:
    def __init__(self, vocab: Vocab, token_embeddings: np.ndarray):
        token_embeddings = np.asarray(token_embeddings, dtype=np.float64)
        if token_embeddings.ndim != 2 or token_embeddings.shape[0] != len(vocab):
            raise ShapeError("label_embedder", token_embeddings.shape, (len(vocab), "d"))
        self.vocab = vocab
        self.token_embeddings = token_embeddings

    def description_embedding(self, text: str) -> np.ndarray:
        """
        Embed a description as the mean of its tokens' embedding rows.

        :param text: Description text; unseen tokens fall back to the UNK row.

        :return: Vector of length d.
        """
        ids = self.vocab.encode(tokenize(text), frozen=True)
        if not ids:
            raise DataError(f"empty description '{text}'")
        return self.token_embeddings[ids].mean(axis=0)


def init_label_embeddings(
    vocab: Vocab,
    token_embeddings: np.ndarray,
    taxonomy: Taxonomy,
    descriptions: Optional[Dict[str, str]] = None,
) -> np.ndarray:
    """Initial (n x d) label table; labels without a description use their own name."""
    descriptions = descriptions or {}
    embedder = LabelEmbedder(vocab, token_embeddings)
    rows: List[np.ndarray] = []
    unknown = 0
    for label in taxonomy.labels:
        text = descriptions.get(label, label)
        try:
            rows.append(embedder.description_embedding(text))
        except DataError:
            logger.error(f"Label '{label}' has an empty description")
            raise DataError(f"label '{label}' has an empty description")
        if all(t not in vocab.token_to_id for t in tokenize(text)):
            unknown += 1
    if unknown:
        logger.warning(f"{unknown} label descriptions consist only of unknown tokens")
    return np.vstack(rows)

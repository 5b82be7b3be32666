from typing import List

import numpy as np
from pydantic import BaseModel, field_validator


class Document(BaseModel):
    id: str
    token_ids: List[int]
    gold: List[int]  # ancestor-closed 0/1 flags aligned to Taxonomy.labels

    @field_validator("token_ids")
    @classmethod
    def non_empty(cls, value):
        if not value:
            raise ValueError("document has no tokens")
        return value

    @field_validator("gold")
    @classmethod
    def binary(cls, value):
        if any(bit not in (0, 1) for bit in value):
            raise ValueError("gold vector must be 0/1")
        return value

    def gold_vector(self) -> np.ndarray:
        return np.asarray(self.gold, dtype=np.int8)


class CorpusRecord(BaseModel):
    """One line of a corpus JSONL file."""

    id: str
    text: str
    labels: List[str]


class Prediction(BaseModel):
    id: str
    labels: List[str]

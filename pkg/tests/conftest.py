import io
import os

import numpy as np
import pytest

from core.settings import ROOT_DIR
from data_ingestion.corpus_loader import Vocab
from data_ingestion.taxonomy_loader import load_taxonomy, load_taxonomy_file
from data_model.pydantic_models.config import ModelConfig
from data_model.pydantic_models.corpus import Document
from src.encoder_model import HJCLModel
from src.taxonomy import Taxonomy

CASE_STUDY_DIR = os.path.join(ROOT_DIR, "data", "nyt_case_study")


def make_taxonomy(lines):
    return load_taxonomy(io.StringIO("\n".join(lines) + "\n"))


@pytest.fixture
def shallow_taxonomy() -> Taxonomy:
    """A at level 1 with children B and C."""
    return make_taxonomy(["A\tROOT", "B\tA", "C\tA"])


@pytest.fixture
def seven_labels() -> Taxonomy:
    return Taxonomy(
        ["A", "B", "A1", "A2", "B1", "B2", "A1a"],
        {"A": None, "B": None, "A1": "A", "A2": "A", "B1": "B", "B2": "B", "A1a": "A1"},
    )


@pytest.fixture
def case_study_taxonomy() -> Taxonomy:
    return load_taxonomy_file(os.path.join(CASE_STUDY_DIR, "taxonomy.tsv"))


@pytest.fixture
def small_vocab() -> Vocab:
    return Vocab(["a", "b", "a1", "a2", "b1", "b2", "a1a"] + [f"w{k}" for k in range(8)])


def closed_documents(taxonomy: Taxonomy, golds, token_ids=None):
    documents = []
    for i, labels in enumerate(golds):
        bits = taxonomy.closure(taxonomy.vector(labels))
        tokens = token_ids[i] if token_ids is not None else [1 + (i + j) % 7 for j in range(4)]
        documents.append(Document(id=f"d{i}", token_ids=tokens, gold=bits.tolist()))
    return documents


@pytest.fixture
def four_documents(seven_labels):
    return closed_documents(seven_labels, [["A1a", "B1"], ["A1a"], ["A2", "B2", "A1a"], ["B1"]])


@pytest.fixture
def tiny_model(seven_labels, small_vocab) -> HJCLModel:
    return HJCLModel.create(ModelConfig(d=8, h=2, gat_layers=2, encoder_layers=1, seed=3), seven_labels, small_vocab)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)

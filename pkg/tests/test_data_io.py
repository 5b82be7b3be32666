import io
import json
from collections import Counter

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import make_taxonomy
from core.exceptions import ConfigError, DataError, ShapeError
from data_ingestion.corpus_loader import (
    Vocab,
    dump_corpus,
    load_corpus,
    load_descriptions,
    load_stoplist,
    tokenize,
)
from data_ingestion.label_embedder import LabelEmbedder, init_label_embeddings
from data_ingestion.synthetic_corpus import (
    OUTPUT_FILES,
    SyntheticCorpus,
    build_tree,
    generate_synthetic,
    generate_synthetic_files,
)
from data_ingestion.taxonomy_loader import load_taxonomy
from data_model.pydantic_models.config import SynthSpec


def jsonl(*records):
    return io.StringIO("".join(json.dumps(r) + "\n" for r in records))


def synthesize(spec):
    streams = {key: io.StringIO() for key in OUTPUT_FILES}
    counts = generate_synthetic(spec, streams)
    return counts, {key: stream.getvalue() for key, stream in streams.items()}


def test_loading_closes_gold_sets_and_warns(shallow_taxonomy, caplog):
    stream = jsonl({"id": "d0", "text": "one two", "labels": ["B"]}, {"id": "d1", "text": "two", "labels": ["A"]})
    with caplog.at_level("WARNING"):
        documents, vocab = load_corpus(stream, shallow_taxonomy)
    assert documents[0].gold == [1, 1, 0]
    assert documents[1].gold == [1, 0, 0]
    assert "not ancestor-closed" in caplog.text
    assert "'d0'" in caplog.text
    assert vocab.to_list() == ["<unk>", "one", "two"]
    assert documents[0].token_ids == [1, 2]


def test_frozen_vocabulary_maps_unseen_tokens_to_zero(shallow_taxonomy):
    vocab = Vocab(["known"])
    documents, same = load_corpus(
        jsonl({"id": "d0", "text": "Known stranger", "labels": ["A"]}),
        shallow_taxonomy,
        vocab_mode="frozen",
        vocab=vocab,
    )
    assert same is vocab
    assert documents[0].token_ids == [1, 0]
    assert len(vocab) == 2


def test_vocab_mode_is_validated(shallow_taxonomy):
    with pytest.raises(ConfigError):
        load_corpus(jsonl(), shallow_taxonomy, vocab_mode="frozen")
    with pytest.raises(ConfigError):
        load_corpus(jsonl(), shallow_taxonomy, vocab_mode="lazy")


def test_stoplist_removes_tokens(shallow_taxonomy):
    stoplist = load_stoplist(io.StringIO("The\n\nof\n"))
    assert stoplist == {"the", "of"}
    assert tokenize("The Cost of Living", stoplist) == ["cost", "living"]
    documents, vocab = load_corpus(
        jsonl({"id": "d0", "text": "the end", "labels": ["A"]}), shallow_taxonomy, stoplist=stoplist
    )
    assert vocab.decode(documents[0].token_ids) == ["end"]


@pytest.mark.parametrize(
    "lines, line_no, message",
    [
        (['{"id": "a", "text": "x", "labels": ["A"]}', "{not json"], 2, "malformed"),
        (['{"id": "a", "text": "x"}'], 1, "malformed"),
        (['{"id": "a", "text": "x", "labels": ["A"]}', '{"id": "a", "text": "y", "labels": ["A"]}'], 2, "duplicate"),
        (['{"id": "a", "text": "x", "labels": ["Z"]}'], 1, "unknown label 'Z'"),
        (['{"id": "a", "text": "   ", "labels": ["A"]}'], 1, "empty text"),
    ],
)
def test_bad_records_name_their_line(shallow_taxonomy, lines, line_no, message):
    with pytest.raises(DataError, match=message) as error:
        load_corpus(io.StringIO("\n".join(lines) + "\n"), shallow_taxonomy)
    assert error.value.line == line_no
    assert str(error.value).startswith(f"line {line_no}:")


def test_text_that_is_only_stopwords_is_empty(shallow_taxonomy):
    with pytest.raises(DataError, match="empty text"):
        load_corpus(jsonl({"id": "a", "text": "the of", "labels": ["A"]}), shallow_taxonomy, stoplist={"the", "of"})


def test_documents_without_labels_are_kept(shallow_taxonomy):
    documents, _ = load_corpus(jsonl({"id": "a", "text": "x", "labels": []}), shallow_taxonomy)
    assert documents[0].gold == [0, 0, 0]


def test_dump_then_load_reproduces_the_documents(seven_labels):
    stream = jsonl(
        {"id": "d0", "text": "alpha beta beta", "labels": ["A1a", "B1"]},
        {"id": "d1", "text": "gamma", "labels": ["A2"]},
    )
    documents, vocab = load_corpus(stream, seven_labels)
    out = io.StringIO()
    assert dump_corpus(documents, vocab, seven_labels, out) == 2
    reloaded, same_vocab = load_corpus(io.StringIO(out.getvalue()), seven_labels)
    assert reloaded == documents
    assert same_vocab == vocab
    assert json.loads(out.getvalue().splitlines()[0])["labels"] == ["A", "B", "A1", "B1", "A1a"]


def test_vocab_round_trips_through_a_list():
    vocab = Vocab(["x", "y", "x"])
    assert len(vocab) == 3
    assert Vocab.from_list(vocab.to_list()) == vocab
    with pytest.raises(DataError):
        Vocab.from_list(["x", "y"])
    with pytest.raises(DataError):
        Vocab.from_list(["<unk>", "x", "x"])


def test_descriptions_file():
    text = "# label descriptions\nA\tthe a topic\n\nB\tsecond\n"
    assert load_descriptions(io.StringIO(text)) == {"A": "the a topic", "B": "second"}
    with pytest.raises(DataError) as error:
        load_descriptions(io.StringIO("A\tfine\nno tab here\n"))
    assert error.value.line == 2


def test_label_embeddings_average_description_tokens(shallow_taxonomy):
    vocab = Vocab(["a", "b", "c", "topic"])
    table = np.arange(10.0).reshape(5, 2)
    rows = init_label_embeddings(vocab, table, shallow_taxonomy, {"A": "a topic", "C": "c"})
    assert rows.shape == (3, 2)
    assert np.array_equal(rows[0], table[[1, 4]].mean(axis=0))
    # B has no description and falls back to its own name.
    assert np.array_equal(rows[1], table[2])
    assert np.array_equal(rows[2], table[3])


def test_unknown_description_tokens_use_the_unk_row(shallow_taxonomy, caplog):
    vocab = Vocab(["a"])
    table = np.array([[9.0, 9.0], [1.0, 1.0]])
    with caplog.at_level("WARNING"):
        rows = init_label_embeddings(vocab, table, shallow_taxonomy)
    assert np.array_equal(rows[1], [9.0, 9.0])
    assert "unknown tokens" in caplog.text


def test_label_embedder_checks_its_inputs(shallow_taxonomy):
    vocab = Vocab(["a"])
    with pytest.raises(ShapeError):
        LabelEmbedder(vocab, np.zeros((3, 2)))
    with pytest.raises(DataError, match="'B'"):
        init_label_embeddings(vocab, np.zeros((2, 2)), shallow_taxonomy, {"B": "   "})


def test_synthetic_tree_is_complete():
    tree = build_tree(depth=2, branching=3)
    assert tree.n == 3 + 9
    assert tree.max_depth == 2
    assert tree.parent("c1-2") == "c1"
    assert len(tree.labels_at_level(2)) == 9


def test_same_seed_gives_identical_corpora():
    spec = SynthSpec(depth=2, branching=2, num_docs=40, seed=7)
    first = synthesize(spec)
    assert first == synthesize(spec)
    assert first != synthesize(spec.model_copy(update={"seed": 8}))


def test_split_sizes_are_seventy_fifteen_fifteen():
    counts, _ = synthesize(SynthSpec(depth=2, branching=2, num_docs=100))
    assert counts == {"train": 70, "val": 15, "test": 15}
    counts, _ = synthesize(SynthSpec(depth=1, branching=2, doc_length=3, num_docs=2858))
    assert counts == {"train": 2000, "val": 428, "test": 430}


def test_fixed_path_count_is_honoured():
    spec = SynthSpec(depth=3, branching=2, paths_per_doc=(2, 2), num_docs=30)
    counts, files = synthesize(spec)
    taxonomy = load_taxonomy(io.StringIO(files["taxonomy"]))
    for split in counts:
        documents, _ = load_corpus(io.StringIO(files[split]), taxonomy)
        assert all(taxonomy.count_paths(doc.gold_vector()) == 2 for doc in documents)


def test_default_corpus_spreads_path_counts_evenly():
    spec = SynthSpec()
    counts, files = synthesize(spec)
    taxonomy = load_taxonomy(io.StringIO(files["taxonomy"]))
    histogram = Counter()
    for split in counts:
        documents, _ = load_corpus(io.StringIO(files[split]), taxonomy)
        histogram.update(taxonomy.count_paths(doc.gold_vector()) for doc in documents)
    lo, hi = spec.paths_per_doc
    assert sorted(histogram) == list(range(lo, hi + 1)) == [1, 2, 3]
    assert sum(histogram.values()) == spec.num_docs
    # Uniform draw over the configured range.
    for count in histogram.values():
        assert 0.25 < count / spec.num_docs < 0.42


def test_noise_free_single_level_corpus_is_separable():
    spec = SynthSpec(depth=1, branching=3, paths_per_doc=(1, 1), noise_ratio=0.0, num_docs=30)
    corpus = SyntheticCorpus(spec)
    records = [record for split in corpus.generate().values() for record in split]
    owners = {}
    for record in records:
        (label,) = record["labels"]
        for token in record["text"].split():
            owners.setdefault(token, set()).add(label)
            assert token in corpus.vocabularies[label]
    assert all(len(labels) == 1 for labels in owners.values())


def test_generated_files_land_in_the_output_directory(tmp_path):
    spec = SynthSpec(depth=1, branching=2, num_docs=10)
    paths = generate_synthetic_files(spec, str(tmp_path / "synth"))
    assert sorted(p.split("/")[-1] for p in paths.values()) == sorted(OUTPUT_FILES.values())
    taxonomy = make_taxonomy(open(paths["taxonomy"], encoding="utf-8").read().splitlines())
    assert taxonomy.labels == ("c0", "c1")


@pytest.mark.parametrize(
    "overrides",
    [
        {"depth": 0},
        {"paths_per_doc": (0, 2)},
        {"paths_per_doc": (3, 2)},
        {"depth": 1, "branching": 2, "paths_per_doc": (3, 3)},
        {"noise_ratio": 1.0},
        {"num_docs": 5},
        {"unknown": 1},
    ],
)
def test_synth_spec_rejects_bad_parameters(overrides):
    with pytest.raises(ValidationError):
        SynthSpec(**overrides)

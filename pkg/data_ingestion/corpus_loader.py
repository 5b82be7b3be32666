from typing import Dict, Iterable, List, Optional, Set, TextIO, Tuple

from pydantic import ValidationError

from core.config import UNK_TOKEN
from core.exceptions import ConfigError, DataError, TaxonomyError
from core.logger import get_logger
from core.utils import dumps_json, read_lines
from data_model.pydantic_models.corpus import CorpusRecord, Document
from src.taxonomy import Taxonomy

logger = get_logger(__name__, log_file="ingestion.log")


class Vocab:
    """Token <-> id map. Id 0 is reserved for unknown tokens."""

    def __init__(self, tokens: Optional[Iterable[str]] = None):
        self.id_to_token: List[str] = [UNK_TOKEN]
        self.token_to_id: Dict[str, int] = {UNK_TOKEN: 0}
        for token in tokens or []:
            self.add(token)

    def add(self, token: str) -> int:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    def encode(self, tokens: Iterable[str], frozen: bool = True) -> List[int]:
        if frozen:
            return [self.token_to_id.get(t, 0) for t in tokens]
        return [self.add(t) for t in tokens]

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.id_to_token[i] for i in ids]

    def to_list(self) -> List[str]:
        return list(self.id_to_token)

    @classmethod
    def from_list(cls, tokens: List[str]) -> "Vocab":
        if not tokens or tokens[0] != UNK_TOKEN:
            raise DataError(f"vocabulary must start with the reserved token '{UNK_TOKEN}'")
        if len(set(tokens)) != len(tokens):
            raise DataError("vocabulary contains duplicate tokens")
        return cls(tokens[1:])

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocab) and self.id_to_token == other.id_to_token


def tokenize(text: str, stoplist: Optional[Set[str]] = None) -> List[str]:
    tokens = text.lower().split()
    if stoplist:
        tokens = [t for t in tokens if t not in stoplist]
    return tokens


def load_corpus(
    stream: TextIO,
    taxonomy: Taxonomy,
    vocab_mode: str = "build",
    vocab: Optional[Vocab] = None,
    stoplist: Optional[Set[str]] = None,
) -> Tuple[List[Document], Vocab]:
    """
    Read a JSONL corpus of {"id", "text", "labels"} objects.

    :param stream: UTF-8 text stream.
    :param taxonomy: Taxonomy the label names belong to.
    :param vocab_mode: "build" grows `vocab` (a fresh one if None) with every token;
        "frozen" maps unseen tokens to id 0.
    :param vocab: Existing vocabulary, required for "frozen".
    :param stoplist: Tokens dropped after lowercasing.
    :return: Documents with ancestor-closed gold vectors, and the vocabulary.
    :raises DataError: On malformed JSON, unknown labels, empty text or duplicate ids.
    """
    if vocab_mode not in ("build", "frozen"):
        raise ConfigError(f"unknown vocab mode '{vocab_mode}'")
    if vocab_mode == "frozen" and vocab is None:
        raise ConfigError("frozen vocab mode needs an existing vocabulary")
    vocab = vocab if vocab is not None else Vocab()
    frozen = vocab_mode == "frozen"

    documents: List[Document] = []
    seen_ids: Set[str] = set()
    repaired = 0

    for line_no, line in enumerate(read_lines(stream), start=1):
        if not line.strip():
            continue
        try:
            record = CorpusRecord.model_validate_json(line)
        except ValidationError as e:
            logger.error(f"Malformed corpus line {line_no}: {e.errors()[0]['msg']}")
            raise DataError(f"malformed corpus record: {e.errors()[0]['msg']}", line=line_no)

        if record.id in seen_ids:
            raise DataError(f"duplicate document id '{record.id}'", line=line_no)
        seen_ids.add(record.id)

        tokens = tokenize(record.text, stoplist)
        if not tokens:
            raise DataError(f"document '{record.id}' has empty text", line=line_no)

        try:
            bits = taxonomy.vector(record.labels)
        except TaxonomyError as e:
            raise DataError(f"document '{record.id}': {str(e)}", line=line_no)

        if not taxonomy.is_closed(bits):
            bits = taxonomy.closure(bits)
            repaired += 1
            logger.warning(f"Document '{record.id}' (line {line_no}) gold set was not ancestor-closed; closed it")

        documents.append(
            Document(id=record.id, token_ids=vocab.encode(tokens, frozen=frozen), gold=bits.tolist())
        )

    logger.info(
        f"Loaded {len(documents)} documents ({repaired} gold sets closed), vocab size {len(vocab)} [{vocab_mode}]"
    )
    return documents, vocab


def load_corpus_file(path: str, taxonomy: Taxonomy, **kwargs) -> Tuple[List[Document], Vocab]:
    with open(path, "r", encoding="utf-8") as f:
        return load_corpus(f, taxonomy, **kwargs)


def dump_corpus(documents: List[Document], vocab: Vocab, taxonomy: Taxonomy, stream: TextIO) -> int:
    """Write documents back as JSONL; loading the output reproduces them."""
    for doc in documents:
        record = {
            "id": doc.id,
            "text": " ".join(vocab.decode(doc.token_ids)),
            "labels": taxonomy.names(doc.gold_vector()),
        }
        stream.write(dumps_json(record) + "\n")
    return len(documents)


def load_descriptions(stream: TextIO) -> Dict[str, str]:
    """Read `label<TAB>description text` lines."""
    descriptions: Dict[str, str] = {}
    for line_no, line in enumerate(read_lines(stream), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        label, sep, text = line.partition("\t")
        if not sep or not label:
            raise DataError("expected 'label<TAB>description'", line=line_no)
        descriptions[label] = text
    return descriptions


def load_stoplist(stream: TextIO) -> Set[str]:
    return {line.strip().lower() for line in read_lines(stream) if line.strip()}

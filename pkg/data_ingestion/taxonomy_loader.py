from typing import Dict, List, Optional, TextIO

from core.config import ROOT_TOKEN
from core.exceptions import TaxonomyError
from core.logger import get_logger
from core.utils import read_lines
from src.taxonomy import Taxonomy

logger = get_logger(__name__, log_file="ingestion.log")


def load_taxonomy(stream: TextIO) -> Taxonomy:
    """
    Read a taxonomy from `child<TAB>parent` lines.

    Blank lines and lines starting with `#` are skipped. `ROOT` as parent marks a
    level-1 label. Labels are indexed in the order their defining lines appear.

    :param stream: UTF-8 text stream.
    :return: Validated Taxonomy.
    :raises TaxonomyError: On empty input, malformed lines, duplicate children,
        orphans or cycles.
    """
    labels: List[str] = []
    parents: Dict[str, Optional[str]] = {}

    for line_no, line in enumerate(read_lines(stream), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise TaxonomyError("expected 'child<TAB>parent'", line=line_no)
        child, parent = fields
        if child == ROOT_TOKEN:
            raise TaxonomyError(f"'{ROOT_TOKEN}' cannot be used as a label", line=line_no)
        if child in parents:
            raise TaxonomyError(f"duplicate child line for '{child}'", line=line_no)
        if child == parent:
            raise TaxonomyError(f"cycle detected: '{child}' is its own parent", line=line_no)
        labels.append(child)
        parents[child] = None if parent == ROOT_TOKEN else parent

    if not labels:
        raise TaxonomyError("empty taxonomy input")

    try:
        taxonomy = Taxonomy(labels, parents)
    except TaxonomyError as e:
        logger.error(f"Invalid taxonomy: {str(e)}")
        raise

    logger.info(f"Loaded taxonomy with {taxonomy.n} labels and max depth {taxonomy.max_depth}")
    return taxonomy


def load_taxonomy_file(path: str) -> Taxonomy:
    with open(path, "r", encoding="utf-8") as f:
        return load_taxonomy(f)


def dump_taxonomy(taxonomy: Taxonomy, stream: TextIO) -> None:
    stream.write(taxonomy.to_tsv())

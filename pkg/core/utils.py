import hashlib
import json
import os
from typing import Any, Dict, Iterable, Iterator

import numpy as np

from core.logger import get_logger

logger = get_logger(__name__, log_file="utils.log")


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Build a numpy generator for one named random stream.

    :param seed: Base seed of the run.
    :param stream: Extra integers (e.g. epoch number) that select an independent stream.
    :return: Seeded generator; identical arguments give identical sequences.
    """
    return np.random.default_rng([int(seed), *[int(s) for s in stream]])


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def dumps_json(record: Dict[str, Any]) -> str:
    """Canonical single-line JSON (sorted keys) so logs are byte-stable."""
    return json.dumps(record, sort_keys=True, ensure_ascii=True, separators=(", ", ": "))


def write_jsonl(path: str, records: Iterable[Dict[str, Any]]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(dumps_json(record) + "\n")
            count += 1
    logger.info(f"Wrote {count} records to {path}")
    return count


def read_lines(stream) -> Iterator[str]:
    """Yield lines of a text stream without their trailing newline."""
    for line in stream:
        yield line.rstrip("\n").rstrip("\r")


def ensure_dir(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
        return path
    except OSError as e:
        logger.error(f"Cannot create output directory {path}: {str(e)}")
        raise

"""
Flat `key = value` run configuration files.

Blank lines and lines starting with `#` are ignored. Keys are the flat names in
KEY_SECTIONS; command-line flags override values read from the file. Every problem
found (unknown keys, malformed lines, invalid values, missing files) is reported
in one ConfigError.
"""
import os
from typing import Any, Dict, Iterable, List, Optional, Tuple

from pydantic import ValidationError

from core.exceptions import ConfigError
from core.logger import get_logger
from data_model.pydantic_models.config import RunConfig

logger = get_logger(__name__, log_file="cli.log")

PATH_KEYS = (
    "taxonomy", "train_corpus", "val_corpus", "test_corpus", "descriptions", "stoplist", "checkpoint", "out_dir",
)

# flat key -> sections of RunConfig it feeds ("" = top level)
KEY_SECTIONS: Dict[str, Tuple[str, ...]] = {
    **{key: ("model",) for key in ("d", "h", "gat_layers", "encoder_layers", "use_fusion")},
    **{
        key: ("train",)
        for key in (
            "batch_size", "lr", "max_epochs", "patience", "beta1", "beta2", "eps", "weight_decay", "record_wall_time",
        )
    },
    **{key: ("train", "loss") for key in ("lambda1", "lambda2", "tau")},
    **{
        key: ("loss",)
        for key in (
            "mode", "classification_loss", "normalize_gamma", "penalty", "instance_denominator",
            "positive_rule", "hilecon_prefactor",
        )
    },
    "seed": ("train", "model"),
    "closure": ("",),
    **{key: ("",) for key in PATH_KEYS},
}


def parse_config_text(lines: Iterable[str]) -> Tuple[Dict[str, str], List[str]]:
    """
    :return: (values, problems); a later line overrides an earlier one for the same key.
    """
    values: Dict[str, str] = {}
    problems: List[str] = []
    for line_no, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            problems.append(f"line {line_no}: expected 'key = value'")
            continue
        if key not in KEY_SECTIONS:
            problems.append(f"line {line_no}: unknown key '{key}'")
            continue
        values[key] = value
    return values, problems


def read_config_file(path: str) -> Tuple[Dict[str, str], List[str]]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return parse_config_text(f.read().splitlines())
    except OSError as e:
        return {}, [f"cannot read config file {path}: {e.strerror}"]


def build_run_config(
    config_path: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
    required_paths: Iterable[str] = (),
) -> RunConfig:
    """
    Merge a config file with flag overrides and validate the result.

    :param config_path: Optional `key = value` file.
    :param overrides: Flat key -> value from the command line; None values are ignored.
    :param required_paths: Path keys that must be set and exist on disk.
    :raises ConfigError: Listing every problem at once.
    """
    values: Dict[str, Any] = {}
    problems: List[str] = []
    if config_path is not None:
        values, problems = read_config_file(config_path)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in KEY_SECTIONS:
            problems.append(f"unknown option '{key}'")
            continue
        values[key] = value

    nested: Dict[str, Any] = {"model": {}, "train": {}, "loss": {}}
    for key, value in values.items():
        for section in KEY_SECTIONS[key]:
            if section:
                nested[section][key] = value
            else:
                nested[key] = value

    run_config = None
    try:
        run_config = RunConfig.model_validate(nested)
    except ValidationError as e:
        for error in e.errors():
            location = ".".join(str(part) for part in error["loc"])
            problems.append(f"{location}: {error['msg']}")

    for key in required_paths:
        path = values.get(key)
        if path is None:
            problems.append(f"{key}: required but not given")
        elif not os.path.exists(str(path)):
            problems.append(f"{key}: no such file '{path}'")

    if problems:
        logger.error(f"Invalid configuration: {len(problems)} problem(s)")
        raise ConfigError("invalid configuration", problems)
    return run_config


def to_config_text(run_config: RunConfig) -> str:
    """Serialize back to the flat format; reading the text reproduces `run_config`."""
    sections = {
        "model": run_config.model.model_dump(exclude={"vocab_size"}),
        "train": run_config.train.model_dump(),
        "loss": run_config.loss.model_dump(),
    }
    lines = []
    for key in sorted(KEY_SECTIONS):
        section = KEY_SECTIONS[key][0]
        value = sections[section][key] if section else getattr(run_config, key)
        if value is None:
            continue
        if isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"

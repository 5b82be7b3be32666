import json
import os
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from core.config import CHECKPOINT_FILE, GRADCHECK_EPS, GRADCHECK_TOL, TRAIN_LOG_FILE, VAL_METRICS_FILE
from core.exceptions import ConfigError, DataError, TaxonomyError
from core.logger import get_logger
from core.utils import dumps_json, ensure_dir, make_rng, read_lines, write_jsonl
from data_ingestion.corpus_loader import Vocab, load_corpus_file, load_descriptions, load_stoplist
from data_ingestion.synthetic_corpus import generate_synthetic_files
from data_ingestion.taxonomy_loader import load_taxonomy_file
from data_model.pydantic_models.config import LossWeights, ModelConfig, SynthSpec
from data_model.pydantic_models.corpus import Document, Prediction
from data_model.pydantic_models.report import GradCheckReport, MetricsReport
from src.cli.run_config import build_run_config
from src.encoder_model import HJCLModel
from src.eval_metrics import make_pairs, render_table, report
from src.hier_metric import MetricContext
from src.losses import ContrastiveBatch, hilecon, instance_loss, supcon, total_loss, zlpr
from src.taxonomy import Taxonomy
from src.tensor_core import ops
from src.tensor_core.grad_check import grad_check
from src.tensor_core.tensor import Tensor
from src.trainer.trainer import Trainer

logger = get_logger(__name__, log_file="cli.log")

GRADCHECK_COMPONENTS = ("zlpr", "supcon", "hilecon", "instance", "total")

# flags shared by train/eval that map onto flat config keys
OVERRIDE_FLAGS = (
    "taxonomy", "train_corpus", "val_corpus", "test_corpus", "descriptions", "stoplist", "checkpoint", "out_dir",
    "d", "h", "gat_layers", "encoder_layers", "use_fusion", "batch_size", "lr", "lambda1", "lambda2", "tau",
    "max_epochs", "patience", "seed", "weight_decay", "record_wall_time", "mode", "classification_loss",
    "normalize_gamma", "penalty", "instance_denominator", "positive_rule", "hilecon_prefactor", "closure",
)


def _overrides(args) -> Dict:
    return {key: getattr(args, key, None) for key in OVERRIDE_FLAGS}


def _write_json(path: str, payload: Dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _read_optional(path: Optional[str], reader):
    if path is None:
        return None
    with open(path, "r", encoding="utf-8") as f:
        return reader(f)


def cmd_synth(args) -> int:
    try:
        spec = SynthSpec(
            **{
                key: value
                for key, value in {
                    "depth": args.depth,
                    "branching": args.branching,
                    "tokens_per_label": args.tokens_per_label,
                    "doc_length": args.doc_length,
                    "paths_per_doc": (args.min_paths, args.max_paths),
                    "noise_ratio": args.noise_ratio,
                    "noise_vocab_size": args.noise_vocab_size,
                    "num_docs": args.num_docs,
                    "seed": args.seed,
                }.items()
                if value is not None
            }
        )
    except ValidationError as e:
        raise ConfigError(
            "invalid synthetic corpus spec",
            [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()],
        )
    try:
        paths = generate_synthetic_files(spec, args.out)
    except OSError as e:
        raise ConfigError(f"cannot write to output directory {args.out}: {e.strerror}")
    for key in ("taxonomy", "train", "val", "test"):
        print(f"{key}\t{paths[key]}")
    return 0


def cmd_train(args) -> int:
    run = build_run_config(
        args.config, _overrides(args), required_paths=("taxonomy", "train_corpus", "val_corpus")
    )
    taxonomy = load_taxonomy_file(run.taxonomy)
    stoplist = _read_optional(run.stoplist, load_stoplist)
    descriptions = _read_optional(run.descriptions, load_descriptions)

    train_docs, vocab = load_corpus_file(run.train_corpus, taxonomy, vocab_mode="build", stoplist=stoplist)
    val_docs, _ = load_corpus_file(run.val_corpus, taxonomy, vocab_mode="frozen", vocab=vocab, stoplist=stoplist)

    out_dir = ensure_dir(run.out_dir)
    model = HJCLModel.create(run.model, taxonomy, vocab, descriptions)
    trainer = Trainer(model, vocab, run.train, run.loss)
    checkpoint_path = os.path.join(out_dir, CHECKPOINT_FILE)
    with open(os.path.join(out_dir, TRAIN_LOG_FILE), "w", encoding="utf-8", newline="\n") as log_stream:
        summary = trainer.fit(train_docs, val_docs, checkpoint_path=checkpoint_path, log_stream=log_stream)

    val_report = trainer.evaluate(val_docs, closure=run.closure)
    _write_json(os.path.join(out_dir, VAL_METRICS_FILE), val_report.model_dump())
    print(f"best epoch {summary.best_epoch} of {summary.epochs_run}; checkpoint {checkpoint_path}")
    print(render_table(val_report))

    if run.test_corpus is not None:
        test_docs, _ = load_corpus_file(
            run.test_corpus, taxonomy, vocab_mode="frozen", vocab=vocab, stoplist=stoplist
        )
        test_report = trainer.evaluate(test_docs, closure=run.closure)
        _write_json(os.path.join(out_dir, "test_metrics.json"), test_report.model_dump())
        print()
        print("test")
        print(render_table(test_report))
    return 0


def cmd_eval(args) -> int:
    run = build_run_config(args.config, _overrides(args), required_paths=("taxonomy", "checkpoint"))
    if args.corpus is None or not os.path.exists(args.corpus):
        raise ConfigError("invalid configuration", [f"corpus: no such file '{args.corpus}'"])
    taxonomy = load_taxonomy_file(run.taxonomy)
    model, vocab, header = HJCLModel.load(run.checkpoint, taxonomy)
    stoplist = _read_optional(run.stoplist, load_stoplist)
    documents, _ = load_corpus_file(args.corpus, taxonomy, vocab_mode="frozen", vocab=vocab, stoplist=stoplist)

    predictions = model.predict_documents(documents)
    metrics = report(
        make_pairs([doc.gold_vector() for doc in documents], predictions), taxonomy, closure=run.closure
    )
    print(f"checkpoint epoch {header.epoch}, {len(documents)} documents")
    print(render_table(metrics))
    if args.report:
        _write_json(args.report, metrics.model_dump())
    if args.dump_predictions:
        write_jsonl(
            args.dump_predictions,
            ({"id": doc.id, "labels": taxonomy.names(bits)} for doc, bits in zip(documents, predictions)),
        )
    return 0


def _read_predictions(path: str, taxonomy: Taxonomy) -> Dict[str, np.ndarray]:
    predictions: Dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(read_lines(f), start=1):
            if not line.strip():
                continue
            try:
                record = Prediction.model_validate_json(line)
                if record.id in predictions:
                    raise DataError(f"duplicate prediction id '{record.id}'", line=line_no)
                predictions[record.id] = taxonomy.vector(record.labels)
            except ValidationError as e:
                raise DataError(f"malformed prediction record: {e.errors()[0]['msg']}", line=line_no)
            except TaxonomyError as e:
                raise DataError(f"prediction for '{record.id}': {str(e)}", line=line_no)
    return predictions


def score_predictions(
    documents: List[Document], predictions: Dict[str, np.ndarray], taxonomy: Taxonomy, closure: bool = True
) -> MetricsReport:
    gold_ids = [doc.id for doc in documents]
    missing = sorted(set(gold_ids) - set(predictions))
    extra = sorted(set(predictions) - set(gold_ids))
    if missing or extra:
        raise DataError(
            f"prediction ids do not match the gold corpus: {len(missing)} missing "
            f"(e.g. {missing[:3]}), {len(extra)} unknown (e.g. {extra[:3]})"
        )
    pairs = make_pairs([doc.gold_vector() for doc in documents], [predictions[i] for i in gold_ids])
    return report(pairs, taxonomy, closure=closure)


def cmd_metrics(args) -> int:
    problems = [
        f"{name}: no such file '{path}'"
        for name, path in (("taxonomy", args.taxonomy), ("gold", args.gold), ("predictions", args.predictions))
        if path is None or not os.path.exists(path)
    ]
    if problems:
        raise ConfigError("invalid configuration", problems)
    taxonomy = load_taxonomy_file(args.taxonomy)
    documents, _ = load_corpus_file(args.gold, taxonomy)
    metrics = score_predictions(documents, _read_predictions(args.predictions, taxonomy), taxonomy, args.closure)
    print(render_table(metrics))
    if args.report:
        _write_json(args.report, metrics.model_dump())
    return 0


def gradcheck_fixture(seed: int) -> Tuple[HJCLModel, List[Document], np.ndarray]:
    """Seeded 4-document batch on a 7-label, depth-3 taxonomy with a tiny model."""
    taxonomy = Taxonomy(
        ["A", "B", "A1", "A2", "B1", "B2", "A1a"],
        {"A": None, "B": None, "A1": "A", "A2": "A", "B1": "B", "B2": "B", "A1a": "A1"},
    )
    vocab = Vocab(["a", "b", "a1", "a2", "b1", "b2", "a1a"] + [f"w{k}" for k in range(8)])
    golds = [["A1a", "B1"], ["A1a"], ["A2", "B2", "A1a"], ["B1"]]
    rng = make_rng(seed, 3)
    documents = []
    for i, labels in enumerate(golds):
        tokens = rng.integers(1, len(vocab), size=5).tolist()
        bits = taxonomy.closure(taxonomy.vector(labels))
        documents.append(Document(id=f"g{i}", token_ids=tokens, gold=bits.tolist()))
    config = ModelConfig(d=8, h=2, gat_layers=2, encoder_layers=1, seed=seed)
    model = HJCLModel.create(config, taxonomy, vocab)
    Y = np.vstack([doc.gold_vector() for doc in documents])
    return model, documents, Y


def gradcheck_objectives(
    model: HJCLModel, documents: List[Document], Y: np.ndarray, weights: LossWeights
) -> Dict[str, Callable[[], Tensor]]:
    taxonomy = model.taxonomy
    ctx = MetricContext(taxonomy)

    def batch_and_logits():
        outputs = model.forward(documents)
        batch = ContrastiveBatch(Z=[o.Z for o in outputs], Y=Y, taxonomy=taxonomy, ids=[d.id for d in documents])
        return batch, [o.S for o in outputs]

    def mean_zlpr():
        _, logits = batch_and_logits()
        return ops.scale(ops.sum_scalars([zlpr(S, y) for S, y in zip(logits, Y)]), 1.0 / len(logits))

    def total():
        batch, logits = batch_and_logits()
        return total_loss(batch, logits, Y, weights, ctx, taxonomy)[0]

    return {
        "zlpr": mean_zlpr,
        "supcon": lambda: supcon(batch_and_logits()[0], weights.tau),
        "hilecon": lambda: hilecon(batch_and_logits()[0], weights.tau, ctx),
        "instance": lambda: instance_loss(batch_and_logits()[0], weights.tau, taxonomy),
        "total": total,
    }


def run_gradcheck(
    seed: int, components=GRADCHECK_COMPONENTS, eps: float = GRADCHECK_EPS, tol: float = GRADCHECK_TOL
) -> List[GradCheckReport]:
    model, documents, Y = gradcheck_fixture(seed)
    objectives = gradcheck_objectives(model, documents, Y, LossWeights())
    params = dict(model.params.items())
    return [
        grad_check(objectives[name], params, eps=eps, tol=tol, seed=seed, name=name) for name in components
    ]


def cmd_gradcheck(args) -> int:
    components = GRADCHECK_COMPONENTS if args.component == "all" else (args.component,)
    reports = run_gradcheck(args.seed, components, eps=args.eps, tol=args.tol)
    width = max(len(r.name) for r in reports)
    for r in reports:
        print(
            f"{r.name.ljust(width)}  max_rel_error={r.max_rel_error:.3e}  "
            f"coords={r.coords_checked}  {'PASS' if r.passed else 'FAIL'}"
        )
    if args.json:
        print(dumps_json({"reports": [r.model_dump() for r in reports]}))
    return 0 if all(r.passed for r in reports) else 1

import argparse
import sys
from typing import List, Optional

from core.config import GRADCHECK_EPS, GRADCHECK_TOL
from core.exceptions import HJCLError
from core.logger import get_logger
from core.settings import HJCL_SEED
from src.cli.commands import GRADCHECK_COMPONENTS, cmd_eval, cmd_gradcheck, cmd_metrics, cmd_synth, cmd_train

logger = get_logger(__name__, log_file="cli.log")


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value run configuration file")
    p.add_argument("--taxonomy")
    p.add_argument("--stoplist", help="one token per line")
    p.add_argument("--closure", choices=["on", "off"], help="re-close true positives before path counting")
    p.add_argument("--seed", type=int)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    model = p.add_argument_group("model")
    model.add_argument("--d", type=int)
    model.add_argument("--heads", dest="h", type=int)
    model.add_argument("--gat-layers", type=int)
    model.add_argument("--encoder-layers", type=int)
    model.add_argument("--no-fusion", dest="use_fusion", action="store_const", const=False)

    loss = p.add_argument_group("loss")
    loss.add_argument("--lambda1", type=float)
    loss.add_argument("--lambda2", type=float)
    loss.add_argument("--tau", type=float)
    loss.add_argument("--mode", choices=["hilecon", "lecon", "supcon"])
    loss.add_argument("--classification-loss", choices=["zlpr", "bce"])
    loss.add_argument("--normalize-gamma", action="store_const", const=True)
    loss.add_argument("--penalty", choices=["shifted", "clamped"])
    loss.add_argument("--instance-denominator", choices=["all", "strict"])
    loss.add_argument("--positive-rule", choices=["exact", "overlap"])
    loss.add_argument("--hilecon-prefactor", choices=["anchors", "labels"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hjcl", description="Hierarchy-aware contrastive training for hierarchical multi-label text classification."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic hierarchical corpus")
    synth.add_argument("--out", required=True, help="output directory")
    synth.add_argument("--depth", type=int)
    synth.add_argument("--branching", type=int)
    synth.add_argument("--tokens-per-label", type=int)
    synth.add_argument("--doc-length", type=int)
    synth.add_argument("--min-paths", type=int, default=1)
    synth.add_argument("--max-paths", type=int, default=3)
    synth.add_argument("--noise-ratio", type=float)
    synth.add_argument("--noise-vocab-size", type=int)
    synth.add_argument("--num-docs", type=int)
    synth.add_argument("--seed", type=int, default=HJCL_SEED)
    synth.set_defaults(handler=cmd_synth)

    train = sub.add_parser("train", help="train a model and write the best checkpoint")
    _add_data_flags(train)
    _add_model_flags(train)
    train.add_argument("--train", dest="train_corpus")
    train.add_argument("--val", dest="val_corpus")
    train.add_argument("--test", dest="test_corpus")
    train.add_argument("--descriptions", help="label<TAB>description file")
    train.add_argument("--out-dir")
    train.add_argument("--batch-size", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--max-epochs", type=int)
    train.add_argument("--patience", type=int)
    train.add_argument("--weight-decay", type=float)
    train.add_argument("--record-wall-time", action="store_const", const=True)
    train.set_defaults(handler=cmd_train)

    evaluate = sub.add_parser("eval", help="score a checkpoint on a corpus")
    _add_data_flags(evaluate)
    evaluate.add_argument("--checkpoint")
    evaluate.add_argument("--corpus", required=True)
    evaluate.add_argument("--report", help="write the metrics JSON here")
    evaluate.add_argument("--dump-predictions", help="write per-document predicted labels (JSONL) here")
    evaluate.set_defaults(handler=cmd_eval)

    gradcheck = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    gradcheck.add_argument("--seed", type=int, default=HJCL_SEED)
    gradcheck.add_argument("--component", choices=("all",) + GRADCHECK_COMPONENTS, default="all")
    gradcheck.add_argument("--eps", type=float, default=GRADCHECK_EPS)
    gradcheck.add_argument("--tol", type=float, default=GRADCHECK_TOL)
    gradcheck.add_argument("--json", action="store_true", help="also print the reports as JSON")
    gradcheck.set_defaults(handler=cmd_gradcheck)

    metrics = sub.add_parser("metrics", help="score a predictions file against a gold corpus")
    metrics.add_argument("--taxonomy", required=True)
    metrics.add_argument("--gold", required=True)
    metrics.add_argument("--predictions", required=True, help='JSONL of {"id": ..., "labels": [...]}')
    metrics.add_argument("--report")
    metrics.add_argument("--closure", choices=["on", "off"], default="on")
    metrics.set_defaults(handler=cmd_metrics)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "metrics":
        args.closure = args.closure == "on"
    try:
        return args.handler(args)
    except HJCLError as e:
        logger.error(f"{args.command} failed: {str(e)}")
        print(f"error: {str(e)}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

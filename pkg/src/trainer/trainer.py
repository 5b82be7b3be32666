import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, TextIO, Tuple

import numpy as np

from core.exceptions import HJCLError, NumericError
from core.logger import get_logger
from core.utils import dumps_json
from data_ingestion.corpus_loader import Vocab
from data_model.pydantic_models.config import LossWeights, TrainConfig
from data_model.pydantic_models.corpus import Document
from data_model.pydantic_models.report import EpochLog, LossBreakdown, MetricsReport, TrainingSummary
from src.encoder_model import HJCLModel
from src.eval_metrics import make_pairs, report
from src.hier_metric import MetricContext
from src.losses import ContrastiveBatch, total_loss
from src.trainer.batching import build_batches
from src.trainer.optimizer import AdamW

logger = get_logger(__name__, log_file="training.log")


@dataclass
class TrainState:
    epoch: int = 0
    best_val_macro_f1: float = -math.inf
    best_epoch: int = 0
    epochs_since_best: int = 0
    best_params: Optional[Dict[str, np.ndarray]] = None
    history: List[EpochLog] = field(default_factory=list)


class Trainer:
    def __init__(
        self,
        model: HJCLModel,
        vocab: Vocab,
        config: TrainConfig,
        loss_weights: Optional[LossWeights] = None,
    ):
        self.model = model
        self.vocab = vocab
        self.config = config
        self.loss_weights = loss_weights or config.loss_weights()
        self.taxonomy = model.taxonomy
        self.ctx = MetricContext(model.taxonomy)
        self.optimizer = AdamW(
            model.params,
            lr=config.lr,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            weight_decay=config.weight_decay,
        )
        self.state = TrainState()

    def train_step(self, documents: Sequence[Document]) -> LossBreakdown:
        """
        Forward, backward and one optimizer update on a batch.

        :raises NumericError: If any loss component or gradient is non-finite; the
            parameters are left untouched in that case.
        """
        outputs = self.model.forward(documents)
        gold = np.vstack([doc.gold_vector() for doc in documents])
        batch = ContrastiveBatch(
            Z=[o.Z for o in outputs], Y=gold, taxonomy=self.taxonomy, ids=[doc.id for doc in documents]
        )
        total, breakdown = total_loss(
            batch, [o.S for o in outputs], gold, self.loss_weights, self.ctx, self.taxonomy
        )
        for name, value in breakdown.model_dump().items():
            if not np.isfinite(value):
                logger.error(f"Non-finite {name} loss on batch starting with '{documents[0].id}'")
                raise NumericError(f"non-finite {name} loss", tensor_name=f"loss.{name}")

        self.model.params.zero_grad()
        total.backward()
        try:
            self.optimizer.step()
        except NumericError:
            self.model.params.zero_grad()
            logger.error("Aborted update: non-finite gradient")
            raise
        return breakdown

    def evaluate(self, documents: Sequence[Document], closure: bool = True) -> MetricsReport:
        predictions = self.model.predict_documents(documents)
        pairs = make_pairs([doc.gold_vector() for doc in documents], predictions)
        return report(pairs, self.taxonomy, closure=closure)

    def _restore_best(self) -> None:
        if self.state.best_params is not None:
            self.model.params.load_arrays(self.state.best_params)

    def _save_best(self, checkpoint_path: Optional[str]) -> None:
        if checkpoint_path is None or self.state.best_params is None:
            return
        self._restore_best()
        self.model.save(checkpoint_path, self.vocab, self.state.best_epoch, self.state.best_val_macro_f1)

    def run_epoch(self, documents: Sequence[Document]) -> Tuple[LossBreakdown, float]:
        schedule = build_batches(
            documents, self.taxonomy, self.config.batch_size, self.config.seed, self.state.epoch
        )
        sums = {"total": 0.0, "classification": 0.0, "instance": 0.0, "hilecon": 0.0}
        for index, batch in enumerate(schedule.batches):
            breakdown = self.train_step([documents[i] for i in batch])
            for key, value in breakdown.model_dump().items():
                sums[key] += value
            logger.debug(f"epoch {self.state.epoch} batch {index}: total {breakdown.total:.6f}")
        means = LossBreakdown(**{key: value / len(schedule.batches) for key, value in sums.items()})
        return means, schedule.coverage

    def fit(
        self,
        train_documents: Sequence[Document],
        val_documents: Sequence[Document],
        checkpoint_path: Optional[str] = None,
        log_stream: Optional[TextIO] = None,
    ) -> TrainingSummary:
        """
        Train until `max_epochs` or until validation Macro-F1 has not improved for
        `patience` epochs.

        The model ends up holding the best parameters. When `checkpoint_path` is
        given the best epoch is written there, also if training fails midway.
        """
        stopped_early = False
        try:
            while self.state.epoch < self.config.max_epochs:
                self.state.epoch += 1
                started = time.perf_counter()
                losses, coverage = self.run_epoch(train_documents)
                val = self.evaluate(val_documents)

                improved = val.macro_f1 > self.state.best_val_macro_f1
                if improved:
                    self.state.best_val_macro_f1 = val.macro_f1
                    self.state.best_epoch = self.state.epoch
                    self.state.best_params = self.model.params.to_arrays()
                    self.state.epochs_since_best = 0
                else:
                    self.state.epochs_since_best += 1

                entry = EpochLog(
                    epoch=self.state.epoch,
                    losses=losses,
                    val_micro_f1=val.micro_f1,
                    val_macro_f1=val.macro_f1,
                    val_acc_p=val.acc_p,
                    val_acc_d=val.acc_d,
                    mean_positive_coverage=coverage,
                    improved=improved,
                    wall_time=time.perf_counter() - started if self.config.record_wall_time else None,
                )
                self.state.history.append(entry)
                if log_stream is not None:
                    log_stream.write(dumps_json(entry.model_dump(exclude_none=True)) + "\n")
                    log_stream.flush()
                logger.info(
                    f"Epoch {entry.epoch}: loss {losses.total:.6f} "
                    f"(cls {losses.classification:.6f}, inst {losses.instance:.6f}, label {losses.hilecon:.6f}), "
                    f"val micro {val.micro_f1:.4f} macro {val.macro_f1:.4f}"
                )

                if self.state.epochs_since_best >= self.config.patience:
                    stopped_early = True
                    logger.info(
                        f"Early stop after epoch {self.state.epoch}: no improvement for "
                        f"{self.config.patience} epochs (best epoch {self.state.best_epoch})"
                    )
                    break
        except HJCLError:
            logger.error(f"Training failed in epoch {self.state.epoch}; keeping the best completed epoch")
            self._save_best(checkpoint_path)
            raise

        self._restore_best()
        self._save_best(checkpoint_path)
        return TrainingSummary(
            best_epoch=self.state.best_epoch,
            best_val_macro_f1=self.state.best_val_macro_f1,
            epochs_run=self.state.epoch,
            stopped_early=stopped_early,
            log=self.state.history,
        )

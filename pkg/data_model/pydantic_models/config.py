from typing import Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from core import config
from core.settings import HJCL_SEED


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    d: int = Field(default=config.EMBEDDING_DIM, ge=1)
    h: int = Field(default=config.NUM_HEADS, ge=1)
    gat_layers: int = Field(default=config.GAT_LAYERS, ge=1)
    vocab_size: int = Field(default=1, ge=1)
    encoder_layers: int = Field(default=0, ge=0)
    use_fusion: bool = True
    seed: int = HJCL_SEED

    @model_validator(mode="after")
    def heads_divide_dim(self):
        if self.d % self.h != 0:
            raise ValueError(f"d={self.d} must be divisible by h={self.h}")
        return self


class LossWeights(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lambda1: float = Field(default=config.LAMBDA_1, ge=0)
    lambda2: float = Field(default=config.LAMBDA_2, ge=0)
    tau: float = Field(default=config.TEMPERATURE, gt=0)
    mode: Literal["hilecon", "lecon", "supcon"] = "hilecon"
    classification_loss: Literal["zlpr", "bce"] = "zlpr"
    normalize_gamma: bool = False
    penalty: Literal["shifted", "clamped"] = "shifted"
    instance_denominator: Literal["all", "strict"] = "all"
    positive_rule: Literal["exact", "overlap"] = "exact"
    hilecon_prefactor: Literal["anchors", "labels"] = "anchors"


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    batch_size: int = Field(default=config.BATCH_SIZE, ge=2)
    lr: float = Field(default=config.LEARNING_RATE, gt=0)
    lambda1: float = Field(default=config.LAMBDA_1, ge=0)
    lambda2: float = Field(default=config.LAMBDA_2, ge=0)
    tau: float = Field(default=config.TEMPERATURE, gt=0)
    max_epochs: int = Field(default=config.MAX_EPOCHS, ge=1)
    patience: int = Field(default=config.PATIENCE, ge=1)
    seed: int = HJCL_SEED
    beta1: float = Field(default=config.ADAM_BETA1, ge=0, lt=1)
    beta2: float = Field(default=config.ADAM_BETA2, ge=0, lt=1)
    eps: float = Field(default=config.ADAM_EPS, gt=0)
    weight_decay: float = Field(default=config.WEIGHT_DECAY, ge=0)
    record_wall_time: bool = False

    def loss_weights(self, **flags) -> LossWeights:
        return LossWeights(lambda1=self.lambda1, lambda2=self.lambda2, tau=self.tau, **flags)


class SynthSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    depth: int = Field(default=3, ge=1)
    branching: int = Field(default=3, ge=1)
    tokens_per_label: int = Field(default=5, ge=1)
    doc_length: int = Field(default=30, ge=1)
    paths_per_doc: Tuple[int, int] = (1, 3)
    noise_ratio: float = Field(default=0.1, ge=0, lt=1)
    noise_vocab_size: int = Field(default=50, ge=1)
    num_docs: int = Field(default=2858, ge=10)
    seed: int = HJCL_SEED

    @field_validator("paths_per_doc")
    @classmethod
    def valid_path_range(cls, value):
        lo, hi = value
        if lo < 1 or hi < lo:
            raise ValueError(f"paths_per_doc must satisfy 1 <= lo <= hi, got {value}")
        return value

    @model_validator(mode="after")
    def enough_leaves(self):
        if self.paths_per_doc[0] > self.branching ** self.depth:
            raise ValueError(
                f"paths_per_doc lower bound {self.paths_per_doc[0]} exceeds the "
                f"{self.branching ** self.depth} leaves of the tree"
            )
        return self


class RunConfig(BaseModel):
    """Everything one CLI invocation needs, merged from a config file and flags."""

    model_config = ConfigDict(extra="forbid")

    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    loss: LossWeights = Field(default_factory=LossWeights)

    taxonomy: Optional[str] = None
    train_corpus: Optional[str] = None
    val_corpus: Optional[str] = None
    test_corpus: Optional[str] = None
    descriptions: Optional[str] = None
    stoplist: Optional[str] = None
    checkpoint: Optional[str] = None
    out_dir: str = "runs/latest"
    closure: bool = True

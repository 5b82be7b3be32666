from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class F1Pair(BaseModel):
    micro_f1: float
    macro_f1: float
    documents: Optional[int] = None


class MetricsReport(BaseModel):
    num_documents: int
    micro_f1: float
    macro_f1: float
    acc_p: float
    acc_d: float
    per_label_f1: Dict[str, float]
    per_level: Dict[str, F1Pair] = Field(default_factory=dict)
    by_path_count: Dict[str, F1Pair] = Field(default_factory=dict)
    path_histogram: Dict[str, int] = Field(default_factory=dict)
    losses: Optional[Dict[str, float]] = None


class LossBreakdown(BaseModel):
    total: float
    classification: float
    instance: float
    hilecon: float


class EpochLog(BaseModel):
    epoch: int
    losses: LossBreakdown
    val_micro_f1: float
    val_macro_f1: float
    val_acc_p: float
    val_acc_d: float
    mean_positive_coverage: float
    improved: bool
    wall_time: Optional[float] = None


class GradCheckReport(BaseModel):
    name: str
    passed: bool
    max_rel_error: float
    tol: float
    eps: float
    coords_checked: int
    per_param: Dict[str, float]
    worst_param: Optional[str] = None


class BatchDiagnostics(BaseModel):
    batch_index: int
    size: int
    coverage: float


class TrainingSummary(BaseModel):
    best_epoch: int
    best_val_macro_f1: float
    epochs_run: int
    stopped_early: bool
    log: List[EpochLog]

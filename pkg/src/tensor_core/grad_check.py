from typing import Callable, Dict, Optional

import numpy as np

from core.config import GRADCHECK_EPS, GRADCHECK_FLOOR, GRADCHECK_MIN_COORDS, GRADCHECK_TOL
from core.exceptions import NumericError
from core.logger import get_logger
from core.utils import make_rng
from data_model.pydantic_models.report import GradCheckReport
from src.tensor_core.tensor import Tensor

logger = get_logger(__name__, log_file="model.log")


def _scalar(f: Callable[[], Tensor], what: str) -> float:
    value = f().item()
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss during {what}")
    return value


def grad_check(
    f: Callable[[], Tensor],
    params: Dict[str, Tensor],
    eps: float = GRADCHECK_EPS,
    tol: float = GRADCHECK_TOL,
    num_coords: int = GRADCHECK_MIN_COORDS,
    seed: int = 0,
    name: str = "loss",
) -> GradCheckReport:
    """
    Compare reverse-mode gradients with central finite differences.

    `f` must rebuild the graph from the current parameter values on every call and
    return a 1x1 tensor. For each parameter, min(size, num_coords) coordinates are
    sampled and perturbed in place; the parameter is restored afterwards.

    :param f: Deterministic graph builder.
    :param params: Leaf tensors to check, keyed by name.
    :param eps: Finite-difference step.
    :param tol: Maximum accepted relative error.
    :param num_coords: Coordinates sampled per parameter.
    :param seed: Seed of the coordinate sampler.
    :param name: Label used in the report.
    :return: GradCheckReport with the worst relative error per parameter.
    """
    for p in params.values():
        p.zero_grad()
    loss = f()
    if not np.isfinite(loss.item()):
        raise NumericError("non-finite loss before gradient check", tensor_name=name)
    loss.backward()

    analytic = {key: p.grad.copy() for key, p in params.items() if p.requires_grad}
    rng = make_rng(seed, 7)
    per_param: Dict[str, float] = {}
    checked = 0

    for key, p in params.items():
        if key not in analytic:
            continue
        if not np.all(np.isfinite(analytic[key])):
            raise NumericError("non-finite analytic gradient", tensor_name=key)
        size = p.data.size
        coords = rng.choice(size, size=min(size, num_coords), replace=False)
        worst = 0.0
        for c in coords:
            original = p.data.flat[c]
            try:
                p.data.flat[c] = original + eps
                plus = _scalar(f, f"perturbation of {key}")
                p.data.flat[c] = original - eps
                minus = _scalar(f, f"perturbation of {key}")
            finally:
                p.data.flat[c] = original

            numeric = (plus - minus) / (2.0 * eps)
            exact = analytic[key].flat[c]
            rel = abs(exact - numeric) / max(abs(exact), abs(numeric), GRADCHECK_FLOOR)
            worst = max(worst, rel)
        per_param[key] = float(worst)
        checked += len(coords)

    worst_param: Optional[str] = max(per_param, key=per_param.get) if per_param else None
    max_rel = per_param[worst_param] if worst_param else 0.0
    report = GradCheckReport(
        name=name,
        passed=max_rel < tol,
        max_rel_error=max_rel,
        tol=tol,
        eps=eps,
        coords_checked=checked,
        per_param=per_param,
        worst_param=worst_param,
    )
    logger.info(f"grad_check[{name}]: max rel error {max_rel:.3e} ({'pass' if report.passed else 'FAIL'})")
    return report

from typing import Dict

import numpy as np

from core.config import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, WEIGHT_DECAY
from core.exceptions import NumericError
from src.encoder_model import ModelParams


class AdamW:
    """
    Adam with decoupled weight decay:

        m <- b1 m + (1 - b1) g          v <- b2 v + (1 - b2) g^2
        p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p)
    """

    def __init__(
        self,
        params: ModelParams,
        lr: float,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        eps: float = ADAM_EPS,
        weight_decay: float = WEIGHT_DECAY,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v: Dict[str, np.ndarray] = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self) -> None:
        """Apply one update from the accumulated gradients, then zero them."""
        for name, p in self.params.items():
            if not np.all(np.isfinite(p.grad)):
                raise NumericError("non-finite gradient", tensor_name=name)

        self.t += 1
        bias1 = 1.0 - self.beta1 ** self.t
        bias2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            p.data -= self.lr * (m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data)
        self.params.zero_grad()

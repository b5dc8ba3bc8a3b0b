"""Adam, the update rule both training loops use (learning rate 0.002).

Parameters are stored float32; moment estimates and the update itself run
in float64 so checkpointed state resumes bit-exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import RangeError, ShapeMismatchError


class Adam:
    def __init__(self, n_params: int, lr: float = 0.002,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise RangeError(f"learning rate must be positive, got {lr}")
        self.n_params = int(n_params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = np.zeros(self.n_params, dtype=np.float64)
        self.v = np.zeros(self.n_params, dtype=np.float64)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        params = np.asarray(params)
        grad = np.asarray(grad, dtype=np.float64)
        if params.shape != (self.n_params,) or grad.shape != (self.n_params,):
            raise ShapeMismatchError(
                f"expected flat shape ({self.n_params},), got params {params.shape} "
                f"and grad {grad.shape}"
            )
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        updated = params.astype(np.float64) - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        return updated.astype(np.float32)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "m": self.m.copy(),
            "v": self.v.copy(),
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
        }

    def load_state_dict(self, state: dict) -> None:
        m = np.asarray(state["m"], dtype=np.float64)
        v = np.asarray(state["v"], dtype=np.float64)
        if m.shape != (self.n_params,) or v.shape != (self.n_params,):
            raise ShapeMismatchError("optimizer state does not match parameter count")
        self.t = int(state["t"])
        self.m = m.copy()
        self.v = v.copy()
        self.lr = float(state["lr"])
        self.beta1 = float(state["beta1"])
        self.beta2 = float(state["beta2"])
        self.eps = float(state["eps"])

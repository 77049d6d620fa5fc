"""Adam optimizer with bias correction over named parameter tensors."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor

__all__ = ["Adam"]


class Adam:
    """Standard Adam update: m/v moment tracking, bias correction, shared step counter.

    Parameters are updated in place; callers must hold exclusive access to the
    parameter tensors while stepping.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        lr = self.lr if lr is None else float(lr)
        for name in self.params:
            if name not in grads:
                raise KeyError(f"missing gradient for parameter '{name}'")
            g = grads[name]
            if g.shape != self.params[name].data.shape:
                raise ValueError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"'{name}' of shape {self.params[name].data.shape}"
                )
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for parameter '{name}'")
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)

    def state_tensors(self) -> dict[str, np.ndarray]:
        """Moment buffers and step counter as named arrays, for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name in self.params:
            out[f"opt.m.{name}"] = self.m[name]
            out[f"opt.v.{name}"] = self.v[name]
        out["opt.t"] = np.asarray(float(self.t))
        return out

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        for name in self.params:
            self.m[name] = np.array(tensors[f"opt.m.{name}"], dtype=np.float64)
            self.v[name] = np.array(tensors[f"opt.v.{name}"], dtype=np.float64)
        self.t = int(tensors["opt.t"])

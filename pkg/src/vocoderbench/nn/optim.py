"""First-order optimizers with global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .layers import Param


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"  # "sgd" (heavy-ball momentum) or "adam"
    learning_rate: float = 1e-3
    momentum: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0  # <= 0 disables clipping

    def to_dict(self) -> dict:
        return asdict(self)


def global_norm(params: list[Param]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))


def clip_gradients(params: list[Param], clip_norm: float) -> float:
    """Rescale gradients in place so their global norm is at most ``clip_norm``."""
    norm = global_norm(params)
    if clip_norm > 0 and norm > clip_norm:
        scale = clip_norm / norm
        for p in params:
            p.grad *= scale
    return norm


class Optimizer:
    def __init__(self, params, config: OptimizerConfig = OptimizerConfig()):
        if config.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {config.kind!r}")
        self.params = [p for _, p in params] if params and isinstance(params[0], tuple) else list(params)
        self.config = config
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params] if config.kind == "adam" else None
        self.t = 0

    def step(self) -> float:
        """Apply one update from the accumulated gradients; returns the pre-clip gradient norm."""
        cfg = self.config
        norm = clip_gradients(self.params, cfg.clip_norm)
        self.t += 1
        if cfg.kind == "sgd":
            for p, m in zip(self.params, self.m):
                m *= cfg.momentum
                m += p.grad
                p.value -= cfg.learning_rate * m
        else:
            b1, b2 = cfg.momentum, cfg.beta2
            c1 = 1.0 - b1 ** self.t
            c2 = 1.0 - b2 ** self.t
            for p, m, v in zip(self.params, self.m, self.v):
                m *= b1
                m += (1.0 - b1) * p.grad
                v *= b2
                v += (1.0 - b2) * p.grad * p.grad
                p.value -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        return norm

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0

"""Central finite-difference checks of the analytic layer gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import LayerSpec, build_layer, cross_entropy, gaussian_nll


@dataclass
class GradCheckReport:
    kind: str
    trials: int
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tol: float = 1e-4) -> bool:
        return self.max_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(max|a|, max|n|), taken over one tensor."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


class _Probe:
    """Wraps one layer with a fixed random scalar objective."""

    def __init__(self, spec: LayerSpec, rng: np.random.Generator, seq_len: int):
        self.spec = spec
        self.layer = build_layer(spec, rng, name=spec.kind)
        n_in = spec.sizes[0]
        self.x = rng.standard_normal((seq_len, n_in))
        self.cond = None
        if spec.kind == "dilated_causal_block":
            self.cond = rng.standard_normal((seq_len, spec.sizes[2]))
            self.r = (rng.standard_normal((seq_len, spec.sizes[0])),
                      rng.standard_normal((seq_len, spec.sizes[1])))
        else:
            out = self.layer.forward(self.x)
            self.r = rng.standard_normal(out.shape)
            if spec.kind == "softmax_head":
                self.targets = rng.integers(0, spec.sizes[1], seq_len)
            if spec.kind == "gaussian_head":
                self.targets = rng.standard_normal(out.shape)

    def loss(self) -> float:
        return self._run(backward=False)

    def _run(self, backward: bool) -> float:
        layer = self.layer
        if self.cond is not None:
            res, skip = layer.forward(self.x, self.cond)
            loss = float(np.sum(self.r[0] * res) + np.sum(self.r[1] * skip))
            if backward:
                self.dx, self.dcond = layer.backward(self.r[0], self.r[1])
            return loss
        y = layer.forward(self.x)
        loss = float(np.sum(self.r * y))
        dy = self.r.copy()
        if self.spec.kind == "softmax_head":
            ce, g = cross_entropy(y, self.targets)
            loss += ce
            dy += g
        elif self.spec.kind == "gaussian_head":
            nll, g = gaussian_nll(self.targets, y)
            loss += nll
            dy += g
        if backward:
            self.dx = layer.backward(dy)
        return loss

    def analytic(self) -> dict[str, np.ndarray]:
        self.layer.zero_grad()
        self._run(backward=True)
        grads = {name: p.grad.copy() for name, p in self.layer.params()}
        grads["input"] = self.dx
        if self.cond is not None:
            grads["cond"] = self.dcond
        return grads

    def tensors(self) -> dict[str, np.ndarray]:
        t = {name: p.value for name, p in self.layer.params()}
        t["input"] = self.x
        if self.cond is not None:
            t["cond"] = self.cond
        return t


def numeric_gradient(f, values: np.ndarray, eps: float = 1e-4) -> np.ndarray:
    grad = np.zeros_like(values)
    flat = values.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        up = f()
        flat[i] = old - eps
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * eps)
    return grad


def gradient_check(spec: LayerSpec, trials: int = 1, seed: int = 0, seq_len: int = 5,
                   eps: float = 1e-4) -> GradCheckReport:
    """Compare analytic and central-difference gradients for every parameter and input."""
    rng = np.random.default_rng(seed)
    report = GradCheckReport(spec.kind, trials)
    for _ in range(trials):
        probe = _Probe(spec, rng, seq_len)
        analytic = probe.analytic()
        for name, values in probe.tensors().items():
            err = relative_error(analytic[name], numeric_gradient(probe.loss, values, eps))
            report.errors[name] = max(report.errors.get(name, 0.0), err)
    return report


def random_spec(kind: str, rng: np.random.Generator) -> LayerSpec:
    """A small random layer spec of the given kind, for property sweeps."""
    a, b = (int(v) for v in rng.integers(1, 6, 2))
    if kind == "conv1d":
        return LayerSpec(kind, (a, b, int(rng.integers(1, 4))), int(rng.integers(1, 3)),
                         {"causal": bool(rng.integers(0, 2))})
    if kind == "dilated_causal_block":
        return LayerSpec(kind, (a, b, int(rng.integers(1, 4))), int(rng.integers(1, 4)))
    if kind == "softmax_head":
        return LayerSpec(kind, (a, max(b, 2)))
    if kind == "uni_recurrent":
        return LayerSpec(kind, (a, b), options={"reverse": bool(rng.integers(0, 2))})
    return LayerSpec(kind, (a, b))

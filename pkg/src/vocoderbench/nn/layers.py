"""Layers with explicit forward/backward passes over (T, C) sequences.

Every layer caches what its backward pass needs during ``forward``; gradients
accumulate into ``Param.grad`` until :meth:`Layer.zero_grad` is called.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

KINDS = ("linear", "ff_tanh", "uni_recurrent", "bi_recurrent", "conv1d",
         "dilated_causal_block", "softmax_head", "gaussian_head")


class ShapeError(ValueError):
    def __init__(self, layer: str, expected, got):
        super().__init__(f"layer {layer}: expected input dim {expected}, got {got}")
        self.layer = layer
        self.expected = expected
        self.got = got


class Param:
    __slots__ = ("value", "grad")

    def __init__(self, value: np.ndarray):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self):
        return self.value.shape


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    sizes: tuple = ()
    dilation: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if any(int(s) <= 0 for s in self.sizes):
            raise ValueError(f"{self.kind}: sizes must be positive, got {self.sizes}")
        if self.dilation < 1:
            raise ValueError("dilation must be >= 1")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(d["kind"], tuple(d.get("sizes", ())), int(d.get("dilation", 1)),
                   dict(d.get("options", {})))


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Layer:
    kind = ""

    def __init__(self, name: str = ""):
        self.name = name or self.kind
        self._cache = None

    def params(self) -> list[tuple[str, Param]]:
        return [(k, v) for k, v in vars(self).items() if isinstance(v, Param)]

    def zero_grad(self):
        for _, p in self.params():
            p.grad[...] = 0.0

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"layer {self.name}: backward called before forward")
        return self._cache

    def _check(self, x: np.ndarray, n_in: int):
        if x.ndim != 2 or x.shape[1] != n_in:
            raise ShapeError(self.name, n_in, x.shape[-1] if x.ndim else None)


class Linear(Layer):
    kind = "linear"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, name: str = ""):
        super().__init__(name)
        self.n_in, self.n_out = n_in, n_out
        self.W = Param(uniform_init(rng, n_in, (n_in, n_out)))
        self.b = Param(np.zeros(n_out))

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, (self.n_in, self.n_out))

    def forward(self, x):
        self._check(x, self.n_in)
        self._cache = x
        return x @ self.W.value + self.b.value

    def backward(self, dy):
        x = self._need_cache()
        self.W.grad += x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.W.value.T


class FFTanh(Linear):
    kind = "ff_tanh"

    def forward(self, x):
        y = np.tanh(super().forward(x))
        self._cache = (self._cache, y)
        return y

    def backward(self, dy):
        x, y = self._need_cache()
        self._cache = x
        try:
            return super().backward(dy * (1.0 - y * y))
        finally:
            self._cache = (x, y)


class LSTM(Layer):
    """Single-direction LSTM; gate order input, forget, cell, output."""

    kind = "uni_recurrent"

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator, reverse: bool = False,
                 name: str = ""):
        super().__init__(name)
        self.n_in, self.n_hidden, self.reverse = n_in, n_hidden, reverse
        h = n_hidden
        self.W = Param(uniform_init(rng, n_in + h, (n_in, 4 * h)))
        self.U = Param(uniform_init(rng, n_in + h, (h, 4 * h)))
        b = np.zeros(4 * h)
        b[h:2 * h] = 1.0
        self.b = Param(b)

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, (self.n_in, self.n_hidden),
                         options={"reverse": True} if self.reverse else {})

    def forward(self, x):
        self._check(x, self.n_in)
        if self.reverse:
            x = x[::-1]
        t_len, h = len(x), self.n_hidden
        zx = x @ self.W.value + self.b.value
        U = self.U.value
        hs = np.zeros((t_len + 1, h))
        cs = np.zeros((t_len + 1, h))
        gates = np.zeros((t_len, 4 * h))
        for t in range(t_len):
            z = zx[t] + hs[t] @ U
            i, f, o = sigmoid(z[:h]), sigmoid(z[h:2 * h]), sigmoid(z[3 * h:])
            g = np.tanh(z[2 * h:3 * h])
            cs[t + 1] = f * cs[t] + i * g
            hs[t + 1] = o * np.tanh(cs[t + 1])
            gates[t] = np.concatenate([i, f, g, o])
        self._cache = (x, hs, cs, gates)
        out = hs[1:]
        return out[::-1].copy() if self.reverse else out

    def backward(self, dy):
        x, hs, cs, gates = self._need_cache()
        if self.reverse:
            dy = dy[::-1]
        t_len, h = len(x), self.n_hidden
        U = self.U.value
        dz = np.zeros((t_len, 4 * h))
        dh_next = np.zeros(h)
        dc_next = np.zeros(h)
        for t in range(t_len - 1, -1, -1):
            i, f, g, o = (gates[t, :h], gates[t, h:2 * h], gates[t, 2 * h:3 * h], gates[t, 3 * h:])
            tc = np.tanh(cs[t + 1])
            dh = dy[t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz[t, :h] = dc * g * i * (1.0 - i)
            dz[t, h:2 * h] = dc * cs[t] * f * (1.0 - f)
            dz[t, 2 * h:3 * h] = dc * i * (1.0 - g * g)
            dz[t, 3 * h:] = dh * tc * o * (1.0 - o)
            dh_next = dz[t] @ U.T
            dc_next = dc * f
        self.W.grad += x.T @ dz
        self.U.grad += hs[:-1].T @ dz
        self.b.grad += dz.sum(axis=0)
        dx = dz @ self.W.value.T
        return dx[::-1].copy() if self.reverse else dx


class BiLSTM(Layer):
    kind = "bi_recurrent"

    def __init__(self, n_in: int, n_hidden: int, rng: np.random.Generator, name: str = ""):
        super().__init__(name)
        self.n_in, self.n_hidden = n_in, n_hidden
        self.fwd = LSTM(n_in, n_hidden, rng, name=f"{self.name}.fwd")
        self.bwd = LSTM(n_in, n_hidden, rng, reverse=True, name=f"{self.name}.bwd")

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, (self.n_in, self.n_hidden))

    def params(self):
        return ([(f"fwd.{k}", p) for k, p in self.fwd.params()]
                + [(f"bwd.{k}", p) for k, p in self.bwd.params()])

    def forward(self, x):
        self._check(x, self.n_in)
        self._cache = True
        return np.concatenate([self.fwd.forward(x), self.bwd.forward(x)], axis=1)

    def backward(self, dy):
        self._need_cache()
        h = self.n_hidden
        return self.fwd.backward(dy[:, :h]) + self.bwd.backward(dy[:, h:])


class Conv1d(Layer):
    """1-D convolution over time. Non-causal convolutions use centred ('same') padding."""

    kind = "conv1d"

    def __init__(self, n_in: int, n_out: int, kernel: int, rng: np.random.Generator,
                 dilation: int = 1, causal: bool = False, name: str = ""):
        super().__init__(name)
        self.n_in, self.n_out, self.kernel = n_in, n_out, kernel
        self.dilation, self.causal = dilation, causal
        self.W = Param(uniform_init(rng, n_in * kernel, (kernel * n_in, n_out)))
        self.b = Param(np.zeros(n_out))
        span = (kernel - 1) * dilation
        self.pad_left = span if causal else span // 2
        self.pad_right = span - self.pad_left

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, (self.n_in, self.n_out, self.kernel), self.dilation,
                         {"causal": self.causal})

    def forward(self, x):
        self._check(x, self.n_in)
        t_len = len(x)
        xp = np.concatenate([np.zeros((self.pad_left, self.n_in)), x,
                             np.zeros((self.pad_right, self.n_in))])
        d = self.dilation
        cols = np.concatenate([xp[k * d: k * d + t_len] for k in range(self.kernel)], axis=1)
        self._cache = cols
        return cols @ self.W.value + self.b.value

    def backward(self, dy):
        cols = self._need_cache()
        self.W.grad += cols.T @ dy
        self.b.grad += dy.sum(axis=0)
        dcols = dy @ self.W.value.T
        t_len, d = len(dy), self.dilation
        dxp = np.zeros((t_len + self.pad_left + self.pad_right, self.n_in))
        for k in range(self.kernel):
            dxp[k * d: k * d + t_len] += dcols[:, k * self.n_in:(k + 1) * self.n_in]
        return dxp[self.pad_left: self.pad_left + t_len]


class DilatedCausalBlock(Layer):
    """Gated 2x1 dilated causal convolution with conditioning, residual and skip outputs.

    z = x[t] Wc + x[t-d] Wp + cond[t] V + b;  u = tanh(z_f) * sigmoid(z_g)
    residual = x + u Wr + br;  skip = u Ws + bs
    """

    kind = "dilated_causal_block"

    def __init__(self, channels: int, skip_channels: int, cond_dim: int, dilation: int,
                 rng: np.random.Generator, name: str = ""):
        super().__init__(name)
        self.channels, self.skip_channels = channels, skip_channels
        self.cond_dim, self.dilation = cond_dim, dilation
        c = channels
        fan = 2 * c + cond_dim
        self.Wc = Param(uniform_init(rng, fan, (c, 2 * c)))
        self.Wp = Param(uniform_init(rng, fan, (c, 2 * c)))
        self.V = Param(uniform_init(rng, fan, (cond_dim, 2 * c)))
        self.b = Param(np.zeros(2 * c))
        self.Wr = Param(uniform_init(rng, c, (c, c)))
        self.br = Param(np.zeros(c))
        self.Ws = Param(uniform_init(rng, c, (c, skip_channels)))
        self.bs = Param(np.zeros(skip_channels))

    @property
    def spec(self) -> LayerSpec:
        return LayerSpec(self.kind, (self.channels, self.skip_channels, self.cond_dim), self.dilation)

    def _past(self, x):
        d = min(self.dilation, len(x))
        return np.concatenate([np.zeros((d, x.shape[1])), x[: len(x) - d]])

    def forward(self, x, cond):
        self._check(x, self.channels)
        if cond.shape != (len(x), self.cond_dim):
            raise ShapeError(f"{self.name}(cond)", (len(x), self.cond_dim), cond.shape)
        past = self._past(x)
        z = x @ self.Wc.value + past @ self.Wp.value + cond @ self.V.value + self.b.value
        c = self.channels
        tf, sg = np.tanh(z[:, :c]), sigmoid(z[:, c:])
        u = tf * sg
        self._cache = (x, past, cond, tf, sg, u)
        return x + u @ self.Wr.value + self.br.value, u @ self.Ws.value + self.bs.value

    def backward(self, d_res, d_skip):
        x, past, cond, tf, sg, u = self._need_cache()
        self.Wr.grad += u.T @ d_res
        self.br.grad += d_res.sum(axis=0)
        self.Ws.grad += u.T @ d_skip
        self.bs.grad += d_skip.sum(axis=0)
        du = d_res @ self.Wr.value.T + d_skip @ self.Ws.value.T
        dz = np.concatenate([du * sg * (1.0 - tf * tf), du * tf * sg * (1.0 - sg)], axis=1)
        self.Wc.grad += x.T @ dz
        self.Wp.grad += past.T @ dz
        self.V.grad += cond.T @ dz
        self.b.grad += dz.sum(axis=0)
        dx = d_res + dz @ self.Wc.value.T
        dpast = dz @ self.Wp.value.T
        d = min(self.dilation, len(x))
        dx[: len(x) - d] += dpast[d:]
        return dx, dz @ self.V.value.T


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class SoftmaxHead(Linear):
    """Linear projection followed by log-softmax over classes."""

    kind = "softmax_head"

    def forward(self, x):
        logp = log_softmax(super().forward(x))
        self._cache = (self._cache, logp)
        return logp

    def backward(self, dy):
        x, logp = self._need_cache()
        p = np.exp(logp)
        dz = dy - p * dy.sum(axis=-1, keepdims=True)
        self._cache = x
        try:
            return super().backward(dz)
        finally:
            self._cache = (x, logp)


class GaussianHead(Linear):
    """Mean of an identity-covariance Gaussian."""

    kind = "gaussian_head"


def cross_entropy(logp: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean negative log-likelihood of integer targets; returns (loss, dloss/dlogp)."""
    t_len = len(targets)
    loss = -logp[np.arange(t_len), targets].mean()
    grad = np.zeros_like(logp)
    grad[np.arange(t_len), targets] = -1.0 / t_len
    return float(loss), grad


def gaussian_nll(target: np.ndarray, mean: np.ndarray) -> tuple[float, np.ndarray]:
    """sum_n [0.5 ||a_n - h_n||^2 + d/2 ln 2 pi]; returns (loss, dloss/dmean)."""
    target = np.atleast_2d(target)
    mean = np.atleast_2d(mean)
    if target.shape != mean.shape:
        raise ShapeError("gaussian_nll", target.shape, mean.shape)
    r = mean - target
    n, d = r.shape
    return float(0.5 * np.sum(r * r) + 0.5 * n * d * np.log(2 * np.pi)), r


def build_layer(spec: LayerSpec, rng: np.random.Generator, name: str = "") -> Layer:
    s = spec.sizes
    if spec.kind == "linear":
        return Linear(s[0], s[1], rng, name)
    if spec.kind == "ff_tanh":
        return FFTanh(s[0], s[1], rng, name)
    if spec.kind == "uni_recurrent":
        return LSTM(s[0], s[1], rng, reverse=bool(spec.options.get("reverse", False)), name=name)
    if spec.kind == "bi_recurrent":
        return BiLSTM(s[0], s[1], rng, name)
    if spec.kind == "conv1d":
        return Conv1d(s[0], s[1], s[2], rng, spec.dilation, bool(spec.options.get("causal", False)),
                      name)
    if spec.kind == "dilated_causal_block":
        return DilatedCausalBlock(s[0], s[1], s[2], spec.dilation, rng, name)
    if spec.kind == "softmax_head":
        return SoftmaxHead(s[0], s[1], rng, name)
    if spec.kind == "gaussian_head":
        return GaussianHead(s[0], s[1], rng, name)
    raise ValueError(spec.kind)


def output_dim(spec: LayerSpec) -> int:
    if spec.kind == "bi_recurrent":
        return 2 * spec.sizes[1]
    if spec.kind == "dilated_causal_block":
        return spec.sizes[0]
    return spec.sizes[1]


class Sequential:
    """A chain of single-input layers, built from specs with one seeded generator."""

    def __init__(self, specs: list[LayerSpec], rng: np.random.Generator, name: str = "net"):
        self.name = name
        self.layers = [build_layer(s, rng, f"{name}[{i}]:{s.kind}") for i, s in enumerate(specs)]
        for prev, nxt in zip(specs, specs[1:]):
            if output_dim(prev) != nxt.sizes[0]:
                raise ShapeError(f"{name}:{nxt.kind}", output_dim(prev), nxt.sizes[0])

    @property
    def specs(self) -> list[LayerSpec]:
        return [layer.spec for layer in self.layers]

    def params(self):
        return [(f"{i}.{k}", p) for i, layer in enumerate(self.layers) for k, p in layer.params()]

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

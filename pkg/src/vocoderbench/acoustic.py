"""Acoustic models mapping linguistic frames to MGC/BAP trajectories.

* ``AcousticModel`` with ``ar_orders=None`` is the plain recurrent baseline:
  a_n ~ N(h_n, I).
* With ``ar_orders`` set it is the shallow autoregressive model:
  a_n ~ N(h_n + sum_k beta_k * a_{n-k} + gamma, I), history before the first
  frame being zero.
* ``GanPostfilter`` refines generated MGC with a residual CNN generator trained
  against a frame-wise discriminator.
* ``F0Model`` is a quantized-F0 classifier fed with its own previous output.
"""

from __future__ import annotations

import numpy as np

from .nn import (FFTanh, LayerSpec, Linear, Model, Optimizer, OptimizerConfig, Param, Sequential,
                 ShapeError, SoftmaxHead, cross_entropy, gaussian_nll)
from .nn.layers import Conv1d, sigmoid

LOG_2PI = np.log(2 * np.pi)


# ---------------------------------------------------------------------------
# distribution-level functions


def rnn_nll(h: np.ndarray, a: np.ndarray) -> float:
    """sum_n 0.5 ||a_n - h_n||^2 + (d/2) ln 2 pi."""
    return gaussian_nll(a, h)[0]


def sar_mean(h: np.ndarray, a: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """h_n + sum_{k=1..K} beta_k * a_{n-k} + gamma, with a_{n-k} = 0 before the first frame."""
    h = np.atleast_2d(h)
    a = np.atleast_2d(a)
    beta = np.atleast_2d(beta) if np.size(beta) else np.zeros((0, h.shape[1]))
    mean = h.copy()
    for k in range(1, beta.shape[0] + 1):
        mean[k:] += beta[k - 1] * a[:-k] if k < len(a) else 0.0
    return mean + gamma


def sar_nll(h: np.ndarray, a: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> float:
    return gaussian_nll(a, sar_mean(h, a, beta, gamma))[0]


def sar_recursion(h: np.ndarray, beta: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """Mean-based generation, feeding generated frames back: a_n = h_n + sum beta_k a_{n-k} + gamma."""
    h = np.atleast_2d(h)
    beta = np.atleast_2d(beta) if np.size(beta) else np.zeros((0, h.shape[1]))
    out = np.empty_like(h)
    for n in range(len(h)):
        acc = h[n].copy()
        for k in range(1, beta.shape[0] + 1):
            if n - k >= 0:
                acc += beta[k - 1] * out[n - k]
        out[n] = acc + gamma
    return out


# ---------------------------------------------------------------------------


class Normalizer:
    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(std, dtype=np.float64), 1e-8)

    @classmethod
    def fit(cls, arrays: list[np.ndarray]) -> "Normalizer":
        x = np.concatenate(arrays)
        return cls(x.mean(axis=0), x.std(axis=0))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, x):
        return (x - self.mean) / self.std

    def inverse(self, x):
        return x * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Normalizer":
        return cls(d["mean"], d["std"])


def default_body(in_dim: int, out_dim: int, ff=(64, 64), bi=(32,), uni=(32,)) -> list[LayerSpec]:
    specs, d = [], in_dim
    for n in ff:
        specs.append(LayerSpec("ff_tanh", (d, n)))
        d = n
    for n in bi:
        specs.append(LayerSpec("bi_recurrent", (d, n)))
        d = 2 * n
    for n in uni:
        specs.append(LayerSpec("uni_recurrent", (d, n)))
        d = n
    specs.append(LayerSpec("gaussian_head", (d, out_dim)))
    return specs


class AcousticModel(Model):
    """Recurrent network with one Gaussian output per stream, optionally autoregressive.

    ``streams`` lists (name, dim); ``ar_orders`` maps stream name to its AR order K.
    All computation happens on normalized features; ``generate`` returns natural units.
    """

    def __init__(self, in_dim: int, streams=(("mgc", 60), ("bap", 25)), ar_orders=None,
                 ff=(64, 64), bi=(32,), uni=(32,), seed: int = 0, in_norm=None, out_norm=None):
        self.in_dim = in_dim
        self.streams = [(str(n), int(d)) for n, d in streams]
        self.out_dim = sum(d for _, d in self.streams)
        self.ar_orders = dict(ar_orders) if ar_orders is not None else None
        self.hidden = {"ff": list(ff), "bi": list(bi), "uni": list(uni)}
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.net = Sequential(default_body(in_dim, self.out_dim, ff, bi, uni), rng, "acoustic")
        self.in_norm = in_norm or Normalizer.identity(in_dim)
        self.out_norm = out_norm or Normalizer.identity(self.out_dim)
        k_max = max(self.ar_orders.values(), default=0) if self.ar_orders else 0
        self.ar_mask = np.zeros((k_max, self.out_dim))
        if self.ar_orders:
            start = 0
            for name, d in self.streams:
                self.ar_mask[: self.ar_orders.get(name, 0), start:start + d] = 1.0
                start += d
        self.beta = Param(np.zeros((k_max, self.out_dim)))
        self.gamma = Param(np.zeros(self.out_dim))

    @property
    def is_autoregressive(self) -> bool:
        return self.ar_orders is not None

    def architecture(self) -> dict:
        return {"in_dim": self.in_dim, "streams": self.streams, "ar_orders": self.ar_orders,
                **self.hidden, "seed": self.seed, "in_norm": self.in_norm.to_dict(),
                "out_norm": self.out_norm.to_dict()}

    @classmethod
    def from_architecture(cls, arch):
        return cls(arch["in_dim"], arch["streams"], arch["ar_orders"], arch["ff"], arch["bi"],
                   arch["uni"], arch["seed"], Normalizer.from_dict(arch["in_norm"]),
                   Normalizer.from_dict(arch["out_norm"]))

    def layer_specs(self):
        return [s.to_dict() for s in self.net.specs]

    def parameters(self):
        params = [(f"net.{k}", p) for k, p in self.net.params()]
        if self.is_autoregressive:
            params += [("sar.beta", self.beta), ("sar.gamma", self.gamma)]
        return params

    def _check(self, l, a=None):
        if l.shape[1] != self.in_dim:
            raise ShapeError("acoustic input", self.in_dim, l.shape[1])
        if a is not None:
            if a.shape[1] != self.out_dim:
                raise ShapeError("acoustic target", self.out_dim, a.shape[1])
            if len(a) != len(l):
                raise ValueError(f"linguistic ({len(l)}) and acoustic ({len(a)}) frame counts differ")

    def hidden_mean(self, l: np.ndarray) -> np.ndarray:
        """Network output h_{1:N} in normalized units."""
        self._check(l)
        return self.net.forward(self.in_norm(l))

    def nll(self, l: np.ndarray, a: np.ndarray, backward: bool = False) -> float:
        """Negative log-likelihood of natural-unit targets ``a`` (evaluated in normalized units)."""
        self._check(l, a)
        h = self.hidden_mean(l)
        target = self.out_norm(a)
        if self.is_autoregressive:
            beta = self.beta.value * self.ar_mask
            mean = sar_mean(h, target, beta, self.gamma.value)
        else:
            mean = h
        loss, dmean = gaussian_nll(target, mean)
        if backward:
            if self.is_autoregressive:
                for k in range(1, beta.shape[0] + 1):
                    self.beta.grad[k - 1] += (dmean[k:] * target[:-k]).sum(axis=0) * self.ar_mask[k - 1]
                self.gamma.grad += dmean.sum(axis=0)
            self.net.backward(dmean)
        return loss

    def generate(self, l: np.ndarray) -> np.ndarray:
        h = self.hidden_mean(l)
        if self.is_autoregressive:
            h = sar_recursion(h, self.beta.value * self.ar_mask, self.gamma.value)
        return self.out_norm.inverse(h)

    def split(self, a: np.ndarray) -> dict[str, np.ndarray]:
        out, start = {}, 0
        for name, d in self.streams:
            out[name] = a[:, start:start + d]
            start += d
        return out


def train_model(model, step_fn, data: list, steps: int, opt: Optimizer, seed: int = 0) -> list[float]:
    """Generic loop: each step draws one item (seeded order) and calls ``step_fn(item)``."""
    rng = np.random.default_rng(seed)
    losses = []
    order: list[int] = []
    for _ in range(steps):
        if not order:
            order = list(rng.permutation(len(data)))
        item = data[order.pop()]
        model.zero_grad()
        loss = step_fn(item)
        opt.step()
        losses.append(float(loss))
    return losses


def train_acoustic(model: AcousticModel, data: list[tuple[np.ndarray, np.ndarray]], steps: int,
                   opt_config: OptimizerConfig = OptimizerConfig("adam", 3e-3), seed: int = 0):
    """Train on (linguistic, acoustic) pairs; loss is per-frame NLL."""
    opt = Optimizer(model.parameters(), opt_config)

    def step(item):
        l, a = item
        return model.nll(l, a, backward=True) / len(l)

    return train_model(model, step, data, steps, opt, seed)


# ---------------------------------------------------------------------------
# GAN postfilter


def gan_scale_weights(n_mgc: int = 60, n_bap: int = 25) -> np.ndarray:
    """0.001 for MGC dims 0-4, 0.01 for dims 5-9, 1 for the remaining MGC dims, 0 for BAP."""
    w = np.ones(n_mgc + n_bap)
    w[:min(5, n_mgc)] = 0.001
    w[5:min(10, n_mgc)] = 0.01
    w[n_mgc:] = 0.0
    return w


def gan_scale(features: np.ndarray, n_mgc: int = 60, n_bap: int = 25) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != n_mgc + n_bap:
        raise ValueError(f"expected MGC({n_mgc}) + BAP({n_bap}) = {n_mgc + n_bap} dims, "
                         f"got {features.shape[-1]}")
    return features * gan_scale_weights(n_mgc, n_bap)


def _softplus(x):
    return np.logaddexp(0.0, x)


class GanPostfilter(Model):
    """Residual CNN generator over MGC plus a frame-wise CNN discriminator.

    Generator: h_i = tanh(conv_i(h_{i-1})), y = x + sum_i FF_i(h_i) with each FF
    zero-initialised, so an untrained generator is the identity. The
    discriminator sees ``gan_scale`` of natural-unit MGC+BAP and emits one logit per frame.
    """

    def __init__(self, n_mgc: int = 60, n_bap: int = 25, channels: int = 32, g_layers: int = 3,
                 d_layers: int = 2, kernel: int = 5, anchor_weight: float = 10.0, seed: int = 0,
                 mgc_norm=None):
        self.n_mgc, self.n_bap = n_mgc, n_bap
        self.channels, self.g_layers, self.d_layers = channels, g_layers, d_layers
        self.kernel, self.anchor_weight, self.seed = kernel, anchor_weight, seed
        self.mgc_norm = mgc_norm or Normalizer.identity(n_mgc)
        rng = np.random.default_rng(seed)
        self.g_convs, self.g_ffs = [], []
        d = n_mgc
        for i in range(g_layers):
            self.g_convs.append(Conv1d(d, channels, kernel, rng, name=f"G.conv{i}"))
            ff = Linear(channels, n_mgc, rng, name=f"G.ff{i}")
            ff.W.value[...] = 0.0
            self.g_ffs.append(ff)
            d = channels
        self.d_convs = []
        d = n_mgc + n_bap
        for i in range(d_layers):
            self.d_convs.append(Conv1d(d, channels, kernel, rng, name=f"D.conv{i}"))
            d = channels
        self.d_out = Linear(d, 1, rng, name="D.out")
        self.d_out.W.value[...] = 0.0
        self.scale = gan_scale_weights(n_mgc, n_bap)

    def architecture(self):
        return {"n_mgc": self.n_mgc, "n_bap": self.n_bap, "channels": self.channels,
                "g_layers": self.g_layers, "d_layers": self.d_layers, "kernel": self.kernel,
                "anchor_weight": self.anchor_weight, "seed": self.seed,
                "mgc_norm": self.mgc_norm.to_dict()}

    @classmethod
    def from_architecture(cls, arch):
        arch = dict(arch)
        arch["mgc_norm"] = Normalizer.from_dict(arch["mgc_norm"])
        return cls(**arch)

    def layer_specs(self):
        return [layer.spec.to_dict() for layer in [*self.g_convs, *self.g_ffs, *self.d_convs, self.d_out]]

    def generator_params(self):
        return [(f"{layer.name}.{k}", p) for layer in [*self.g_convs, *self.g_ffs]
                for k, p in layer.params()]

    def discriminator_params(self):
        return [(f"{layer.name}.{k}", p) for layer in [*self.d_convs, self.d_out]
                for k, p in layer.params()]

    def parameters(self):
        return self.generator_params() + self.discriminator_params()

    # generator -----------------------------------------------------------
    def _g_forward(self, x):
        h, y, acts = x, x.copy(), []
        for conv, ff in zip(self.g_convs, self.g_ffs):
            h = np.tanh(conv.forward(h))
            acts.append(h)
            y = y + ff.forward(h)
        self._g_acts = acts
        return y

    def _g_backward(self, dy):
        dh_next = None
        for i in range(self.g_layers - 1, -1, -1):
            dh = self.g_ffs[i].backward(dy)
            if dh_next is not None:
                dh = dh + dh_next
            h = self._g_acts[i]
            dh_next = self.g_convs[i].backward(dh * (1.0 - h * h))
        return dy + dh_next

    # discriminator -------------------------------------------------------
    def _d_forward(self, feats):
        h, acts = feats * self.scale, []
        for conv in self.d_convs:
            h = np.tanh(conv.forward(h))
            acts.append(h)
        self._d_acts = acts
        return self.d_out.forward(h)[:, 0]

    def _d_backward(self, dlogit):
        dh = self.d_out.backward(dlogit[:, None])
        for i in range(self.d_layers - 1, -1, -1):
            h = self._d_acts[i]
            dh = self.d_convs[i].backward(dh * (1.0 - h * h))
        return dh * self.scale

    def discriminate(self, feats: np.ndarray) -> np.ndarray:
        """Per-frame probability that each frame is natural."""
        return sigmoid(self._d_forward(np.asarray(feats, dtype=np.float64)))

    def _split(self, feats):
        feats = np.asarray(feats, dtype=np.float64)
        if feats.shape[-1] != self.n_mgc + self.n_bap:
            raise ShapeError("GanPostfilter", self.n_mgc + self.n_bap, feats.shape[-1])
        return feats[:, :self.n_mgc], feats[:, self.n_mgc:]

    def apply(self, feats: np.ndarray) -> np.ndarray:
        """Enhance generated MGC+BAP; the BAP columns are returned unchanged."""
        mgc, bap = self._split(feats)
        y = self._g_forward(self.mgc_norm(mgc))
        return np.concatenate([self.mgc_norm.inverse(y), bap], axis=1)

    def train_step(self, real: np.ndarray, fake: np.ndarray, g_opt: Optimizer | None,
                   d_opt: Optimizer | None) -> dict:
        """One discriminator update followed by one generator update.

        d_loss = mean_n 0.5 [BCE(D(real_n), 1) + BCE(D(G(fake)_n), 0)]
        g_loss = mean_n BCE(D(G(fake)_n), 1) + anchor_weight * mean (G(x) - x)^2
        """
        real_mgc, _ = self._split(real)
        fake_mgc, fake_bap = self._split(fake)
        n = len(fake_mgc)
        x = self.mgc_norm(fake_mgc)
        y = self._g_forward(x)
        enhanced = np.concatenate([self.mgc_norm.inverse(y), fake_bap], axis=1)

        self.zero_grad()
        z_real = self._d_forward(np.asarray(real, dtype=np.float64))
        self._d_backward(-0.5 * sigmoid(-z_real) / len(z_real))
        z_fake = self._d_forward(enhanced)
        self._d_backward(0.5 * sigmoid(z_fake) / n)
        d_loss = 0.5 * (np.mean(_softplus(-z_real)) + np.mean(_softplus(z_fake)))
        if d_opt is not None:
            d_opt.step()

        self.zero_grad()
        z = self._d_forward(enhanced)
        adv = float(np.mean(_softplus(-z)))
        d_enh = self._d_backward(-sigmoid(-z) / n)
        diff = y - x
        anchor = self.anchor_weight * float(np.mean(diff * diff))
        dy = d_enh[:, :self.n_mgc] * self.mgc_norm.std + self.anchor_weight * 2.0 * diff / diff.size
        self._g_backward(dy)
        for _, p in self.discriminator_params():
            p.grad[...] = 0.0
        if g_opt is not None:
            g_opt.step()
        return {"g_loss": adv + anchor, "d_loss": float(d_loss)}


def train_gan(pf: GanPostfilter, pairs: list[tuple[np.ndarray, np.ndarray]], steps: int,
              opt_config: OptimizerConfig = OptimizerConfig("adam", 1e-3, momentum=0.5),
              seed: int = 0) -> list[dict]:
    g_opt = Optimizer(pf.generator_params(), opt_config)
    d_opt = Optimizer(pf.discriminator_params(), opt_config)
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(steps):
        real, fake = pairs[int(rng.integers(len(pairs)))]
        history.append(pf.train_step(real, fake, g_opt, d_opt))
    return history


# ---------------------------------------------------------------------------
# quantized F0


class F0Model(Model):
    """Frame classifier over 256 classes (0 = unvoiced, 1..255 = log-F0 levels).

    A feedforward + bidirectional recurrent body encodes the linguistic input;
    the previous level enters as a one-hot vector through an extra tanh layer
    before the softmax, so generation can feed back its own argmax.
    """

    def __init__(self, in_dim: int, n_classes: int = 256, ff: int = 64, bi: int = 32,
                 ar_hidden: int = 64, seed: int = 0, in_norm=None):
        self.in_dim, self.n_classes = in_dim, n_classes
        self.ff, self.bi, self.ar_hidden, self.seed = ff, bi, ar_hidden, seed
        self.in_norm = in_norm or Normalizer.identity(in_dim)
        rng = np.random.default_rng(seed)
        self.body = Sequential([LayerSpec("ff_tanh", (in_dim, ff)),
                                LayerSpec("bi_recurrent", (ff, bi))], rng, "f0.body")
        self.ar = FFTanh(2 * bi + n_classes, ar_hidden, rng, name="f0.ar")
        self.head = SoftmaxHead(ar_hidden, n_classes, rng, name="f0.head")

    def architecture(self):
        return {"in_dim": self.in_dim, "n_classes": self.n_classes, "ff": self.ff, "bi": self.bi,
                "ar_hidden": self.ar_hidden, "seed": self.seed, "in_norm": self.in_norm.to_dict()}

    @classmethod
    def from_architecture(cls, arch):
        arch = dict(arch)
        arch["in_norm"] = Normalizer.from_dict(arch["in_norm"])
        return cls(**arch)

    def layer_specs(self):
        return [s.to_dict() for s in self.body.specs] + [self.ar.spec.to_dict(), self.head.spec.to_dict()]

    def parameters(self):
        return ([(f"body.{k}", p) for k, p in self.body.params()]
                + [(f"ar.{k}", p) for k, p in self.ar.params()]
                + [(f"head.{k}", p) for k, p in self.head.params()])

    def _one_hot(self, levels):
        out = np.zeros((len(levels), self.n_classes))
        out[np.arange(len(levels)), levels] = 1.0
        return out

    def log_probs(self, l: np.ndarray, qf0: np.ndarray) -> np.ndarray:
        """Teacher-forced per-frame log-probabilities (previous true level fed back)."""
        if l.shape[1] != self.in_dim:
            raise ShapeError("f0 input", self.in_dim, l.shape[1])
        prev = np.concatenate([[0], np.asarray(qf0[:-1], dtype=np.int64)])
        z = self.body.forward(self.in_norm(l))
        u = self.ar.forward(np.concatenate([z, self._one_hot(prev)], axis=1))
        return self.head.forward(u)

    def loss(self, l: np.ndarray, qf0: np.ndarray, backward: bool = False) -> float:
        qf0 = np.asarray(qf0, dtype=np.int64)
        if len(qf0) != len(l):
            raise ValueError("linguistic and F0 frame counts differ")
        logp = self.log_probs(l, qf0)
        loss, g = cross_entropy(logp, qf0)
        if backward:
            du = self.head.backward(g)
            dzp = self.ar.backward(du)
            self.body.backward(dzp[:, :2 * self.bi])
        return loss

    def accuracy(self, l, qf0) -> float:
        return float(np.mean(self.log_probs(l, qf0).argmax(axis=1) == np.asarray(qf0)))

    def generate(self, l: np.ndarray) -> np.ndarray:
        z = self.body.forward(self.in_norm(l))
        out = np.zeros(len(l), dtype=np.int64)
        prev = 0
        onehot = np.zeros((1, self.n_classes))
        for n in range(len(l)):
            onehot[...] = 0.0
            onehot[0, prev] = 1.0
            u = self.ar.forward(np.concatenate([z[n:n + 1], onehot], axis=1))
            prev = int(np.argmax(self.head.forward(u)[0]))
            out[n] = prev
        return out


def train_f0(model: F0Model, data: list[tuple[np.ndarray, np.ndarray]], steps: int,
             opt_config: OptimizerConfig = OptimizerConfig("adam", 3e-3), seed: int = 0):
    opt = Optimizer(model.parameters(), opt_config)
    return train_model(model, lambda item: model.loss(item[0], item[1], backward=True), data,
                       steps, opt, seed)

"""Conditional Wavenet over mu-law levels.

Input at sample t is the one-hot of the previous level o_{t-1} through a linear
projection; a stack of gated 2x1 dilated causal blocks (dilation 2^(k mod cycle))
is conditioned on per-sample MGC plus an embedding of the quantized F0; the
summed skip outputs go through relu -> 1x1 -> relu -> 1x1 -> softmax.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .acoustic import Normalizer
from .dsp import QuantizedWave
from .features import AcousticFrameSequence
from .nn import DilatedCausalBlock, Linear, Model, Optimizer, OptimizerConfig, Param, ShapeError
from .nn.layers import log_softmax, uniform_init


@dataclass(frozen=True)
class WavenetConfig:
    blocks: int = 20
    cycle: int = 10
    channels: int = 64
    skip_channels: int = 64
    post_channels: int = 64
    n_levels: int = 256
    mgc_dim: int = 60
    f0_levels: int = 256
    f0_embed: int = 64
    seed: int = 0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if k != "seed" and v <= 0:
                raise ValueError(f"WavenetConfig.{k} must be positive, got {v}")

    @classmethod
    def full(cls, **kw) -> "WavenetConfig":
        """Full-size stack: 40 blocks in cycles of 10, 10-bit output, 64 channels."""
        return cls(**{"blocks": 40, "cycle": 10, "n_levels": 1024, **kw})

    @classmethod
    def tiny(cls, **kw) -> "WavenetConfig":
        return cls(**{"blocks": 8, "cycle": 8, "channels": 16, "skip_channels": 32,
                      "post_channels": 32, "f0_embed": 8, **kw})

    @property
    def dilations(self) -> list[int]:
        return [2 ** (k % self.cycle) for k in range(self.blocks)]

    @property
    def cond_dim(self) -> int:
        return self.mgc_dim + self.f0_embed


def receptive_field(cfg: WavenetConfig) -> int:
    """Number of past samples o_{t-R..t-1} that can influence the distribution of o_t."""
    return 1 + sum(cfg.dilations)


@dataclass
class ConditioningTrack:
    mgc: np.ndarray  # T x M
    qf0: np.ndarray  # T, 0 = unvoiced
    voiced: np.ndarray  # T bool

    def __len__(self):
        return len(self.qf0)

    def __post_init__(self):
        if not (len(self.mgc) == len(self.qf0) == len(self.voiced)):
            raise ValueError("conditioning streams differ in length")


def upsample_conditioning(feats: AcousticFrameSequence, sample_rate: int) -> ConditioningTrack:
    """Repeat each frame sample_rate / frame_rate times."""
    if feats.qf0 is None:
        raise ValueError("conditioning needs quantized F0")
    ratio = sample_rate / feats.f0.frame_rate
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError(f"sample rate {sample_rate} is not an integer multiple of frame rate "
                         f"{feats.f0.frame_rate}")
    r = int(round(ratio))
    qf0 = np.repeat(np.asarray(feats.qf0, dtype=np.int64), r)
    return ConditioningTrack(np.repeat(feats.mgc.frames, r, axis=0), qf0, qf0 != 0)


class Wavenet(Model):
    def __init__(self, cfg: WavenetConfig = WavenetConfig(), mgc_norm: Normalizer | None = None):
        self.cfg = cfg
        self.mgc_norm = mgc_norm or Normalizer.identity(cfg.mgc_dim)
        rng = np.random.default_rng(cfg.seed)
        c = cfg.channels
        self.w_in = Param(uniform_init(rng, cfg.n_levels, (cfg.n_levels, c)))
        self.b_in = Param(np.zeros(c))
        self.f0_emb = Param(rng.uniform(-1.0, 1.0, (cfg.f0_levels, cfg.f0_embed)))
        self.blocks = [DilatedCausalBlock(c, cfg.skip_channels, cfg.cond_dim, d, rng, name=f"block{k}")
                       for k, d in enumerate(cfg.dilations)]
        self.post1 = Linear(cfg.skip_channels, cfg.post_channels, rng, name="post1")
        self.post2 = Linear(cfg.post_channels, cfg.n_levels, rng, name="post2")
        # zero output layer: the untrained model predicts the uniform distribution
        self.post2.W.value[...] = 0.0

    @property
    def start_level(self) -> int:
        return self.cfg.n_levels // 2

    def architecture(self):
        return {"config": asdict(self.cfg), "mgc_norm": self.mgc_norm.to_dict()}

    @classmethod
    def from_architecture(cls, arch):
        return cls(WavenetConfig(**arch["config"]), Normalizer.from_dict(arch["mgc_norm"]))

    def layer_specs(self):
        return [b.spec.to_dict() for b in self.blocks] + [self.post1.spec.to_dict(),
                                                          self.post2.spec.to_dict()]

    def parameters(self):
        params = [("input.W", self.w_in), ("input.b", self.b_in), ("f0_emb", self.f0_emb)]
        for blk in self.blocks:
            params += [(f"{blk.name}.{k}", p) for k, p in blk.params()]
        params += [(f"post1.{k}", p) for k, p in self.post1.params()]
        params += [(f"post2.{k}", p) for k, p in self.post2.params()]
        return params

    # ------------------------------------------------------------------
    def _cond(self, cond: ConditioningTrack) -> np.ndarray:
        if cond.mgc.shape[1] != self.cfg.mgc_dim:
            raise ShapeError("wavenet conditioning", self.cfg.mgc_dim, cond.mgc.shape[1])
        return np.concatenate([self.mgc_norm(cond.mgc), self.f0_emb.value[cond.qf0]], axis=1)

    def shifted_input(self, levels: np.ndarray) -> np.ndarray:
        return np.concatenate([[self.start_level], np.asarray(levels, dtype=np.int64)[:-1]])

    def forward(self, levels: np.ndarray, cond: ConditioningTrack) -> np.ndarray:
        """Teacher-forced log-probabilities: row t is log P(o_t | o_{<t}, a_t)."""
        levels = np.asarray(levels, dtype=np.int64)
        if len(levels) != len(cond):
            raise ValueError(f"waveform ({len(levels)}) and conditioning ({len(cond)}) lengths differ")
        prev = self.shifted_input(levels)
        cvec = self._cond(cond)
        x = self.w_in.value[prev] + self.b_in.value
        skip = 0.0
        for blk in self.blocks:
            x, s = blk.forward(x, cvec)
            skip = skip + s
        h1 = np.maximum(skip, 0.0)
        h2 = np.maximum(self.post1.forward(h1), 0.0)
        logp = log_softmax(self.post2.forward(h2))
        self._cache = (prev, cond.qf0, skip, h2, logp)
        return logp

    def backward(self, dlogits: np.ndarray):
        """Backpropagate a gradient w.r.t. the pre-softmax logits."""
        prev, qf0, skip, h2, _ = self._cache
        dh2 = self.post2.backward(dlogits) * (h2 > 0)
        dskip = self.post1.backward(dh2) * (skip > 0)
        dx = np.zeros((len(prev), self.cfg.channels))
        dcond = 0.0
        for blk in reversed(self.blocks):
            dx, dc = blk.backward(dx, dskip)
            dcond = dcond + dc
        np.add.at(self.w_in.grad, prev, dx)
        self.b_in.grad += dx.sum(axis=0)
        np.add.at(self.f0_emb.grad, qf0, dcond[:, self.cfg.mgc_dim:])

    def nll(self, q, cond: ConditioningTrack, backward: bool = False) -> float:
        """Mean teacher-forced cross-entropy in nats per sample."""
        levels = q.levels if isinstance(q, QuantizedWave) else np.asarray(q)
        logp = self.forward(levels, cond)
        t = np.arange(len(levels))
        loss = float(-logp[t, levels].mean())
        if backward:
            d = np.exp(logp)
            d[t, levels] -= 1.0
            self.backward(d / len(levels))
        return loss

    def accuracy(self, q, cond: ConditioningTrack) -> float:
        levels = q.levels if isinstance(q, QuantizedWave) else np.asarray(q)
        return float(np.mean(self.forward(levels, cond).argmax(axis=1) == levels))

    # ------------------------------------------------------------------
    def generate(self, cond: ConditioningTrack, voiced_mode: str = "greedy",
                 seed: int = 0) -> QuantizedWave:
        """Sample-by-sample generation with per-block ring buffers.

        Voiced samples take the argmax (lowest index on ties) when
        ``voiced_mode == "greedy"``; unvoiced samples are always drawn at random.
        """
        if voiced_mode not in ("greedy", "random"):
            raise ValueError(f"unknown voiced mode {voiced_mode!r}")
        rng = np.random.default_rng(seed)
        cvec = self._cond(cond)
        c = self.cfg.channels
        bufs = [np.zeros((b.dilation, c)) for b in self.blocks]
        w = [(b.Wc.value, b.Wp.value, b.V.value, b.b.value, b.Wr.value, b.br.value,
              b.Ws.value, b.bs.value) for b in self.blocks]
        p1w, p1b = self.post1.W.value, self.post1.b.value
        p2w, p2b = self.post2.W.value, self.post2.b.value
        out = np.empty(len(cond), dtype=np.int64)
        prev = self.start_level
        greedy = voiced_mode == "greedy"
        for t in range(len(cond)):
            x = self.w_in.value[prev] + self.b_in.value
            skip = 0.0
            for k, (wc, wp, v, b, wr, br, ws, bs) in enumerate(w):
                buf = bufs[k]
                slot = t % len(buf)
                past = buf[slot].copy()
                buf[slot] = x
                z = x @ wc + past @ wp + cvec[t] @ v + b
                u = np.tanh(z[:c]) * (0.5 * (1.0 + np.tanh(0.5 * z[c:])))
                skip = skip + (u @ ws + bs)
                x = x + u @ wr + br
            h = np.maximum(np.maximum(skip, 0.0) @ p1w + p1b, 0.0)
            logits = h @ p2w + p2b
            if greedy and cond.voiced[t]:
                prev = int(np.argmax(logits))
            else:
                p = np.exp(logits - logits.max())
                cdf = np.cumsum(p)
                prev = int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"),
                               len(cdf) - 1))
            out[t] = prev
        return QuantizedWave(out, self.cfg.n_levels, float(self.cfg.n_levels - 1))


def train_wavenet(model: Wavenet, data: list[tuple[np.ndarray, ConditioningTrack]], steps: int,
                  crop: int = 2000, opt_config: OptimizerConfig = OptimizerConfig("adam", 3e-3),
                  seed: int = 0) -> list[float]:
    """Teacher-forced training on random crops of (levels, conditioning) pairs.

    A crop starts with zero history, the same as the start of an utterance.
    """
    rng = np.random.default_rng(seed)
    opt = Optimizer(model.parameters(), opt_config)
    losses = []
    for _ in range(steps):
        levels, cond = data[int(rng.integers(len(data)))]
        n = len(levels)
        if n > crop:
            s = int(rng.integers(0, n - crop + 1))
            levels = levels[s:s + crop]
            cond = ConditioningTrack(cond.mgc[s:s + crop], cond.qf0[s:s + crop], cond.voiced[s:s + crop])
        model.zero_grad()
        losses.append(model.nll(levels, cond, backward=True))
        opt.step()
    return losses


def uniform_nll(n_levels: int) -> float:
    return math.log(n_levels)

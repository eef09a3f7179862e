"""Multi-stream fully connected classifier, written directly on numpy.

Each stream is ``fc1 -> activation -> dropout -> fc2 -> softmax``. With more
than one stream the stream probabilities are concatenated and mapped to the
class scores by a fusion dense layer with its own softmax. An optional
temporal transformer shifts the RC block before it enters its stream.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import ttm as ttm_mod
from .features import FEATURE_NAMES, PS_FEATURES
from .signature import sig_dimension

EPS = 1e-12

HIDDEN_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z: (z > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
}


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(p: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    return p * (grad_p - (grad_p * p).sum(axis=-1, keepdims=True))


def cross_entropy(probs, labels) -> np.ndarray:
    """Per-sample ``-log p[label]`` with probabilities floored at 1e-12.

    Labels are 0-based class indices.
    """
    probs = np.atleast_2d(probs)
    labels = np.atleast_1d(np.asarray(labels))
    if labels.min() < 0 or labels.max() >= probs.shape[1]:
        raise ValueError(f"labels must lie in [0, {probs.shape[1] - 1}]")
    return -np.log(np.maximum(probs[np.arange(len(labels)), labels], EPS))


def glorot(rng: np.random.Generator, n_in: int, n_out: int) -> np.ndarray:
    bound = math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out))


def stream_layout(arch: str, features) -> list[tuple[str, ...]]:
    """Which feature families feed which stream for a given architecture."""
    features = tuple(features)
    ps = tuple(f for f in features if f in PS_FEATURES)
    if arch == "1s":
        return [features]
    if arch == "2s":
        if "rc" not in features or not ps:
            raise ValueError("2s_net needs RC and at least one signature feature")
        return [("rc",), ps]
    if arch == "3s":
        if set(features) != set(FEATURE_NAMES):
            raise ValueError("3s_net needs all four feature families")
        return [("rc",), ("s_ps",), ("t_ps", "t_s_ps")]
    raise ValueError(f"unknown architecture {arch!r}; expected 1s, 2s or 3s")


@dataclass
class ForwardCache:
    blocks: dict
    ttm: ttm_mod.TTMCache | None
    stream_inputs: list
    pre: list
    hidden: list
    masks: list
    stream_probs: list
    probs: np.ndarray
    deltas: np.ndarray | None


@dataclass
class MultiStreamNet:
    """Parameters and wiring of a 1s/2s/3s network.

    ``block_dims`` maps each feature family in use to its width; ``streams``
    lists the families concatenated into each stream, in order.
    """

    streams: list[tuple[str, ...]]
    block_dims: dict[str, int]
    n_classes: int
    hidden: int = 64
    dropout: float = 0.5
    activation: str = "relu"
    ttm: bool = False
    n_frames: int | None = None
    params: dict[str, np.ndarray] = field(default_factory=dict)
    ln_activation: str = "tanh"
    ln_hidden: int = 64

    @classmethod
    def build(cls, arch: str, block_dims: dict[str, int], n_classes: int, *, hidden: int = 64,
              dropout: float = 0.5, activation: str = "relu", ttm: bool = False, n_frames: int | None = None,
              seed: int | np.random.Generator = 0, ln_hidden: int = 64) -> "MultiStreamNet":
        streams = stream_layout(arch, block_dims)
        net = cls(streams=streams, block_dims=dict(block_dims), n_classes=n_classes, hidden=hidden,
                  dropout=dropout, activation=activation, ttm=ttm, n_frames=n_frames, ln_hidden=ln_hidden)
        net.init_params(np.random.default_rng(seed))
        return net

    def __post_init__(self):
        self.streams = [tuple(s) for s in self.streams]
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.ttm:
            if "rc" not in self.block_dims or not self.n_frames:
                raise ValueError("the temporal transformer needs an RC block and a frame count")
            if self.block_dims["rc"] % self.n_frames:
                raise ValueError("RC width is not a multiple of the frame count")

    @property
    def arch(self) -> str:
        return f"{len(self.streams)}s"

    def stream_dim(self, s: int) -> int:
        return sum(self.block_dims[name] for name in self.streams[s])

    def layer_shapes(self) -> list[tuple[str, int, int]]:
        """``(name, fan_in, fan_out)`` of every dense layer in declaration order."""
        shapes = []
        if self.ttm:
            shapes += [("ttm.fc1", self.block_dims["rc"], self.ln_hidden), ("ttm.fc2", self.ln_hidden, 1)]
        for s in range(len(self.streams)):
            shapes += [(f"s{s}.fc1", self.stream_dim(s), self.hidden), (f"s{s}.fc2", self.hidden, self.n_classes)]
        if len(self.streams) > 1:
            shapes.append(("fusion", len(self.streams) * self.n_classes, self.n_classes))
        return shapes

    def init_params(self, rng: np.random.Generator) -> None:
        p = {}
        if self.ttm:
            ln = ttm_mod.LocalizationNet.init(self.block_dims["rc"], rng, self.ln_hidden, self.ln_activation)
            p.update({f"ttm.{k}": v for k, v in ln.params().items()})
        for s in range(len(self.streams)):
            p[f"s{s}.W1"] = glorot(rng, self.stream_dim(s), self.hidden)
            p[f"s{s}.b1"] = np.zeros(self.hidden)
            p[f"s{s}.W2"] = glorot(rng, self.hidden, self.n_classes)
            p[f"s{s}.b2"] = np.zeros(self.n_classes)
        if len(self.streams) > 1:
            k = len(self.streams) * self.n_classes
            p["fusion.W"] = glorot(rng, k, self.n_classes)
            p["fusion.b"] = np.zeros(self.n_classes)
        self.params = p

    def localization_net(self) -> ttm_mod.LocalizationNet:
        p = self.params
        return ttm_mod.LocalizationNet(p["ttm.W1"], p["ttm.b1"], p["ttm.w2"], p["ttm.b2"], self.ln_activation)

    # -- forward / backward ------------------------------------------------

    def _check_blocks(self, blocks: dict) -> int:
        n = None
        for name, dim in self.block_dims.items():
            if name not in blocks:
                raise ValueError(f"missing feature block {name!r}")
            arr = blocks[name]
            if arr.ndim != 2 or arr.shape[1] != dim:
                raise ValueError(f"block {name!r} has shape {arr.shape}, expected (n, {dim})")
            if n is not None and arr.shape[0] != n:
                raise ValueError("feature blocks disagree on the number of samples")
            n = arr.shape[0]
        return n

    def deltas(self, rc: np.ndarray) -> np.ndarray:
        if not self.ttm:
            return np.zeros(rc.shape[0])
        return ttm_mod.ln_forward(rc, self.localization_net())

    def forward(self, blocks: dict, train: bool = False, rng: np.random.Generator | None = None,
                masks: list | None = None):
        """Class probabilities and a cache for ``backward``.

        In train mode dropout masks are drawn from ``rng`` (inverted scaling)
        unless explicit ``masks`` are given.
        """
        self._check_blocks(blocks)
        blocks = dict(blocks)
        act, _ = HIDDEN_ACTIVATIONS[self.activation]
        ttm_cache, deltas = None, None
        if self.ttm:
            blocks["rc"], deltas, ttm_cache = ttm_mod.ttm_forward(blocks["rc"], self.localization_net(), self.n_frames)
        p = self.params
        cache = ForwardCache(blocks, ttm_cache, [], [], [], [], [], None, deltas)
        for s, names in enumerate(self.streams):
            x = np.concatenate([blocks[name] for name in names], axis=1) if len(names) > 1 else blocks[names[0]]
            z1 = x @ p[f"s{s}.W1"] + p[f"s{s}.b1"]
            h = act(z1)
            mask = None
            if train and self.dropout > 0:
                if masks is not None:
                    mask = masks[s]
                else:
                    keep = 1.0 - self.dropout
                    mask = (rng.random(h.shape) < keep) / keep
                h = h * mask
            probs = softmax(h @ p[f"s{s}.W2"] + p[f"s{s}.b2"])
            cache.stream_inputs.append(x)
            cache.pre.append(z1)
            cache.hidden.append(h)
            cache.masks.append(mask)
            cache.stream_probs.append(probs)
        if len(self.streams) > 1:
            fused_in = np.concatenate(cache.stream_probs, axis=1)
            cache.probs = softmax(fused_in @ p["fusion.W"] + p["fusion.b"])
        else:
            cache.probs = cache.stream_probs[0]
        return cache.probs, cache

    def predict_proba(self, blocks: dict) -> np.ndarray:
        return self.forward(blocks, train=False)[0]

    def backward(self, cache: ForwardCache, labels) -> dict[str, np.ndarray]:
        """Gradients of the summed cross-entropy over the cached batch."""
        if cache is None or cache.probs is None:
            raise RuntimeError("backward needs the cache of a forward pass")
        labels = np.asarray(labels)
        n = cache.probs.shape[0]
        if labels.shape != (n,):
            raise RuntimeError(f"{labels.shape[0] if labels.ndim else 1} labels for a cached batch of {n}")
        p = self.params
        _, dact = HIDDEN_ACTIVATIONS[self.activation]
        grads = {}
        onehot = np.zeros_like(cache.probs)
        onehot[np.arange(n), labels] = 1.0
        picked = cache.probs[np.arange(n), labels]
        # the 1e-12 floor makes the loss flat below it
        live = (picked > EPS)[:, None]
        grad_logits = np.where(live, cache.probs - onehot, 0.0)
        if len(self.streams) > 1:
            fused_in = np.concatenate(cache.stream_probs, axis=1)
            grads["fusion.W"] = fused_in.T @ grad_logits
            grads["fusion.b"] = grad_logits.sum(axis=0)
            grad_fused_in = grad_logits @ p["fusion.W"].T
            C = self.n_classes
            stream_grad_logits = [
                softmax_backward(cache.stream_probs[s], grad_fused_in[:, s * C:(s + 1) * C])
                for s in range(len(self.streams))
            ]
        else:
            stream_grad_logits = [grad_logits]
        grad_blocks = {}
        for s, names in enumerate(self.streams):
            g2 = stream_grad_logits[s]
            grads[f"s{s}.W2"] = cache.hidden[s].T @ g2
            grads[f"s{s}.b2"] = g2.sum(axis=0)
            gh = g2 @ p[f"s{s}.W2"].T
            if cache.masks[s] is not None:
                gh = gh * cache.masks[s]
            gz = gh * dact(cache.pre[s])
            grads[f"s{s}.W1"] = cache.stream_inputs[s].T @ gz
            grads[f"s{s}.b1"] = gz.sum(axis=0)
            if self.ttm and "rc" in names:
                gx = gz @ p[f"s{s}.W1"].T
                start = 0
                for name in names:
                    width = self.block_dims[name]
                    if name == "rc":
                        grad_blocks["rc"] = gx[:, start:start + width]
                    start += width
        if self.ttm:
            _, ln_grads = ttm_mod.ttm_backward(grad_blocks["rc"], cache.ttm, self.localization_net())
            grads.update({f"ttm.{k}": v for k, v in ln_grads.items()})
        return {name: grads[name] for name in self.params}

    def loss(self, blocks: dict, labels) -> float:
        """Summed cross-entropy in eval mode (used by gradient checks)."""
        probs, _ = self.forward(blocks, train=False)
        return float(cross_entropy(probs, labels).sum())


# -- optimisation ------------------------------------------------------------


@dataclass
class TrainConfig:
    batch_size: int = 56
    dropout: float = 0.5
    momentum: float = 0.7
    alpha0: float = 0.01
    lr_decay: float = 0.001
    epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch size and epochs must be positive")
        if not 0 <= self.momentum < 1 or self.alpha0 <= 0 or self.lr_decay < 0:
            raise ValueError("invalid optimiser settings")


def lr_at(n: int, cfg: TrainConfig = TrainConfig()) -> float:
    """Learning rate after ``n`` mini-batches: ``alpha0 * exp(-lr_decay * n)``."""
    if n < 0:
        raise ValueError("mini-batch count must be non-negative")
    return cfg.alpha0 * math.exp(-cfg.lr_decay * n)


def sgd_momentum_step(params: dict, grads: dict, velocity: dict, lr: float, momentum: float = 0.7) -> None:
    """Classical momentum, in place: ``v = mu * v - lr * g``; ``theta += v``."""
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter has {theta.shape}")
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(theta)
        v *= momentum
        v -= lr * g
        theta += v


# -- accounting and export ---------------------------------------------------


def count_multadds(net: MultiStreamNet) -> dict[str, int]:
    """One multiply-add per weight per forward pass, per dense layer.

    The returned dict maps layer names to counts plus a ``"total"`` entry.
    """
    counts = {}
    for name, n_in, n_out in net.layer_shapes():
        counts[name] = n_in * n_out
    counts["total"] = sum(counts.values())
    return counts


def _segment_cost(d: int, m: int) -> int:
    # level k from level k-1: d**k products, then d**k scalings
    return sum(2 * d**k for k in range(2, m + 1))


def _append_cost(d: int, m: int) -> int:
    # Horner update of level n costs d**2 + ... + d**n products
    return sum((m - j + 1) * d**j for j in range(2, m + 1))


def ps_multadds(cfg, n_frames: int, depths, dyadic, features=PS_FEATURES) -> dict[str, int]:
    """Multiply-adds spent on segment signatures and Chen steps per sequence.

    Counts follow the extractors: S_PS evaluates one segment per pair and
    frame; the temporal features fold every finest dyadic subpath segment
    by segment and then merge halves upward.
    """
    d, nj, P = cfg.d, cfg.n_joints, cfg.n_pairs
    out = {}
    if "s_ps" in features:
        out["s_ps"] = P * n_frames * _segment_cost(d, depths.m_s)
    if "t_ps" in features:
        out["t_ps"] = nj * _temporal_cost(d + 1, depths.m_t, n_frames - 1, dyadic.l_t)
    if "t_s_ps" in features:
        series = P * sig_dimension(d, 2)
        source = P * n_frames * _segment_cost(d, 2)
        out["t_s_ps"] = source + series * _temporal_cost(2, depths.m_t_s, 2 * (n_frames - 1), dyadic.l_t_s)
    out["total"] = sum(out.values())
    return out


def _temporal_cost(d: int, m: int, n_segments: int, level: int) -> int:
    finest = 2**level
    first_segments = finest  # one per finest subpath, built directly
    appended = n_segments - first_segments
    merges = finest - 1
    full_combine = sum((n - 1) * d**n for n in range(2, m + 1))
    return first_segments * _segment_cost(d, m) + appended * _append_cost(d, m) + merges * full_combine


def dump_first_layer(net: MultiStreamNet, stream: int) -> str:
    """First dense layer of a stream as CSV text, one row per hidden unit."""
    if not 0 <= stream < len(net.streams):
        raise ValueError(f"stream {stream} does not exist; the net has {len(net.streams)}")
    W = net.params[f"s{stream}.W1"].T
    buf = io.StringIO()
    for row in W:
        buf.write(",".join(repr(float(v)) for v in row))
        buf.write("\n")
    return buf.getvalue()


def parse_weight_csv(text: str) -> np.ndarray:
    return np.array([[float(v) for v in line.split(",")] for line in text.strip().splitlines()])


# -- gradient checking -------------------------------------------------------


def gradient_check(net: MultiStreamNet, blocks: dict, labels, h: float = 1e-5) -> dict[str, float]:
    """Norm-relative error between analytic and central-difference gradients.

    Evaluated in eval mode on the summed loss, one entry per parameter array.
    Parameters are perturbed in place and restored.
    """
    labels = np.asarray(labels)
    _, cache = net.forward(blocks)
    analytic = net.backward(cache, labels)
    errors = {}
    for name, theta in net.params.items():
        flat = theta.reshape(-1)
        numeric = np.empty_like(flat)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = net.loss(blocks, labels)
            flat[i] = old - h
            down = net.loss(blocks, labels)
            flat[i] = old
            numeric[i] = (up - down) / (2 * h)
        a = analytic[name].reshape(-1)
        scale = max(np.linalg.norm(a), np.linalg.norm(numeric))
        errors[name] = float(np.linalg.norm(a - numeric) / scale) if scale > 0 else 0.0
    return errors


def toy_gradcheck_net(arch: str = "3s", ttm: bool = True, seed: int = 0, activation: str = "tanh",
                      n_samples: int = 3, n_classes: int = 2):
    """Small net, batch and labels with every parameter group carrying signal.

    The temporal transformer's final layer is moved off zero and the batch is
    redrawn until no sample's shift sits within 1e-3 of an integer, where the
    interpolation is not differentiable.
    """
    rng = np.random.default_rng(seed)
    dims = {"rc": 12, "s_ps": 5, "t_ps": 4, "t_s_ps": 3}
    if arch == "1s":
        dims = {"rc": 12, "s_ps": 5}
    net = MultiStreamNet.build(arch, dims, n_classes, hidden=4, dropout=0.0, activation=activation, ttm=ttm,
                               n_frames=4, ln_hidden=3, seed=rng)
    for value in net.params.values():
        value += rng.normal(scale=0.5, size=value.shape)
    labels = np.arange(n_samples) % n_classes
    while True:
        blocks = {k: rng.normal(size=(n_samples, v)) for k, v in dims.items()}
        deltas = net.deltas(blocks["rc"])
        if not ttm or np.all(np.abs(deltas - np.round(deltas)) > 1e-3):
            return net, blocks, labels

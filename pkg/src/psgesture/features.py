"""AOH joint selection and the four signature feature families.

All extractors work on a batch of normalized, resampled skeletons of shape
``(n, F, J, d)`` and return ``(n, dim)`` matrices. Layouts:

* RC: frame-major, then joint, then coordinate.
* S_PS: frame-major, then pair, then signature coefficient.
* T_PS: joint-major, then dyadic subpath, then coefficient.
* T_S_PS: S_PS dimension-major, then dyadic subpath, then coefficient.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .signature import MAX_DEPTH, flatten_levels, segment_levels, sig_dimension
from .transforms import dyadic_signatures, lead_lag, n_dyadic

FEATURE_NAMES = ("rc", "s_ps", "t_ps", "t_s_ps")
PS_FEATURES = ("s_ps", "t_ps", "t_s_ps")

# 10-joint upper body used by the synthetic generator
DEFAULT_LAYOUT = {
    "head": 0,
    "neck": 1,
    "shoulder_l": 2,
    "elbow_l": 3,
    "wrist_l": 4,
    "hand_l": 5,
    "shoulder_r": 6,
    "elbow_r": 7,
    "wrist_r": 8,
    "hand_r": 9,
}


def _default_single():
    L = DEFAULT_LAYOUT
    return [L[n] for n in ("elbow_l", "wrist_l", "hand_l", "elbow_r", "wrist_r", "hand_r")]


def _default_within():
    L = DEFAULT_LAYOUT
    pairs = []
    for side in "lr":
        e, w, h = L[f"elbow_{side}"], L[f"wrist_{side}"], L[f"hand_{side}"]
        pairs += [(e, w), (w, h), (e, h)]
    return pairs


def _default_cross():
    L = DEFAULT_LAYOUT
    return [(L[f"{j}_l"], L[f"{j}_r"]) for j in ("elbow", "wrist", "hand")]


def _default_hand_body():
    L = DEFAULT_LAYOUT
    return [(L[b], L[f"hand_{s}"]) for s in "lr" for b in ("head", "neck")]


@dataclass
class AohConfig:
    """Joints and joint pairs selected by the attention-on-hand principle.

    Pairs are ``(start, end)`` joint indices; the S_PS segment runs from
    start to end.
    """

    single_joints: list[int] = field(default_factory=_default_single)
    pairs_within_hand: list[tuple[int, int]] = field(default_factory=_default_within)
    pairs_cross_hands: list[tuple[int, int]] = field(default_factory=_default_cross)
    pairs_hand_body: list[tuple[int, int]] = field(default_factory=_default_hand_body)
    d: int = 3

    def __post_init__(self):
        self.single_joints = [int(j) for j in self.single_joints]
        for name in ("pairs_within_hand", "pairs_cross_hands", "pairs_hand_body"):
            setattr(self, name, [(int(a), int(b)) for a, b in getattr(self, name)])
        if not self.single_joints:
            raise ValueError("at least one single joint is required")
        if len(set(self.single_joints)) != len(self.single_joints):
            raise ValueError("single joints repeat")
        pairs = self.pairs
        if len(set(pairs)) != len(pairs):
            raise ValueError("joint pairs repeat")
        for a, b in pairs:
            if a == b:
                raise ValueError(f"pair ({a}, {b}) joins a joint to itself")
        if self.d < 1:
            raise ValueError("coordinate dimension must be positive")

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return self.pairs_within_hand + self.pairs_cross_hands + self.pairs_hand_body

    @property
    def n_joints(self) -> int:
        return len(self.single_joints)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    def max_index(self) -> int:
        return max(self.single_joints + [j for p in self.pairs for j in p])

    def validate_for(self, n_joints: int) -> None:
        if min(self.single_joints + [j for p in self.pairs for j in p]) < 0 or self.max_index() >= n_joints:
            raise ValueError(f"AOH config references joint {self.max_index()} but the skeleton has {n_joints} joints")

    def to_dict(self) -> dict:
        return {k: [list(p) if isinstance(p, tuple) else p for p in v] if isinstance(v, list) else v
                for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "AohConfig":
        return cls(**data)


@dataclass(frozen=True)
class SigDepthConfig:
    m_s: int = 2
    m_t: int = 4
    m_t_s: int = 3

    def __post_init__(self):
        for name in ("m_s", "m_t", "m_t_s"):
            value = getattr(self, name)
            if not 1 <= value <= MAX_DEPTH:
                raise ValueError(f"{name} must lie in [1, {MAX_DEPTH}], got {value}")


@dataclass(frozen=True)
class DyadicConfig:
    l_t: int = 3
    l_t_s: int = 2


def feature_dims(cfg: AohConfig, n_frames: int, depths: SigDepthConfig = SigDepthConfig(),
                 dyadic: DyadicConfig = DyadicConfig()) -> dict[str, int]:
    d, nj, p = cfg.d, cfg.n_joints, cfg.n_pairs
    return {
        "rc": d * nj * n_frames,
        "s_ps": p * sig_dimension(d, depths.m_s) * n_frames,
        "t_ps": nj * n_dyadic(dyadic.l_t) * sig_dimension(d + 1, depths.m_t),
        "t_s_ps": p * sig_dimension(d, 2) * n_dyadic(dyadic.l_t_s) * sig_dimension(2, depths.m_t_s),
    }


def feature_config_hash(cfg: AohConfig, n_frames: int, depths: SigDepthConfig, dyadic: DyadicConfig) -> str:
    payload = {"aoh": cfg.to_dict(), "n_frames": n_frames, "depths": asdict(depths), "dyadic": asdict(dyadic)}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _check_batch(X, cfg: AohConfig) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4:
        raise ValueError(f"expected skeletons shaped (n, frames, joints, dims), got {X.shape}")
    if X.shape[1] < 2:
        raise ValueError(f"need at least 2 frames, got {X.shape[1]}")
    if X.shape[3] != cfg.d:
        raise ValueError(f"config expects d={cfg.d}, skeletons have d={X.shape[3]}")
    if not np.all(np.isfinite(X)):
        raise ValueError("skeletons contain non-finite coordinates")
    cfg.validate_for(X.shape[2])
    return X


def build_rc(X, cfg: AohConfig) -> np.ndarray:
    X = _check_batch(X, cfg)
    return X[:, :, cfg.single_joints, :].reshape(X.shape[0], -1)


def _pair_signatures(X: np.ndarray, cfg: AohConfig, m: int) -> np.ndarray:
    starts = [a for a, _ in cfg.pairs]
    ends = [b for _, b in cfg.pairs]
    inc = X[:, :, ends, :] - X[:, :, starts, :]
    return flatten_levels(segment_levels(inc, m))  # (n, F, P, M)


def s_ps_features(X, cfg: AohConfig, m_s: int = 2) -> np.ndarray:
    X = _check_batch(X, cfg)
    return _pair_signatures(X, cfg, m_s).reshape(X.shape[0], -1)


def t_ps_features(X, cfg: AohConfig, m_t: int = 4, l_d: int = 3) -> np.ndarray:
    X = _check_batch(X, cfg)
    n, F = X.shape[:2]
    traj = np.moveaxis(X[:, :, cfg.single_joints, :], 1, 2)  # (n, N_J, F, d)
    t = np.broadcast_to(np.linspace(0.0, 1.0, F)[:, None], traj.shape[:-1] + (1,))
    paths = np.concatenate([traj, t], axis=-1)
    return dyadic_signatures(paths, l_d, m_t).reshape(n, -1)


def t_s_ps_features(X, cfg: AohConfig, m_t_s: int = 3, l_d: int = 2) -> np.ndarray:
    """Lead-lag signatures of every depth-2 S_PS coordinate over time."""
    X = _check_batch(X, cfg)
    n, F = X.shape[:2]
    series = _pair_signatures(X, cfg, 2).reshape(n, F, -1)
    series = np.moveaxis(series, 1, 2)  # (n, D_S2, F)
    paths = lead_lag(series)
    return dyadic_signatures(paths, l_d, m_t_s, stride=2).reshape(n, -1)


@dataclass
class FeatureBundle:
    rc: np.ndarray
    s_ps: np.ndarray
    t_ps: np.ndarray
    t_s_ps: np.ndarray
    dims: dict[str, int]

    def __post_init__(self):
        for name in FEATURE_NAMES:
            vec = getattr(self, name)
            if vec.shape != (self.dims[name],):
                raise ValueError(f"{name} has shape {vec.shape}, expected ({self.dims[name]},)")
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} contains non-finite values")


def extract_blocks(X, cfg: AohConfig, depths: SigDepthConfig = SigDepthConfig(),
                   dyadic: DyadicConfig = DyadicConfig(), features=FEATURE_NAMES) -> dict[str, np.ndarray]:
    """Compute the requested feature families for a batch of skeletons."""
    X = _check_batch(X, cfg)
    out = {}
    for name in features:
        if name == "rc":
            out[name] = build_rc(X, cfg)
        elif name == "s_ps":
            out[name] = s_ps_features(X, cfg, depths.m_s)
        elif name == "t_ps":
            out[name] = t_ps_features(X, cfg, depths.m_t, dyadic.l_t)
        elif name == "t_s_ps":
            out[name] = t_s_ps_features(X, cfg, depths.m_t_s, dyadic.l_t_s)
        else:
            raise ValueError(f"unknown feature family {name!r}")
    return out


def assemble_features(seq, cfg: AohConfig, depths: SigDepthConfig = SigDepthConfig(),
                      dyadic: DyadicConfig = DyadicConfig()) -> FeatureBundle:
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3:
        raise ValueError(f"expected one skeleton sequence (frames, joints, dims), got {seq.shape}")
    blocks = extract_blocks(seq[None], cfg, depths, dyadic)
    return FeatureBundle(**{k: v[0] for k, v in blocks.items()},
                         dims=feature_dims(cfg, seq.shape[0], depths, dyadic))


class PathSignatureFeaturizer(TransformerMixin, BaseEstimator):
    """Map skeleton batches ``(n, F, J, d)`` to concatenated signature features.

    Parameters
    ----------
    aoh : AohConfig, optional
        Joint selection; defaults to the 10-joint synthetic layout.
    m_s, m_t, m_t_s : int
        Truncation depths of S_PS, T_PS and T_S_PS.
    l_t, l_t_s : int
        Dyadic levels of T_PS and T_S_PS.
    features : tuple of str
        Families to emit, concatenated in this order.
    """

    def __init__(self, aoh=None, m_s=2, m_t=4, m_t_s=3, l_t=3, l_t_s=2, features=FEATURE_NAMES):
        self.aoh = aoh
        self.m_s = m_s
        self.m_t = m_t
        self.m_t_s = m_t_s
        self.l_t = l_t
        self.l_t_s = l_t_s
        self.features = features

    @property
    def aoh_(self) -> AohConfig:
        return self.aoh if self.aoh is not None else AohConfig()

    def _configs(self):
        return SigDepthConfig(self.m_s, self.m_t, self.m_t_s), DyadicConfig(self.l_t, self.l_t_s)

    def fit(self, X, y=None):
        cfg = self.aoh_
        X = _check_batch(X, cfg)
        unknown = set(self.features) - set(FEATURE_NAMES)
        if unknown or not self.features:
            raise ValueError(f"features must be a non-empty subset of {FEATURE_NAMES}, got {self.features}")
        depths, dyadic = self._configs()
        self.n_frames_ = X.shape[1]
        self.n_joints_ = X.shape[2]
        all_dims = feature_dims(cfg, self.n_frames_, depths, dyadic)
        self.feature_dims_ = {name: all_dims[name] for name in self.features}
        self.feature_slices_ = {}
        start = 0
        for name in self.features:
            self.feature_slices_[name] = slice(start, start + all_dims[name])
            start += all_dims[name]
        self.n_features_out_ = start
        self.config_hash_ = feature_config_hash(cfg, self.n_frames_, depths, dyadic)
        return self

    def transform_blocks(self, X, features=None) -> dict[str, np.ndarray]:
        check_is_fitted(self, "feature_dims_")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 4 and X.shape[1] != self.n_frames_:
            raise ValueError(f"fitted on {self.n_frames_} frames, got {X.shape[1]}")
        depths, dyadic = self._configs()
        return extract_blocks(X, self.aoh_, depths, dyadic, features or self.features)

    def transform(self, X):
        blocks = self.transform_blocks(X)
        return np.concatenate([blocks[name] for name in self.features], axis=1)

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "feature_dims_")
        return np.array([f"{name}{i}" for name in self.features for i in range(self.feature_dims_[name])],
                        dtype=object)

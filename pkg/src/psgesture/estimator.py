"""scikit-learn style classifier wrapping featurization, TTM and the network."""
from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import AUGMENTATIONS, augment, sequence_rng
from .features import FEATURE_NAMES, PS_FEATURES, PathSignatureFeaturizer
from .net import MultiStreamNet, TrainConfig, cross_entropy, lr_at, sgd_momentum_step
from .ttm import temporal_shift

logger = logging.getLogger(__name__)


def shift_skeletons(X: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    """Apply per-sequence fractional shifts to ``(n, F, J, d)`` skeletons."""
    n, F = X.shape[:2]
    V = X.reshape(n, F, -1).transpose(0, 2, 1)
    out, _ = temporal_shift(V, deltas)
    return out.transpose(0, 2, 1).reshape(X.shape)


def _check_skeletons(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 4:
        raise ValueError(f"expected skeletons shaped (n, frames, joints, dims), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("skeletons contain non-finite coordinates")
    return X


class MultiStreamClassifier(ClassifierMixin, BaseEstimator):
    """Signature-feature gesture classifier (1s/2s/3s network, optional TTM).

    ``X`` is an ``(n, F, J, d)`` array of normalized skeletons resampled to a
    common frame count (see ``SkeletonPreprocessor``). Features are computed
    internally, so augmentation and the temporal transformer can act on the
    skeletons themselves.

    When ``ttm`` is on and signature features are used, the learned shift is
    also applied to the whole skeleton and the signature features are
    recomputed from the shifted frames (``ttm_shift_ps``); only the RC stream
    carries gradient back into the shift.
    """

    def __init__(self, arch="3s", features=FEATURE_NAMES, ttm=False, ttm_shift_ps=True, hidden=64,
                 activation="relu", dropout=0.5, batch_size=56, momentum=0.7, alpha0=0.01, lr_decay=0.001,
                 epochs=200, augment=(), aoh=None, m_s=2, m_t=4, m_t_s=3, l_t=3, l_t_s=2, random_state=0,
                 verbose=False):
        self.arch = arch
        self.features = features
        self.ttm = ttm
        self.ttm_shift_ps = ttm_shift_ps
        self.hidden = hidden
        self.activation = activation
        self.dropout = dropout
        self.batch_size = batch_size
        self.momentum = momentum
        self.alpha0 = alpha0
        self.lr_decay = lr_decay
        self.epochs = epochs
        self.augment = augment
        self.aoh = aoh
        self.m_s = m_s
        self.m_t = m_t
        self.m_t_s = m_t_s
        self.l_t = l_t
        self.l_t_s = l_t_s
        self.random_state = random_state
        self.verbose = verbose

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.batch_size, self.dropout, self.momentum, self.alpha0, self.lr_decay, self.epochs,
                           self.random_state)

    def _make_featurizer(self):
        return PathSignatureFeaturizer(self.aoh, self.m_s, self.m_t, self.m_t_s, self.l_t, self.l_t_s,
                                       tuple(self.features))

    @property
    def _recompute_ps(self) -> bool:
        return bool(self.ttm and self.ttm_shift_ps and any(f in PS_FEATURES for f in self.features))

    def _blocks(self, X: np.ndarray) -> tuple[dict, np.ndarray]:
        """Network inputs for skeletons ``X`` plus the shifts the net will apply."""
        if not self._recompute_ps:
            blocks = self.featurizer_.transform_blocks(X)
            return blocks, self.net_.deltas(blocks["rc"]) if self.ttm else np.zeros(len(X))
        blocks = self.featurizer_.transform_blocks(X, ("rc",))
        deltas = self.net_.deltas(blocks["rc"])
        ps = [f for f in self.features if f != "rc"]
        blocks.update(self.featurizer_.transform_blocks(shift_skeletons(X, deltas), ps))
        return blocks, deltas

    def fit(self, X, y, X_val=None, y_val=None):
        X = _check_skeletons(X)
        y = np.asarray(y)
        if len(X) == 0:
            raise ValueError("cannot train on an empty dataset")
        if len(y) != len(X):
            raise ValueError(f"{len(X)} sequences but {len(y)} labels")
        unknown = set(self.augment) - set(AUGMENTATIONS)
        if unknown:
            raise ValueError(f"unknown augmentations {sorted(unknown)}")
        cfg = self.train_config()
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        y_val_idx = None
        if X_val is not None:
            X_val = _check_skeletons(X_val)
            y_val_idx = np.searchsorted(self.classes_, np.asarray(y_val))
        self.featurizer_ = self._make_featurizer().fit(X)
        seed = int(self.random_state)
        self.net_ = MultiStreamNet.build(
            self.arch, self.featurizer_.feature_dims_, len(self.classes_), hidden=self.hidden, dropout=self.dropout,
            activation=self.activation, ttm=self.ttm, n_frames=X.shape[1], seed=np.random.default_rng([seed, 0]),
        )
        order_rng = np.random.default_rng([seed, 1])
        dropout_rng = np.random.default_rng([seed, 2])
        velocity = {}
        static = None if (self.augment or self._recompute_ps) else self.featurizer_.transform_blocks(X)
        n_batches = 0
        self.history_ = []
        for epoch in range(cfg.epochs):
            if self.augment:
                X_ep = np.stack([augment(X[i], sequence_rng(seed, i, epoch), self.augment) for i in range(len(X))])
                blocks_ep = None if self._recompute_ps else self.featurizer_.transform_blocks(X_ep)
            else:
                X_ep, blocks_ep = X, static
            order = order_rng.permutation(len(X))
            total_loss, correct, delta_sum = 0.0, 0, 0.0
            for start in range(0, len(X), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                if blocks_ep is None:
                    blocks, _ = self._blocks(X_ep[idx])
                else:
                    blocks = {k: v[idx] for k, v in blocks_ep.items()}
                probs, cache = self.net_.forward(blocks, train=True, rng=dropout_rng)
                grads = self.net_.backward(cache, y_idx[idx])
                scale = 1.0 / len(idx)
                grads = {k: g * scale for k, g in grads.items()}
                sgd_momentum_step(self.net_.params, grads, velocity, lr_at(n_batches, cfg), cfg.momentum)
                n_batches += 1
                total_loss += float(cross_entropy(probs, y_idx[idx]).sum())
                correct += int((probs.argmax(axis=1) == y_idx[idx]).sum())
                if cache.deltas is not None:
                    delta_sum += float(cache.deltas.sum())
            record = {
                "epoch": epoch + 1,
                "loss": total_loss / len(X),
                "train_acc": correct / len(X),
                "val_acc": float("nan"),
                "lr": lr_at(n_batches, cfg),
                "mean_delta": delta_sum / len(X),
            }
            if X_val is not None:
                record["val_acc"] = float(np.mean(self._predict_idx(X_val) == y_val_idx))
            self.history_.append(record)
            if self.verbose:
                logger.info("epoch %d loss %.4f train_acc %.4f val_acc %.4f", record["epoch"], record["loss"],
                            record["train_acc"], record["val_acc"])
        self.n_batches_ = n_batches
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "net_")
        X = _check_skeletons(X)
        blocks, _ = self._blocks(X)
        return self.net_.predict_proba(blocks)

    def _predict_idx(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def predict(self, X):
        check_is_fitted(self, "net_")
        return self.classes_[self._predict_idx(X)]

    def deltas(self, X) -> np.ndarray:
        """Temporal shift regressed for each sequence (zeros without TTM)."""
        check_is_fitted(self, "net_")
        X = _check_skeletons(X)
        rc = self.featurizer_.transform_blocks(X, ("rc",))["rc"]
        return self.net_.deltas(rc)

"""Linear softmax classifier on fixed image statistics, trained with Adam.

Features (d = 30): per-channel mean, per-channel standard deviation, and an
8-bin histogram per channel (bin width 32, fractions). The model is
``softmax(W @ [z; 1])`` where ``z`` is the z-scored feature vector.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from ._rng import keyed_rng
from .metrics import ConfusionMatrix, report

logger = logging.getLogger(__name__)

N_FEATURES = 30
HIST_BINS = 8


def extract_features(img: np.ndarray) -> np.ndarray:
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {img.shape}")
    px = img.reshape(-1, 3)
    n = px.shape[0]
    vals = px.astype(np.float64)
    means = vals.mean(axis=0)
    stds = vals.std(axis=0)
    bins = px.astype(np.int64) // (256 // HIST_BINS)
    hist = np.stack([np.bincount(bins[:, c], minlength=HIST_BINS) for c in range(3)]) / n
    return np.concatenate([means, stds, hist.ravel()])


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0
    class_weights: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")


@dataclass
class ModelParams:
    class_names: tuple[str, ...]
    weights: np.ndarray  # C x (d + 1); last column is the bias
    normalizer_mean: np.ndarray
    normalizer_scale: np.ndarray
    train_config: dict = field(default_factory=dict)
    final_train_loss: float | None = None
    loss_curve: list[float] = field(default_factory=list)

    @property
    def d(self) -> int:
        return self.weights.shape[1] - 1

    def normalize(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.normalizer_mean) / self.normalizer_scale

    def to_json(self) -> str:
        return json.dumps(
            {
                "class_names": list(self.class_names),
                "d": self.d,
                "weights": self.weights.ravel().tolist(),
                "normalizer_mean": self.normalizer_mean.tolist(),
                "normalizer_scale": self.normalizer_scale.tolist(),
                "train_config": self.train_config,
                "final_train_loss": self.final_train_loss,
            },
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        obj = json.loads(text)
        c = len(obj["class_names"])
        d = int(obj["d"])
        return cls(
            class_names=tuple(obj["class_names"]),
            weights=np.array(obj["weights"], dtype=np.float64).reshape(c, d + 1),
            normalizer_mean=np.array(obj["normalizer_mean"], dtype=np.float64),
            normalizer_scale=np.array(obj["normalizer_scale"], dtype=np.float64),
            train_config=obj.get("train_config", {}),
            final_train_loss=obj.get("final_train_loss"),
        )


def _with_bias(z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(z)
    return np.hstack([z, np.ones((z.shape[0], 1))])


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Class probabilities for one feature vector (1-D) or a batch (2-D)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != params.d:
        raise ValueError(f"feature dimension {features.shape[-1]} != model dimension {params.d}")
    probs = softmax(_with_bias(params.normalize(features)) @ params.weights.T)
    return probs[0] if features.ndim == 1 else probs


def loss_and_gradient(
    weights: np.ndarray, inputs: np.ndarray, targets: np.ndarray, sample_weights: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Weighted mean cross-entropy and its gradient with respect to ``weights``.

    ``inputs`` are already normalized and bias-augmented, shape (n, d + 1);
    ``targets`` are class indices. The loss is normalized by the total
    sample weight, so scaling all weights together changes nothing.
    """
    inputs = np.atleast_2d(inputs)
    targets = np.asarray(targets, dtype=np.int64)
    n = inputs.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    logits = inputs @ weights.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    log_p = shifted[np.arange(n), targets] - log_z
    total_w = w.sum()
    loss = float(-(w * log_p).sum() / total_w)
    probs = np.exp(shifted - log_z[:, None])
    probs[np.arange(n), targets] -= 1.0
    grad = (probs * (w / total_w)[:, None]).T @ inputs
    return loss, grad


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, weights: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(weights), np.zeros_like(weights), 0)


def adam_step(
    weights: np.ndarray, state: AdamState, gradient: np.ndarray, config: TrainConfig
) -> tuple[np.ndarray, AdamState]:
    if not np.all(np.isfinite(gradient)):
        raise FloatingPointError("diverged")
    t = state.t + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * gradient
    v = config.beta2 * state.v + (1.0 - config.beta2) * gradient * gradient
    m_hat = m / (1.0 - config.beta1**t)
    v_hat = v / (1.0 - config.beta2**t)
    new_weights = weights - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return new_weights, AdamState(m, v, t)


def fit_normalizer(features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = features.mean(axis=0)
    scale = features.std(axis=0)
    scale[~(scale > 0)] = 1.0
    return mean, scale


def train_arrays(
    features: np.ndarray,
    labels: Sequence[str],
    class_names: Sequence[str],
    config: TrainConfig,
) -> ModelParams:
    """Fit the classifier on a feature matrix with string labels."""
    class_names = tuple(class_names)
    index = {c: i for i, c in enumerate(class_names)}
    unknown = sorted(set(labels) - set(index))
    if unknown:
        raise ValueError(f"training labels {unknown} not in class set {class_names}")
    missing = [c for c in class_names if c not in set(labels)]
    if missing:
        raise ValueError(f"training data has no samples of {missing}")
    features = np.asarray(features, dtype=np.float64)
    y = np.array([index[lab] for lab in labels], dtype=np.int64)
    mean, scale = fit_normalizer(features)
    x = _with_bias((features - mean) / scale)
    cw = config.class_weights or {}
    sample_w = np.array([float(cw.get(c, 1.0)) for c in class_names])[y]

    weights = np.zeros((len(class_names), x.shape[1]))
    state = AdamState.zeros_like(weights)
    n = len(y)
    curve = []
    for epoch in range(config.epochs):
        order = keyed_rng(config.seed, "epoch", epoch).permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            _, grad = loss_and_gradient(weights, x[batch], y[batch], sample_w[batch])
            weights, state = adam_step(weights, state, grad, config)
        curve.append(loss_and_gradient(weights, x, y, sample_w)[0])
    final = curve[-1] if curve else loss_and_gradient(weights, x, y, sample_w)[0]
    logger.debug("trained %d epochs, final loss %.6f", config.epochs, final)
    return ModelParams(
        class_names=class_names,
        weights=weights,
        normalizer_mean=mean,
        normalizer_scale=scale,
        train_config=asdict(config),
        final_train_loss=final,
        loss_curve=curve,
    )


def predict_labels(params: ModelParams, features: np.ndarray) -> list[str]:
    probs = predict_proba(params, np.atleast_2d(features))
    return [params.class_names[i] for i in probs.argmax(axis=1)]


def evaluate_arrays(params: ModelParams, features: np.ndarray, labels: Sequence[str]) -> tuple[ConfusionMatrix, dict]:
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty split")
    outside = sorted(set(labels) - set(params.class_names))
    if outside:
        raise ValueError(f"labels {outside} are not model classes {params.class_names}")
    cm = ConfusionMatrix(params.class_names)
    cm.update(zip(labels, predict_labels(params, features)))
    return cm, report(cm)


FeatureLoader = Callable[[object], np.ndarray]


def train(manifest, config: TrainConfig, load_features: FeatureLoader) -> ModelParams:
    """Train on the ``train`` split of ``manifest``.

    ``load_features`` maps a :class:`~roadclass.dataset.SampleRecord` to its
    feature vector (see :mod:`roadclass.pipeline` for the file-backed one).
    """
    recs = [r for r in manifest.records if r.split == "train"]
    if not recs:
        raise ValueError("manifest has no train split")
    feats = np.stack([load_features(r) for r in recs])
    return train_arrays(feats, [r.label for r in recs], manifest.label_set, config)


def evaluate(params: ModelParams, manifest, split: str, load_features: FeatureLoader) -> tuple[ConfusionMatrix, dict]:
    recs = [r for r in manifest.records if r.split == split]
    if not recs:
        raise ValueError(f"split {split!r} is empty")
    feats = np.stack([load_features(r) for r in recs])
    return evaluate_arrays(params, feats, [r.label for r in recs])


def config_from_mapping(d: Mapping) -> TrainConfig:
    known = set(TrainConfig.__dataclass_fields__)
    return TrainConfig(**{k: v for k, v in d.items() if k in known})

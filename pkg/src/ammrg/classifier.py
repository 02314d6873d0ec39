"""Linear multi-label disease classifier trained with binary cross-entropy,
plus the class activation map it induces over a patch grid."""
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionError, FormatError

CLF_MAGIC = b"AMMRGCLF"
CLF_VERSION = 1
_CLF_HEADER = struct.Struct("<8sHII")
PROB_EPS = 1e-12


@dataclass
class LinearClassifier:
    weights: np.ndarray  # (n_classes, d)
    bias: np.ndarray  # (n_classes,)

    @property
    def n_classes(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.weights.shape[1]

    def copy(self):
        return LinearClassifier(self.weights.copy(), self.bias.copy())


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-5
    epochs: int = 200
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -z))


def predict_probs(clf, pooled_feature):
    f = np.asarray(pooled_feature, dtype=np.float64)
    if f.shape[-1] != clf.dim:
        raise DimensionError(f"feature has dimension {f.shape[-1]}, classifier expects {clf.dim}")
    return sigmoid(f @ clf.weights.T + clf.bias)


def bce_loss(probs, labels):
    """Summed over labels; probabilities are clamped to [1e-12, 1 - 1e-12]."""
    p = np.clip(np.asarray(probs, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(labels, dtype=np.float64)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def mean_loss(clf, features, labels):
    probs = predict_probs(clf, features)
    return bce_loss(probs, labels) / features.shape[0]


def loss_gradients(clf, features, labels):
    """Gradient of ``mean_loss`` with respect to (weights, bias)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    resid = (predict_probs(clf, x) - y) / x.shape[0]
    return resid.T @ x, resid.sum(axis=0)


def train(features, labels, config=TrainConfig()):
    """Full-batch gradient descent on the mean BCE.

    Returns the classifier and the loss trace (initial loss, then the loss
    after every epoch).
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("training needs a non-empty (n, d) feature matrix")
    if y.shape[0] != x.shape[0]:
        raise DimensionError(f"{x.shape[0]} feature rows but {y.shape[0]} label rows")
    rng = np.random.default_rng(config.seed)
    clf = LinearClassifier(rng.normal(0.0, config.init_scale, (y.shape[1], x.shape[1])), np.zeros(y.shape[1]))
    trace = [mean_loss(clf, x, y)]
    for _ in range(config.epochs):
        gw, gb = loss_gradients(clf, x, y)
        clf.weights -= config.learning_rate * gw
        clf.bias -= config.learning_rate * gb
        trace.append(mean_loss(clf, x, y))
    return clf, np.array(trace)


def fold_standardization(clf, mean, scale):
    """Classifier on raw features equal to ``clf`` applied to ``(f - mean) / scale``."""
    w = clf.weights / scale
    return LinearClassifier(w, clf.bias - w @ mean)


def patch_scores(clf, patch_features, class_id):
    if not 0 <= class_id < clf.n_classes:
        raise ValueError(f"class_id {class_id} out of range")
    f = np.asarray(patch_features, dtype=np.float64)
    return f @ clf.weights[class_id]


def linear_cam(clf, patch_features, class_id, patch_size=16):
    """Rectified per-patch class scores, min-max normalized and painted onto
    the pixel grid. Degenerate (all-equal) scores give an all-zero map."""
    s = np.maximum(patch_scores(clf, patch_features, class_id), 0.0)
    grid = int(round(np.sqrt(s.shape[0])))
    if grid * grid != s.shape[0]:
        raise DimensionError(f"{s.shape[0]} patches do not form a square grid")
    lo, hi = s.min(), s.max()
    norm = np.zeros_like(s) if hi == lo else (s - lo) / (hi - lo)
    blocks = norm.reshape(grid, grid)
    return np.repeat(np.repeat(blocks, patch_size, axis=0), patch_size, axis=1)


# --------------------------------------------------------------- persistence


def save_classifier(clf, path):
    header = _CLF_HEADER.pack(CLF_MAGIC, CLF_VERSION, clf.n_classes, clf.dim)
    body = np.asarray(clf.weights, dtype="<f8").tobytes() + np.asarray(clf.bias, dtype="<f8").tobytes()
    Path(path).write_bytes(header + body)


def load_classifier(path):
    data = Path(path).read_bytes()
    if data[:8] != CLF_MAGIC:
        raise FormatError("bad magic, not a classifier file", 0)
    if len(data) < _CLF_HEADER.size:
        raise FormatError("truncated classifier header", len(data))
    _, version, n_classes, dim = _CLF_HEADER.unpack_from(data)
    if version != CLF_VERSION:
        raise FormatError(f"unsupported classifier version {version}", 8)
    expected = _CLF_HEADER.size + 8 * n_classes * (dim + 1)
    if len(data) != expected:
        raise FormatError(f"classifier payload size mismatch, expected {expected} bytes total",
                          min(len(data), expected))
    w = np.frombuffer(data, dtype="<f8", count=n_classes * dim, offset=_CLF_HEADER.size)
    b = np.frombuffer(data, dtype="<f8", count=n_classes, offset=_CLF_HEADER.size + 8 * n_classes * dim)
    return LinearClassifier(w.reshape(n_classes, dim).astype(np.float64), b.astype(np.float64))

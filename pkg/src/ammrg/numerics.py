"""Dense float64 helpers shared by every other module.

Vectors and matrices are plain ``numpy`` float64 arrays; ``as_vec`` and
``as_mat`` are the validation gates.
"""
import numpy as np

from .errors import DimensionError, NumericError


def as_vec(x, name="vector"):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size == 0:
        raise DimensionError(f"{name} is empty")
    if not np.all(np.isfinite(v)):
        raise NumericError(f"{name} has non-finite entries")
    return v


def as_mat(x, name="matrix"):
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] == 0 or m.shape[1] == 0:
        raise DimensionError(f"{name} has an empty axis: {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} has non-finite entries")
    return m


def log_sum_exp(v):
    v = as_vec(v, "log_sum_exp input")
    top = v.max()
    return float(top + np.log(np.sum(np.exp(v - top))))


def softmax(v):
    v = as_vec(v, "softmax input")
    e = np.exp(v - v.max())
    return e / e.sum()


def matvec(a, v):
    a = np.asarray(a, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if a.ndim != 2 or v.ndim != 1 or a.shape[1] != v.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {v.shape}")
    return a @ v


def dot(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"dot of mismatched shapes {a.shape} and {b.shape}")
    return float(a @ b)


def cosine(a, b):
    """Cosine similarity; 0.0 when either side is the zero vector."""
    num = dot(a, b)
    den = np.linalg.norm(a) * np.linalg.norm(b)
    if den == 0.0:
        return 0.0
    return float(num / den)

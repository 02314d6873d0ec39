"""Modern Hopfield retrieval: energy, gradient, iterative update, and the
dual visual/report wrappers.

Scores are ``beta * <x, m_j> / sqrt(d)``. The energy is

    E(x) = ||x - q||^2 - log sum_j exp(beta * <x, m_j> / sqrt(d))

so that ``association_weights`` (softmax of the scores) and
``energy_gradient`` are the exact derivative pair of ``energy``.
"""
import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from . import kernels
from .errors import DimensionError, EmptyMemoryError, NumericError
from .numerics import as_mat, as_vec, log_sum_exp, softmax


class PatternMatrix:
    """Read-only stack of stored patterns, one per row."""

    __slots__ = ("_rows",)

    def __init__(self, patterns):
        rows = np.array(patterns, dtype=np.float64, order="C")
        if rows.ndim != 2 or rows.shape[0] == 0:
            raise EmptyMemoryError("a pattern matrix needs at least one row")
        rows = as_mat(rows, "patterns")
        rows.setflags(write=False)
        self._rows = rows

    @property
    def patterns(self):
        return self._rows

    @property
    def n(self):
        return self._rows.shape[0]

    @property
    def dim(self):
        return self._rows.shape[1]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"PatternMatrix(n={self.n}, dim={self.dim})"


def _rows(memory):
    if isinstance(memory, PatternMatrix):
        return memory.patterns
    return PatternMatrix(memory).patterns


@dataclass(frozen=True)
class HopfieldConfig:
    beta: float = 4.0
    mode: Literal["cccp", "gradient"] = "cccp"
    step_size: float = 0.01
    max_iters: int = 32
    tolerance: float = 1e-6

    def __post_init__(self):
        # beta == 0 is the degenerate "no memory pull" limit; negatives are rejected.
        if not self.beta >= 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.mode not in ("cccp", "gradient"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")


@dataclass(frozen=True)
class RetrievalResult:
    updated: np.ndarray
    weights: np.ndarray
    energy_trace: np.ndarray
    iterations: int


@dataclass(frozen=True)
class HopfieldProjections:
    """Query map into the pattern space and value map out of it.

    ``None`` stands for the identity on either side.
    """

    query_proj: Optional[np.ndarray] = None
    value_proj: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.query_proj is not None:
            object.__setattr__(self, "query_proj", as_mat(self.query_proj, "query_proj"))
        if self.value_proj is not None:
            object.__setattr__(self, "value_proj", as_mat(self.value_proj, "value_proj"))

    @property
    def d_assoc(self):
        return None if self.query_proj is None else self.query_proj.shape[0]

    @property
    def d_out(self):
        return None if self.value_proj is None else self.value_proj.shape[0]

    @classmethod
    def random(cls, d_in, d_mem, d_out, seed=0, identity_query=False):
        """Gaussian maps scaled by ``1/sqrt(fan_in)``."""
        rng = np.random.default_rng(seed)
        q = None if identity_query else rng.normal(0.0, 1.0 / math.sqrt(d_in), (d_mem, d_in))
        v = rng.normal(0.0, 1.0 / math.sqrt(d_mem), (d_out, d_mem))
        return cls(query_proj=q, value_proj=v)


def _check_dims(x, patterns, name="candidate"):
    if x.shape[0] != patterns.shape[1]:
        raise DimensionError(
            f"{name} has dimension {x.shape[0]} but stored patterns have {patterns.shape[1]}"
        )


def _scores(candidate, patterns, beta):
    return beta * (patterns @ candidate) / math.sqrt(patterns.shape[1])


def energy(candidate, query, memory, beta):
    x = as_vec(candidate, "candidate")
    q = as_vec(query, "query")
    m = _rows(memory)
    _check_dims(x, m)
    _check_dims(q, m, "query")
    diff = x - q
    return float(diff @ diff) - log_sum_exp(_scores(x, m, beta))


def association_weights(candidate, memory, beta):
    """Softmax over ``beta * <candidate, m_j> / sqrt(d)``; beta=0 gives uniform."""
    x = as_vec(candidate, "candidate")
    m = _rows(memory)
    _check_dims(x, m)
    return softmax(_scores(x, m, beta))


def energy_gradient(candidate, query, memory, beta):
    x = as_vec(candidate, "candidate")
    q = as_vec(query, "query")
    m = _rows(memory)
    _check_dims(x, m)
    _check_dims(q, m, "query")
    alpha = softmax(_scores(x, m, beta))
    return 2.0 * (x - q) - (beta / math.sqrt(m.shape[1])) * (alpha @ m)


def update_step(candidate, query, memory, config):
    if config.mode != "gradient":
        raise ValueError("update_step is the gradient-mode step; config.mode must be 'gradient'")
    x = as_vec(candidate, "candidate")
    return x - config.step_size * energy_gradient(x, query, memory, config.beta)


def retrieve(query, memory, config=HopfieldConfig()):
    """Run the retrieval dynamics from ``query`` until the update norm drops
    below ``config.tolerance`` or ``config.max_iters`` is reached."""
    q = as_vec(query, "query")
    m = _rows(memory)
    _check_dims(q, m, "query")
    mode = kernels.MODE_CCCP if config.mode == "cccp" else kernels.MODE_GRADIENT
    # overflow is reported through ``bad`` below rather than as warnings
    with np.errstate(over="ignore", invalid="ignore"):
        x, w, trace, iters, bad = kernels.retrieve_loop(
            q, m, float(config.beta), mode, float(config.step_size), int(config.max_iters), float(config.tolerance)
        )
    if bad >= 0:
        raise NumericError(f"retrieval produced non-finite values at iteration {bad}", iteration=bad)
    return RetrievalResult(updated=x, weights=w, energy_trace=trace, iterations=int(iters))


def _project_query(query, memory, proj):
    q = as_vec(query, "query")
    if proj.query_proj is None:
        return q
    if proj.query_proj.shape[1] != q.shape[0]:
        raise DimensionError(f"query_proj expects {proj.query_proj.shape[1]} inputs, query has {q.shape[0]}")
    if proj.query_proj.shape[0] != memory.shape[1]:
        raise DimensionError(
            f"query_proj maps to {proj.query_proj.shape[0]} but stored patterns have {memory.shape[1]}"
        )
    return proj.query_proj @ q


def _apply(query, memory, proj, config):
    m = _rows(memory)
    result = retrieve(_project_query(query, m, proj), m, config)
    # cccp state already is the weighted mixture; reuse it so the identity
    # path matches retrieve() bit for bit.
    mixed = result.updated if config.mode == "cccp" else result.weights @ m
    if proj.value_proj is None:
        return mixed, result
    if proj.value_proj.shape[1] != m.shape[1]:
        raise DimensionError(f"value_proj expects {proj.value_proj.shape[1]} inputs, patterns have {m.shape[1]}")
    return proj.value_proj @ mixed, result


def hopfield_apply(query, memory, proj=HopfieldProjections(), config=HopfieldConfig()):
    """Project, retrieve, and map the retrieved mixture of patterns out
    through ``proj.value_proj``."""
    out, _ = _apply(query, memory, proj, config)
    return out


def _nonempty(memory, label):
    if memory is None or (not isinstance(memory, PatternMatrix) and len(memory) == 0):
        raise EmptyMemoryError(f"{label} memory is empty")
    return memory


def dual_retrieve(query, visual, report, proj_v=HopfieldProjections(), proj_r=HopfieldProjections(),
                  config=HopfieldConfig(), use_visual=True, use_report=True):
    """Concatenate the visual-bank and report-memory retrievals for one query.

    Turning one side off (ablation) returns just the other half.
    """
    if not (use_visual or use_report):
        raise ValueError("at least one of the visual or report halves must be enabled")
    parts = []
    if use_visual:
        parts.append(hopfield_apply(query, _nonempty(visual, "visual"), proj_v, config))
    if use_report:
        parts.append(hopfield_apply(query, _nonempty(report, "report"), proj_r, config))
    return np.concatenate(parts)


def retrieve_batch(queries, memory, config=HopfieldConfig()):
    """``retrieve`` for every row of ``queries`` at once (matrix products).

    Each row converges on its own schedule; results match row-by-row
    ``retrieve`` up to summation-order rounding.
    """
    q = as_mat(queries, "queries")
    m = _rows(memory)
    if q.shape[1] != m.shape[1]:
        raise DimensionError(f"queries have dimension {q.shape[1]} but stored patterns have {m.shape[1]}")
    mode = kernels.MODE_CCCP if config.mode == "cccp" else kernels.MODE_GRADIENT
    with np.errstate(over="ignore", invalid="ignore"):
        x, w, traces, iters, bad_row, bad_iter = kernels.retrieve_batch(
            q, m, float(config.beta), mode, float(config.step_size), int(config.max_iters), float(config.tolerance)
        )
    if bad_row >= 0:
        raise NumericError(f"retrieval of query {bad_row} produced non-finite values at iteration {bad_iter}",
                           iteration=bad_iter)
    return [
        RetrievalResult(updated=x[i], weights=w[i], energy_trace=traces[i, : iters[i] + 1], iterations=int(iters[i]))
        for i in range(q.shape[0])
    ]


@dataclass
class EnhanceDetails:
    visual: list = field(default_factory=list)
    report: list = field(default_factory=list)


def _apply_batch(queries, memory, proj, config):
    m = _rows(memory)
    projected = np.vstack([_project_query(q, m, proj) for q in queries])
    results = retrieve_batch(projected, m, config)
    if config.mode == "cccp":
        mixed = np.vstack([r.updated for r in results])
    else:
        mixed = np.vstack([r.weights for r in results]) @ m
    if proj.value_proj is None:
        return mixed, results
    if proj.value_proj.shape[1] != m.shape[1]:
        raise DimensionError(f"value_proj expects {proj.value_proj.shape[1]} inputs, patterns have {m.shape[1]}")
    return mixed @ proj.value_proj.T, results


def batch_enhance(queries, visual, report, proj_v=HopfieldProjections(), proj_r=HopfieldProjections(),
                  config=HopfieldConfig(), n_queries=14, use_visual=True, use_report=True,
                  return_details=False):
    """Stack the per-query halves into a ``(n_queries * halves, d_out)`` matrix.

    Row ``2*i`` is the visual half and ``2*i + 1`` the report half of query
    ``i`` when both sides are on. With ``return_details`` the per-query
    ``RetrievalResult`` objects are returned alongside.
    """
    queries = list(queries)
    if len(queries) != n_queries:
        raise DimensionError(f"expected {n_queries} disease queries, got {len(queries)}")
    if not (use_visual or use_report):
        raise ValueError("at least one of the visual or report halves must be enabled")
    details = EnhanceDetails()
    halves = []
    if use_visual:
        out, details.visual = _apply_batch(queries, _nonempty(visual, "visual"), proj_v, config)
        halves.append(out)
    if use_report:
        out, details.report = _apply_batch(queries, _nonempty(report, "report"), proj_r, config)
        halves.append(out)
    widths = {h.shape[1] for h in halves}
    if len(widths) != 1:
        raise DimensionError(f"visual and report halves have different widths {sorted(widths)}")
    # interleave so each query's halves sit on adjacent rows
    stacked = np.stack(halves, axis=1).reshape(len(queries) * len(halves), -1)
    if return_details:
        return stacked, details
    return stacked

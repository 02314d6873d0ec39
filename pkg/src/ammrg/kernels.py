"""Hot loops, each in two flavours: a numba ``@njit`` loop and a numpy path.

The public names at the bottom pick one according to ``USE_NUMBA``
(see ``_accel``). Both flavours are importable for cross-checking and for
``benchmarks/bench_kernels.py``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

MODE_CCCP = 0
MODE_GRADIENT = 1

# ---------------------------------------------------------------- patch means


def patch_means_numpy(values, patch_size):
    h, w = values.shape
    blocks = values.reshape(h // patch_size, patch_size, w // patch_size, patch_size)
    return blocks.mean(axis=(1, 3))


@njit(cache=True)
def patch_means_numba(values, patch_size):
    h, w = values.shape
    gh = h // patch_size
    gw = w // patch_size
    out = np.zeros((gh, gw))
    for i in range(h):
        for j in range(w):
            out[i // patch_size, j // patch_size] += values[i, j]
    return out / (patch_size * patch_size)


# ------------------------------------------------------------------------ LCS


def lcs_length_numpy(a, b):
    # Row update cur[j] = max(cur[j-1], x_j) unrolls to a running maximum.
    if a.shape[0] == 0 or b.shape[0] == 0:
        return 0
    prev = np.zeros(b.shape[0] + 1, dtype=np.int64)
    for token in a:
        stepped = np.where(b == token, prev[:-1] + 1, prev[1:])
        prev[1:] = np.maximum.accumulate(stepped)
    return int(prev[-1])


@njit(cache=True)
def lcs_length_numba(a, b):
    n = a.shape[0]
    m = b.shape[0]
    if n == 0 or m == 0:
        return 0
    prev = np.zeros(m + 1, dtype=np.int64)
    cur = np.zeros(m + 1, dtype=np.int64)
    for i in range(n):
        cur[0] = 0
        for j in range(m):
            if a[i] == b[j]:
                cur[j + 1] = prev[j] + 1
            elif prev[j + 1] >= cur[j]:
                cur[j + 1] = prev[j + 1]
            else:
                cur[j + 1] = cur[j]
        prev, cur = cur, prev
    return prev[m]


# ------------------------------------------------------------------ retrieval
#
# Both flavours return (state, weights, energy_trace, iterations, bad_iter)
# where bad_iter is -1 on success or the 1-based iteration that went
# non-finite. ``weights`` are the association weights used for the final
# update, so in cccp mode state == weights @ patterns exactly.


def _weights_numpy(x, patterns, beta, inv_sqrt_d):
    s = beta * inv_sqrt_d * (patterns @ x)
    top = s.max()
    e = np.exp(s - top)
    total = e.sum()
    return e / total, top + math.log(total)


def retrieve_numpy(query, patterns, beta, mode, eta, max_iters, tol):
    inv_sqrt_d = 1.0 / math.sqrt(patterns.shape[1])
    x = query.copy()
    trace = np.empty(max_iters + 1)
    w, lse = _weights_numpy(x, patterns, beta, inv_sqrt_d)
    trace[0] = -lse
    iters = 0
    w_next = w
    for it in range(max_iters):
        w = w_next
        if mode == MODE_CCCP:
            new = w @ patterns
        else:
            grad = 2.0 * (x - query) - beta * inv_sqrt_d * (w @ patterns)
            new = x - eta * grad
        iters = it + 1
        if not np.all(np.isfinite(new)):
            return x, w, trace[:iters], iters, iters
        step = float(np.sqrt(np.sum((new - x) ** 2)))
        x = new
        w_next, lse = _weights_numpy(x, patterns, beta, inv_sqrt_d)
        diff = x - query
        trace[iters] = float(diff @ diff) - lse
        if step < tol:
            break
    return x, w, trace[: iters + 1], iters, -1


@njit(cache=True)
def _weights_numba(x, patterns, beta, inv_sqrt_d, out):
    s = np.dot(patterns, x)
    top = -np.inf
    for j in range(s.shape[0]):
        s[j] *= beta * inv_sqrt_d
        if s[j] > top:
            top = s[j]
    total = 0.0
    for j in range(s.shape[0]):
        out[j] = math.exp(s[j] - top)
        total += out[j]
    for j in range(s.shape[0]):
        out[j] /= total
    return top + math.log(total)


@njit(cache=True)
def retrieve_numba(query, patterns, beta, mode, eta, max_iters, tol):
    n, d = patterns.shape
    inv_sqrt_d = 1.0 / math.sqrt(d)
    x = query.copy()
    w = np.empty(n)
    w_next = np.empty(n)
    trace = np.empty(max_iters + 1)
    trace[0] = -_weights_numba(x, patterns, beta, inv_sqrt_d, w)
    iters = 0
    for it in range(max_iters):
        if it > 0:
            w, w_next = w_next, w
        new = np.dot(w, patterns)
        if mode == MODE_GRADIENT:
            for k in range(d):
                grad = 2.0 * (x[k] - query[k]) - beta * inv_sqrt_d * new[k]
                new[k] = x[k] - eta * grad
        iters = it + 1
        finite = True
        for k in range(d):
            if not math.isfinite(new[k]):
                finite = False
        if not finite:
            return x, w, trace[:iters], iters, iters
        step = 0.0
        for k in range(d):
            step += (new[k] - x[k]) ** 2
            x[k] = new[k]
        step = math.sqrt(step)
        lse = _weights_numba(x, patterns, beta, inv_sqrt_d, w_next)
        sq = 0.0
        for k in range(d):
            sq += (x[k] - query[k]) ** 2
        trace[iters] = sq - lse
        if step < tol:
            break
    return x, w, trace[: iters + 1], iters, -1


# Batched retrieval: many queries against one memory with matrix products.
# A row stops updating once its own step drops below ``tol``, so every row
# follows the single-query dynamics (up to floating-point summation order).
# Returns (states, weights, traces, iterations, bad_row, bad_iter).


def retrieve_batch_numpy(queries, patterns, beta, mode, eta, max_iters, tol):
    nq = queries.shape[0]
    scale = beta / math.sqrt(patterns.shape[1])
    x = queries.copy()
    traces = np.full((nq, max_iters + 1), np.nan)
    iters = np.zeros(nq, dtype=np.int64)

    def weights(rows):
        s = scale * (rows @ patterns.T)
        top = s.max(axis=1, keepdims=True)
        e = np.exp(s - top)
        total = e.sum(axis=1, keepdims=True)
        return e / total, (top + np.log(total))[:, 0]

    w, lse = weights(x)
    traces[:, 0] = -lse
    active = np.arange(nq)
    for it in range(max_iters):
        mixed = w[active] @ patterns
        if mode == MODE_CCCP:
            new = mixed
        else:
            new = x[active] - eta * (2.0 * (x[active] - queries[active]) - scale * mixed)
        bad = ~np.all(np.isfinite(new), axis=1)
        if bad.any():
            return x, w, traces, iters, int(active[np.argmax(bad)]), it + 1
        step = np.sqrt(np.sum((new - x[active]) ** 2, axis=1))
        x[active] = new
        iters[active] = it + 1
        w_new, lse = weights(new)
        diff = new - queries[active]
        traces[active, it + 1] = np.sum(diff * diff, axis=1) - lse
        moving = step >= tol
        still = active[moving]
        if it + 1 < max_iters:
            w[still] = w_new[moving]
        active = still
        if active.size == 0:
            break
    return x, w, traces, iters, -1, -1


@njit(cache=True)
def retrieve_batch_numba(queries, patterns, beta, mode, eta, max_iters, tol):
    nq = queries.shape[0]
    n = patterns.shape[0]
    traces = np.full((nq, max_iters + 1), np.nan)
    iters = np.zeros(nq, dtype=np.int64)
    states = np.empty_like(queries)
    weights = np.empty((nq, n))
    for r in range(nq):
        x, w, trace, it, bad = retrieve_numba(queries[r].copy(), patterns, beta, mode, eta, max_iters, tol)
        states[r] = x
        weights[r] = w
        traces[r, : trace.shape[0]] = trace
        iters[r] = it
        if bad >= 0:
            return states, weights, traces, iters, r, bad
    return states, weights, traces, iters, -1, -1


if USE_NUMBA:
    patch_means = patch_means_numba
    lcs_length = lcs_length_numba
    retrieve_loop = retrieve_numba
else:
    patch_means = patch_means_numpy
    lcs_length = lcs_length_numpy
    retrieve_loop = retrieve_numpy

# Matrix products dominate the batched path, so BLAS via numpy is used
# regardless of the flag; retrieve_batch_numba exists for benchmarking.
retrieve_batch = retrieve_batch_numpy

"""Batch permutation-index kernels.

The sparse-state simulator keys basis vectors by factorial-number-system
(Lehmer) ranks.  Every gate application maps arrays of those ranks through
unrank -> permute -> rank style loops; adversarial protocol states push
~n! rows per message bit through them, which makes these the hot inner
loops of a Monte Carlo run.

Two interchangeable backends are provided:

* numba ``@njit`` loops (default whenever numba imports), and
* vectorized pure-numpy fallbacks.

Set ``QOTSIM_PURE_NUMPY=1`` to force the numpy backend.  Both backends stay
importable either way (see :func:`backends`), so tests can assert agreement
and ``benchmarks/bench_kernels.py`` can time them side by side.

Permutation "words" are 0-indexed mapping arrays: ``word[i] = sigma(i+1)-1``.
Composition follows (a∘b)(i) = a(b(i)), i.e. the right factor acts first.
"""

from __future__ import annotations

import math
import os

import numpy as np

# 21 entries: 20! is the largest factorial that fits in int64.
MAX_DEGREE = 20
FACTORIALS = np.array([math.factorial(i) for i in range(MAX_DEGREE + 1)], dtype=np.int64)


def _check_degree(n: int) -> None:
    if not 1 <= n <= MAX_DEGREE:
        raise ValueError(f"degree {n} outside supported range 1..{MAX_DEGREE}")


# ---------------------------------------------------------------------------
# Loop implementations (plain Python source, compiled by numba when active).
# ---------------------------------------------------------------------------

def _rank_batch_loops(words):
    m, n = words.shape
    out = np.empty(m, dtype=np.int64)
    for r in range(m):
        acc = 0
        for i in range(n):
            smaller = 0
            for j in range(i + 1, n):
                if words[r, j] < words[r, i]:
                    smaller += 1
            acc += smaller * FACTORIALS[n - 1 - i]
        out[r] = acc
    return out


def _unrank_batch_loops(indices, n):
    m = indices.shape[0]
    words = np.empty((m, n), dtype=np.int64)
    remaining = np.empty(n, dtype=np.int64)
    for r in range(m):
        rem = indices[r]
        for i in range(n):
            remaining[i] = i
        size = n
        for i in range(n):
            f = FACTORIALS[n - 1 - i]
            d = rem // f
            rem -= d * f
            words[r, i] = remaining[d]
            for j in range(d, size - 1):
                remaining[j] = remaining[j + 1]
            size -= 1
    return words


def _apply_right_batch_loops(indices, key_word):
    # rank of sigma∘key for each ranked sigma; fused unrank/permute/rank.
    n = key_word.shape[0]
    m = indices.shape[0]
    out = np.empty(m, dtype=np.int64)
    word = np.empty(n, dtype=np.int64)
    permuted = np.empty(n, dtype=np.int64)
    remaining = np.empty(n, dtype=np.int64)
    for r in range(m):
        rem = indices[r]
        for i in range(n):
            remaining[i] = i
        size = n
        for i in range(n):
            f = FACTORIALS[n - 1 - i]
            d = rem // f
            rem -= d * f
            word[i] = remaining[d]
            for j in range(d, size - 1):
                remaining[j] = remaining[j + 1]
            size -= 1
        for i in range(n):
            permuted[i] = word[key_word[i]]
        acc = 0
        for i in range(n):
            smaller = 0
            for j in range(i + 1, n):
                if permuted[j] < permuted[i]:
                    smaller += 1
            acc += smaller * FACTORIALS[n - 1 - i]
        out[r] = acc
    return out


def _compose_rank_batch_loops(idx_a, idx_b, n):
    # rank of a∘b for ranked pairs; (a∘b)(i) = a(b(i)).
    m = idx_a.shape[0]
    out = np.empty(m, dtype=np.int64)
    word_a = np.empty(n, dtype=np.int64)
    word_b = np.empty(n, dtype=np.int64)
    composed = np.empty(n, dtype=np.int64)
    remaining = np.empty(n, dtype=np.int64)
    for r in range(m):
        for src in range(2):
            rem = idx_a[r] if src == 0 else idx_b[r]
            for i in range(n):
                remaining[i] = i
            size = n
            for i in range(n):
                f = FACTORIALS[n - 1 - i]
                d = rem // f
                rem -= d * f
                if src == 0:
                    word_a[i] = remaining[d]
                else:
                    word_b[i] = remaining[d]
                for j in range(d, size - 1):
                    remaining[j] = remaining[j + 1]
                size -= 1
        for i in range(n):
            composed[i] = word_a[word_b[i]]
        acc = 0
        for i in range(n):
            smaller = 0
            for j in range(i + 1, n):
                if composed[j] < composed[i]:
                    smaller += 1
            acc += smaller * FACTORIALS[n - 1 - i]
        out[r] = acc
    return out


def _index_parity_batch_loops(indices, n):
    # Inversion-count parity straight from the factorial digits: the rank is
    # sum(L_i * (n-1-i)!) with L_i the per-position inversion counts, so the
    # parity of sum(L_i) needs no unranking.
    m = indices.shape[0]
    out = np.empty(m, dtype=np.int64)
    for r in range(m):
        rem = indices[r]
        total = 0
        for i in range(n):
            f = FACTORIALS[n - 1 - i]
            d = rem // f
            rem -= d * f
            total += d
        out[r] = total & 1
    return out


# ---------------------------------------------------------------------------
# Pure-numpy implementations.
# ---------------------------------------------------------------------------

def _rank_batch_numpy(words):
    words = np.ascontiguousarray(words, dtype=np.int64)
    m, n = words.shape
    if m == 0:
        return np.empty(0, dtype=np.int64)
    gt = words[:, :, None] > words[:, None, :]
    upper = np.triu(np.ones((n, n), dtype=bool), k=1)
    digits = np.logical_and(gt, upper[None, :, :]).sum(axis=2, dtype=np.int64)
    weights = FACTORIALS[:n][::-1]
    return digits @ weights


def _unrank_batch_numpy(indices, n):
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    m = indices.shape[0]
    words = np.empty((m, n), dtype=np.int64)
    if m == 0:
        return words
    remaining = np.tile(np.arange(n, dtype=np.int64), (m, 1))
    rem = indices.copy()
    for i in range(n):
        f = int(FACTORIALS[n - 1 - i])
        d = rem // f
        rem -= d * f
        words[:, i] = np.take_along_axis(remaining, d[:, None], axis=1)[:, 0]
        if i < n - 1:
            size = n - i - 1
            pos = np.arange(size, dtype=np.int64)[None, :]
            src = pos + (pos >= d[:, None])
            remaining = np.take_along_axis(remaining, src, axis=1)
    return words


def _apply_right_batch_numpy(indices, key_word):
    key_word = np.ascontiguousarray(key_word, dtype=np.int64)
    n = key_word.shape[0]
    words = _unrank_batch_numpy(indices, n)
    return _rank_batch_numpy(words[:, key_word])


def _compose_rank_batch_numpy(idx_a, idx_b, n):
    words_a = _unrank_batch_numpy(idx_a, n)
    words_b = _unrank_batch_numpy(idx_b, n)
    return _rank_batch_numpy(np.take_along_axis(words_a, words_b, axis=1))


def _index_parity_batch_numpy(indices, n):
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    rem = indices.copy()
    total = np.zeros_like(rem)
    for i in range(n):
        f = int(FACTORIALS[n - 1 - i])
        d = rem // f
        rem -= d * f
        total += d
    return total & 1


_NUMPY_IMPLS = {
    "rank_batch": _rank_batch_numpy,
    "unrank_batch": _unrank_batch_numpy,
    "apply_right_batch": _apply_right_batch_numpy,
    "compose_rank_batch": _compose_rank_batch_numpy,
    "index_parity_batch": _index_parity_batch_numpy,
}


def _build_numba_impls():
    from numba import njit

    jit = lambda f: njit(cache=True, nogil=True)(f)  # noqa: E731
    return {
        "rank_batch": jit(_rank_batch_loops),
        "unrank_batch": jit(_unrank_batch_loops),
        "apply_right_batch": jit(_apply_right_batch_loops),
        "compose_rank_batch": jit(_compose_rank_batch_loops),
        "index_parity_batch": jit(_index_parity_batch_loops),
    }


_FORCE_NUMPY = os.environ.get("QOTSIM_PURE_NUMPY", "").strip().lower() in {"1", "true", "yes", "on"}

_NUMBA_IMPLS = None
if not _FORCE_NUMPY:
    try:
        _NUMBA_IMPLS = _build_numba_impls()
    except ImportError:  # pragma: no cover - numba is a declared dependency
        _NUMBA_IMPLS = None

if _NUMBA_IMPLS is not None:
    ACTIVE_BACKEND = "numba"
    _ACTIVE = _NUMBA_IMPLS
else:
    ACTIVE_BACKEND = "numpy"
    _ACTIVE = _NUMPY_IMPLS

rank_batch = _ACTIVE["rank_batch"]
unrank_batch = _ACTIVE["unrank_batch"]
apply_right_batch = _ACTIVE["apply_right_batch"]
compose_rank_batch = _ACTIVE["compose_rank_batch"]
index_parity_batch = _ACTIVE["index_parity_batch"]


def backends() -> dict[str, dict]:
    """All importable backends, keyed by name. Used by tests and benchmarks."""
    out = {"numpy": dict(_NUMPY_IMPLS)}
    if _NUMBA_IMPLS is not None:
        out["numba"] = dict(_NUMBA_IMPLS)
    else:
        try:
            out["numba"] = dict(_build_numba_impls())
        except ImportError:
            pass
    return out


def warm_up(n: int = 6) -> None:
    """Trigger JIT compilation on tiny inputs so later timings are honest."""
    idx = np.arange(2, dtype=np.int64)
    word = np.arange(n, dtype=np.int64)
    rank_batch(unrank_batch(idx, n))
    apply_right_batch(idx, word)
    compose_rank_batch(idx, idx, n)
    index_parity_batch(idx, n)

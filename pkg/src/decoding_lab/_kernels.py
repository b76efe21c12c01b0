"""Hot numeric loops over Markov-chain path spaces.

Every kernel has a pure-numpy implementation and, when numba is importable,
an ``@njit`` twin. The compiled twin is used unless the environment variable
``DECODING_LAB_NUMBA`` is set to ``0``. Both paths multiply left to right and
sum in ascending position order, so they return bit-identical arrays.
"""
import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

HAVE_NUMBA = njit is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("DECODING_LAB_NUMBA", "1") != "0"


# --- pure numpy -------------------------------------------------------------

def np_continuation_scores(start, transitions, c):
    """Chain-rule products of every length-``c`` continuation.

    ``start[v]`` is the probability of the first token; later tokens use the
    rows of ``transitions``. Output index ``k`` enumerates continuations in
    lexicographic token order (C order of an ``(m,)*c`` array).
    """
    m = transitions.shape[0]
    scores = np.asarray(start, dtype=np.float64).copy()
    for _ in range(c - 1):
        scores = (scores.reshape(-1, m)[:, :, None] * transitions[None, :, :]).ravel()
    return scores


def np_ngram_scores(gram_tables, m, L, N):
    """g-score of every length-``L`` path given per-position gram marginals.

    ``gram_tables[t]`` holds the marginal of each length-``N`` gram starting
    at position ``t``, flattened in lexicographic order.
    """
    g = np.zeros((m,) * L, dtype=np.float64)
    for t in range(L - N + 1):
        shape = (1,) * t + (m,) * N + (1,) * (L - t - N)
        g += gram_tables[t].reshape(shape)
    return g.ravel()


def np_max_ngram_score(gram_tables, m, L, N):
    """Largest g-score over all paths by dynamic programming over the last N-1 tokens.

    Costs ``O(L m**N)`` instead of ``O(m**L)``. Float addition is monotone, so
    ``max(fl(x + c)) == fl(max(x) + c)`` and the result equals the maximum of
    ``np_ngram_scores`` bit for bit.
    """
    states = m ** (N - 1)
    best = np.zeros(states, dtype=np.float64)
    for t in range(L - N + 1):
        # window w = state * m + token; the new state drops the oldest token
        vals = np.repeat(best, m) + gram_tables[t] if t > 0 else 0.0 + gram_tables[0]
        best = vals.reshape(m, states).max(axis=0)
    return float(best.max())


def np_first_within(scores, tol):
    best = scores.max()
    close = scores >= best * (1.0 - tol)
    return int(np.argmax(close)), int(close.sum())


def np_round_scores(values, decimals):
    scale = 10.0 ** decimals
    return np.rint(values * scale) / scale


# --- numba ------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def nb_continuation_scores(start, transitions, c):
        m = transitions.shape[0]
        out = np.empty(m ** c, dtype=np.float64)
        out[:m] = start
        size = m
        for _ in range(c - 1):
            # extend in place from the back so unread entries are not overwritten
            for i in range(size - 1, -1, -1):
                s = out[i]
                last = i % m
                for j in range(m - 1, -1, -1):
                    out[i * m + j] = s * transitions[last, j]
            size *= m
        return out

    @njit(cache=True)
    def nb_ngram_scores(gram_tables, m, L, N):
        out = np.zeros(m ** L, dtype=np.float64)
        grams = m ** N
        for t in range(L - N + 1):
            stride = m ** (L - t - N)
            idx = 0
            for _ in range(m ** t):
                for w in range(grams):
                    val = gram_tables[t, w]
                    for _ in range(stride):
                        out[idx] += val
                        idx += 1
        return out

    @njit(cache=True)
    def nb_max_ngram_score(gram_tables, m, L, N):
        states = m ** (N - 1)
        grams = states * m
        best = np.zeros(states, dtype=np.float64)
        nxt = np.empty(states, dtype=np.float64)
        for t in range(L - N + 1):
            nxt[:] = -np.inf
            for w in range(grams):
                v = (best[w // m] if t > 0 else 0.0) + gram_tables[t, w]
                s = w % states
                if v > nxt[s]:
                    nxt[s] = v
            best[:] = nxt
        out = best[0]
        for s in range(1, states):
            if best[s] > out:
                out = best[s]
        return out

    @njit(cache=True)
    def nb_first_within(scores, tol):
        best = scores[0]
        for k in range(1, scores.shape[0]):
            if scores[k] > best:
                best = scores[k]
        threshold = best * (1.0 - tol)
        first = -1
        count = 0
        for k in range(scores.shape[0]):
            if scores[k] >= threshold:
                if first < 0:
                    first = k
                count += 1
        return first, count

    @njit(cache=True)
    def nb_round_scores(values, decimals):
        scale = 10.0 ** decimals
        out = np.empty_like(values)
        for k in range(values.shape[0]):
            out[k] = np.rint(values[k] * scale) / scale
        return out

else:  # pragma: no cover
    nb_continuation_scores = nb_ngram_scores = nb_max_ngram_score = nb_first_within = nb_round_scores = None


def backend():
    return "numba" if USE_NUMBA else "numpy"


def continuation_scores(start, transitions, c):
    start = np.ascontiguousarray(start, dtype=np.float64)
    transitions = np.ascontiguousarray(transitions, dtype=np.float64)
    if USE_NUMBA:
        return nb_continuation_scores(start, transitions, c)
    return np_continuation_scores(start, transitions, c)


def ngram_scores(gram_tables, m, L, N):
    gram_tables = np.ascontiguousarray(gram_tables, dtype=np.float64)
    if USE_NUMBA:
        return nb_ngram_scores(gram_tables, m, L, N)
    return np_ngram_scores(gram_tables, m, L, N)


def max_ngram_score(gram_tables, m, L, N):
    """Largest g-score over all paths without materialising the score array."""
    gram_tables = np.ascontiguousarray(gram_tables, dtype=np.float64)
    if USE_NUMBA:
        return float(nb_max_ngram_score(gram_tables, m, L, N))
    return np_max_ngram_score(gram_tables, m, L, N)


def path_ngram_score(gram_tables, seq, m, N):
    """g-score of one path, summed in the same order as the array kernels."""
    s = 0.0
    for t in range(gram_tables.shape[0]):
        w = 0
        for tok in seq[t:t + N]:
            w = w * m + tok
        s += gram_tables[t, w]
    return float(s)


def first_within(scores, tol):
    """Index of the first score within relative ``tol`` of the max, and how many are."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if USE_NUMBA:
        first, count = nb_first_within(scores, tol)
        return int(first), int(count)
    return np_first_within(scores, tol)


def round_scores(values, decimals=15):
    values = np.ascontiguousarray(values, dtype=np.float64)
    if USE_NUMBA:
        return nb_round_scores(values, decimals)
    return np_round_scores(values, decimals)

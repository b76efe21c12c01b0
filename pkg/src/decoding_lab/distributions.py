"""Exact finite distributions over fixed-length, null-padded token sequences.

Tokens are the integers ``0 .. vocab_size - 1``. The padding token is
``NULL`` (``-1``); once it appears every later position is ``NULL`` too.
Conditional vectors have ``vocab_size + 1`` entries with ``NULL`` last.
"""
import itertools
import json
import math
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import BudgetExceeded, UndefinedConditional

NULL = -1
DEFAULT_BUDGET = 8 ** 8
LOG_SPACE_FACTORS = 16


def sequence_budget():
    """Largest sequence space we agree to enumerate (``DECODING_LAB_BUDGET`` overrides)."""
    raw = os.environ.get("DECODING_LAB_BUDGET")
    return int(raw) if raw else DEFAULT_BUDGET


def check_budget(size, budget=None):
    budget = sequence_budget() if budget is None else budget
    if size > budget:
        raise BudgetExceeded(size, budget)


@dataclass(frozen=True)
class Vocabulary:
    size: int
    NULL = NULL

    def __post_init__(self):
        if self.size < 1:
            raise ValueError(f"vocabulary size must be >= 1, got {self.size}")

    def index(self, token):
        """Position of ``token`` inside a conditional vector."""
        return self.size if token == NULL else token


def is_null_suffix(tokens):
    seen_null = False
    for t in tokens:
        if t == NULL:
            seen_null = True
        elif seen_null:
            return False
    return True


def check_sequence(tokens, vocab_size, length=None):
    tokens = tuple(int(t) for t in tokens)
    if length is not None and len(tokens) != length:
        raise ValueError(f"sequence {tokens} has length {len(tokens)}, expected {length}")
    for t in tokens:
        if t != NULL and not 0 <= t < vocab_size:
            raise ValueError(f"token {t} outside vocabulary of size {vocab_size}")
    if not is_null_suffix(tokens):
        raise ValueError(f"sequence {tokens} has a token after NULL")
    return tokens


def format_sequence(tokens, vocab_size=10):
    """``(0, 1, NULL)`` -> ``"01*"``; comma separated once tokens need two digits."""
    parts = ["*" if t == NULL else str(t) for t in tokens]
    return ("" if vocab_size <= 10 else ",").join(parts)


def parse_sequence(text):
    text = text.strip()
    if "," in text:
        parts = [p.strip() for p in text.split(",")]
    else:
        parts = list(text)
    return tuple(NULL if p == "*" else int(p) for p in parts)


def _chain_product(factors):
    """Left-to-right product; long chains are accumulated in log space."""
    if len(factors) <= LOG_SPACE_FACTORS:
        out = 1.0
        for f in factors:
            out *= f
        return out
    if any(f == 0.0 for f in factors):
        return 0.0
    return math.exp(math.fsum(math.log(f) for f in factors))


class SequenceDistribution:
    """Common surface of every exact distribution over length-``L`` sequences."""

    vocab_size: int
    L: int
    allows_null = False

    @property
    def vocab(self):
        return Vocabulary(self.vocab_size)

    def conditional_next(self, prefix):
        raise NotImplementedError

    def sequence_prob(self, y):
        raise NotImplementedError

    def ngram_marginal(self, start, gram):
        raise NotImplementedError

    def support(self):
        """Iterate ``(sequence, probability)`` over sequences with positive mass."""
        raise NotImplementedError

    def sequence_space_size(self):
        V = self.vocab_size
        if not self.allows_null:
            return V ** self.L
        return sum(V ** j for j in range(self.L + 1))

    def sequences(self):
        """All candidate outputs in lexicographic order (``NULL`` sorts last)."""
        return iter_sequences(self.vocab_size, self.L, self.allows_null)

    def _check_prefix(self, prefix):
        prefix = check_sequence(prefix, self.vocab_size)
        if len(prefix) >= self.L:
            raise ValueError(f"prefix {prefix} must be shorter than L={self.L}")
        return prefix

    def _null_point_mass(self):
        out = np.zeros(self.vocab_size + 1)
        out[-1] = 1.0
        return out


def iter_sequences(vocab_size, L, allow_null=False):
    tokens = list(range(vocab_size)) + ([NULL] if allow_null else [])
    for seq in itertools.product(tokens, repeat=L):
        if not allow_null or is_null_suffix(seq):
            yield seq


class TableDistribution(SequenceDistribution):
    """Distribution given by an explicit ``sequence -> probability`` table."""

    def __init__(self, vocab_size, L, entries, atol=1e-12):
        self.vocab_size = int(vocab_size)
        self.L = int(L)
        Vocabulary(self.vocab_size)
        if self.L < 1:
            raise ValueError("L must be positive")
        table = {}
        for key, prob in entries.items():
            seq = parse_sequence(key) if isinstance(key, str) else key
            seq = check_sequence(seq, self.vocab_size, self.L)
            prob = float(prob)
            if not prob >= 0.0:
                raise ValueError(f"negative probability {prob} for {seq}")
            table[seq] = table.get(seq, 0.0) + prob
        total = math.fsum(table.values())
        if abs(total - 1.0) > atol:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        self.entries = table
        self.allows_null = any(NULL in seq for seq in table)
        self._gram_cache = {}

    def __repr__(self):
        return f"TableDistribution(vocab_size={self.vocab_size}, L={self.L}, n={len(self.entries)})"

    @cached_property
    def _children(self):
        children = {}
        V = self.vocab_size
        for seq, prob in self.entries.items():
            if prob == 0.0:
                continue
            for k in range(self.L):
                row = children.get(seq[:k])
                if row is None:
                    row = children[seq[:k]] = np.zeros(V + 1)
                row[V if seq[k] == NULL else seq[k]] += prob
        return children

    def conditional_next(self, prefix):
        prefix = self._check_prefix(prefix)
        if NULL in prefix:
            return self._null_point_mass()
        row = self._children.get(prefix)
        if row is None:
            raise UndefinedConditional(prefix)
        return row / row.sum()

    def sequence_prob(self, y):
        return self.entries.get(tuple(y), 0.0)

    def gram_marginals(self, start, N):
        """Map each length-``N`` gram at 0-based ``start`` to its marginal mass."""
        key = (start, N)
        if key not in self._gram_cache:
            if not (0 <= start and start + N <= self.L and N >= 1):
                raise ValueError(f"gram of length {N} at {start} does not fit in L={self.L}")
            out = {}
            for seq, prob in self.entries.items():
                gram = seq[start:start + N]
                out[gram] = out.get(gram, 0.0) + prob
            self._gram_cache[key] = out
        return self._gram_cache[key]

    def ngram_marginal(self, start, gram):
        return self.gram_marginals(start, len(gram)).get(tuple(gram), 0.0)

    def support(self):
        for seq, prob in self.entries.items():
            if prob > 0.0:
                yield seq, prob

    def to_json(self):
        return {
            "type": "table",
            "vocab_size": self.vocab_size,
            "L": self.L,
            "entries": {format_sequence(s, self.vocab_size): p for s, p in self.entries.items()},
        }


class MarkovChainDistribution(SequenceDistribution):
    """Length-``L`` paths of a finite Markov chain (no padding)."""

    def __init__(self, initial, transitions, L, atol=1e-12):
        initial = np.array(initial, dtype=np.float64)
        transitions = np.array(transitions, dtype=np.float64)
        m = initial.shape[0]
        if initial.ndim != 1 or transitions.shape != (m, m):
            raise ValueError(f"need initial of shape (m,) and transitions (m, m), got "
                             f"{initial.shape} and {transitions.shape}")
        if (initial < 0).any() or (transitions < 0).any():
            raise ValueError("negative probability in Markov chain")
        if abs(initial.sum() - 1.0) > atol:
            raise ValueError(f"initial distribution sums to {initial.sum()!r}")
        bad = np.abs(transitions.sum(axis=1) - 1.0) > atol
        if bad.any():
            raise ValueError(f"transition rows {np.flatnonzero(bad).tolist()} do not sum to 1")
        if int(L) < 1:
            raise ValueError("L must be positive")
        initial.flags.writeable = False
        transitions.flags.writeable = False
        self.initial = initial
        self.transitions = transitions
        self.m = self.vocab_size = m
        self.L = int(L)
        self._gram_cache = {}

    def __repr__(self):
        return f"MarkovChainDistribution(m={self.m}, L={self.L})"

    def with_length(self, L):
        return MarkovChainDistribution(self.initial, self.transitions, L)

    def _prefix_mass(self, prefix):
        if not prefix:
            return 1.0
        factors = [self.initial[prefix[0]]]
        factors += [self.transitions[a, b] for a, b in zip(prefix, prefix[1:])]
        return _chain_product(factors)

    def conditional_next(self, prefix):
        prefix = self._check_prefix(prefix)
        if NULL in prefix:
            return self._null_point_mass()
        if self._prefix_mass(prefix) == 0.0:
            raise UndefinedConditional(prefix)
        row = self.initial if not prefix else self.transitions[prefix[-1]]
        return np.append(row, 0.0)

    def sequence_prob(self, y):
        y = tuple(y)
        if len(y) != self.L or NULL in y:
            return 0.0
        return self._prefix_mass(y)

    @cached_property
    def marginals(self):
        """Per-position token marginals, shape ``(L, m)``, by forward propagation."""
        out = np.empty((self.L, self.m))
        out[0] = self.initial
        for t in range(1, self.L):
            out[t] = out[t - 1] @ self.transitions
        out.flags.writeable = False
        return out

    def gram_table(self, start, N):
        """Marginals of all ``m**N`` grams at 0-based ``start``, lexicographic order."""
        if not (0 <= start and start + N <= self.L and N >= 1):
            raise ValueError(f"gram of length {N} at {start} does not fit in L={self.L}")
        key = (start, N)
        if key not in self._gram_cache:
            table = _kernels.continuation_scores(self.marginals[start], self.transitions, N)
            table.flags.writeable = False
            self._gram_cache[key] = table
        return self._gram_cache[key]

    def ngram_marginal(self, start, gram):
        gram = tuple(gram)
        if NULL in gram:
            return 0.0
        index = 0
        for t in gram:
            index = index * self.m + t
        return float(self.gram_table(start, len(gram))[index])

    def path_probs(self):
        """Probabilities of all ``m**L`` paths in lexicographic order."""
        check_budget(self.m ** self.L)
        return _kernels.continuation_scores(self.initial, self.transitions, self.L)

    def support(self):
        probs = self.path_probs()
        for k in np.flatnonzero(probs > 0.0):
            yield index_to_sequence(int(k), self.m, self.L), float(probs[k])

    def path_entropy(self):
        """Shannon entropy (nats) of the path distribution without enumerating it."""
        total = _entropy_vector(self.initial)
        row_h = np.array([_entropy_vector(r) for r in self.transitions])
        for t in range(self.L - 1):
            total += float(self.marginals[t] @ row_h)
        return total

    def to_json(self):
        return {
            "type": "markov",
            "vocab_size": self.m,
            "L": self.L,
            "initial": self.initial.tolist(),
            "transitions": self.transitions.tolist(),
        }


def _entropy_vector(p):
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def index_to_sequence(index, m, L):
    out = []
    for _ in range(L):
        index, r = divmod(index, m)
        out.append(r)
    return tuple(reversed(out))


def sequence_to_index(seq, m):
    index = 0
    for t in seq:
        index = index * m + t
    return index


def markov_to_table(mc, budget=None):
    """Expand a chain into the explicit table of its ``m**L`` paths."""
    check_budget(mc.m ** mc.L, budget)
    probs = _kernels.continuation_scores(mc.initial, mc.transitions, mc.L)
    entries = {index_to_sequence(k, mc.m, mc.L): float(p) for k, p in enumerate(probs)}
    return TableDistribution(mc.m, mc.L, entries, atol=1e-9)


def as_table(dist, budget=None):
    if isinstance(dist, TableDistribution):
        return dist
    if isinstance(dist, MarkovChainDistribution):
        return markov_to_table(dist, budget)
    raise TypeError(f"cannot tabulate {type(dist).__name__}")


def sample_dirichlet_chain(rng, m, alpha, L=1):
    """Chain whose initial vector and transition rows are iid symmetric Dirichlet(alpha).

    Each row is a vector of independent Gamma(alpha, 1) draws divided by its sum.
    """
    if m < 2:
        raise ValueError("need at least two nodes")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    rows = rng.gamma(alpha, 1.0, size=(m + 1, m))
    for r in range(m + 1):
        # all-zero rows only happen through underflow at tiny alpha
        while rows[r].sum() == 0.0:
            rows[r] = rng.gamma(alpha, 1.0, size=m)
    rows /= rows.sum(axis=1, keepdims=True)
    return MarkovChainDistribution(rows[0], rows[1:], L)


def _support_dict(dist):
    if isinstance(dist, TableDistribution):
        return dist.entries
    return dict(dist.support())


def kl_divergence(p, q):
    """KL(p || q) in nats; ``inf`` when q misses part of p's support."""
    _check_same_space(p, q)
    total = 0.0
    for seq, pp in p.support():
        qq = q.sequence_prob(seq)
        if qq <= 0.0:
            return math.inf
        total += pp * math.log(pp / qq)
    return max(total, 0.0)


def entropy(p):
    return -math.fsum(pp * math.log(pp) for _, pp in p.support())


def _check_same_space(p, q):
    if p.vocab_size != q.vocab_size or p.L != q.L:
        raise ValueError("distributions live on different sequence spaces")


@dataclass
class ConditionalModel:
    """Finite input space: a list of ``(input_id, weight, distribution)``."""

    inputs: list

    def __post_init__(self):
        if not self.inputs:
            raise ValueError("conditional model needs at least one input")
        weights = [float(w) for _, w, _ in self.inputs]
        if any(w < 0 for w in weights):
            raise ValueError("input weights must be non-negative")
        if abs(math.fsum(weights) - 1.0) > 1e-12:
            raise ValueError(f"input weights sum to {math.fsum(weights)!r}")
        spaces = {(d.vocab_size, d.L) for _, _, d in self.inputs}
        if len(spaces) != 1:
            raise ValueError("all inputs must share vocabulary and length")

    @classmethod
    def single(cls, dist, input_id="x0"):
        return cls([(input_id, 1.0, dist)])


def distribution_from_json(data):
    kind = data.get("type")
    if kind == "table":
        return TableDistribution(data["vocab_size"], data["L"], data["entries"])
    if kind == "markov":
        if int(data.get("vocab_size", len(data["initial"]))) != len(data["initial"]):
            raise ValueError("vocab_size disagrees with the chain's node count")
        initial = [float(x) for x in data["initial"]]
        transitions = [[float(x) for x in row] for row in data["transitions"]]
        return MarkovChainDistribution(initial, transitions, data["L"])
    raise ValueError(f"unknown distribution type {kind!r}")


def model_from_json(data):
    """Either a bare distribution or ``{"type": "conditional", "inputs": [...]}``."""
    if data.get("type") == "conditional":
        inputs = [(str(item["id"]), float(item["weight"]), distribution_from_json(item["distribution"]))
                  for item in data["inputs"]]
        return ConditionalModel(inputs)
    return ConditionalModel.single(distribution_from_json(data))


def load_json(path):
    return json.loads(Path(path).read_text())

"""Decoding algorithms driven only by next-token conditionals.

Deterministic decoders (lookahead and its beam variant) return one sequence.
The samplers draw one sequence per call; ``output_distribution`` gives the
exact law of any decoder's output as a ``TableDistribution``.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import _kernels
from .distributions import (NULL, LOG_SPACE_FACTORS, MarkovChainDistribution, TableDistribution,
                            check_budget, index_to_sequence)
from .errors import TieDetected

KINDS = ("kt_lookahead", "beam_lookahead", "random_sample", "temp_scaled_sample")
TIE_POLICIES = ("first_seen", "error_on_tie")
DETERMINISTIC = ("kt_lookahead", "beam_lookahead")


@dataclass(frozen=True)
class DecoderSpec:
    kind: str = "kt_lookahead"
    K: int = 1
    T: int = 1
    B: int = 1
    gamma: float = 1.0
    tie_policy: str = "first_seen"
    tie_tolerance: float = 1e-12

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown decoder kind {self.kind!r}")
        if self.tie_policy not in TIE_POLICIES:
            raise ValueError(f"unknown tie policy {self.tie_policy!r}")
        if not 1 <= self.T <= self.K:
            raise ValueError(f"need 1 <= T <= K, got T={self.T}, K={self.K}")
        if self.B < 1:
            raise ValueError("beam width must be >= 1")
        if math.isnan(self.gamma) or self.gamma < 0:
            raise ValueError(f"temperature gamma must be in [0, inf], got {self.gamma}")
        if self.tie_tolerance < 0:
            raise ValueError("tie tolerance must be non-negative")

    @property
    def deterministic(self):
        return self.kind in DETERMINISTIC or (self.kind == "temp_scaled_sample" and math.isinf(self.gamma))

    def check_length(self, L):
        if self.kind in DETERMINISTIC and self.K > L:
            raise ValueError(f"lookahead depth K={self.K} exceeds L={L}")

    @classmethod
    def from_json(cls, data):
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown decoder fields {sorted(unknown)}")
        if "gamma" in data:
            data["gamma"] = float(data["gamma"])
        for key in ("K", "T", "B"):
            if key in data:
                data[key] = int(data[key])
        return cls(**data)

    def to_json(self):
        out = asdict(self)
        if math.isinf(self.gamma):
            out["gamma"] = "inf"
        return out


def _token(index, vocab_size):
    return NULL if index == vocab_size else index


def continuation_scores(ntp, prefix, c):
    """All positive-probability length-``c`` continuations of ``prefix``.

    Depth-first in token order (``NULL`` last), so the returned list is in
    lexicographic order. Scores are chain-rule products accumulated left to
    right; beyond ``LOG_SPACE_FACTORS`` factors they are summed as logs.
    """
    prefix = tuple(prefix)
    V = ntp.vocab_size
    use_log = c > LOG_SPACE_FACTORS
    conts, scores = [], []

    def walk(cont, score):
        if len(cont) == c:
            conts.append(cont)
            scores.append(score)
            return
        probs = ntp.conditional_next(prefix + cont)
        for idx in range(V + 1):
            p = probs[idx]
            if p > 0.0:
                walk(cont + (_token(idx, V),), score + math.log(p) if use_log else score * p)

    walk((), 0.0 if use_log else 1.0)
    scores = np.array(scores)
    if use_log:
        scores = np.exp(scores - scores.max())
    return conts, scores


def _pick(conts, scores, spec):
    """First candidate within tolerance of the best; second value flags a tie."""
    first, count = _kernels.first_within(scores, spec.tie_tolerance)
    if count > 1 and spec.tie_policy == "error_on_tie":
        best = scores.max()
        tied = [conts[k] for k in np.flatnonzero(scores >= best * (1.0 - spec.tie_tolerance))]
        raise TieDetected(tied)
    return conts[first], count > 1


@dataclass
class LookaheadTrace:
    sequence: tuple
    tie_steps: int


def kt_lookahead_trace(ntp, spec, L=None):
    L = ntp.L if L is None else L
    spec.check_length(L)
    y = ()
    ties = 0
    while len(y) < L:
        # the lookahead window never runs past the end of the sequence
        c = min(spec.K, L - len(y))
        conts, scores = continuation_scores(ntp, y, c)
        best, tied = _pick(conts, scores, spec)
        ties += tied
        y = y + best[:min(spec.T, L - len(y))]
    return LookaheadTrace(y, ties)


def kt_lookahead(ntp, spec, L=None):
    """Score every ``K``-token continuation, commit the first ``T`` of the best, repeat."""
    return kt_lookahead_trace(ntp, spec, L).sequence


def markov_kt_lookahead(chain, K, T, tol=1e-12):
    """Lookahead specialised to a Markov chain, using the compiled path kernels.

    Returns ``(sequence, tie_steps)`` and agrees with ``kt_lookahead`` under the
    ``first_seen`` policy.
    """
    if not isinstance(chain, MarkovChainDistribution):
        raise TypeError("markov_kt_lookahead needs a MarkovChainDistribution")
    L, m = chain.L, chain.m
    if not 1 <= T <= K <= L:
        raise ValueError(f"need 1 <= T <= K <= L, got K={K}, T={T}, L={L}")
    y = []
    ties = 0
    while len(y) < L:
        c = min(K, L - len(y))
        start = chain.initial if not y else chain.transitions[y[-1]]
        scores = _kernels.continuation_scores(start, chain.transitions, c)
        idx, count = _kernels.first_within(scores, tol)
        ties += count > 1
        y.extend(index_to_sequence(idx, m, c)[:min(T, L - len(y))])
    return tuple(y), ties


def _prefix_prob(ntp, prefix):
    prob = 1.0
    for k, tok in enumerate(prefix):
        probs = ntp.conditional_next(prefix[:k])
        prob *= probs[ntp.vocab_size if tok == NULL else tok]
    return prob


def beam_lookahead(ntp, spec, L=None):
    """Lookahead that carries the ``B`` most probable committed prefixes.

    Each round extends every beam by all ``c``-token continuations, ranks the
    pairs by the chain-rule probability of beam plus continuation, and keeps
    the ``B`` best distinct beams after committing ``T`` tokens. The most
    probable finished beam is returned.
    """
    L = ntp.L if L is None else L
    spec.check_length(L)
    beams = [((), 1.0)]
    while len(beams[0][0]) < L:
        length = len(beams[0][0])
        c = min(spec.K, L - length)
        H = min(spec.T, L - length)
        keys, scores = [], []
        for prefix, prob in beams:
            conts, cont_scores = continuation_scores(ntp, prefix, c)
            for cont, s in zip(conts, cont_scores):
                keys.append(prefix + cont[:H])
                scores.append(prob * s)
        beams = _select_beams(keys, np.array(scores), spec)
        beams = [(prefix, _prefix_prob(ntp, prefix)) for prefix in beams]
    finals = [prefix for prefix, _ in beams]
    best, _ = _pick(finals, np.array([prob for _, prob in beams]), spec)
    return best


def _select_beams(keys, scores, spec):
    chosen = []
    alive = np.ones(len(keys), dtype=bool)
    while len(chosen) < spec.B and alive.any():
        best = scores[alive].max()
        close = alive & (scores >= best * (1.0 - spec.tie_tolerance))
        distinct = list(dict.fromkeys(keys[k] for k in np.flatnonzero(close)))
        if len(distinct) > spec.B - len(chosen) and spec.tie_policy == "error_on_tie":
            raise TieDetected(distinct)
        pick = distinct[0]
        chosen.append(pick)
        alive &= np.array([k != pick for k in keys])
    return chosen


def temperature_scale(probs, gamma):
    """Rescale a conditional to ``p**gamma / sum(p**gamma)``.

    ``gamma=0`` gives the uniform law on the support, ``gamma=inf`` a point
    mass on the first argmax. Zero entries stay zero for every ``gamma``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if math.isnan(gamma) or gamma < 0:
        raise ValueError(f"temperature gamma must be in [0, inf], got {gamma}")
    support = probs > 0.0
    out = np.zeros_like(probs)
    if gamma == 1.0:
        return probs / probs.sum()
    if gamma == 0.0:
        out[support] = 1.0 / support.sum()
        return out
    if math.isinf(gamma):
        out[int(np.argmax(probs))] = 1.0
        return out
    logits = gamma * np.log(probs[support])
    weights = np.exp(logits - logits.max())
    out[support] = weights / weights.sum()
    return out


def softmax(logits, temperature=1.0):
    z = np.asarray(logits, dtype=np.float64) / temperature
    w = np.exp(z - z.max())
    return w / w.sum()


def _draw(rng, probs):
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(probs) - 1)


def random_sample(ntp, rng, L=None):
    """Draw each next token from the predictor's conditional."""
    return temp_scaled_sample(ntp, rng, L, 1.0)


def temp_scaled_sample(ntp, rng, L=None, gamma=1.0):
    L = ntp.L if L is None else L
    y = ()
    while len(y) < L:
        probs = temperature_scale(ntp.conditional_next(y), gamma)
        y = y + (_token(_draw(rng, probs), ntp.vocab_size),)
    return y


def sample_batch(ntp, rng, size, gamma=1.0, L=None):
    """``size`` independent draws of the (temperature-scaled) sampler, as an int array.

    Draws are processed position by position, grouped by shared prefix, so
    each distinct prefix is queried once per batch.
    """
    L = ntp.L if L is None else L
    V = ntp.vocab_size
    out = np.empty((size, L), dtype=np.int64)
    uniforms = rng.random((size, L))
    for pos in range(L):
        prefixes, inverse = np.unique(out[:, :pos], axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        for g, prefix in enumerate(prefixes):
            rows = np.flatnonzero(inverse == g)
            probs = temperature_scale(ntp.conditional_next(tuple(int(t) for t in prefix)), gamma)
            cdf = np.cumsum(probs)
            idx = np.searchsorted(cdf, uniforms[rows, pos] * cdf[-1], side="right")
            idx = np.minimum(idx, V)
            out[rows, pos] = np.where(idx == V, NULL, idx)
    return out


def decode(ntp, spec, rng=None, L=None):
    """Run the decoder described by ``spec`` once."""
    if spec.kind == "kt_lookahead":
        return kt_lookahead(ntp, spec, L)
    if spec.kind == "beam_lookahead":
        return beam_lookahead(ntp, spec, L)
    if rng is None:
        raise ValueError(f"{spec.kind} needs a random generator")
    if spec.kind == "random_sample":
        return random_sample(ntp, rng, L)
    return temp_scaled_sample(ntp, rng, L, spec.gamma)


def sampler_distribution(ntp, gamma=1.0, L=None, budget=None):
    """Exact output law of the sampler: product of (scaled) conditionals over the prefix tree."""
    L = ntp.L if L is None else L
    V = ntp.vocab_size
    check_budget(V ** L, budget)
    entries = {}

    def walk(prefix, prob):
        if len(prefix) == L:
            entries[prefix] = prob
            return
        probs = temperature_scale(ntp.conditional_next(prefix), gamma)
        for idx in range(V + 1):
            if probs[idx] > 0.0:
                walk(prefix + (_token(idx, V),), prob * probs[idx])

    walk((), 1.0)
    return TableDistribution(V, L, entries, atol=1e-9)


def output_distribution(spec, ntp, L=None, budget=None):
    """Exact distribution of the decoder's output under predictor ``ntp``."""
    L = ntp.L if L is None else L
    if spec.kind == "random_sample":
        return sampler_distribution(ntp, 1.0, L, budget)
    if spec.kind == "temp_scaled_sample":
        return sampler_distribution(ntp, spec.gamma, L, budget)
    check_budget(ntp.vocab_size ** L, budget)
    y = decode(ntp, spec, L=L)
    return TableDistribution(ntp.vocab_size, L, {y: 1.0})

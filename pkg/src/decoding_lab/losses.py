"""Loss functions, g-scores, the brute-force oracle and exact expected risk."""
import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .decoders import output_distribution, sampler_distribution, temperature_scale
from .distributions import (MarkovChainDistribution, TableDistribution, check_budget,
                            entropy, format_sequence, index_to_sequence, sequence_to_index)
from .errors import SupportViolation
from .ntp import NextTokenPredictor, wrap

ORACLE_DECIMALS = 15


@dataclass(frozen=True)
class LossSpec:
    kind: str = "ngram_hamming"
    N: int = 1

    def __post_init__(self):
        if self.kind not in ("ngram_hamming", "cross_entropy"):
            raise ValueError(f"unknown loss {self.kind!r}")
        if self.N < 1:
            raise ValueError("gram length N must be >= 1")

    def bound(self, L):
        """Largest value the loss can take on length-``L`` sequences."""
        if self.kind == "cross_entropy":
            return math.inf
        return L - self.N + 1


def ngram_hamming(yhat, y, N):
    """Number of length-``N`` windows on which ``yhat`` and ``y`` disagree."""
    if len(yhat) != len(y):
        raise ValueError("sequences must have equal length")
    if not 1 <= N <= len(y):
        raise ValueError(f"N={N} outside 1..{len(y)}")
    return sum(tuple(yhat[i:i + N]) != tuple(y[i:i + N]) for i in range(len(y) - N + 1))


def g_score(dist, y, N):
    """Sum over window starts of the marginal probability of ``y``'s N-gram there."""
    y = tuple(y)
    if len(y) != dist.L:
        raise ValueError(f"sequence length {len(y)} != L={dist.L}")
    total = 0.0
    for t in range(dist.L - N + 1):
        total += dist.ngram_marginal(t, y[t:t + N])
    return total


def expected_ngram_risk(dist, yhat, N):
    return (dist.L - N + 1) - g_score(dist, yhat, N)


@dataclass
class OracleResult:
    """Every candidate's g-score plus the argmax set after rounding."""

    N: int
    vocab_size: int
    L: int
    sequences: list
    g: np.ndarray
    rounded: np.ndarray
    optimal_set: list
    decimals: int = ORACLE_DECIMALS

    @property
    def best_g(self):
        return float(self.g.max())

    @property
    def optimal_risk(self):
        return (self.L - self.N + 1) - self.best_g

    def contains(self, y):
        return tuple(y) in set(self.optimal_set)

    def write_csv(self, path):
        optimal = set(self.optimal_set)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sequence", "g", "rounded_g", "is_optimal"])
            for seq, g, r in zip(self.sequences, self.g, self.rounded):
                writer.writerow([format_sequence(seq, self.vocab_size), repr(float(g)),
                                 repr(float(r)), int(seq in optimal)])


def gram_tables(chain, N):
    """``(L - N + 1, m**N)`` array of gram marginals, one row per window start."""
    return np.stack([chain.gram_table(t, N) for t in range(chain.L - N + 1)])


def markov_g_scores(chain, N):
    """g-score of all ``m**L`` paths (lexicographic order) from forward marginals."""
    check_budget(chain.m ** chain.L)
    return _kernels.ngram_scores(gram_tables(chain, N), chain.m, chain.L, N)


def oracle_optimal(source, N, decimals=ORACLE_DECIMALS, budget=None):
    """Enumerate every candidate output and return the full g-score argmax set.

    ``source`` may be a distribution or a ``NextTokenPredictor``; a predictor
    is first expanded into its joint, which reads every conditional on the
    positive-probability prefix tree. Scores are rounded to ``decimals``
    places before the argmax so float noise does not split genuine ties.
    """
    if isinstance(source, NextTokenPredictor):
        source = sampler_distribution(source, 1.0, budget=budget)
    if not 1 <= N <= source.L:
        raise ValueError(f"N={N} outside 1..{source.L}")
    check_budget(source.sequence_space_size(), budget)
    if isinstance(source, MarkovChainDistribution):
        g = markov_g_scores(source, N)
        rounded = _kernels.round_scores(g, decimals)
        best = np.flatnonzero(rounded == rounded.max())
        m, L = source.m, source.L
        sequences = _LazySequences(m, L)
        optimal = [index_to_sequence(int(k), m, L) for k in best]
    else:
        sequences = list(source.sequences())
        tables = [source.gram_marginals(t, N) for t in range(source.L - N + 1)]
        g = np.empty(len(sequences))
        for k, seq in enumerate(sequences):
            total = 0.0
            for t, table in enumerate(tables):
                total += table.get(seq[t:t + N], 0.0)
            g[k] = total
        rounded = _kernels.round_scores(g, decimals)
        optimal = [sequences[k] for k in np.flatnonzero(rounded == rounded.max())]
    return OracleResult(N, source.vocab_size, source.L, sequences, g, rounded, optimal, decimals)


class _LazySequences:
    """Index-addressable view of all ``m**L`` paths without materialising tuples."""

    def __init__(self, m, L):
        self.m, self.L = m, L

    def __len__(self):
        return self.m ** self.L

    def __getitem__(self, k):
        return index_to_sequence(k, self.m, self.L)

    def __iter__(self):
        return (index_to_sequence(k, self.m, self.L) for k in range(len(self)))

    def index(self, seq):
        return sequence_to_index(seq, self.m)


def cross_entropy(p_true, p_dec):
    """E_{y ~ p_true}[-log p_dec(y)]; ``inf`` when ``p_dec`` misses p_true's support."""
    if p_true.vocab_size != p_dec.vocab_size or p_true.L != p_dec.L:
        raise ValueError("distributions live on different sequence spaces")
    total = 0.0
    for seq, p in p_true.support():
        q = p_dec.sequence_prob(seq)
        if q <= 0.0:
            return math.inf
        total -= p * math.log(q)
    return total


@dataclass
class InputRisk:
    input_id: str
    weight: float
    risk: float
    optimal_risk: float
    optimal_set: list
    decoder_output: TableDistribution
    is_optimal: bool
    tie_flag: bool


@dataclass
class RiskReport:
    risk: float
    optimal_risk: float
    is_optimal: bool
    tie_flag: bool
    per_input: list = field(default_factory=list)

    @property
    def optimal_set(self):
        if len(self.per_input) != 1:
            raise ValueError("optimal_set is per input; use per_input for several inputs")
        return self.per_input[0].optimal_set

    @property
    def decoder_output(self):
        if len(self.per_input) != 1:
            raise ValueError("decoder_output is per input; use per_input for several inputs")
        return self.per_input[0].decoder_output

    def to_json(self):
        def seqs(items, V):
            return [format_sequence(s, V) for s in items]

        out = {"risk": _json_float(self.risk), "optimal_risk": _json_float(self.optimal_risk),
               "is_optimal": self.is_optimal, "tie_flag": self.tie_flag, "inputs": []}
        for item in self.per_input:
            V = item.decoder_output.vocab_size
            out["inputs"].append({
                "input_id": item.input_id,
                "weight": item.weight,
                "risk": _json_float(item.risk),
                "optimal_risk": _json_float(item.optimal_risk),
                "optimal_set": seqs(item.optimal_set, V),
                "decoder_output": {format_sequence(s, V): p
                                   for s, p in sorted(item.decoder_output.support())},
                "is_optimal": item.is_optimal,
                "tie_flag": item.tie_flag,
            })
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


def _json_float(x):
    return "inf" if math.isinf(x) else x


def expected_risk(model, spec, loss, predictors=None, budget=None):
    """Exact risk of decoder ``spec`` averaged over the inputs of ``model``.

    ``predictors`` maps input ids to the next-token predictor the decoder sees
    for that input; by default each input's own distribution is wrapped.
    """
    predictors = predictors or {}
    per_input = []
    for input_id, weight, dist in model.inputs:
        ntp = predictors.get(input_id) or wrap(dist)
        p_dec = output_distribution(spec, ntp, dist.L, budget)
        if loss.kind == "ngram_hamming":
            if loss.N > dist.L:
                raise ValueError(f"N={loss.N} exceeds L={dist.L}")
            oracle = oracle_optimal(dist, loss.N, budget=budget)
            optimal = set(oracle.optimal_set)
            risk = 0.0
            for yhat, q in p_dec.support():
                risk += q * expected_ngram_risk(dist, yhat, loss.N)
            item = InputRisk(input_id, weight, risk, oracle.optimal_risk, oracle.optimal_set, p_dec,
                             all(y in optimal for y, _ in p_dec.support()),
                             len(oracle.optimal_set) > 1)
        else:
            risk = cross_entropy(dist, p_dec)
            best = entropy(dist)
            item = InputRisk(input_id, weight, risk, best, [], p_dec, risk <= best + 1e-9, False)
        per_input.append(item)
    risk = sum(i.weight * i.risk for i in per_input if i.weight > 0)
    best = sum(i.weight * i.optimal_risk for i in per_input if i.weight > 0)
    return RiskReport(risk, best, all(i.is_optimal for i in per_input if i.weight > 0),
                      any(i.tie_flag for i in per_input), per_input)


@dataclass
class TemperatureBounds:
    """Linear-in-gamma envelopes around the cross entropy of temperature sampling.

    ``exact`` is E_{y~p}[-log p^gamma(y)]. ``lower`` and ``upper`` are the
    envelopes for this ``gamma``; C1 == C3 by construction.
    """

    gamma: float
    C1: float
    C2: float
    C3: float
    lower: float
    upper: float
    exact: float
    uniform_level: float

    def brackets(self, slack=0.0):
        return self.lower - slack <= self.exact <= self.upper + slack


def temp_bound_constants(p, gamma):
    """Per-position constants and the resulting bounds for temperature ``gamma``.

    Needs ``p`` to give every token positive probability after every prefix.
    """
    if p.allows_null:
        raise SupportViolation("bounds assume every sequence has full length")
    V, L = p.vocab_size, p.L
    ent = np.zeros(L)
    max_log = np.zeros(L)
    min_log = np.zeros(L)
    exact = np.zeros(L)
    level = [((), 1.0)]
    for i in range(L):
        nxt = []
        for prefix, w in level:
            cond = p.conditional_next(prefix)[:V]
            if (cond <= 0.0).any():
                raise SupportViolation(f"zero conditional after prefix {prefix}")
            logs = np.log(cond)
            scaled = temperature_scale(cond, gamma)
            ent[i] += w * float(-(cond * logs).sum())
            max_log[i] += w * float(logs.max())
            min_log[i] += w * float(logs.min())
            exact[i] += w * float(-(cond * np.log(scaled)).sum())
            nxt.extend((prefix + (v,), w * cond[v]) for v in range(V))
        level = nxt
    C1 = float((ent + max_log).sum())
    C2 = float(-(ent + min_log).sum())
    C3 = C1
    uniform = L * math.log(V)
    if gamma > 1:
        lower = gamma * C1
    elif gamma < 1:
        lower = uniform - gamma * C2
    else:
        lower = max(gamma * C1, uniform - gamma * C2)
    upper = gamma * C3 + uniform
    return TemperatureBounds(gamma, C1, C2, C3, lower, upper, float(exact.sum()), uniform)

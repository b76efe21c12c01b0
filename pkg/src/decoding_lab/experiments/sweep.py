"""Optimality of lookahead decoding on random Dirichlet Markov chains.

For every ``(alpha, m)`` group we draw ``trials`` chains. Each chain is scored
at every length ``L``, gram size ``N`` and lookahead depth ``K`` of the grid:
the decoder is optimal for a trial when its output lies in the oracle's
argmax set (g-scores rounded to 15 decimals).
"""
import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .. import _kernels
from ..decoders import markov_kt_lookahead
from ..distributions import DEFAULT_BUDGET, sample_dirichlet_chain
from ..losses import ORACLE_DECIMALS, gram_tables

CSV_HEADER = ["alpha", "m", "L", "N", "K", "T", "mean_optimal_fraction",
              "mean_kl_from_uniform", "trials", "tie_rate"]
T_MODES = ("one", "K")


@dataclass(frozen=True)
class SweepConfig:
    alphas: tuple = (0.1, 0.25, 0.5, 0.75, 1.0, 10.0)
    node_counts: tuple = (2, 4, 6, 8)
    lengths: tuple = (2, 4, 6, 8)
    values: tuple = (1, 2, 4, 6, 8)
    t_modes: tuple = ("one",)
    trials: int = 200
    master_seed: int = 0
    budget: int = DEFAULT_BUDGET
    tie_tolerance: float = 1e-12

    def __post_init__(self):
        for name in ("alphas", "node_counts", "lengths", "values", "t_modes"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if any(not a > 0 for a in self.alphas):
            raise ValueError("alphas must be positive")
        if any(m < 2 for m in self.node_counts):
            raise ValueError("node counts must be >= 2")
        if any(L < 1 for L in self.lengths) or any(v < 1 for v in self.values):
            raise ValueError("lengths and N/K values must be positive")
        bad = set(self.t_modes) - set(T_MODES)
        if bad or not self.t_modes:
            raise ValueError(f"t_modes must be drawn from {T_MODES}, got {self.t_modes}")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    @classmethod
    def full_scale(cls):
        return cls()

    @classmethod
    def ci_scale(cls):
        return cls(node_counts=(2, 8), lengths=(2, 4, 6), trials=50)

    def with_overrides(self, overrides):
        """Apply ``key=value`` strings; list fields take comma-separated values."""
        known = {f.name: f for f in fields(self)}
        updates = {}
        for item in overrides:
            key, sep, raw = item.partition("=")
            key = key.strip()
            if not sep or key not in known:
                raise ValueError(f"unknown sweep override {item!r}; known keys: {sorted(known)}")
            updates[key] = _parse_field(key, raw)
        merged = asdict(self)
        merged.update(updates)
        return SweepConfig(**merged)

    @classmethod
    def from_json(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown sweep config keys {sorted(unknown)}")
        return cls(**data)

    def to_json(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}


def _parse_field(key, raw):
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if key == "alphas":
        return tuple(float(p) for p in parts)
    if key in ("node_counts", "lengths", "values"):
        return tuple(int(p) for p in parts)
    if key == "t_modes":
        return tuple(parts)
    if key == "tie_tolerance":
        return float(raw)
    return int(raw)


@dataclass(frozen=True)
class SweepRow:
    alpha: float
    m: int
    L: int
    N: int
    K: int
    T: int
    mean_optimal_fraction: float
    mean_kl_from_uniform: float
    trials: int
    tie_rate: float


@dataclass
class SweepResult:
    rows: list
    skipped: list

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([repr(r.alpha), r.m, r.L, r.N, r.K, r.T, repr(r.mean_optimal_fraction),
                             repr(r.mean_kl_from_uniform), r.trials, repr(r.tie_rate)])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path):
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != CSV_HEADER:
                raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
            for rec in reader:
                rows.append(SweepRow(float(rec["alpha"]), int(rec["m"]), int(rec["L"]), int(rec["N"]),
                                     int(rec["K"]), int(rec["T"]), float(rec["mean_optimal_fraction"]),
                                     float(rec["mean_kl_from_uniform"]), int(rec["trials"]),
                                     float(rec["tie_rate"])))
        return cls(rows, [])


def trial_seed(master_seed, alpha_index, m_index, trial):
    """Independent stream per trial, fixed by its grid coordinates alone."""
    return np.random.SeedSequence([master_seed, alpha_index, m_index, trial])


def cells(config, m):
    """``(L, N, K, T)`` cells evaluated for chains with ``m`` nodes, and skipped lengths."""
    out, skipped = [], []
    for L in sorted(set(config.lengths)):
        if m ** L > config.budget:
            skipped.append(L)
            continue
        grid = sorted(v for v in set(config.values) if v <= L)
        for N in grid:
            for K in grid:
                for T in sorted({1 if mode == "one" else K for mode in config.t_modes}):
                    out.append((L, N, K, T))
    return out, skipped


def run_trial(config, alpha_index, m_index, trial):
    """Optimality and tie indicators for one chain over every cell, plus KL per length."""
    alpha = config.alphas[alpha_index]
    m = config.node_counts[m_index]
    grid, _ = cells(config, m)
    lengths = sorted({c[0] for c in grid})
    if not lengths:
        return {}, {}
    rng = np.random.default_rng(trial_seed(config.master_seed, alpha_index, m_index, trial))
    chain = sample_dirichlet_chain(rng, m, alpha, max(lengths))
    indicators, kls = {}, {}
    for L in lengths:
        ch = chain.with_length(L)
        kls[L] = L * math.log(m) - ch.path_entropy()
        decoded = {}
        best = {}
        for (_, N, K, T) in (c for c in grid if c[0] == L):
            if N not in best:
                # rounding is monotone, so the rounded maximum is the maximum rounded score
                tables = gram_tables(ch, N)
                top = _kernels.max_ngram_score(tables, m, L, N)
                best[N] = (tables, _kernels.round_scores(np.array([top]), ORACLE_DECIMALS)[0])
            if (K, T) not in decoded:
                decoded[(K, T)] = markov_kt_lookahead(ch, K, T, config.tie_tolerance)
            tables, top = best[N]
            seq, ties = decoded[(K, T)]
            g = _kernels.path_ngram_score(tables, seq, m, N)
            hit = _kernels.round_scores(np.array([g]), ORACLE_DECIMALS)[0] == top
            indicators[(L, N, K, T)] = (bool(hit), ties > 0)
    return indicators, kls


def _run_chunk(args):
    config, jobs = args
    return [run_trial(config, a, mi, t) for a, mi, t in jobs]


def run_sweep(config, workers=1, chunk_trials=10):
    """Run the grid; output is independent of ``workers``."""
    jobs = [(a, mi, t) for a in range(len(config.alphas)) for mi in range(len(config.node_counts))
            for t in range(config.trials)]
    chunks = [jobs[i:i + chunk_trials] for i in range(0, len(jobs), chunk_trials)]
    if workers <= 1:
        outputs = [r for chunk in chunks for r in _run_chunk((config, chunk))]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = [r for part in pool.map(_run_chunk, [(config, c) for c in chunks]) for r in part]
    by_job = dict(zip(jobs, outputs))

    rows, skipped = [], []
    for a, alpha in enumerate(config.alphas):
        for mi, m in enumerate(config.node_counts):
            grid, skipped_lengths = cells(config, m)
            skipped.extend((alpha, m, L) for L in skipped_lengths)
            trials = [by_job[(a, mi, t)] for t in range(config.trials)]
            for cell in grid:
                L = cell[0]
                opt = [tr[0][cell][0] for tr in trials]
                ties = [tr[0][cell][1] for tr in trials]
                kl = [tr[1][L] for tr in trials]
                n = config.trials
                rows.append(SweepRow(float(alpha), m, L, cell[1], cell[2], cell[3],
                                     sum(opt) / n, sum(kl) / n, n, sum(ties) / n))
    return SweepResult(rows, skipped)


def default_workers():
    return os.cpu_count() or 1

"""Query-only next-token predictors.

Decoders never see a joint probability: everything goes through
``NextTokenPredictor.conditional_next``. The predictor counts the distinct
conditional queries it answers, which is the cost model used when arguing
about exhaustive search.
"""
import threading
from dataclasses import dataclass

import numpy as np

from .distributions import NULL, check_sequence
from .errors import UndefinedConditional


class NextTokenPredictor:
    """Wraps a ``prefix -> conditional vector`` function and counts queries.

    With ``cache=True`` a repeated prefix is answered from memory and does not
    increment ``query_count``. Without the cache every call counts.
    """

    def __init__(self, conditional_fn, vocab_size, L, cache=True):
        self._fn = conditional_fn
        self.vocab_size = int(vocab_size)
        self.L = int(L)
        self._cache = {} if cache else None
        self._count = 0
        self._lock = threading.Lock()

    @property
    def query_count(self):
        return self._count

    @property
    def values_read(self):
        """Distinct ``(prefix, token)`` probabilities handed out so far."""
        return self._count * self.vocab_size

    def reset_count(self):
        with self._lock:
            self._count = 0
            if self._cache is not None:
                self._cache.clear()

    def conditional_next(self, prefix):
        prefix = tuple(prefix)
        if self._cache is not None:
            hit = self._cache.get(prefix)
            if hit is not None:
                return hit
        probs = np.array(self._fn(prefix), dtype=np.float64)
        probs.flags.writeable = False
        with self._lock:
            self._count += 1
            if self._cache is not None:
                self._cache[prefix] = probs
        return probs

    def __repr__(self):
        return f"NextTokenPredictor(vocab_size={self.vocab_size}, L={self.L}, queries={self._count})"


def wrap(dist, cache=True):
    """Predictor answering ``dist``'s conditionals and nothing else."""
    return NextTokenPredictor(dist.conditional_next, dist.vocab_size, dist.L, cache=cache)


@dataclass(frozen=True)
class PerturbationSchedule:
    """Non-increasing mixing weights ``eps_0 >= eps_1 >= ...`` in ``[0, 1]``."""

    epsilons: tuple

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps:
            raise ValueError("schedule needs at least one step")
        if any(not 0.0 <= e <= 1.0 for e in eps):
            raise ValueError("mixing weights must lie in [0, 1]")
        if any(b > a for a, b in zip(eps, eps[1:])):
            raise ValueError("mixing weights must be non-increasing")
        object.__setattr__(self, "epsilons", eps)

    @classmethod
    def geometric(cls, steps, ratio=0.5):
        """``eps_i = ratio**i`` for ``i = 0 .. steps``."""
        return cls(tuple(ratio ** i for i in range(steps + 1)))

    def __len__(self):
        return len(self.epsilons)

    def __getitem__(self, i):
        return self.epsilons[i]


def legal_tokens(dist, prefix):
    """Boolean mask over ``vocab_size + 1`` slots of tokens allowed after ``prefix``."""
    mask = np.zeros(dist.vocab_size + 1, dtype=bool)
    if NULL in prefix:
        mask[-1] = True
    else:
        mask[:-1] = True
        mask[-1] = dist.allows_null
    return mask


def mixed_conditional(dist, prefix, eps):
    prefix = check_sequence(prefix, dist.vocab_size)
    mask = legal_tokens(dist, prefix)
    uniform = mask / mask.sum()
    try:
        true = dist.conditional_next(prefix)
    except UndefinedConditional:
        return uniform
    return (1.0 - eps) * true + eps * uniform


def perturbed_predictor(true_dist, schedule, step, cache=True):
    """Predictor at training step ``step``: mix ``true_dist`` with uniform noise.

    Every conditional is ``(1 - eps) * p(. | prefix) + eps * uniform`` over the
    tokens legal after ``prefix``. Prefixes outside ``true_dist``'s support get
    the uniform conditional.
    """
    eps = schedule[step] if isinstance(schedule, PerturbationSchedule) else float(schedule)
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"mixing weight {eps} outside [0, 1]")
    return NextTokenPredictor(lambda prefix: mixed_conditional(true_dist, prefix, eps),
                              true_dist.vocab_size, true_dist.L, cache=cache)

"""Hand-built witness distributions used by the verification suite."""
import numpy as np

from ..distributions import MarkovChainDistribution, TableDistribution


def _seq(*parts):
    out = ()
    for token, count in parts:
        out += (token,) * count
    return out


def lookahead_split(L=4, K2=2):
    """Greedy wins, depth-``K2`` lookahead loses (Hamming-type losses, N < L)."""
    if not 2 <= K2 < L:
        raise ValueError("need 2 <= K2 < L")
    return TableDistribution(3, L, {
        _seq((0, L)): 0.28,
        _seq((0, K2 - 1), (1, 1), (0, L - K2)): 0.12,
        _seq((2, 1), (0, L - 1)): 0.23,
        _seq((1, L)): 0.37,
    })


def lookahead_split_full(L=4, K2=2):
    """Greedy wins, depth-``K2`` lookahead loses under the 0-1 loss (N = L)."""
    if not 2 <= K2 < L:
        raise ValueError("need 2 <= K2 < L")
    return TableDistribution(2, L, {
        _seq((0, L)): 0.408,
        _seq((0, K2 - 1), (1, L - K2 + 1)): 0.102,
        _seq((1, K2), (0, L - K2)): 0.2401,
        _seq((1, L)): 0.2499,
    })


def commit_split(K=2, T=1, L=4):
    """Committing ``T + 1`` tokens beats committing ``T`` (N < L)."""
    _check_commit(K, T, L)
    return TableDistribution(3, L, {
        _seq((0, L)): 0.27675,
        _seq((1, 1), (0, L - 1)): 0.25,
        _seq((0, K), (2, 1), (0, L - K - 1)): 0.03075,
        _seq((0, T), (1, L - T)): 0.2925,
        _seq((0, T), (2, 1), (0, L - T - 1)): 0.15,
    })


def commit_split_full(K=2, T=1, L=4):
    """Committing ``T + 1`` tokens beats committing ``T`` under the 0-1 loss."""
    _check_commit(K, T, L)
    return TableDistribution(3, L, {
        _seq((0, K), (2, L - K)): 0.051,
        _seq((0, L)): 0.459,
        _seq((0, T), (1, L - T)): 0.2499,
        _seq((0, T), (1, K), (0, L - T - K)): 0.2401,
    })


def _check_commit(K, T, L):
    if not (2 <= K <= L - 1 and 1 <= T < K and K < L - T):
        raise ValueError(f"need 2 <= K <= L-1, 1 <= T < K and K < L-T; got K={K}, T={T}, L={L}")


def cycle_trap_chain(K=3, perturbation=1e-4):
    """Markov chain on nodes ``1..K, A, B`` whose greedy cycle misses the A-B loop.

    Node ``j`` (1-based) is index ``j - 1``; A is index ``K`` and B is ``K + 1``.
    Edges not fixed below share the leftover row mass equally, then each gets
    ``perturbation * rank`` added (rank by target index) and the row is
    renormalised. The initial law is uniform, perturbed so that node 1 leads.
    The chain's sequences have length ``2 * K``.
    """
    m = K + 2
    a, b = K, K + 1
    fixed = {}
    for j in range(K - 1):
        fixed[(j, j + 1)] = 0.99
    last = K - 1
    fixed[(last, 0)] = 1.0 / m + 0.01
    fixed[(last, a)] = 1.01 / m
    fixed[(last, b)] = 1.02 / m
    fixed[(a, b)] = 0.985
    fixed[(b, a)] = 0.98
    P = np.zeros((m, m))
    for i in range(m):
        free = [j for j in range(m) if (i, j) not in fixed]
        row_fixed = sum(v for (r, _), v in fixed.items() if r == i)
        for (r, j), v in fixed.items():
            if r == i:
                P[i, j] = v
        share = (1.0 - row_fixed) / len(free)
        for rank, j in enumerate(free):
            P[i, j] = share + perturbation * rank
        P[i] /= P[i].sum()
    initial = np.full(m, 1.0 / m) + perturbation * np.arange(m - 1, -1, -1)
    initial /= initial.sum()
    return MarkovChainDistribution(initial, P, 2 * K)


def uniform_table(vocab_size, L):
    from itertools import product
    n = vocab_size ** L
    return TableDistribution(vocab_size, L, {s: 1.0 / n for s in product(range(vocab_size), repeat=L)})


def point_mass(vocab_size, y):
    return TableDistribution(vocab_size, len(y), {tuple(y): 1.0})


def random_table(rng, vocab_size, L, alpha=1.0, density=1.0):
    """Dirichlet(alpha) weights on a random subset (``density``) of all sequences."""
    from itertools import product
    seqs = list(product(range(vocab_size), repeat=L))
    keep = rng.random(len(seqs)) < density
    if not keep.any():
        keep[rng.integers(len(seqs))] = True
    chosen = [s for s, k in zip(seqs, keep) if k]
    w = rng.dirichlet(np.full(len(chosen), alpha))
    return TableDistribution(vocab_size, L, dict(zip(chosen, w)), atol=1e-9)

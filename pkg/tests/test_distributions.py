import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoding_lab.distributions import (NULL, ConditionalModel, MarkovChainDistribution, TableDistribution,
                                        check_budget, distribution_from_json, entropy, format_sequence,
                                        index_to_sequence, iter_sequences, kl_divergence, markov_to_table,
                                        model_from_json, parse_sequence, sample_dirichlet_chain,
                                        sequence_to_index)
from decoding_lab.errors import BudgetExceeded, UndefinedConditional
from decoding_lab.experiments import fixtures


def test_table_conditionals_follow_chain_rule():
    p = fixtures.lookahead_split()
    assert np.allclose(p.conditional_next(()), [0.40, 0.37, 0.23, 0.0])
    assert np.allclose(p.conditional_next((0,)), [0.28 / 0.40, 0.12 / 0.40, 0.0, 0.0])
    for seq, prob in p.support():
        chain = math.prod(p.conditional_next(seq[:k])[seq[k]] for k in range(p.L))
        assert chain == pytest.approx(prob, abs=1e-15)


def test_zero_mass_prefix_is_undefined():
    p = fixtures.lookahead_split()
    with pytest.raises(UndefinedConditional) as err:
        p.conditional_next((2, 2))
    assert err.value.prefix == (2, 2)


def test_table_rejects_bad_input():
    with pytest.raises(ValueError):
        TableDistribution(2, 2, {"00": 0.5, "11": 0.4})
    with pytest.raises(ValueError):
        TableDistribution(2, 2, {"02": 1.0})
    with pytest.raises(ValueError):
        TableDistribution(2, 3, {(0, NULL, 1): 1.0})
    with pytest.raises(ValueError):
        TableDistribution(2, 2, {"00": 1.5, "11": -0.5})


def test_null_suffix_keeps_mass_on_null():
    p = TableDistribution(2, 3, {(0, NULL, NULL): 0.5, (1, 1, 0): 0.5})
    assert p.allows_null
    assert np.array_equal(p.conditional_next((0,)), [0.0, 0.0, 1.0])
    assert np.array_equal(p.conditional_next((0, NULL)), [0.0, 0.0, 1.0])
    assert format_sequence((0, NULL, NULL)) == "0**"
    assert parse_sequence("0**") == (0, NULL, NULL)


def test_iter_sequences_orders_null_last():
    seqs = list(iter_sequences(2, 2, allow_null=True))
    assert seqs == [(0, 0), (0, 1), (0, NULL), (1, 0), (1, 1), (1, NULL), (NULL, NULL)]


def test_format_uses_commas_for_large_vocabularies():
    assert format_sequence((10, 2), vocab_size=11) == "10,2"
    assert parse_sequence("10,2") == (10, 2)


def test_markov_path_probability_and_marginals():
    P = [[0.9, 0.1], [0.4, 0.6]]
    mc = MarkovChainDistribution([0.3, 0.7], P, 3)
    assert mc.sequence_prob((0, 0, 1)) == pytest.approx(0.3 * 0.9 * 0.1)
    assert np.allclose(mc.marginals[1], [0.3 * 0.9 + 0.7 * 0.4, 0.3 * 0.1 + 0.7 * 0.6])
    table = markov_to_table(mc)
    for start in range(3):
        for N in range(1, 4 - start):
            for gram, mass in table.gram_marginals(start, N).items():
                assert mc.ngram_marginal(start, gram) == pytest.approx(mass, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.integers(2, 4), L=st.integers(1, 5),
       alpha=st.sampled_from([0.1, 1.0, 10.0]))
def test_path_entropy_matches_enumeration(seed, m, L, alpha):
    mc = sample_dirichlet_chain(np.random.default_rng(seed), m, alpha, L)
    probs = mc.path_probs()
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert mc.path_entropy() == pytest.approx(entropy(markov_to_table(mc)), abs=1e-10)


def test_index_round_trip():
    for k in range(3 ** 4):
        assert sequence_to_index(index_to_sequence(k, 3, 4), 3) == k


def test_dirichlet_chain_is_stochastic_and_seeded():
    a = sample_dirichlet_chain(np.random.default_rng(5), 6, 0.1, 4)
    b = sample_dirichlet_chain(np.random.default_rng(5), 6, 0.1, 4)
    assert np.array_equal(a.transitions, b.transitions)
    assert np.allclose(a.transitions.sum(axis=1), 1.0)
    assert a.initial.sum() == pytest.approx(1.0)


def test_kl_divergence_basics():
    p = fixtures.lookahead_split()
    u = fixtures.uniform_table(3, 4)
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence(p, u) == pytest.approx(4 * math.log(3) - entropy(p))
    assert kl_divergence(u, p) == math.inf


def test_budget_guard(monkeypatch):
    check_budget(8 ** 8)
    with pytest.raises(BudgetExceeded):
        check_budget(8 ** 8 + 1)
    monkeypatch.setenv("DECODING_LAB_BUDGET", "10")
    with pytest.raises(BudgetExceeded, match="instance too large"):
        check_budget(11)


def test_json_round_trip():
    for dist in (fixtures.commit_split(), fixtures.cycle_trap_chain()):
        back = distribution_from_json(dist.to_json())
        for seq, prob in dist.support():
            assert back.sequence_prob(seq) == pytest.approx(prob, abs=1e-15)


def test_conditional_model_validation():
    p = fixtures.lookahead_split()
    with pytest.raises(ValueError):
        ConditionalModel([("a", 0.5, p)])
    with pytest.raises(ValueError):
        ConditionalModel([("a", 0.5, p), ("b", 0.5, fixtures.uniform_table(3, 3))])
    model = model_from_json({"type": "conditional", "inputs": [
        {"id": "a", "weight": 0.25, "distribution": p.to_json()},
        {"id": "b", "weight": 0.75, "distribution": fixtures.uniform_table(3, 4).to_json()}]})
    assert [i for i, _, _ in model.inputs] == ["a", "b"]

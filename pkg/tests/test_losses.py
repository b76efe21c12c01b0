import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoding_lab.decoders import DecoderSpec, sampler_distribution
from decoding_lab.distributions import ConditionalModel, entropy, markov_to_table, sample_dirichlet_chain
from decoding_lab.errors import BudgetExceeded, SupportViolation
from decoding_lab.experiments import fixtures
from decoding_lab.losses import (LossSpec, cross_entropy, expected_ngram_risk, expected_risk, g_score,
                                 ngram_hamming, oracle_optimal, temp_bound_constants)
from decoding_lab.ntp import perturbed_predictor, wrap


def test_ngram_hamming_counts_windows():
    assert ngram_hamming((0, 1, 1, 0), (0, 1, 0, 0), 1) == 1
    assert ngram_hamming((0, 1, 1, 0), (0, 1, 0, 0), 2) == 2
    assert ngram_hamming((0, 1, 1, 0), (0, 1, 0, 0), 4) == 1
    assert ngram_hamming((0, 1), (0, 1), 2) == 0
    with pytest.raises(ValueError):
        ngram_hamming((0, 1), (0, 1), 3)


def test_g_score_of_witness():
    p = fixtures.lookahead_split()
    assert g_score(p, (0, 0, 0, 0), 1) == pytest.approx(2.17, abs=1e-12)
    assert g_score(p, (1, 1, 1, 1), 1) == pytest.approx(1.60, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), V=st.integers(2, 3), L=st.integers(1, 4), data=st.data())
def test_risk_identity(seed, V, L, data):
    N = data.draw(st.integers(1, L))
    p = fixtures.random_table(np.random.default_rng(seed), V, L, alpha=0.5, density=0.7)
    for yhat in itertools.islice(itertools.product(range(V), repeat=L), 5):
        direct = sum(prob * ngram_hamming(yhat, y, N) for y, prob in p.support())
        assert direct == pytest.approx(expected_ngram_risk(p, yhat, N), abs=1e-10)


def test_oracle_set_contains_every_rounded_tie():
    u = fixtures.uniform_table(2, 3)
    res = oracle_optimal(u, 1)
    assert len(res.optimal_set) == 8
    assert res.best_g == pytest.approx(1.5)


def test_oracle_markov_matches_table():
    chain = sample_dirichlet_chain(np.random.default_rng(4), 3, 0.3, 4)
    table = markov_to_table(chain)
    for N in range(1, 5):
        a, b = oracle_optimal(chain, N), oracle_optimal(table, N)
        assert a.optimal_set == b.optimal_set
        assert np.allclose(a.g, b.g, atol=1e-14)


def test_oracle_from_predictor_and_budget():
    p = fixtures.lookahead_split()
    assert oracle_optimal(wrap(p), 1).optimal_set == [(0, 0, 0, 0)]
    with pytest.raises(BudgetExceeded):
        oracle_optimal(p, 1, budget=10)


def test_oracle_csv(tmp_path):
    res = oracle_optimal(fixtures.lookahead_split_full(), 4)
    path = tmp_path / "o.csv"
    res.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "sequence,g,rounded_g,is_optimal"
    assert "0000,0.408,0.408,1" in lines


def test_expected_risk_deterministic_and_sampler():
    p = fixtures.lookahead_split()
    model = ConditionalModel.single(p)
    greedy = expected_risk(model, DecoderSpec("kt_lookahead"), LossSpec("ngram_hamming", 1))
    assert greedy.risk == pytest.approx(4 - 2.17) and greedy.is_optimal
    assert greedy.decoder_output.sequence_prob((0, 0, 0, 0)) == 1.0
    deeper = expected_risk(model, DecoderSpec("kt_lookahead", K=2), LossSpec("ngram_hamming", 1))
    assert deeper.risk == pytest.approx(4 - 1.60) and not deeper.is_optimal
    sampler = expected_risk(model, DecoderSpec("random_sample"), LossSpec("ngram_hamming", 1))
    expect = sum(q * (4 - g_score(p, y, 1)) for y, q in p.support())
    assert sampler.risk == pytest.approx(expect)
    ce = expected_risk(model, DecoderSpec("random_sample"), LossSpec("cross_entropy"))
    assert ce.risk == pytest.approx(entropy(p)) and ce.is_optimal
    ce_greedy = expected_risk(model, DecoderSpec("kt_lookahead"), LossSpec("cross_entropy"))
    assert ce_greedy.risk == math.inf
    assert '"risk": "inf"' in ce_greedy.dumps()


def test_expected_risk_weights_inputs():
    a, b = fixtures.lookahead_split(), fixtures.lookahead_split(L=4, K2=3)
    model = ConditionalModel([("a", 0.25, a), ("b", 0.75, b)])
    rep = expected_risk(model, DecoderSpec("kt_lookahead"), LossSpec("ngram_hamming", 1))
    assert rep.risk == pytest.approx(0.25 * rep.per_input[0].risk + 0.75 * rep.per_input[1].risk)
    with pytest.raises(ValueError):
        rep.optimal_set


def test_expected_risk_with_supplied_predictor():
    p = fixtures.lookahead_split()
    model = ConditionalModel.single(p)
    rep = expected_risk(model, DecoderSpec("kt_lookahead"), LossSpec("ngram_hamming", 1),
                        predictors={"x0": perturbed_predictor(p, 0.9, 0)})
    assert rep.per_input[0].decoder_output.vocab_size == 3


def test_cross_entropy_decomposes():
    p = fixtures.random_table(np.random.default_rng(1), 2, 3, alpha=1.0)
    q = sampler_distribution(perturbed_predictor(p, 0.25, 0))
    from decoding_lab.distributions import kl_divergence
    assert cross_entropy(p, q) - entropy(p) == pytest.approx(kl_divergence(p, q), abs=1e-12)


def test_temperature_bounds_bracket_and_limits():
    p = fixtures.random_table(np.random.default_rng(2), 3, 3, alpha=1.0)
    for g in (0.25, 0.5, 2.0, 4.0, 8.0):
        b = temp_bound_constants(p, g)
        assert b.brackets() and b.C1 == b.C3 and b.C1 >= 0 and b.C2 >= 0
    one = temp_bound_constants(p, 1.0)
    assert one.exact == pytest.approx(entropy(p), abs=1e-12)
    zero = temp_bound_constants(p, 0.0)
    assert zero.exact == pytest.approx(3 * math.log(3), abs=1e-12)


def test_temperature_bounds_need_full_support():
    with pytest.raises(SupportViolation):
        temp_bound_constants(fixtures.lookahead_split(), 2.0)

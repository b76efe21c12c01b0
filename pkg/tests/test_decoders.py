import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decoding_lab.decoders import (DecoderSpec, beam_lookahead, continuation_scores, decode, kt_lookahead,
                                   kt_lookahead_trace, markov_kt_lookahead, output_distribution,
                                   sample_batch, sampler_distribution, softmax, temperature_scale)
from decoding_lab.distributions import NULL, TableDistribution, sample_dirichlet_chain
from decoding_lab.errors import TieDetected
from decoding_lab.experiments import fixtures
from decoding_lab.ntp import PerturbationSchedule, legal_tokens, perturbed_predictor, wrap


def kt(K, T=1, **kw):
    return DecoderSpec("kt_lookahead", K=K, T=T, **kw)


# --- predictor ---------------------------------------------------------------

def test_predictor_counts_distinct_queries():
    ntp = wrap(fixtures.uniform_table(2, 3))
    ntp.conditional_next(())
    ntp.conditional_next(())
    ntp.conditional_next((1,))
    assert ntp.query_count == 2 and ntp.values_read == 4
    ntp.reset_count()
    assert ntp.query_count == 0


def test_predictor_without_cache_counts_every_call():
    ntp = wrap(fixtures.uniform_table(2, 3), cache=False)
    for _ in range(3):
        ntp.conditional_next(())
    assert ntp.query_count == 3


def test_predictor_vectors_are_read_only():
    ntp = wrap(fixtures.uniform_table(2, 2))
    with pytest.raises(ValueError):
        ntp.conditional_next(())[0] = 1.0


def test_schedule_validation():
    assert PerturbationSchedule.geometric(3).epsilons == (1.0, 0.5, 0.25, 0.125)
    with pytest.raises(ValueError):
        PerturbationSchedule((0.1, 0.2))
    with pytest.raises(ValueError):
        PerturbationSchedule((1.5,))


def test_perturbed_predictor_mixes_on_legal_tokens():
    p = TableDistribution(2, 2, {(0, NULL): 0.5, (1, 1): 0.5})
    ntp = perturbed_predictor(p, 0.3, 0)
    assert np.allclose(ntp.conditional_next(()), 0.7 * np.array([0.5, 0.5, 0.0]) + 0.3 / 3)
    assert np.array_equal(ntp.conditional_next((NULL,)), [0.0, 0.0, 1.0])
    # prefix with no true mass falls back to uniform over legal tokens
    assert np.allclose(ntp.conditional_next((0, )), 0.7 * np.array([0, 0, 1.0]) + 0.1)
    q = fixtures.lookahead_split()
    assert np.allclose(perturbed_predictor(q, 0.5, 0).conditional_next((2, 2)), [1 / 3, 1 / 3, 1 / 3, 0.0])
    assert not legal_tokens(q, ())[-1]


# --- lookahead ---------------------------------------------------------------

def test_continuation_scores_skip_zero_branches():
    conts, scores = continuation_scores(wrap(fixtures.lookahead_split()), (), 2)
    assert conts == [(0, 0), (0, 1), (1, 1), (2, 0)]
    assert np.allclose(scores, [0.28, 0.12, 0.37, 0.23])


def test_greedy_and_depth_two_split():
    p = fixtures.lookahead_split()
    assert kt_lookahead(wrap(p), kt(1)) == (0, 0, 0, 0)
    assert kt_lookahead(wrap(p), kt(2)) == (1, 1, 1, 1)


def test_lookahead_clips_window_at_sequence_end():
    # K = 3 on L = 4: the second step looks at only one token
    p = fixtures.commit_split(2, 1, 4)
    trace = kt_lookahead_trace(wrap(p), kt(3, 2))
    assert len(trace.sequence) == 4


def test_lookahead_rejects_depth_beyond_length():
    with pytest.raises(ValueError):
        kt_lookahead(wrap(fixtures.uniform_table(2, 2)), kt(3))
    with pytest.raises(ValueError):
        DecoderSpec("kt_lookahead", K=1, T=2)


def test_tie_policies():
    u = fixtures.uniform_table(2, 3)
    assert kt_lookahead(wrap(u), kt(1)) == (0, 0, 0)
    assert kt_lookahead_trace(wrap(u), kt(1)).tie_steps == 3
    with pytest.raises(TieDetected) as err:
        kt_lookahead(wrap(u), kt(2, tie_policy="error_on_tie"))
    assert len(err.value.candidates) == 4


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.integers(2, 4), L=st.integers(1, 5), data=st.data())
def test_markov_kernel_lookahead_matches_generic(seed, m, L, data):
    K = data.draw(st.integers(1, L))
    T = data.draw(st.integers(1, K))
    chain = sample_dirichlet_chain(np.random.default_rng(seed), m, 0.5, L)
    fast, ties = markov_kt_lookahead(chain, K, T)
    trace = kt_lookahead_trace(wrap(chain), kt(K, T))
    assert fast == trace.sequence
    assert ties == trace.tie_steps


def test_lookahead_is_stable_under_small_perturbation():
    p = fixtures.lookahead_split()
    for K in (1, 2):
        clean = kt_lookahead(wrap(p), kt(K))
        assert kt_lookahead(perturbed_predictor(p, 1e-6, 0), kt(K)) == clean


# --- beam ----------------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), data=st.data())
def test_beam_width_one_is_lookahead(seed, data):
    rng = np.random.default_rng(seed)
    L = data.draw(st.integers(2, 4))
    K = data.draw(st.integers(1, L))
    T = data.draw(st.integers(1, K))
    p = fixtures.random_table(rng, 3, L, alpha=0.5)
    spec = DecoderSpec("beam_lookahead", K=K, T=T, B=1)
    assert beam_lookahead(wrap(p), spec) == kt_lookahead(wrap(p), kt(K, T))


def test_wide_beam_recovers_mode():
    # greedy commits to 0 first, a width-2 beam keeps the 1-branch alive
    p = fixtures.lookahead_split()
    assert beam_lookahead(wrap(p), DecoderSpec("beam_lookahead", B=2)) == (1, 1, 1, 1)
    assert beam_lookahead(wrap(p), DecoderSpec("beam_lookahead", B=1)) == (0, 0, 0, 0)


def test_beam_tie_at_cut_raises_under_error_policy():
    u = fixtures.uniform_table(2, 2)
    assert beam_lookahead(wrap(u), DecoderSpec("beam_lookahead", B=1)) == (0, 0)
    with pytest.raises(TieDetected):
        beam_lookahead(wrap(u), DecoderSpec("beam_lookahead", B=1, tie_policy="error_on_tie"))


# --- temperature and sampling -------------------------------------------------------

def test_temperature_limits():
    p = np.array([0.5, 0.3, 0.2, 0.0])
    assert np.array_equal(temperature_scale(p, 0.0), [1 / 3, 1 / 3, 1 / 3, 0.0])
    assert np.array_equal(temperature_scale(p, math.inf), [1.0, 0.0, 0.0, 0.0])
    assert np.array_equal(temperature_scale(p, 1.0), p)
    assert np.allclose(temperature_scale(p, 2.0), np.array([0.25, 0.09, 0.04, 0]) / 0.38)
    assert np.array_equal(temperature_scale(np.array([0.4, 0.4, 0.2]), math.inf), [1.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        temperature_scale(p, -1.0)


@settings(max_examples=50, deadline=None)
@given(z=st.lists(st.floats(-20, 20), min_size=2, max_size=10), ts=st.sampled_from([0.3, 1.0, 3.0]))
def test_softmax_temperature_is_power_scaling(z, ts):
    assert np.allclose(softmax(z, ts), temperature_scale(softmax(z), 1.0 / ts), atol=1e-12, rtol=0)


def test_random_sample_closed_form_is_p():
    p = fixtures.random_table(np.random.default_rng(3), 3, 3, alpha=0.5, density=0.6)
    q = output_distribution(DecoderSpec("random_sample"), wrap(p))
    assert set(dict(q.support())) == set(dict(p.support()))
    for seq, prob in p.support():
        assert q.sequence_prob(seq) == pytest.approx(prob, abs=1e-12)


def test_gamma_infinity_is_greedy():
    p = fixtures.commit_split()
    q = output_distribution(DecoderSpec("temp_scaled_sample", gamma=math.inf), wrap(p))
    assert list(q.support()) == [(kt_lookahead(wrap(p), kt(1)), 1.0)]


def test_sample_batch_matches_single_draw_law():
    p = fixtures.lookahead_split()
    draws = sample_batch(wrap(p), np.random.default_rng(0), 20000, gamma=0.5)
    freq = Counter(map(tuple, draws.tolist()))
    law = sampler_distribution(wrap(p), 0.5)
    for seq, prob in law.support():
        sigma = math.sqrt(prob * (1 - prob) / 20000)
        assert abs(freq[seq] / 20000 - prob) <= 4 * sigma
    assert sum(freq.values()) == 20000


def test_single_draw_decoder_is_seeded():
    p = fixtures.lookahead_split()
    spec = DecoderSpec("temp_scaled_sample", gamma=2.0)
    a = [decode(wrap(p), spec, np.random.default_rng(9)) for _ in range(3)]
    assert len(set(a)) == 1
    with pytest.raises(ValueError):
        decode(wrap(p), spec)


def test_decoder_spec_json():
    spec = DecoderSpec.from_json({"kind": "temp_scaled_sample", "gamma": "inf"})
    assert spec.deterministic and spec.to_json()["gamma"] == "inf"
    with pytest.raises(ValueError):
        DecoderSpec.from_json({"kind": "kt_lookahead", "depth": 2})
    with pytest.raises(ValueError):
        DecoderSpec(kind="nucleus")

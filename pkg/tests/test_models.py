"""
Tests for the core data model, message generation and evaluation.
"""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings as hypothesis_settings, strategies as st
from pydantic import ValidationError

from pirlab.exceptions import BitRefRangeError, InvalidArgumentError
from pirlab.messages import derive_seed, evaluate_equation, generate_messages
from pirlab.models import (
    AnswerString,
    BitRef,
    DatabaseQuery,
    Equation,
    MessageStore,
    PrivacyReport,
    PrivacyWitness,
    RunConfig,
    SchemeParams,
    SignatureProfile,
    Transcript,
    format_fraction,
    format_signature,
)


class TestSchemeParams:
    def test_valid(self):
        params = SchemeParams(K=3, N=2)
        assert (params.K, params.N) == (3, 2)
        assert str(params) == "K=3, N=2"

    @pytest.mark.parametrize("K,N", [(0, 2), (2, 0), (-1, 1)])
    def test_rejects_non_positive(self, K, N):
        with pytest.raises(ValidationError):
            SchemeParams(K=K, N=N)

    def test_hashable_and_frozen(self):
        params = SchemeParams(K=2, N=2)
        assert {params: 1}[SchemeParams(K=2, N=2)] == 1
        with pytest.raises(ValidationError):
            params.K = 5


class TestMessageStore:
    def test_shape_and_access(self, fixed_store):
        assert (fixed_store.K, fixed_store.L) == (3, 16)
        assert fixed_store.message(2).tolist()[:3] == [1, 1, 0]

    def test_read_only(self, fixed_store):
        with pytest.raises(ValueError):
            fixed_store.bits[0, 0] = 0

    @pytest.mark.parametrize("bits", [[[0, 2]], [[]], [0, 1], [[[0]]]])
    def test_rejects_invalid_arrays(self, bits):
        with pytest.raises(ValidationError):
            MessageStore(bits=bits)

    def test_zero_message(self, fixed_store):
        zeroed = fixed_store.zero_message(3)
        assert not zeroed.message(3).any()
        assert np.array_equal(zeroed.message(1), fixed_store.message(1))
        assert fixed_store.message(3).any()

    def test_window(self, fixed_store):
        window = fixed_store.window(1, 3)
        assert window.L == 2
        assert window.bits.tolist() == [[0, 0], [1, 0], [0, 1]]


class TestEquation:
    def test_terms_are_canonically_sorted(self):
        eq = Equation.of((2, 5), (1, 9), (1, 0))
        assert [ref.key for ref in eq.terms] == [(1, 0), (1, 9), (2, 5)]
        assert eq == Equation.of((1, 0), (2, 5), (1, 9))

    def test_signature_and_str(self):
        eq = Equation.of((3, 7), (1, 2))
        assert eq.signature == (1, 3)
        assert str(eq) == "W1[2]+W3[7]"

    def test_rejects_empty(self):
        with pytest.raises(ValidationError):
            Equation(terms=())

    def test_rejects_duplicate_terms(self):
        with pytest.raises(ValidationError):
            Equation.of((1, 0), (1, 0))

    @pytest.mark.parametrize("message,bit", [(0, 0), (2**16, 0), (1, -1), (1, 2**32)])
    def test_bitref_ranges(self, message, bit):
        with pytest.raises(ValidationError):
            BitRef(message=message, bit=bit)


def test_query_bit_uniqueness():
    assert DatabaseQuery(database=1, equations=(Equation.of((1, 0)), Equation.of((2, 0)))).has_unique_bits()
    assert not DatabaseQuery(
        database=1, equations=(Equation.of((1, 0)), Equation.of((1, 0), (2, 1)))
    ).has_unique_bits()
    assert DatabaseQuery(database=3).has_unique_bits()


def test_answer_bits_must_be_binary():
    with pytest.raises(ValidationError):
        AnswerString(database=1, bits=(0, 2))


class TestTranscript:
    def _parts(self):
        queries = (
            DatabaseQuery(database=1, equations=(Equation.of((1, 0)),)),
            DatabaseQuery(database=2, equations=(Equation.of((2, 0)),)),
        )
        answers = (AnswerString(database=1, bits=(1,)), AnswerString(database=2, bits=(0,)))
        return queries, answers

    def test_valid(self):
        queries, answers = self._parts()
        transcript = Transcript(params=SchemeParams(K=2, N=2), desired=1, queries=queries, answers=answers, seed=0)
        assert transcript.download_bits == 2

    def test_one_query_and_answer_per_database(self):
        queries, answers = self._parts()
        with pytest.raises(ValidationError):
            Transcript(params=SchemeParams(K=2, N=3), desired=1, queries=queries, answers=answers, seed=0)

    def test_answer_length_matches_query(self):
        queries, _ = self._parts()
        answers = (AnswerString(database=1, bits=(1, 0)), AnswerString(database=2, bits=(0,)))
        with pytest.raises(ValidationError):
            Transcript(params=SchemeParams(K=2, N=2), desired=1, queries=queries, answers=answers, seed=0)

    def test_desired_in_range(self):
        queries, answers = self._parts()
        with pytest.raises(ValidationError):
            Transcript(params=SchemeParams(K=2, N=2), desired=3, queries=queries, answers=answers, seed=0)


def test_passing_privacy_report_has_no_witness():
    with pytest.raises(ValidationError):
        PrivacyReport(
            scheme_id="capacity",
            params=SchemeParams(K=2, N=2),
            mode="structural",
            verdict="pass",
            witness=PrivacyWitness(database=1, desired_pair=(1, 2)),
        )


def test_signature_profile_text():
    profile = SignatureProfile(counts={(1, 2): 1, (2,): 1, (1,): 1})
    assert profile.total == 3
    assert profile.as_text() == "{1}:1 {2}:1 {1,2}:1"


def test_run_config():
    config = RunConfig(K=3, N=2)
    assert config.desired_indices() == [1, 2, 3]
    assert RunConfig(K=3, N=2, desired=2).desired_indices() == [2]
    with pytest.raises(ValidationError):
        RunConfig(K=3, N=2, desired=4)
    with pytest.raises(ValidationError):
        RunConfig(K=3, N=2, trials=0)


def test_formatting_helpers():
    assert format_signature((1, 3)) == "{1,3}"
    assert format_fraction(Fraction(1)) == "1/1"
    assert format_fraction(Fraction(6, 9)) == "2/3"


# ============================================================================
# MESSAGE GENERATION AND EVALUATION
# ============================================================================

class TestGenerateMessages:
    def test_reproducible(self):
        params = SchemeParams(K=2, N=2)
        first = generate_messages(params, 4, seed=5)
        assert first.bits.shape == (2, 4)
        assert np.array_equal(first.bits, generate_messages(params, 4, seed=5).bits)

    def test_minimal(self):
        store = generate_messages(SchemeParams(K=1, N=1), 1, seed=0)
        assert store.bits.shape == (1, 1)

    def test_seeds_differ(self):
        params = SchemeParams(K=3, N=2)
        differing = sum(
            not np.array_equal(
                generate_messages(params, 8, seed=s).bits, generate_messages(params, 8, seed=s + 1000).bits
            )
            for s in range(100)
        )
        assert differing == 100

    def test_zero_length_rejected(self):
        with pytest.raises(InvalidArgumentError):
            generate_messages(SchemeParams(K=2, N=2), 0, seed=0)

    def test_bit_frequencies(self):
        store = generate_messages(SchemeParams(K=1, N=1), 10_000, seed=3)
        mean = store.bits.mean()
        # 5 standard deviations of a fair-coin mean over 10^4 samples
        assert abs(mean - 0.5) < 5 * 0.5 / 100


class TestEvaluateEquation:
    def test_single_term(self, fixed_store):
        assert evaluate_equation(Equation.of((1, 0)), fixed_store) == 1

    def test_self_cancelling_pair(self, fixed_store):
        assert evaluate_equation(Equation.of((1, 0), (2, 0)), fixed_store) == 0

    def test_three_terms_match_direct_lookup(self):
        store = generate_messages(SchemeParams(K=3, N=2), 8, seed=21)
        expected = int(store.bits[0, 2]) ^ int(store.bits[1, 5]) ^ int(store.bits[2, 7])
        assert evaluate_equation(Equation.of((1, 2), (2, 5), (3, 7)), store) == expected

    @pytest.mark.parametrize("pair", [(4, 0), (1, 16)])
    def test_out_of_range(self, fixed_store, pair):
        with pytest.raises(BitRefRangeError):
            evaluate_equation(Equation.of(pair), fixed_store)

    @hypothesis_settings(
        max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture]
    )
    @given(
        terms=st.sets(st.tuples(st.integers(1, 3), st.integers(0, 15)), min_size=2, max_size=12),
        split=st.integers(1, 11),
    )
    def test_linearity(self, fixed_store, terms, split):
        terms = sorted(terms)
        split = min(split, len(terms) - 1)
        left, right = Equation.of(*terms[:split]), Equation.of(*terms[split:])
        union = Equation.of(*terms)
        assert evaluate_equation(union, fixed_store) == (
            evaluate_equation(left, fixed_store) ^ evaluate_equation(right, fixed_store)
        )


def test_derive_seed():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert 0 <= derive_seed(7) < 2**63

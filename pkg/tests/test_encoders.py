import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tablesearch.encoders import (EncoderError, EncoderSpec, encode_passage,
                                  encode_question, fnv1a64, similarity, tokenize)

SPEC = EncoderSpec(dim=64)


def test_identical_strings_identical_vectors():
    a = encode_passage("albany park library", SPEC)
    b = encode_passage("albany park library", SPEC)
    assert np.array_equal(a, b)


def test_empty_string_zero_vector():
    assert np.all(encode_passage("", SPEC) == 0)


def test_shared_token_overlap_orders_similarity():
    q = encode_passage("albany park", SPEC)
    near = encode_passage("albany park library", SPEC)
    far = encode_passage("zebra xylophone", SPEC)
    assert similarity(q, near) > similarity(q, far)


def test_question_encoder_shares_reference_path():
    text = "what is the city"
    assert np.array_equal(encode_question(text, SPEC), encode_passage(text, SPEC))


def test_unit_norm_contract():
    for text in ["a", "hello world", "x y z w 1 2 3"]:
        v = encode_passage(text, SPEC)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-6


def test_min_dim_enforced():
    with pytest.raises(EncoderError):
        encode_passage("x", EncoderSpec(dim=4))


def test_external_without_endpoint_errors():
    with pytest.raises(EncoderError):
        encode_passage("x", EncoderSpec(dim=16, kind="external"))


def test_similarity_values():
    e1 = np.array([1.0, 0.0])
    e2 = np.array([0.0, 1.0])
    assert similarity(e1, e1) == pytest.approx(1.0)
    assert similarity(e1, e2) == pytest.approx(0.0)
    assert similarity(np.array([0.6, 0.8]), np.array([0.8, 0.6])) == pytest.approx(0.96)


def test_similarity_dim_mismatch():
    with pytest.raises(EncoderError):
        similarity(np.zeros(3), np.zeros(4))


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.lists(st.floats(-5, 5), min_size=4, max_size=4),
       st.floats(-3, 3))
@settings(max_examples=50, deadline=None)
def test_similarity_symmetry_and_bilinearity(a, b, c, alpha):
    a, b, c = np.array(a), np.array(b), np.array(c)
    assert similarity(a, b) == pytest.approx(similarity(b, a))
    assert similarity(a + alpha * c, b) == pytest.approx(
        similarity(a, b) + alpha * similarity(c, b), rel=1e-9, abs=1e-9)


def test_tokenize_splits_non_alphanumeric():
    assert tokenize("Mon. & Wed., 10-6") == ["mon", "wed", "10", "6"]


def test_fnv1a64_known_value():
    # FNV-1a 64-bit reference value for "a"
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C

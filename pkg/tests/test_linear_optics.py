import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from tdmqkd.chip_model import MziSetting, mzi_matrix
from tdmqkd.linear_optics import (
    TransferMatrix,
    apply,
    cascade,
    compose,
    db_to_linear,
    embed,
    equal_up_to_global_phase,
    identity,
    linear_to_db,
    mmi_matrix,
    powers,
)

r2 = 1 / math.sqrt(2)


def random_unitary(n, seed):
    return TransferMatrix(unitary_group.rvs(n, random_state=seed))


def random_state(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n) + 1j * rng.normal(size=n)
    return v / np.linalg.norm(v)


def test_identity_apply():
    assert np.array_equal(apply(identity(2), [1, 0]), [1, 0])


def test_mmi_on_upper_port():
    # hand multiply: (1/sqrt2)[[1, i], [i, 1]] @ (1, 0)
    out = apply(mmi_matrix(), [1, 0])
    assert equal_up_to_global_phase(out, [r2, 1j * r2])
    assert np.allclose(powers(out), [0.5, 0.5])


def test_lossless_cascade_preserves_norm():
    m = cascade(*(embed(mmi_matrix(), (k, k + 1), 4) for k in (0, 2, 1, 0)))
    v = apply(m, [0, 0, 1, 0])
    assert abs(np.sum(powers(v)) - 1) < 1e-12


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        apply(identity(2), [1, 0, 0])


def test_compose_dimension_mismatch():
    with pytest.raises(ValueError):
        compose(identity(3), identity(2))


def test_compose_identity_and_inverse():
    m = random_unitary(4, 7)
    assert np.allclose(compose(identity(4), m).entries, m.entries, atol=1e-12)
    assert np.allclose(compose(m, m.dagger()).entries, np.eye(4), atol=1e-12)


def test_compose_mzi_matches_explicit_product():
    a = mzi_matrix(MziSetting(math.pi / 2, math.inf)).entries
    explicit = np.array(
        [[sum(a[i, k] * a[k, j] for k in range(2)) for j in range(2)] for i in range(2)]
    )
    both = compose(mzi_matrix(MziSetting(math.pi / 2, math.inf)), mzi_matrix(MziSetting(math.pi / 2, math.inf)))
    assert np.allclose(both.entries, explicit, atol=1e-12)


def test_db_to_linear_values():
    assert db_to_linear(0) == 1.0
    assert db_to_linear(13) == pytest.approx(0.0501187, abs=1e-5)
    assert db_to_linear(30) == pytest.approx(1e-3, rel=1e-12)
    assert db_to_linear(math.inf) == 0.0
    assert linear_to_db(db_to_linear(7.5)) == pytest.approx(7.5)


def test_db_to_linear_rejects_gain():
    with pytest.raises(ValueError):
        db_to_linear(-1)


def test_transfer_matrix_rejects_gain():
    with pytest.raises(ValueError):
        TransferMatrix(np.array([[1.1, 0], [0, 1]]))


def test_entries_are_read_only():
    m = identity(2)
    with pytest.raises(ValueError):
        m.entries[0, 0] = 2


def test_embed_places_block():
    m = embed(mmi_matrix(), (1, 3), 4)
    assert m.is_unitary()
    assert m.entries[0, 0] == 1 and m.entries[2, 2] == 1
    assert np.isclose(m.entries[1, 3], 1j * r2)


def test_global_phase_comparison():
    v = random_state(3, 1)
    assert equal_up_to_global_phase(np.exp(0.7j) * v, v)
    assert not equal_up_to_global_phase(v * np.array([1, 1, -1]), v)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_random_unitary_cascade_preserves_probability(n, seed):
    m = cascade(random_unitary(n, seed), random_unitary(n, seed + 1), random_unitary(n, seed + 2))
    v = apply(m, random_state(n, seed))
    assert abs(np.sum(powers(v)) - 1) < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_compose_associative(n, seed):
    a, b, c = (random_unitary(n, seed + k) for k in range(3))
    left = compose(compose(a, b), c).entries
    right = compose(a, compose(b, c)).entries
    assert np.allclose(left, right, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_compose_acts_like_sequential_apply(n, seed):
    a, b = random_unitary(n, seed), random_unitary(n, seed + 1)
    v = random_state(n, seed + 2)
    assert np.allclose(apply(compose(a, b), v), apply(a, apply(b, v)), atol=1e-12)


@given(st.floats(0, 200), st.floats(0, 200))
def test_db_additivity(a, b):
    assert db_to_linear(a + b) == pytest.approx(db_to_linear(a) * db_to_linear(b), rel=1e-12, abs=1e-300)

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tensor_reid import ArgumentError, DataError
from tensor_reid.tensor_core import (
    fold,
    frobenius,
    inner,
    mode_product,
    project,
    read_tsr3,
    read_tsr3_stream,
    tsr3_bytes,
    unfold,
    vectorize,
    write_tsr3,
)

from conftest import unfold_oracle

dims3 = st.tuples(*[st.integers(1, 5)] * 3)
tensors = dims3.flatmap(
    lambda d: hnp.arrays(np.float64, d, elements=st.floats(-1e6, 1e6, allow_nan=False))
)


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_unfold_singleton():
    assert unfold(np.full((1, 1, 1), 5.0), 1).tolist() == [[5.0]]


def test_unfold_2x2x2_enumeration():
    t = np.zeros((2, 2, 2))
    for i, j, l in np.ndindex(2, 2, 2):
        t[i, j, l] = 4 * l + 2 * j + i
    m = unfold(t, 1)
    assert m.shape == (2, 4)
    for j, l in np.ndindex(2, 2):
        c = 2 * l + j
        assert m[:, c].tolist() == [t[0, j, l], t[1, j, l]]
    np.testing.assert_array_equal(fold(m, 1, (2, 2, 2)), t)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_unfold_matches_enumeration(rng, k):
    t = rng.standard_normal((3, 4, 5))
    np.testing.assert_array_equal(unfold(t, k), unfold_oracle(t, k))


@settings(max_examples=60, deadline=None)
@given(tensors, st.integers(1, 3))
def test_fold_unfold_round_trip(t, k):
    assert np.array_equal(fold(unfold(t, k), k, t.shape), t)


def test_fold_singleton_and_shape_errors():
    assert fold(np.array([[7.0]]), 3, (1, 1, 1)).shape == (1, 1, 1)
    with pytest.raises(ArgumentError):
        fold(np.zeros((2, 3)), 1, (2, 2, 2))
    with pytest.raises(ArgumentError):
        unfold(np.zeros((2, 2, 2)), 4)
    with pytest.raises(ArgumentError):
        unfold(np.zeros((2, 2, 2)), 0)


def test_mode_product_identity_and_scaling(rng):
    t = rng.standard_normal((3, 4, 2))
    for k in (1, 2, 3):
        np.testing.assert_array_equal(mode_product(t, np.eye(t.shape[k - 1]), k), t)
    np.testing.assert_array_equal(mode_product(t, 2 * np.eye(3), 1), 2 * t)


def test_mode_product_unfolding_oracle(rng):
    t = rng.standard_normal((2, 3, 2))
    u = rng.standard_normal((4, 2))
    expected = fold(u @ unfold(t, 1), 1, (4, 3, 2))
    assert _rel(mode_product(t, u, 1), expected) < 1e-12
    with pytest.raises(ArgumentError):
        mode_product(t, rng.standard_normal((4, 3)), 1)


@settings(max_examples=40, deadline=None)
@given(dims3, st.integers(1, 3), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_mode_product_unfolding_identity(dims, k, rows, seed):
    r = np.random.default_rng(seed)
    t = r.standard_normal(dims)
    u = r.standard_normal((rows, dims[k - 1]))
    assert _rel(unfold(mode_product(t, u, k), k), u @ unfold(t, k)) < 1e-12


def test_distinct_mode_commutativity(rng):
    t = rng.standard_normal((4, 3, 5))
    a = rng.standard_normal((2, 4))
    b = rng.standard_normal((6, 3))
    lhs = mode_product(mode_product(t, a, 1), b, 2)
    rhs = mode_product(mode_product(t, b, 2), a, 1)
    assert _rel(lhs, rhs) < 1e-12


def test_project_identity_slices_and_kronecker(rng):
    t = rng.standard_normal((3, 4, 2))
    np.testing.assert_allclose(project(t, np.eye(3), np.eye(4)), t, rtol=0, atol=0)
    u1 = rng.standard_normal((3, 2))
    u2 = rng.standard_normal((4, 3))
    p = project(t, u1, u2)
    assert p.shape == (2, 3, 2)
    for i in range(2):
        assert _rel(p[:, :, i], u1.T @ t[:, :, i] @ u2) < 1e-12
        vec = t[:, :, i].ravel(order="F")
        assert _rel(p[:, :, i].ravel(order="F"), np.kron(u2, u1).T @ vec) < 1e-12
    order12 = mode_product(mode_product(t, u1.T, 1), u2.T, 2)
    order21 = mode_product(mode_product(t, u2.T, 2), u1.T, 1)
    assert _rel(p, order12) < 1e-12 and _rel(p, order21) < 1e-12
    with pytest.raises(ArgumentError):
        project(t, rng.standard_normal((4, 2)), u2)


def test_vectorize_layout():
    assert vectorize(np.full((1, 1, 1), 3.0)).tolist() == [3.0]
    m = np.array([[1.0, 3.0], [2.0, 4.0]])
    t = fold(m, 1, (2, 2, 1))
    # mode-1 index fastest: t[0,0], t[1,0], t[0,1], t[1,1]
    assert vectorize(t).tolist() == [1.0, 2.0, 3.0, 4.0]
    assert [t[0, 0, 0], t[1, 0, 0], t[0, 1, 0], t[1, 1, 0]] == [1.0, 2.0, 3.0, 4.0]


def test_norm_and_inner(rng):
    assert frobenius(np.zeros((2, 3, 4))) == 0.0
    assert frobenius(np.array([3.0, 4.0]).reshape(1, 1, 2)) == 5.0
    a = rng.standard_normal((3, 2, 4))
    b = rng.standard_normal((3, 2, 4))
    assert frobenius(a) == pytest.approx(np.linalg.norm(vectorize(a)), rel=1e-14)
    assert inner(a, np.zeros_like(a)) == 0.0
    assert inner(a, a) == pytest.approx(frobenius(a) ** 2, rel=1e-13)
    assert inner(a, b) == pytest.approx(float(vectorize(a) @ vectorize(b)), rel=1e-12)
    assert inner(a, b) == pytest.approx(inner(b, a), rel=1e-14)
    with pytest.raises(ArgumentError):
        inner(a, np.zeros((3, 2, 5)))


@settings(max_examples=40, deadline=None)
@given(tensors)
def test_tsr3_round_trip(t):
    blob = tsr3_bytes(t)
    assert blob[:4] == b"TSR3"
    assert len(blob) == 4 + 2 + 12 + 8 * t.size
    back = read_tsr3_stream(io.BytesIO(blob))
    assert back.shape == t.shape and np.array_equal(back, t)


def test_tsr3_file_and_corruption(tmp_path, rng):
    t = rng.standard_normal((2, 3, 4))
    path = tmp_path / "t.tsr3"
    write_tsr3(path, t)
    np.testing.assert_array_equal(read_tsr3(path), t)
    raw = path.read_bytes()
    (tmp_path / "bad.tsr3").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(DataError):
        read_tsr3(tmp_path / "bad.tsr3")
    (tmp_path / "short.tsr3").write_bytes(raw[:-8])
    with pytest.raises(DataError):
        read_tsr3(tmp_path / "short.tsr3")

"""Tests for the superoperator calculus."""

import numpy as np
import pytest

from qkdsec.linops import (
    SuperOp,
    apply_superop,
    dag,
    maximally_entangled_ket,
    op_from_kraus,
    sandwich_rep,
    sharp,
    transfer_from_kraus,
    unvec,
    vec_map,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)


def random_matrix(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def random_kraus_channel(rng, d, n_kraus):
    """A random trace-preserving Kraus family."""
    ops = [random_matrix(rng, d) for _ in range(n_kraus)]
    s = sum(dag(k) @ k for k in ops)
    w = np.linalg.inv(np.linalg.cholesky(s).conj().T)  # s = L L^dag, w = (L^dag)^-1
    return [k @ w for k in ops]


def random_density(rng, d):
    m = random_matrix(rng, d)
    rho = m @ dag(m)
    return rho / np.trace(rho)


def test_vec_identity_qubit():
    np.testing.assert_allclose(vec_map(np.eye(2)), np.array([1, 0, 0, 1]) / np.sqrt(2), atol=1e-14)


def test_vec_x_qubit():
    np.testing.assert_allclose(vec_map(X), np.array([0, 1, 1, 0]) / np.sqrt(2), atol=1e-14)


def test_vec_entry_convention():
    b = np.arange(9, dtype=complex).reshape(3, 3)
    v = vec_map(b)
    for i in range(3):
        for j in range(3):
            assert v[i * 3 + j] == b[j, i] / np.sqrt(3)


def test_vec_is_scaled_isometry():
    rng = np.random.default_rng(7)
    for _ in range(100):
        d = rng.integers(2, 6)
        a, b = random_matrix(rng, d), random_matrix(rng, d)
        assert abs(np.vdot(vec_map(a), vec_map(b)) - np.trace(dag(a) @ b) / d) < 1e-12


def test_unvec_roundtrip():
    rng = np.random.default_rng(8)
    for d in (2, 3, 4):
        b = random_matrix(rng, d)
        np.testing.assert_allclose(unvec(vec_map(b)), b, atol=1e-13)


def test_vec_rejects_nonsquare():
    with pytest.raises(ValueError):
        vec_map(np.zeros((2, 3)))


def test_sandwich_identity():
    np.testing.assert_allclose(sandwich_rep(np.eye(3), np.eye(3)), np.eye(9), atol=1e-14)


def test_sandwich_matches_direct_product():
    rng = np.random.default_rng(9)
    for _ in range(100):
        d = rng.integers(2, 6)
        a, b, c = (random_matrix(rng, d) for _ in range(3))
        np.testing.assert_allclose(sandwich_rep(a, c) @ vec_map(b), vec_map(a @ b @ c), atol=1e-12)


def test_sandwich_pauli_example():
    np.testing.assert_allclose(sandwich_rep(X, X) @ vec_map(Z), vec_map(-Z), atol=1e-14)


def test_sandwich_dimension_mismatch():
    with pytest.raises(ValueError):
        sandwich_rep(np.eye(2), np.eye(3))


def test_sharp_entry_convention():
    rng = np.random.default_rng(10)
    d = 3
    m = random_matrix(rng, d * d)
    n = sharp(m)
    for i, j, k, l in [(0, 1, 2, 0), (2, 2, 1, 0), (1, 0, 0, 2)]:
        assert n[i * d + j, k * d + l] == m[l * d + j, k * d + i]


def test_sharp_involution():
    rng = np.random.default_rng(11)
    for _ in range(100):
        d = rng.integers(2, 5)
        m = random_matrix(rng, d * d)
        np.testing.assert_allclose(sharp(sharp(m)), m, atol=1e-13)


def test_sharp_identity_is_entangled_projector():
    for d in (2, 3):
        phi = maximally_entangled_ket(d)
        np.testing.assert_allclose(sharp(np.eye(d * d)), d * np.outer(phi, phi.conj()), atol=1e-13)


def test_sharp_rejects_bad_shapes():
    with pytest.raises(ValueError):
        sharp(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        sharp(np.zeros((4, 9)))


def op_from_defining_action(a, c):
    """OP form of rho -> A rho C assembled entry by entry from its action."""
    d = a.shape[0]
    op = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for k in range(d):
            e_ik = np.zeros((d, d), dtype=complex)
            e_ik[i, k] = 1.0
            out = a @ e_ik @ c
            op[i * d : (i + 1) * d, k * d : (k + 1) * d] = out
    return op


def test_op_of_sandwich_is_sharp_of_kron():
    rng = np.random.default_rng(12)
    for _ in range(50):
        d = rng.integers(2, 5)
        a, c = random_matrix(rng, d), random_matrix(rng, d)
        np.testing.assert_allclose(
            sharp(sandwich_rep(a, c)), op_from_defining_action(a, c), atol=1e-12
        )


def test_apply_identity_channel():
    rng = np.random.default_rng(13)
    rho = random_density(rng, 3)
    e = SuperOp.from_kraus([np.eye(3)])
    np.testing.assert_allclose(e.apply(rho), rho, atol=1e-13)


def test_apply_fully_depolarizing_qubit():
    rng = np.random.default_rng(14)
    # Kraus family of the fully depolarizing qubit channel.
    Y = np.array([[0, -1j], [1j, 0]])
    kraus = [0.5 * np.eye(2), 0.5 * X, 0.5 * Y, 0.5 * Z]
    e = SuperOp.from_kraus(kraus)
    for _ in range(5):
        rho = random_density(rng, 2)
        np.testing.assert_allclose(e.apply(rho), np.eye(2) / 2, atol=1e-13)


def test_apply_matches_kraus_summation():
    rng = np.random.default_rng(15)
    for _ in range(100):
        d = rng.integers(2, 5)
        ops = [random_matrix(rng, d) for _ in range(rng.integers(1, 4))]
        rho = random_density(rng, d)
        direct = sum(k @ rho @ dag(k) for k in ops)
        np.testing.assert_allclose(apply_superop(SuperOp.from_kraus(ops), rho), direct, atol=1e-12)


def test_kraus_roundtrip():
    rng = np.random.default_rng(16)
    for _ in range(20):
        d = rng.integers(2, 5)
        e = SuperOp.from_kraus(random_kraus_channel(rng, d, 3))
        rebuilt = SuperOp.from_kraus(e.kraus())
        np.testing.assert_allclose(rebuilt.op_form, e.op_form, atol=1e-10)


def test_trace_preserving_check():
    rng = np.random.default_rng(17)
    e = SuperOp.from_kraus(random_kraus_channel(rng, 3, 2))
    assert e.is_trace_preserving()
    assert not SuperOp.from_kraus([0.5 * np.eye(3)]).is_trace_preserving()


def test_cp_check():
    rng = np.random.default_rng(18)
    e = SuperOp.from_kraus(random_kraus_channel(rng, 2, 3))
    assert e.is_completely_positive()
    # transpose map: Hermiticity preserving but not CP
    t = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for k in range(2):
            e_ik = np.zeros((2, 2), dtype=complex)
            e_ik[i, k] = 1.0
            t[i * 2 : (i + 1) * 2, k * 2 : (k + 1) * 2] = e_ik.T
    assert not SuperOp(t).is_completely_positive()


def test_composition():
    rng = np.random.default_rng(19)
    a = SuperOp.from_kraus(random_kraus_channel(rng, 2, 2))
    b = SuperOp.from_kraus(random_kraus_channel(rng, 2, 2))
    rho = random_density(rng, 2)
    np.testing.assert_allclose(a.then(b).apply(rho), b.apply(a.apply(rho)), atol=1e-12)


def test_transfer_and_op_are_sharp_related():
    rng = np.random.default_rng(20)
    ops = [random_matrix(rng, 3) for _ in range(2)]
    np.testing.assert_allclose(sharp(transfer_from_kraus(ops)), op_from_kraus(ops), atol=1e-13)

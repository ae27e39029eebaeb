import numpy as np
import pytest
import scipy.linalg as sla

from sdedilation.numerics import (
    ContractError,
    DimensionError,
    as_cmatrix,
    expm,
    expm_skew,
    hermitian_split,
    kron,
    kron_apply,
    kron_apply_left,
    rk4_propagate,
)


def rand_c(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_hermitian_split_roundtrip():
    rng = np.random.default_rng(0)
    L = rand_c(rng, 5, 5)
    H, K = hermitian_split(L)
    assert np.allclose(H, H.conj().T)
    assert np.allclose(K, K.conj().T)
    assert np.allclose(-1j * H + K, L, atol=1e-14)


def test_expm_skew_unitary_and_matches_scipy():
    rng = np.random.default_rng(1)
    X = rand_c(rng, 6, 6)
    om = X - X.conj().T
    U = expm_skew(om)
    assert np.allclose(U.conj().T @ U, np.eye(6), atol=1e-13)
    assert np.allclose(U, sla.expm(om), atol=1e-12)


def test_expm_skew_rejects_non_skew():
    with pytest.raises(ContractError):
        expm_skew(np.eye(3))


def test_expm_general_path():
    rng = np.random.default_rng(2)
    a = rand_c(rng, 4, 4)
    assert np.allclose(expm(a), sla.expm(a), atol=1e-12)


def test_rk4_fourth_order():
    # y' = i y, y(1) = e^i
    errs = []
    for n in (10, 20, 40):
        y = rk4_propagate(lambda t, y: 1j * y, np.array([1.0 + 0j]), 0.0, 1.0, n)
        errs.append(abs(y[0] - np.exp(1j)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 3.8)


def test_kron_ordering_ancilla_major():
    a = np.array([0.0, 1.0])
    s = np.array([1.0, 2.0, 3.0])
    v = kron(a, s)
    assert np.allclose(v[3:], s) and np.allclose(v[:3], 0)


def test_kron_apply_matches_dense():
    rng = np.random.default_rng(3)
    A, S = rand_c(rng, 4, 4), rand_c(rng, 3, 3)
    psi = rand_c(rng, 2, 12)
    dense = psi @ np.kron(A, S).T
    assert np.allclose(kron_apply(A, S, psi, 4, 3), dense)
    assert np.allclose(kron_apply(None, S, psi, 4, 3), psi @ np.kron(np.eye(4), S).T)
    rho = rand_c(rng, 12, 12)
    assert np.allclose(kron_apply_left(A, S, rho, 4, 3), np.kron(A, S) @ rho)


def test_as_cmatrix_validation():
    with pytest.raises(DimensionError):
        as_cmatrix(np.zeros((2, 3)), square=True)
    with pytest.raises(ContractError):
        as_cmatrix([[np.nan]])

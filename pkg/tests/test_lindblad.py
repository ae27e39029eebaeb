import numpy as np
import pytest

from sdedilation.dilation import build_chain, dilate, make_readout
from sdedilation.lindblad import (
    DegenerateCovarianceError,
    default_tau,
    evolve_segment,
    factored_density,
    functional_weight,
    lindblad_rhs,
    lindblad_rhs_dense,
    min_eig,
    observable,
    recover_sigma,
    segment_pipeline,
    trace_norm,
    window_weight,
)
from sdedilation.numerics import DimensionError
from sdedilation.experiments.builtins import builtin_example3d
from sdedilation.sde_model import LinearSdeSystem, evolve_second_moment


def random_density(rng, n):
    X = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = X @ X.conj().T
    return rho / np.trace(rho)


@pytest.fixture(scope="module")
def small():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3)) * 0.4
    Bs = [rng.standard_normal((3, 3)) * 0.3, 0.2 * np.eye(3)]
    sys = LinearSdeSystem.constant(A, Bs, X0=[1.0, 0.5, -0.5])
    chain = build_chain(8, 1.0)
    return sys, chain


def test_rhs_matches_dense(small):
    sys, chain = small
    dil = dilate(sys, chain)
    rho = random_density(np.random.default_rng(1), dil.dim)
    assert np.allclose(lindblad_rhs(rho, 0.0, dil), lindblad_rhs_dense(rho, 0.0, dil), atol=1e-13)


def test_rhs_shape_check(small):
    sys, chain = small
    with pytest.raises(DimensionError):
        lindblad_rhs(np.eye(4), 0.0, dilate(sys, chain))


def test_trace_preserved_without_closure(small):
    sys, chain = small
    dil = dilate(sys, chain)
    rho = random_density(np.random.default_rng(2), dil.dim)
    assert abs(np.trace(lindblad_rhs(rho, 0.0, dil))) < 1e-13
    out = evolve_segment(rho, 0.0, 0.2, dil, steps=40)
    assert abs(np.trace(out) - 1) < 1e-12
    assert min_eig(out) > -1e-12


def test_dephasing_rate():
    Z = np.diag([1.0, -1.0])
    sys = LinearSdeSystem.constant(-0.5 * Z @ Z, [Z])
    chain = build_chain(2, 1.0)
    dil = dilate(sys, chain)
    sigma = np.full((2, 2), 0.5, dtype=complex)
    out = evolve_segment(factored_density(chain, sigma), 0.0, 0.7, dil, steps=200)
    blk = out.reshape(3, 2, 3, 2)
    red = np.einsum("asat->st", blk)
    assert np.isclose(red[0, 1].real, 0.5 * np.exp(-2 * 0.7), rtol=1e-9)
    assert np.isclose(red[0, 0].real, 0.5, rtol=1e-12)


def test_factored_recovery_and_weights(small):
    sys, chain = small
    ro = make_readout(chain, p_star=0.05)
    sigma = random_density(np.random.default_rng(3), 3)
    rho = factored_density(chain, sigma)
    assert np.allclose(recover_sigma(rho, ro, 3), sigma, atol=1e-14)
    assert np.isclose(window_weight(rho, ro, 3), ro.P_win)
    # q for the normalized functional of a factored state is |<l~|r>|^2 = 1/beta^2
    assert np.isclose(functional_weight(rho, ro.l_normalized, 3), 1 / ro.beta**2)


def test_observable_paths_agree(small):
    sys, chain = small
    ro = make_readout(chain, p_star=0.05)
    dil = dilate(sys, chain)
    rho = evolve_segment(factored_density(chain, np.eye(3) / 3), 0.0, 0.1, dil, steps=20)
    O = np.diag([1.0, 2.0, 3.0])
    a = observable(rho, ro, O, path="recover")
    b = observable(rho, ro, O, path="full", check=True)
    assert np.isclose(a, b, rtol=1e-10)


def test_pipeline_second_moment_scalar():
    a, b = -0.2, 0.4
    sys = LinearSdeSystem.constant([[a]], [[[b]]], X0=[2.0])
    chain = build_chain(64, 1.0)
    mu, led = segment_pipeline(sys, chain, 1.0, 0.5, p_star=0.1, use_mlc=True)
    assert np.isclose(mu, 4 * np.exp(2 * a + b**2), rtol=1e-6)
    assert np.isclose(led.Lambda_T, mu)
    assert len(led.rows()) == 2
    assert np.isclose(led.Gamma, sum(g**-0.5 for g in led.g))


def test_pipeline_matrix_reference(small):
    sys, chain = small
    chain = build_chain(32, 1.0)
    S0 = np.outer(sys.X0, sys.X0)
    ref = evolve_second_moment(sys, S0, 0.0, 0.5)
    mu, led = segment_pipeline(sys, chain, 0.5, 0.25, readout=make_readout(chain, p_star=1e-4), Sigma0=S0)
    S = led.scale0 * led.lam[-1] * led.sigma[-1]
    assert np.linalg.norm(S - ref) / np.linalg.norm(ref) < 1e-4
    assert max(led.trace_defect) < 1e-10


def test_pipeline_rejects_bad_grid(small):
    sys, chain = small
    with pytest.raises(ValueError):
        segment_pipeline(sys, chain, 1.0, 0.3)


def test_degenerate_covariance():
    sys = LinearSdeSystem.constant([[-20.0]], [[[0.0]]], X0=[1.0])
    chain = build_chain(32, 1.0)
    with pytest.raises(DegenerateCovarianceError):
        segment_pipeline(sys, chain, 1.0, 1.0, p_star=0.1, use_mlc=True, check_positivity=False)


def test_default_tau_tiles_horizon():
    sys = builtin_example3d()
    tau = default_tau(sys, 1.0)
    assert np.isclose(1.0 / tau, round(1.0 / tau))


def test_trace_norm():
    assert np.isclose(trace_norm(np.diag([1.0, -2.0])), 3.0)

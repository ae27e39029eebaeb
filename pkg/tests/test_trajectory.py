import numpy as np
import pytest
import scipy.linalg as sla

from sdedilation.dilation import build_chain, dilate, make_readout
from sdedilation.experiments.acceptance import _weak2_outcomes
from sdedilation.experiments.builtins import builtin_example3d, builtin_weak2
from sdedilation.experiments.fitting import fit_loglog
from sdedilation.noise import presample
from sdedilation.sde_model import LinearSdeSystem, em_reference
from sdedilation.trajectory import (
    SCHEMES,
    RefreshError,
    Weak2Midpoint,
    ensemble_run,
    f2_matrix,
    interaction_step,
    kraus_unitary,
    make_integrator,
    measurement_map,
    off_mode_weight,
    propagate,
    run_segmented,
    squared_norm,
    weak1_step,
    weak2_measurement_step,
)
from sdedilation.trajectory.ensemble import run_chunk
from sdedilation.trajectory.segmented import advance


def rand_c(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_weak1_scalar_closed_form():
    a, b, dt = 0.3, 0.5, 0.01
    sys = LinearSdeSystem.constant([[a]], [[[b]]])
    integ = make_integrator(sys, "weak1", dt)
    out = integ.step(np.array([1.0 + 0j]), 0.0, np.array([1.0]))
    expect = np.exp((a + 0.5 * b**2) * dt) * (1 - 0.5 * dt * b**2 + np.sqrt(dt) * b)
    assert np.isclose(out[0], expect)


def test_kraus_unitary_is_unitary():
    rng = np.random.default_rng(0)
    U = kraus_unitary(rand_c(rng, 3, 3), 0.1)
    assert np.allclose(U.conj().T @ U, np.eye(6), atol=1e-13)


def test_kraus_branch_average_isometric():
    rng = np.random.default_rng(1)
    V = rand_c(rng, 4, 4)
    psi = rand_c(rng, 4)
    for dt in (0.5, 0.01):
        w = sum(np.linalg.norm(interaction_step(psi, V, dt, s)) ** 2 for s in (1, -1)) / 2
        assert np.isclose(w, np.linalg.norm(psi) ** 2, rtol=1e-12)
    with pytest.raises(ValueError):
        interaction_step(psi, V, 0.1, 0)


def test_real_fast_path_matches_complex():
    sys = builtin_example3d()
    noise = presample(50, 0.01, 3, "rademacher", 2, batch=(4,))
    for scheme in ("em", "weak1"):
        a = propagate(sys, scheme, sys.X0, 0.5, 0.01, noise, allow_real=True)
        b = propagate(sys, scheme, sys.X0, 0.5, 0.01, noise, allow_real=False)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_em_columns_match_em_reference():
    sys = builtin_example3d()
    noise = presample(40, 0.01, 3, "gaussian", 3, second=False, batch=(5,))
    a = propagate(sys, "em", sys.X0, 0.4, 0.01, noise)
    b = em_reference(sys, sys.X0, 0.4, 0.01, noise)
    assert np.allclose(a, b, rtol=1e-12)


def test_streamed_chunk_equals_presampled():
    sys = builtin_example3d()
    a = run_chunk(sys, "em", sys.X0, 0.2, 0.01, "gaussian", 9, 6, max_draws=10**9)
    b = run_chunk(sys, "em", sys.X0, 0.2, 0.01, "gaussian", 9, 6, max_draws=50)
    assert np.allclose(a, b, rtol=0, atol=0)


def test_ensemble_independent_of_threads():
    sys = builtin_weak2()
    a = ensemble_run(sys, "weak2", 0.25, 2.0**-4, 3000, squared_norm, 5, chunk=700, threads=1)
    b = ensemble_run(sys, "weak2", 0.25, 2.0**-4, 3000, squared_norm, 5, chunk=700, threads=3)
    assert a.mean == b.mean and a.stderr == b.stderr and a.n == 3000


def _second_moment_map(mats, S):
    return sum(p * F @ S @ F.conj().T for p, F in mats)


@pytest.mark.parametrize("kind", ["matrix", "circuit"])
def test_weak2_exact_second_moment_order_two(kind):
    # law enumeration of the one-step second-moment map against the exact moment flow
    sys = builtin_weak2()
    A, V = sys.drift(0.0), sys.noise(0.0)[0]
    n = 3
    I = np.eye(n)
    sup = np.kron(A, I) + np.kron(I, A.conj()) + np.kron(V, V.conj())
    S0 = np.outer(sys.X0, sys.X0.conj())
    exact = (sla.expm(sup) @ S0.reshape(-1)).reshape(n, n)
    dts = [2.0**-k for k in range(3, 8)]
    errs = []
    for dt in dts:
        mid = Weak2Midpoint.from_operators(A, V, np.zeros_like(V), dt, noise_block=True)
        blocks = mid.circuit_blocks()
        mats = [(p, f2_matrix(mid, x1, x2) if kind == "matrix" else measurement_map(mid, x1, x2, blocks))
                for x1, x2, p in _weak2_outcomes()]
        S = S0.astype(complex)
        for _ in range(int(round(1 / dt))):
            S = _second_moment_map(mats, S)
        errs.append(np.linalg.norm(S - exact) / np.linalg.norm(exact))
    assert 1.8 <= fit_loglog(dts, errs).slope <= 2.3


def test_weak2_mean_map():
    rng = np.random.default_rng(4)
    A, V = rand_c(rng, 3, 3), rand_c(rng, 3, 3)
    dt = 0.01
    mid = Weak2Midpoint.from_operators(A, V, rand_c(rng, 3, 3), dt)
    EF = sum(p * f2_matrix(mid, x1, x2) for x1, x2, p in _weak2_outcomes())
    assert np.allclose(EF, np.eye(3) + dt * A + 0.5 * dt**2 * A @ A, atol=1e-14)


def test_weak2_measurement_requires_noise_block():
    rng = np.random.default_rng(5)
    mid = Weak2Midpoint.from_operators(np.eye(3), rand_c(rng, 3, 3), np.zeros((3, 3)), 0.1)
    assert not mid.is_noise_block
    with pytest.raises(ValueError):
        weak2_measurement_step(np.ones(3), mid, 1.0, 0.0)


def test_circuit_unitary():
    rng = np.random.default_rng(6)
    V = rand_c(rng, 3, 3) * 0.3
    mid = Weak2Midpoint.from_operators(-0.5 * V.conj().T @ V, V, np.zeros((3, 3)), 0.05, noise_block=True)
    U = sla.expm(mid.omega())
    assert np.allclose(U.conj().T @ U, np.eye(12), atol=1e-12)
    cols = np.vstack(mid.circuit_blocks())
    assert np.allclose(cols, U[:, :3], atol=1e-12)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        make_integrator(builtin_weak2(), "rk4", 0.1)
    assert set(SCHEMES) == {"em", "weak1", "weak1_kraus", "weak2", "weak2_measurement"}


@pytest.fixture(scope="module")
def seg_setup():
    sys = builtin_example3d()
    chain = build_chain(32, 1.0)
    ro = make_readout(chain, p_star=0.1)
    return sys, chain, ro


def test_mlc_weak1_projection_exact(seg_setup):
    sys, chain, ro = seg_setup
    dil = dilate(sys, chain, use_mlc=True)
    noise = presample(100, 0.01, 3, "rademacher", 1, batch=(3,))
    state, diag = run_segmented(dil, ro, "weak1", 1.0, 0.01, 0.25, noise, refresh=False, track_offmode=True)
    classical = propagate(sys, "weak1", sys.X0, 1.0, 0.01, noise)
    rec = state.reconstruct(ro, 3)
    assert np.allclose(rec, classical, rtol=1e-9)
    assert diag["offmode_max"] < 1e-12
    assert np.allclose(state.lam, np.prod(diag["g"], axis=0) * 3.0)


def test_refresh_bookkeeping(seg_setup):
    sys, chain, ro = seg_setup
    dil = dilate(sys, chain, use_mlc=False)
    noise = presample(100, 0.01, 3, "rademacher", 2)
    state, diag = run_segmented(dil, ro, "weak1", 1.0, 0.01, 0.25, noise, refresh=True)
    assert diag["segments"] == 4
    assert np.all((diag["q_window"] > 0) & (diag["q_window"] <= 1))
    assert np.all(diag["oaa_rounds"] >= 1)
    assert np.isclose(np.linalg.norm(state.phi), 1.0)
    assert np.allclose(diag["Gamma1"], np.sum(diag["g"] ** -0.5))


def test_refresh_keeps_factored_state_factored(seg_setup):
    # with the closure the ancilla stays in r_h, so the window weight is P_win and refresh maps back to r_h
    sys, chain, ro = seg_setup
    dil = dilate(sys, chain, use_mlc=True)
    noise = presample(100, 0.01, 3, "rademacher", 2)
    state, diag = run_segmented(dil, ro, "weak1", 1.0, 0.01, 0.25, noise, refresh=True)
    assert np.allclose(diag["q_window"], ro.P_win, rtol=1e-10)
    assert off_mode_weight(state.phi, chain.r, 33, 3) < 1e-12


def test_refresh_floor(seg_setup):
    sys, chain, _ = seg_setup
    ro = make_readout(chain, j_star=0)
    dil = dilate(sys, chain, use_mlc=False)
    noise = presample(100, 0.01, 3, "rademacher", 2)
    with pytest.raises(RefreshError):
        run_segmented(dil, ro, "weak1", 1.0, 0.01, 0.5, noise, refresh=True)


def test_segment_grid_must_divide(seg_setup):
    sys, chain, ro = seg_setup
    dil = dilate(sys, chain)
    noise = presample(100, 0.01, 3, "rademacher", 2)
    with pytest.raises(ValueError):
        run_segmented(dil, ro, "weak1", 1.0, 0.01, 0.3, noise)


def test_weak1_step_helper_matches_integrator():
    rng = np.random.default_rng(7)
    H = rand_c(rng, 3, 3)
    H = H + H.conj().T
    V = rand_c(rng, 3, 3)
    psi = rand_c(rng, 3)
    out = weak1_step(psi, H, [V], 0.01, [0.1])
    prop = sla.expm(-1j * H * 0.01)
    expect = (np.eye(3) - 0.005 * V.conj().T @ V + 0.1 * V) @ prop @ psi
    assert np.allclose(out, expect)

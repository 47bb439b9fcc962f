from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from ringclock.errors import BadDimension, DimensionOverflow, NonPositiveCoupling
from ringclock.model import (
    AnsatzParams,
    CouplingProfile,
    Limits,
    RingClockModel,
    coupling_profile,
    effective_hamiltonian,
    hamiltonian,
    liouvillian,
    unvec,
    vec,
)


def random_model(rng, n, delta=0.0):
    return RingClockModel(CouplingProfile.from_values(rng.uniform(0.2, 2.0, n - 1)), gamma=1.0, delta=delta)


def random_hermitian(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return a + a.conj().T


def test_flat_ansatz():
    p = coupling_profile(5, AnsatzParams(mu_l=0, g=1, mu_r=0, lambda_l=1, lambda_r=1))
    assert np.allclose(p.as_array(), 1.0)


def test_ansatz_substitution():
    p = coupling_profile(3, AnsatzParams(mu_l=0.5, g=1, mu_r=0, lambda_l=1, lambda_r=1))
    assert np.allclose(p.as_array(), [0.5, 1 - 0.5 * np.exp(-1)], rtol=0, atol=1e-15)


def test_ansatz_errors():
    with pytest.raises(NonPositiveCoupling):
        coupling_profile(10, AnsatzParams(mu_l=2.0, g=1, mu_r=0, lambda_l=1, lambda_r=1))
    with pytest.raises(BadDimension):
        coupling_profile(1, AnsatzParams(mu_l=0, g=1, mu_r=0, lambda_l=1, lambda_r=1))
    with pytest.raises(ValueError):
        AnsatzParams(mu_l=0, g=1, mu_r=0, lambda_l=0, lambda_r=1)


def test_profile_validation():
    with pytest.raises(BadDimension):
        CouplingProfile(3, (1.0,))
    with pytest.raises(NonPositiveCoupling):
        CouplingProfile.from_values([1.0, -0.1])
    assert CouplingProfile(1, ()).n == 1


def test_ansatz_shape_monotone():
    left = coupling_profile(40, AnsatzParams(mu_l=0.6, g=1, mu_r=0, lambda_l=4, lambda_r=1)).as_array()
    assert np.all(np.diff(left) > 0)
    right = coupling_profile(40, AnsatzParams(mu_l=0, g=1, mu_r=0.8, lambda_l=4, lambda_r=1)).as_array()
    assert np.all(np.diff(right[-6:]) > 0)


def test_three_regions_n40():
    # left ramp rises, bulk is flat, last few couplings rise
    p = AnsatzParams(mu_l=0.09, g=0.165, mu_r=0.97, lambda_l=3.0, lambda_r=0.56)
    v = coupling_profile(40, p).as_array()
    assert v[0] < v[5] < v[10]
    assert np.ptp(v[15:35]) < 0.01 * p.g
    assert v[-1] > 1.5 * p.g and v[-3] > 1.01 * p.g and v[-6] < 1.01 * p.g


def test_hamiltonian_two_site():
    assert np.array_equal(hamiltonian(CouplingProfile.from_values([0.7])), [[0, 0.7], [0.7, 0]])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0.05, 5.0), min_size=1, max_size=12))
def test_hamiltonian_real_symmetric(vals):
    H = hamiltonian(CouplingProfile.from_values(vals))
    assert np.isrealobj(H) or np.all(H.imag == 0)
    assert np.array_equal(H, H.T)
    assert np.all(np.diag(H) == 0)
    assert np.array_equal(np.diag(H, 1), vals)


def test_effective_hamiltonian_two_site():
    m = RingClockModel(CouplingProfile.from_values([1.0]))
    assert np.allclose(effective_hamiltonian(m), [[0, 1], [1, -0.5j]], rtol=0, atol=0)


def test_effective_hamiltonian_delta_zero_entrywise():
    rng = np.random.default_rng(1)
    m = random_model(rng, 7)
    expected = hamiltonian(m.profile).astype(complex)
    expected[-1, -1] -= 0.5j * m.gamma
    assert np.array_equal(effective_hamiltonian(m), expected)
    heff = effective_hamiltonian(m.with_delta(0.3))
    assert heff[0, 0] == -0.5j * 0.3


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 15), st.floats(0, 1), st.integers(0, 2**31))
def test_effective_spectrum_dissipative(n, delta, seed):
    m = random_model(np.random.default_rng(seed), n, delta)
    heff = effective_hamiltonian(m)
    assert np.all(np.linalg.eigvals(heff).imag <= 1e-12)
    anti = (heff - heff.conj().T) / 2j
    assert np.all(np.linalg.eigvalsh(anti) <= 1e-12)


@pytest.mark.parametrize("delta", [0.0, 0.25, 1.0])
def test_trace_preservation(delta):
    rng = np.random.default_rng(7)
    m = random_model(rng, 6, delta)
    L = liouvillian(m, 0.0, delta)
    tr = vec(np.eye(6)).conj()
    worst = max(abs(tr @ (L @ vec(random_hermitian(rng, 6)))) for _ in range(100))
    assert worst <= 1e-12


@pytest.mark.parametrize("n", [1, 2, 5, 9])
def test_unique_zero_eigenvalue(n):
    rng = np.random.default_rng(n)
    m = random_model(rng, n) if n > 1 else RingClockModel(CouplingProfile(1, ()))
    ev = np.linalg.eigvals(liouvillian(m, 0.0, 0.0))
    tol = 1e-9 * max(np.abs(ev).max(), 1.0)
    assert np.sum(np.abs(ev) <= tol) == 1


def test_liouvillian_matches_master_equation():
    m = RingClockModel(CouplingProfile.from_values([1.0]), gamma=1.0, delta=0.2)
    H = hamiltonian(m.profile)
    J, Jb = m.jump_operator(), m.reverse_jump_operator()
    jumps = [J, Jb]

    def rhs(_, y):
        rho = y.reshape(2, 2)
        out = -1j * (H @ rho - rho @ H)
        for A in jumps:
            AdA = A.conj().T @ A
            out += A @ rho @ A.conj().T - 0.5 * (AdA @ rho + rho @ AdA)
        return out.ravel()

    rho0 = np.diag([1.0, 0.0]).astype(complex)
    t = 3.7
    sol = solve_ivp(rhs, (0, t), rho0.ravel(), method="DOP853", rtol=1e-12, atol=1e-14)
    ode = sol.y[:, -1].reshape(2, 2)
    L = liouvillian(m, 0.0, m.delta)
    assert L.shape == (4, 4)
    exact = unvec(sla.expm(L * t) @ vec(rho0))
    assert np.max(np.abs(exact - ode)) < 1e-10


def test_vec_column_stacking():
    a = np.arange(4.0).reshape(2, 2)
    assert np.array_equal(vec(a), [0, 2, 1, 3])
    assert np.array_equal(unvec(vec(a)), a)


def test_dimension_overflow():
    m = RingClockModel(CouplingProfile.flat(12))
    with pytest.raises(DimensionOverflow):
        liouvillian(m, 0.0, 0.0, Limits(hilbert_n=100, superop_n=10))


def test_model_invariants():
    m = RingClockModel(CouplingProfile.flat(3), delta=np.exp(-2.5))
    assert m.sigma_tick() == pytest.approx(2.5)
    assert RingClockModel(CouplingProfile.flat(3)).sigma_tick() == np.inf
    with pytest.raises(ValueError):
        RingClockModel(CouplingProfile.flat(3), delta=1.5)
    with pytest.raises(ValueError):
        RingClockModel(CouplingProfile.flat(3), gamma=0)

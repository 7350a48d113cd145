import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_hamiltonian, dense_spin, qubit_collective
from spinsqueeze.spin import (
    BracketError,
    HamiltonianParams,
    NearDegeneracyError,
    apply_jx,
    apply_jx2,
    apply_jz,
    build_operators,
    coherent_state,
    dicke_state,
    find_chi_for_signal,
    ground_state,
    hamiltonian_apply,
    observables,
    squeezing_parameter,
    target_state,
)


# --- two atoms: closed-form oracle ------------------------------------------
# J = 1, even block {m=+1, m=-1}: H = [[-1 + chi/2, chi/2], [chi/2, 1 + chi/2]],
# so E0 = chi/2 - sqrt(1 + chi^2/4) and <Jz> = 1/sqrt(1 + chi^2/4).


def test_two_atom_energy_at_chi_two():
    ops = build_operators(2)
    _, e = ground_state(ops, HamiltonianParams(chi=2.0))
    assert e == pytest.approx(1 - np.sqrt(2), abs=1e-12)


def test_two_atom_energy_at_chi_one():
    ops = build_operators(2)
    _, e = ground_state(ops, HamiltonianParams(chi=1.0))
    assert e == pytest.approx(0.5 - np.sqrt(5) / 2, abs=1e-12)


def test_two_atom_target():
    ops = build_operators(2)
    chi, psi = target_state(ops)
    obs = observables(ops, psi)
    assert chi == pytest.approx(2.0, abs=1e-6)
    assert obs.mean_jz == pytest.approx(1 / np.sqrt(2), abs=1e-6)
    assert obs.xi_squared == pytest.approx(2 - np.sqrt(2), abs=1e-6)


def test_coherent_state_is_at_the_standard_limit():
    for n in (2, 7, 30):
        ops = build_operators(n)
        obs = observables(ops, coherent_state(ops))
        assert obs.mean_jz == pytest.approx(n / 2)
        assert obs.var_jx == pytest.approx(n / 4)
        assert obs.xi_squared == pytest.approx(1.0)


# --- operator algebra ------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3, 6, 11])
def test_banded_products_match_dense(n, rng):
    ops = build_operators(n)
    jz, jx, _ = dense_spin(n)
    v = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
    np.testing.assert_allclose(apply_jz(ops, v), jz @ v, atol=1e-12)
    np.testing.assert_allclose(apply_jx(ops, v), jx @ v, atol=1e-12)
    np.testing.assert_allclose(apply_jx2(ops, v), jx @ jx @ v, atol=1e-12)
    mat = rng.normal(size=(n + 1, 4))
    np.testing.assert_allclose(apply_jx2(ops, mat), jx @ jx @ mat, atol=1e-12)


@pytest.mark.parametrize("n", [2, 5, 8])
def test_commutation_and_casimir(n):
    ops = build_operators(n)
    jz, jx, jy = ops.jz_dense(), ops.jx_dense(), ops.jy_dense()
    j = n / 2
    np.testing.assert_allclose(jx @ jy - jy @ jx, 1j * jz, atol=1e-12)
    np.testing.assert_allclose(jx @ jx + jy @ jy + jz @ jz, j * (j + 1) * np.eye(n + 1), atol=1e-12)
    np.testing.assert_allclose(ops.jplus_dense(), ops.jminus_dense().T)


@pytest.mark.parametrize("n", [2, 4, 5])
def test_dicke_spectrum_is_inside_qubit_spectrum(n):
    # the symmetric sector is invariant, so its levels must appear in the 2^N spectrum
    chi = 1.7
    jz, jx = qubit_collective(n)
    full = np.linalg.eigvalsh(-jz + chi * jx @ jx)
    ops = build_operators(n)
    levels = np.linalg.eigvalsh(-ops.jz_dense() + chi * ops.jx2_dense())
    for e in levels:
        assert np.min(np.abs(full - e)) < 1e-10
    _, e0 = ground_state(ops, HamiltonianParams(chi=chi))
    assert e0 == pytest.approx(full[0], abs=1e-10)


@pytest.mark.parametrize("n", [4, 10, 31])
def test_ground_state_matches_dense_eigensolver(n):
    for chi in (0.3, 4.0, 25.0):
        ops = build_operators(n)
        psi, e = ground_state(ops, HamiltonianParams(chi=chi))
        h = dense_hamiltonian(n, chi)
        w = np.linalg.eigvalsh(h)
        assert e == pytest.approx(w[0], abs=1e-9 * max(1, abs(w[0])))
        np.testing.assert_allclose(h @ psi, e * psi, atol=1e-9 * max(1, abs(e)))
        p = HamiltonianParams(chi=chi)
        np.testing.assert_allclose(hamiltonian_apply(ops, p, psi), h @ psi, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 40), chi=st.floats(0.0, 60.0))
def test_ground_state_properties(n, chi):
    ops = build_operators(2 * (n // 2))
    psi, _ = ground_state(ops, HamiltonianParams(chi=chi))
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)
    obs = observables(ops, psi)
    # Jx^2 and Jz preserve the parity of J - m: the ground state sits in the even block
    assert np.allclose(psi[1::2], 0)
    assert abs(obs.mean_jx) < 1e-10
    assert -ops.j - 1e-9 <= obs.mean_jz <= ops.j + 1e-9
    # variance of a Hermitian operator
    assert obs.var_jx >= -1e-12


@pytest.mark.parametrize("n", [2, 10, 30, 60])
def test_signal_root(n):
    ops = build_operators(n)
    chi = find_chi_for_signal(ops, ops.j / np.sqrt(2))
    psi, _ = ground_state(ops, HamiltonianParams(chi=chi))
    assert observables(ops, psi).mean_jz == pytest.approx(ops.j / np.sqrt(2), abs=1e-8 * ops.j)


def test_signal_is_monotone_in_chi():
    ops = build_operators(20)
    chis = np.linspace(0, 30, 31)
    sig = [observables(ops, ground_state(ops, HamiltonianParams(chi=c))[0]).mean_jz for c in chis]
    assert np.all(np.diff(sig) < 1e-12)


def test_full_signal_needs_no_interaction():
    ops = build_operators(10)
    assert find_chi_for_signal(ops, ops.j) == 0.0


def test_unreachable_signal_reports_bracket():
    ops = build_operators(40)
    with pytest.raises(BracketError):
        find_chi_for_signal(ops, 1e-3, chi_cap=16.0)
    with pytest.raises(ValueError):
        find_chi_for_signal(ops, 2 * ops.j)


def test_odd_atom_number_degeneracy_is_detected():
    # half-integer J: at omega -> 0 the two parity blocks become degenerate
    ops = build_operators(3)
    with pytest.raises(NearDegeneracyError):
        ground_state(ops, HamiltonianParams(chi=1.0, omega=-1e-14))


def test_validation():
    with pytest.raises(ValueError):
        build_operators(0)
    with pytest.raises(ValueError):
        build_operators(10, max_atoms=5)
    with pytest.raises(ValueError):
        HamiltonianParams(chi=-1.0)
    with pytest.raises(ValueError):
        HamiltonianParams(omega=1.0)
    ops = build_operators(4)
    with pytest.raises(ValueError):
        observables(ops, 2 * coherent_state(ops))
    with pytest.raises(ValueError):
        apply_jx(ops, np.ones(3))
    with pytest.raises(ValueError):
        dicke_state(ops, 0.5)


def test_zero_signal_gives_infinite_squeezing_parameter():
    ops = build_operators(4)
    obs = observables(ops, dicke_state(ops, 0))
    assert obs.xi_squared == np.inf and obs.zero_signal
    assert squeezing_parameter(2.0, 0.0, 1.0) == np.inf

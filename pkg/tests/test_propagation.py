import numpy as np
import pytest
from scipy.linalg import expm

from conftest import dense_hamiltonian, exact_piecewise
from spinsqueeze.controls import ControlProtocol, CrabAnsatz, control_value, linear_ramp
from spinsqueeze.propagation import (
    TRAJECTORY_COLUMNS,
    Method,
    NormDriftError,
    PropagationConfig,
    default_step,
    evolve,
    infidelity,
    propagate,
    propagate_full,
    protocol_coefficients,
    time_grid,
    time_to_reach,
    write_trajectory,
)
from spinsqueeze.spin import build_operators, coherent_state, dicke_state, observables, target_state


def random_crab(seed, total_time, chi_final, n_f=4, scale=0.4):
    rng = np.random.default_rng(seed)
    base = CrabAnsatz.draw(n_f, rng)
    return ControlProtocol(total_time, chi_final, base.with_coeffs(rng.normal(scale=scale, size=2 * n_f)))


def test_cross_method_agreement_n4():
    ops = build_operators(4)
    protocol = random_crab(1, 3.0, 2.5)
    ref = propagate(ops, protocol, PropagationConfig(step_size=1e-4, method=Method.RK4), coherent_state(ops))
    expm_state = propagate(ops, protocol, PropagationConfig(step_size=1e-3, method=Method.EXPM), coherent_state(ops))
    rk4_state = propagate(ops, protocol, PropagationConfig(step_size=1e-3, method=Method.RK4), coherent_state(ops))
    split_state = propagate(ops, protocol, PropagationConfig(step_size=1e-3, method=Method.SPLIT), coherent_state(ops))
    assert infidelity(rk4_state, expm_state) < 1e-8
    assert infidelity(ref, expm_state) < 1e-8
    assert infidelity(ref, split_state) < 1e-8


def test_constant_field_matches_dense_exponential():
    n, chi, t = 6, 1.3, 2.0
    ops = build_operators(n)
    psi0 = np.linspace(1, 2, n + 1) + 0.5j
    psi0 /= np.linalg.norm(psi0)
    exact = expm(-1j * t * dense_hamiltonian(n, chi)) @ psi0

    edges = time_grid(t, 0.1)

    def coeffs(tt, _mid):
        return np.full(np.shape(tt), -1.0), np.full(np.shape(tt), chi)

    for method in Method:
        h = 1e-3 if method is not Method.EXPM else 0.5
        res = evolve(ops, time_grid(t, h), coeffs, psi0, method)
        assert abs(np.vdot(exact, res.state)) ** 2 == pytest.approx(1, abs=1e-9), method
    # expm is exact for constant H at any step
    res = evolve(ops, edges, coeffs, psi0, Method.EXPM)
    np.testing.assert_allclose(res.state, exact, atol=1e-10)


def test_ramp_matches_dense_piecewise_oracle():
    n, total, chi_f = 8, 4.0, 3.0
    ops = build_operators(n)
    steps = 400
    exact = exact_piecewise(n, lambda t: chi_f * t / total, total, steps)
    got = propagate(ops, linear_ramp(total, chi_f), PropagationConfig(step_size=total / steps), coherent_state(ops))
    assert abs(np.vdot(exact, got)) ** 2 == pytest.approx(1, abs=1e-12)


def test_expm_norm_is_exact_per_step():
    ops = build_operators(30)
    protocol = random_crab(4, 2.0, 11.0)
    res = propagate_full(ops, protocol, PropagationConfig(step_size=0.01, method=Method.EXPM), coherent_state(ops))
    assert abs(res.norm_drift) / res.n_steps <= 1e-11


def test_rk4_drift_is_fourth_order():
    # RK4's norm error on a pure phase rotation scales as (dt)^5 per step, (dt)^4 overall
    ops = build_operators(6)
    protocol = random_crab(2, 2.0, 2.0)
    drifts = []
    for h in (0.01, 0.005):
        res = propagate_full(ops, protocol, PropagationConfig(step_size=h, method=Method.RK4), coherent_state(ops))
        drifts.append(abs(res.norm_drift))
    assert drifts[0] / drifts[1] >= 8


def test_rk4_too_coarse_aborts_with_diagnostic():
    ops = build_operators(30)
    with pytest.raises(NormDriftError, match="reduce the step size"):
        propagate(ops, linear_ramp(5.0, 11.0), PropagationConfig(step_size=0.05, method=Method.RK4),
                  coherent_state(ops))


def test_default_steps_are_resolved_and_accurate():
    ops = build_operators(20)
    chi, goal = target_state(ops)
    protocol = linear_ramp(10.0, chi)
    states = {m: propagate(ops, protocol, PropagationConfig(method=m), coherent_state(ops)) for m in Method}
    fine = propagate(ops, protocol, PropagationConfig(step_size=1e-3, method=Method.EXPM), coherent_state(ops))
    for m, s in states.items():
        # Strang splitting is second order; its default step trades ~1e-6 error for speed
        assert infidelity(s, fine) < (1e-5 if m is Method.SPLIT else 1e-6), m
    assert default_step(ops, protocol, Method.RK4) <= 0.1 / (10 + chi * 100) + 1e-15


def test_parity_is_conserved():
    ops = build_operators(10)
    psi = propagate(ops, random_crab(3, 2.0, 4.0), PropagationConfig(method=Method.SPLIT), dicke_state(ops, 4))
    assert np.allclose(psi[0::2], 0)


def test_time_grid_cuts_at_breakpoints():
    edges = time_grid(1.0, 0.3, [0.05, 0.5, 0.95, 2.0, -1.0])
    assert edges[0] == 0 and edges[-1] == 1.0
    for b in (0.05, 0.5, 0.95):
        assert np.any(np.isclose(edges, b, atol=0))
    assert np.all(np.diff(edges) > 0)


def test_trajectory_dump(tmp_path):
    ops = build_operators(10)
    chi, _ = target_state(ops)
    res = propagate_full(ops, linear_ramp(5.0, chi), PropagationConfig(step_size=0.05, record_stride=10),
                         coherent_state(ops))
    assert len(res.trajectory) == 11
    assert res.trajectory[0]["xi_squared"] == pytest.approx(1.0)
    path = tmp_path / "traj.csv"
    write_trajectory(res.trajectory, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(TRAJECTORY_COLUMNS)
    assert len(lines) == 12


def test_infidelity_contract():
    ops = build_operators(4)
    a = coherent_state(ops)
    assert infidelity(a, a) == 0.0
    assert infidelity(a, dicke_state(ops, 0)) == 1.0
    with pytest.raises(ValueError):
        infidelity(a, np.ones(3))


def test_time_to_reach_small_system():
    ops = build_operators(6)
    t = time_to_reach(ops, 1e-2)
    chi, goal = target_state(ops)

    def inf(total):
        return infidelity(propagate(ops, linear_ramp(total, chi), PropagationConfig(), coherent_state(ops)), goal)

    assert inf(t) <= 1e-2
    assert inf(t * 0.99) > 1e-2
    with pytest.raises(ValueError):
        time_to_reach(ops, 1.5)
    with pytest.raises(ValueError):
        time_to_reach(ops, 1e-2, protocol_family="crab")


def test_slow_ramp_tracks_ground_state():
    ops = build_operators(10)
    chi, goal = target_state(ops)
    psi = propagate(ops, linear_ramp(400.0, chi), PropagationConfig(), coherent_state(ops))
    assert infidelity(psi, goal) < 1e-3
    assert observables(ops, psi).mean_jz == pytest.approx(ops.j / np.sqrt(2), rel=1e-2)


# --- controls ----------------------------------------------------------------


def test_crab_field_boundary_values():
    p = random_crab(5, 2.0, 7.0, scale=2.0)
    assert control_value(p, 0.0) == 0.0
    assert control_value(p, 2.0) == 7.0
    with pytest.raises(ValueError):
        control_value(p, 2.5)


def test_crab_field_is_clamped():
    ans = CrabAnsatz.draw(3, 0).with_coeffs(np.full(6, 50.0))
    p = ControlProtocol(1.0, 2.0, ans)
    t = np.linspace(0, 1, 1001)
    assert np.max(np.abs(p.field(t))) <= ans.clamp_factor * 2.0 + 1e-12
    assert p.peak() <= ans.clamp_factor * 2.0 + 1e-12


def test_zero_coefficients_reduce_to_ramp():
    t = np.linspace(0, 3, 50)
    ramp = linear_ramp(3.0, 4.0)
    crab = ControlProtocol(3.0, 4.0, CrabAnsatz.draw(5, 1))
    np.testing.assert_allclose(crab.field(t), ramp.field(t))
    assert ramp.kind == "linear" and crab.kind == "crab"


def test_frequency_randomisation():
    ans = CrabAnsatz.draw(10, 7)
    assert np.all(np.abs(ans.r) <= 0.5)
    np.testing.assert_allclose(ans.frequencies(2.0), np.pi * (1 + ans.r))
    np.testing.assert_array_equal(CrabAnsatz.draw(10, 7).r, ans.r)
    with pytest.raises(ValueError):
        CrabAnsatz(np.array([-1.5]), np.zeros(1), np.zeros(1))
    with pytest.raises(ValueError):
        ans.with_coeffs(np.zeros(3))


def test_protocol_validation():
    with pytest.raises(ValueError):
        ControlProtocol(0.0, 1.0)
    with pytest.raises(ValueError):
        PropagationConfig(step_size=-1)
    ops = build_operators(4)
    with pytest.raises(ValueError):
        evolve(ops, time_grid(1, 0.1), protocol_coefficients(linear_ramp(1, 1)), np.ones(5))

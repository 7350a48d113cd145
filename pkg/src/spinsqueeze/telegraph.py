"""Random telegraph noise on both Hamiltonian terms and disorder averages.

H(t) = chi(t) [1 + K_a alpha(t)] Jx^2 + omega [1 + K_b beta(t)] Jz

alpha and beta are independent piecewise-constant processes: values are
uniform on [-1, 1] and switch at Poisson times with rate nu.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .controls import ControlProtocol
from .propagation import Method, PropagationConfig, default_step, evolve, infidelity, time_grid
from .spin import OMEGA, SpinOperators, coherent_state, observables

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TelegraphConfig:
    k_alpha: float = 0.05
    k_beta: float = 0.05
    nu: float = 500.0
    n_realizations: int = 24
    seed: int = 0

    def __post_init__(self):
        if self.k_alpha < 0 or self.k_beta < 0:
            raise ValueError("noise amplitudes must be non-negative")
        if not self.nu > 0:
            raise ValueError("switch rate nu must be positive")
        if self.n_realizations < 1:
            raise ValueError("need at least one realization")

    @property
    def silent(self) -> bool:
        return self.k_alpha == 0 and self.k_beta == 0


@dataclass(frozen=True)
class TelegraphTrajectory:
    """``values[k]`` holds on ``[edges[k], edges[k+1])`` with edges = (0, *switch_times, T)."""

    switch_times: np.ndarray
    values: np.ndarray
    total_time: float

    def __post_init__(self):
        if len(self.values) != len(self.switch_times) + 1:
            raise ValueError("need exactly one value per segment")

    def __call__(self, t) -> np.ndarray:
        return self.values[np.searchsorted(self.switch_times, t, side="right")]

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([[0.0], self.switch_times, [self.total_time]])


def sample_trajectory(nu: float, total_time: float, rng=None) -> TelegraphTrajectory:
    """Poisson switching (mean wait 1/nu) with uniform segment values on [-1, 1]."""
    if not nu > 0 or not total_time > 0:
        raise ValueError("nu and total_time must be positive")
    rng = np.random.default_rng(rng)
    expected = nu * total_time
    chunk = int(expected + 10 * np.sqrt(expected) + 10)
    times = np.cumsum(rng.exponential(1 / nu, chunk))
    while times[-1] < total_time:
        times = np.concatenate([times, times[-1] + np.cumsum(rng.exponential(1 / nu, chunk))])
    switches = times[times < total_time]
    values = rng.uniform(-1.0, 1.0, len(switches) + 1)
    return TelegraphTrajectory(switches, values, total_time)


def draw_pair(config: TelegraphConfig, total_time: float, realization: int):
    rng = np.random.default_rng([config.seed, realization])
    return sample_trajectory(config.nu, total_time, rng), sample_trajectory(config.nu, total_time, rng)


def propagate_noisy(
    ops: SpinOperators,
    protocol: ControlProtocol,
    config: TelegraphConfig,
    traj_alpha: TelegraphTrajectory,
    traj_beta: TelegraphTrajectory,
    initial: np.ndarray,
    prop: PropagationConfig = PropagationConfig(method=Method.SPLIT),
    omega: float = OMEGA,
) -> np.ndarray:
    """Final state under the noisy Hamiltonian; steps are cut at every switch time."""
    T = protocol.total_time
    for traj in (traj_alpha, traj_beta):
        if abs(traj.total_time - T) > 1e-12 * T:
            raise ValueError(f"trajectory covers [0, {traj.total_time}], protocol needs [0, {T}]")
    step = prop.step_size or default_step(ops, protocol, prop.method, omega)
    if config.silent:
        edges = time_grid(T, step)
    else:
        breaks = np.concatenate([traj_alpha.switch_times, traj_beta.switch_times])
        edges = time_grid(T, step, breaks)

    def coeffs(t, mid):
        # noise evaluated at the step midpoint: steps never straddle a switch
        cx = protocol.field(t) * (1 + config.k_alpha * traj_alpha(mid))
        cz = omega * (1 + config.k_beta * traj_beta(mid))
        return cz, cx

    return evolve(ops, edges, coeffs, initial, prop.method).state


@dataclass(frozen=True)
class RealizationRecord:
    realization: int
    xi_squared: float
    infidelity: float
    mean_jz: float
    n_switches: int


@dataclass
class EnsembleResult:
    mean_xi2: float
    stderr_xi2: float
    mean_infidelity: float
    records: list[RealizationRecord]


def _realization(ops, protocol, config, goal, prop, k) -> RealizationRecord:
    alpha, beta = draw_pair(config, protocol.total_time, k)
    psi = propagate_noisy(ops, protocol, config, alpha, beta, coherent_state(ops), prop)
    obs = observables(ops, psi)
    return RealizationRecord(
        k, obs.xi_squared, infidelity(psi, goal), obs.mean_jz, len(alpha.switch_times) + len(beta.switch_times)
    )


def ensemble_squeezing(
    ops: SpinOperators,
    protocol: ControlProtocol,
    config: TelegraphConfig,
    goal: np.ndarray,
    prop: PropagationConfig = PropagationConfig(method=Method.SPLIT),
    workers: int = 1,
) -> EnsembleResult:
    """Disorder average of the final squeezing, one xi^2 per realization.

    Realization ``k`` draws (alpha, beta) from a generator seeded with
    ``(seed, k)``.
    """
    ks = range(config.n_realizations)
    args = (ops, protocol, config, goal, prop)
    errors = []
    records = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_realization, *args, k) for k in ks]
            for k, fut in zip(ks, futures):
                try:
                    records.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    errors.append((k, exc))
    else:
        for k in ks:
            try:
                records.append(_realization(*args, k))
            except Exception as exc:  # noqa: BLE001
                errors.append((k, exc))
    if errors:
        detail = "; ".join(f"realization {k}: {exc}" for k, exc in errors)
        raise RuntimeError(f"{len(errors)} of {config.n_realizations} realizations failed: {detail}")

    xi2 = np.array([r.xi_squared for r in records])
    stderr = float(xi2.std(ddof=1) / np.sqrt(len(xi2))) if len(xi2) > 1 else 0.0
    return EnsembleResult(
        mean_xi2=float(xi2.mean()),
        stderr_xi2=stderr,
        mean_infidelity=float(np.mean([r.infidelity for r in records])),
        records=records,
    )

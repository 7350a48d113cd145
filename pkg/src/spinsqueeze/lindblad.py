"""Master-equation evolution with interaction-driven collective decay.

drho/dt = -i[H, rho] + g(t) (2 J+ rho J- - J-J+ rho - rho J-J+)

with H = chi(t) Jx^2 (+ omega Jz by default) and a decay rate proportional
to the instantaneous interaction, g(t) = chi(t) delta / (2 kappa eta).
The jump operator J+ drives population toward ``|Jz = +J>``.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import _kernels
from .controls import ControlProtocol
from .propagation import time_grid
from .spin import OMEGA, Observables, SpinOperators, apply_jx, apply_jx2, coherent_state, squeezing_parameter

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10
POSITIVITY_ABORT = -1e-5
CHUNK_STEPS = 2000

# Cavity-QED clock parameters (angular frequencies, rad/s).
CAVITY_CLOCK = {
    "delta": 2 * np.pi * 3e9,
    "gamma": 2 * np.pi * 5e6,
    "g": 2 * np.pi * 0.4e6,
    "kappa": 2 * np.pi * 1e6,
}


class PositivityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DissipationConfig:
    """Decay-rate model.

    ``rate_mode="cooperativity"``: g = chi / (kappa_over_delta * eta), where
    ``kappa_over_delta`` is 2 kappa / delta.
    ``rate_mode="microscopic"``: g = chi * gamma delta / |g|^2 = chi * ``rate_per_chi``.
    """

    cooperativity: float = 1e6
    kappa_over_delta: float = 1e-3
    rate_mode: str = "cooperativity"
    rate_per_chi: float | None = None
    include_omega: bool = True

    def __post_init__(self):
        if self.rate_mode not in ("cooperativity", "microscopic"):
            raise ValueError(f"unknown rate_mode {self.rate_mode!r}")
        if self.rate_mode == "cooperativity" and not (self.cooperativity > 0 and self.kappa_over_delta > 0):
            raise ValueError("cooperativity and kappa_over_delta must be positive")
        if self.rate_mode == "microscopic" and not (self.rate_per_chi is not None and self.rate_per_chi >= 0):
            raise ValueError("microscopic mode needs a non-negative rate_per_chi")

    def gamma(self, chi):
        if self.rate_mode == "microscopic":
            return np.asarray(chi) * self.rate_per_chi
        return np.asarray(chi) / (self.kappa_over_delta * self.cooperativity)


def cavity_clock_preset(include_omega: bool = True) -> DissipationConfig:
    """Microscopic rate gamma delta / g^2 (about 1e5) from the cavity-clock numbers."""
    p = CAVITY_CLOCK
    return DissipationConfig(
        cooperativity=p["g"] ** 2 / (p["gamma"] * p["kappa"]),
        kappa_over_delta=2 * p["kappa"] / p["delta"],
        rate_mode="microscopic",
        rate_per_chi=p["gamma"] * p["delta"] / p["g"] ** 2,
        include_omega=include_omega,
    )


def _check_hermitian(rho: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    dev = np.max(np.abs(rho - rho.conj().T)) if rho.size else 0.0
    if dev > tol:
        raise ValueError(f"density matrix is not Hermitian (max deviation {dev:.3e})")


def _kernel_args(ops: SpinOperators):
    return ops.m, ops.jx2_diag, ops.jx2_off2, ops.jplus_amp


def lindblad_rhs(
    ops: SpinOperators,
    chi: float,
    gamma_tilde: float,
    rho: np.ndarray,
    include_omega_term: bool = True,
    omega: float = OMEGA,
) -> np.ndarray:
    rho = np.ascontiguousarray(rho, dtype=complex)
    if rho.shape != (ops.dim, ops.dim):
        raise ValueError(f"rho has shape {rho.shape}, expected {(ops.dim, ops.dim)}")
    _check_hermitian(rho)
    out = np.empty_like(rho)
    cz = omega if include_omega_term else 0.0
    _kernels.lindblad_rhs(out, rho, cz, float(chi), float(gamma_tilde), *_kernel_args(ops))
    return out


@dataclass
class DensityResult:
    rho: np.ndarray
    trace_drift: float
    symmetrization: float
    min_eigenvalue: float
    n_steps: int


def default_density_step(ops: SpinOperators, protocol: ControlProtocol, dissipation: DissipationConfig,
                         omega: float = OMEGA) -> float:
    """A quarter of the inverse spectral-radius bound of the generator (commutator plus decay).

    The bound uses the peak control value, so clamped CRAB pulses are covered.
    """
    j = ops.j
    peak = protocol.peak()
    radius = abs(omega) * 2 * j + peak * j * j + 2 * float(dissipation.gamma(peak)) * j * (j + 1)
    return min(5e-3, 0.25 / max(radius, 1e-12), protocol.total_time)


def propagate_density(
    ops: SpinOperators,
    protocol: ControlProtocol,
    dissipation: DissipationConfig,
    rho0: np.ndarray,
    step_size: float | None = None,
    omega: float = OMEGA,
) -> DensityResult:
    """Fixed-step RK4 on the master equation, rate tied to the instantaneous chi(t)."""
    rho = np.array(rho0, dtype=complex)
    if rho.shape != (ops.dim, ops.dim):
        raise ValueError(f"rho0 has shape {rho.shape}, expected {(ops.dim, ops.dim)}")
    _check_hermitian(rho)
    if abs(np.trace(rho).real - 1) > 1e-9:
        raise ValueError("rho0 must have unit trace")

    step = step_size or default_density_step(ops, protocol, dissipation, omega)
    edges = time_grid(protocol.total_time, step)
    h = np.diff(edges)
    nodes = np.stack([edges[:-1], edges[:-1] + 0.5 * h, edges[1:]], axis=1)
    chi = np.ascontiguousarray(protocol.field(nodes))
    gamma = np.ascontiguousarray(np.maximum(dissipation.gamma(chi), 0.0), dtype=float)
    cz = np.full(chi.shape, omega if dissipation.include_omega else 0.0)

    symm = 0.0
    min_eig = float(np.linalg.eigvalsh(rho)[0])
    n = len(h)
    for start in range(0, n, CHUNK_STEPS):
        sl = slice(start, min(start + CHUNK_STEPS, n))
        symm += _kernels.lindblad_rk4_steps(rho, cz[sl], chi[sl], gamma[sl], h[sl], *_kernel_args(ops))
        lowest = float(np.linalg.eigvalsh(rho)[0])
        min_eig = min(min_eig, lowest)
        if lowest < POSITIVITY_ABORT:
            raise PositivityError(
                f"eigenvalue {lowest:.3e} after step {sl.stop}/{n} (t={edges[sl.stop]:.4g}, step {step:.3e}); "
                "reduce the step size"
            )
    drift = float(np.trace(rho).real - 1)
    return DensityResult(rho, drift, symm, min_eig, n)


def squeezing_from_density(ops: SpinOperators, rho: np.ndarray) -> Observables:
    rho = np.asarray(rho)

    def expect(op_rho):
        val = np.trace(op_rho)
        if abs(val.imag) > 1e-9:
            raise ArithmeticError(f"expectation has imaginary residue {val.imag:.3e}")
        return float(val.real)

    mean_jz = float(np.real(np.dot(ops.m, np.diag(rho))))
    mean_jx = expect(apply_jx(ops, rho))
    var_jx = expect(apply_jx2(ops, rho)) - mean_jx**2
    return Observables(mean_jz, mean_jx, var_jx, squeezing_parameter(ops.j, mean_jz, var_jx))


def pure_density(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


@dataclass
class SweepPoint:
    eta: float
    protocol: str
    total_time: float
    xi2: float
    mean_jz: float
    trace_drift: float
    min_eigenvalue: float
    error: str = ""


def _sweep_point(ops, name, protocol, eta, kappa_over_delta, include_omega, step_size):
    try:
        diss = DissipationConfig(eta, kappa_over_delta, include_omega=include_omega)
        res = propagate_density(ops, protocol, diss, pure_density(coherent_state(ops)), step_size)
        obs = squeezing_from_density(ops, res.rho)
        return SweepPoint(eta, name, protocol.total_time, obs.xi_squared, obs.mean_jz, res.trace_drift,
                          res.min_eigenvalue)
    except (ArithmeticError, ValueError) as exc:
        logger.warning("sweep point eta=%g %s failed: %s", eta, name, exc)
        nan = float("nan")
        return SweepPoint(eta, name, protocol.total_time, nan, nan, nan, nan, error=str(exc))


def cooperativity_sweep(
    ops: SpinOperators,
    eta_grid,
    protocols: Mapping[str, ControlProtocol],
    kappa_over_delta: float = 1e-3,
    include_omega: bool = True,
    step_size: float | None = None,
    workers: int = 1,
) -> list[SweepPoint]:
    """Final squeezing vs cooperativity for each named protocol.

    Points are returned protocol-major, eta ascending.  Failed points carry
    NaNs and an error message instead of aborting the sweep.
    """
    eta = np.asarray(eta_grid, dtype=float)
    if eta.ndim != 1 or np.any(eta <= 0) or np.any(np.diff(eta) <= 0):
        raise ValueError("eta_grid must be positive and strictly ascending")
    jobs = [(ops, name, p, float(e), kappa_over_delta, include_omega, step_size)
            for name, p in protocols.items() for e in eta]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, *zip(*jobs)))
    return [_sweep_point(*job) for job in jobs]

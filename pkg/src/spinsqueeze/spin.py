"""Collective-spin operators in the Dicke basis, observables and ground states.

States are plain complex numpy vectors of length ``2J + 1`` ordered by
descending magnetic quantum number, ``m = +J, J - 1, ..., -J``, so the fully
polarised coherent state ``|Jz = +J>`` is index 0.

Operators are stored banded: ``Jz`` is diagonal, ``Jx`` tridiagonal and
``Jx^2`` pentadiagonal with a zero first off-diagonal.  Both ``Jz`` and
``Jx^2`` conserve the parity of ``J - m``, so every Hamiltonian used here
splits into two independent tridiagonal blocks (:class:`ParitySector`).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

MAX_ATOMS = 10_000
OMEGA = -1.0
SIGNAL_FLOOR = 1e-12


class NearDegeneracyError(RuntimeError):
    """Ground state is not separated from the first excited state."""


class BracketError(ValueError):
    """The signal target is never crossed inside the scanned interaction range."""


@dataclass(frozen=True)
class ParitySector:
    """Block of basis states sharing the parity of ``J - m``.

    Inside a block ``Jz`` is diagonal and ``Jx^2`` is tridiagonal.
    """

    indices: np.ndarray
    jz: np.ndarray
    jx2_diag: np.ndarray
    jx2_off: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.indices)

    @cached_property
    def jx2_eigen(self) -> tuple[np.ndarray, np.ndarray]:
        """Fixed eigenbasis of ``Jx^2`` in this block, used by split-operator steps."""
        if self.dim == 1:
            return self.jx2_diag.copy(), np.ones((1, 1))
        mu, w = eigh_tridiagonal(self.jx2_diag, self.jx2_off)
        return mu, np.ascontiguousarray(w)

    def hamiltonian(self, cz: float, cx: float) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of ``cz Jz + cx Jx^2`` restricted to the block."""
        return cz * self.jz + cx * self.jx2_diag, cx * self.jx2_off


@dataclass(frozen=True)
class SpinOperators:
    """Banded angular-momentum operators for ``n_atoms`` spin-1/2 particles.

    ``jplus_amp[k]`` is the matrix element ``<m_k| J+ |m_{k+1}>`` with
    ``m_k = J - k``.
    """

    n_atoms: int
    j: float
    m: np.ndarray
    jplus_amp: np.ndarray
    jx2_diag: np.ndarray
    jx2_off2: np.ndarray
    sectors: tuple[ParitySector, ParitySector] = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.m)

    @property
    def jz(self) -> np.ndarray:
        return self.m

    @property
    def jx_off(self) -> np.ndarray:
        return 0.5 * self.jplus_amp

    # dense views, for oracles and small systems only

    def jplus_dense(self) -> np.ndarray:
        return np.diag(self.jplus_amp, 1)

    def jminus_dense(self) -> np.ndarray:
        return np.diag(self.jplus_amp, -1)

    def jz_dense(self) -> np.ndarray:
        return np.diag(self.m)

    def jx_dense(self) -> np.ndarray:
        return np.diag(self.jx_off, 1) + np.diag(self.jx_off, -1)

    def jy_dense(self) -> np.ndarray:
        return (self.jplus_dense() - self.jminus_dense()) / 2j

    def jx2_dense(self) -> np.ndarray:
        out = np.diag(self.jx2_diag)
        if self.dim > 2:
            out += np.diag(self.jx2_off2, 2) + np.diag(self.jx2_off2, -2)
        return out


@dataclass(frozen=True)
class HamiltonianParams:
    chi: float = 0.0
    omega: float = OMEGA

    def __post_init__(self):
        if not self.omega < 0:
            raise ValueError(f"omega must be strictly negative, got {self.omega}")
        if not self.chi >= 0:
            raise ValueError(f"chi must be non-negative, got {self.chi}")


@dataclass(frozen=True)
class Observables:
    mean_jz: float
    mean_jx: float
    var_jx: float
    xi_squared: float

    @property
    def zero_signal(self) -> bool:
        return not np.isfinite(self.xi_squared)


def build_operators(n_atoms: int, max_atoms: int = MAX_ATOMS) -> SpinOperators:
    """Collective operators of the symmetric (maximal-J) sector."""
    if int(n_atoms) != n_atoms or n_atoms < 1:
        raise ValueError(f"n_atoms must be a positive integer, got {n_atoms!r}")
    if n_atoms > max_atoms:
        raise ValueError(f"n_atoms={n_atoms} exceeds the configured maximum {max_atoms}")
    n_atoms = int(n_atoms)
    j = n_atoms / 2
    m = j - np.arange(n_atoms + 1, dtype=float)
    lower = m[1:]
    jplus_amp = np.sqrt(j * (j + 1) - lower * (lower + 1))
    off = 0.5 * jplus_amp

    jx2_diag = np.zeros(n_atoms + 1)
    jx2_diag[:-1] += off**2
    jx2_diag[1:] += off**2
    jx2_off2 = off[:-1] * off[1:]

    sectors = tuple(
        ParitySector(
            indices=np.arange(p, n_atoms + 1, 2),
            jz=m[p::2].copy(),
            jx2_diag=jx2_diag[p::2].copy(),
            jx2_off=jx2_off2[p::2].copy(),
        )
        for p in (0, 1)
    )
    return SpinOperators(n_atoms, j, m, jplus_amp, jx2_diag, jx2_off2, sectors)


def _check_dim(ops: SpinOperators, v: np.ndarray) -> None:
    if v.shape[0] != ops.dim:
        raise ValueError(f"state has leading dimension {v.shape[0]}, operators have {ops.dim}")


def apply_jz(ops: SpinOperators, v: np.ndarray) -> np.ndarray:
    _check_dim(ops, v)
    return (ops.m * v.T).T


def apply_jx(ops: SpinOperators, v: np.ndarray) -> np.ndarray:
    _check_dim(ops, v)
    off = ops.jx_off
    out = np.zeros_like(v, dtype=np.result_type(v, float))
    out[:-1] += (off * v[1:].T).T
    out[1:] += (off * v[:-1].T).T
    return out


def apply_jx2(ops: SpinOperators, v: np.ndarray) -> np.ndarray:
    _check_dim(ops, v)
    out = (ops.jx2_diag * v.T).T.astype(np.result_type(v, float))
    o2 = ops.jx2_off2
    if len(o2):
        out[:-2] += (o2 * v[2:].T).T
        out[2:] += (o2 * v[:-2].T).T
    return out


def hamiltonian_apply(ops: SpinOperators, params: HamiltonianParams, v: np.ndarray) -> np.ndarray:
    """``(omega Jz + chi Jx^2) v`` using banded products only."""
    return params.omega * apply_jz(ops, v) + params.chi * apply_jx2(ops, v)


def coherent_state(ops: SpinOperators) -> np.ndarray:
    """``|Jz = +J>``."""
    psi = np.zeros(ops.dim, dtype=complex)
    psi[0] = 1.0
    return psi


def dicke_state(ops: SpinOperators, m: float) -> np.ndarray:
    k = ops.j - m
    if k != int(k) or not 0 <= k < ops.dim:
        raise ValueError(f"m={m} is not a valid magnetic number for J={ops.j}")
    psi = np.zeros(ops.dim, dtype=complex)
    psi[int(k)] = 1.0
    return psi


def squeezing_parameter(j: float, mean_jz: float, var_jx: float) -> float:
    """``xi^2 = 2J Var(Jx) / <Jz>^2``; ``inf`` when the signal vanishes."""
    if abs(mean_jz) < SIGNAL_FLOOR:
        return float("inf")
    return 2 * j * var_jx / mean_jz**2


def observables(ops: SpinOperators, state: np.ndarray, norm_tol: float = 1e-9) -> Observables:
    _check_dim(ops, state)
    norm = np.vdot(state, state).real
    if abs(norm - 1) > norm_tol:
        raise ValueError(f"state is not normalised (norm^2 = {norm!r})")

    def expect(av: np.ndarray) -> float:
        val = np.vdot(state, av)
        if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
            raise ArithmeticError(f"expectation of a Hermitian operator has imaginary part {val.imag}")
        return float(val.real)

    mean_jz = expect(apply_jz(ops, state))
    mean_jx = expect(apply_jx(ops, state))
    var_jx = expect(apply_jx2(ops, state)) - mean_jx**2
    return Observables(mean_jz, mean_jx, var_jx, squeezing_parameter(ops.j, mean_jz, var_jx))


def _fix_phase(v: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(v))
    return v * (abs(v[k]) / v[k])


def ground_state(
    ops: SpinOperators, params: HamiltonianParams, residual_tol: float = 1e-10
) -> tuple[np.ndarray, float]:
    """Lowest eigenpair of ``omega Jz + chi Jx^2``.

    Each parity block is diagonalised as a symmetric tridiagonal matrix.  The
    returned vector has its largest-magnitude amplitude real and positive.
    """
    candidates = []
    for sector in ops.sectors:
        if sector.dim == 0:
            continue
        d, e = sector.hamiltonian(params.omega, params.chi)
        if sector.dim == 1:
            w, v = d.copy(), np.ones((1, 1))
        else:
            w, v = eigh_tridiagonal(d, e, select="i", select_range=(0, min(1, sector.dim - 1)))
        for k in range(len(w)):
            candidates.append((w[k], sector, v[:, k]))
    candidates.sort(key=lambda c: c[0])
    energy, sector, vec = candidates[0]

    scale = max(abs(params.omega) * ops.j + params.chi * ops.j**2, 1.0)
    if len(candidates) > 1 and candidates[1][0] - energy < 1e-10 * scale:
        raise NearDegeneracyError(
            f"ground state of N={ops.n_atoms}, chi={params.chi} is degenerate within "
            f"{candidates[1][0] - energy:.3e} (scale {scale:.3e})"
        )

    psi = np.zeros(ops.dim, dtype=complex)
    psi[sector.indices] = vec
    psi = _fix_phase(psi)
    residual = np.linalg.norm(hamiltonian_apply(ops, params, psi) - energy * psi)
    if residual > residual_tol * scale:
        raise ArithmeticError(f"eigensolver residual {residual:.3e} exceeds tolerance (N={ops.n_atoms})")
    return psi, float(energy)


def signal_at(ops: SpinOperators, chi: float, omega: float = OMEGA) -> float:
    """``<Jz>`` of the ground state at interaction strength ``chi``."""
    psi, _ = ground_state(ops, HamiltonianParams(chi=chi, omega=omega))
    return observables(ops, psi).mean_jz


def find_chi_for_signal(
    ops: SpinOperators,
    target_signal: float,
    omega: float = OMEGA,
    chi_start: float = 10.0,
    chi_cap: float = 2.0**10,
) -> float:
    """Interaction strength whose ground state has ``<Jz> = target_signal``.

    The map ``chi -> <Jz>`` is monotone decreasing; the upper bracket starts at
    ``chi_start`` and doubles up to ``chi_cap``.
    """
    j = ops.j
    if not 0 < target_signal <= j:
        raise ValueError(f"target signal must lie in (0, J={j}], got {target_signal}")
    tol = 1e-8 * j
    if j - target_signal <= tol:
        return 0.0
    if ops.n_atoms % 2:
        logger.warning("odd N=%d (half-integer J): ground-state targets may be unreliable", ops.n_atoms)

    f = lambda chi: signal_at(ops, chi, omega) - target_signal  # noqa: E731
    hi = chi_start
    scanned = [0.0]
    while f(hi) > 0:
        scanned.append(hi)
        if hi >= chi_cap:
            raise BracketError(
                f"<Jz> stays above {target_signal} for chi in [0, {hi}] (N={ops.n_atoms}); scanned {scanned}"
            )
        hi = min(2 * hi, chi_cap)
    lo = scanned[-1]
    chi = brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    if abs(f(chi)) > tol:
        raise ArithmeticError(f"root refinement missed the target by {abs(f(chi)):.3e}")
    return float(chi)


def target_state(ops: SpinOperators, signal_fraction: float = 1 / np.sqrt(2)) -> tuple[float, np.ndarray]:
    """``(chi_M, |psi_0(chi_M, N)>)`` for the signal ``<Jz> = signal_fraction * J``."""
    chi = find_chi_for_signal(ops, signal_fraction * ops.j)
    psi, _ = ground_state(ops, HamiltonianParams(chi=chi))
    return chi, psi

"""Pure-state time evolution under H(t) = cz(t) Jz + cx(t) Jx^2.

Three fixed-step integrators are available:

``expm``
    piecewise-exact exponential of H at each step midpoint (tridiagonal
    eigensolve per parity block). Unconditionally stable; used for long
    adiabatic ramps.
``split``
    symmetric (Strang) splitting of the Jz and Jx^2 terms, each diagonal in a
    fixed basis, so a step is two small matrix-vector products. Used inside
    optimisation loops.
``rk4``
    classical Runge-Kutta on banded products. Stiff for large chi J^2; kept
    as a cross-check for small systems.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal

from . import _kernels
from .controls import ControlProtocol, linear_ramp
from .spin import OMEGA, SpinOperators, build_operators, coherent_state, observables, target_state

logger = logging.getLogger(__name__)

NORM_ABORT = 1e-6
TRAJECTORY_COLUMNS = ("t", "chi", "mean_jz", "var_jx", "xi_squared", "norm_drift")

# Coefficient callback: (node times, step midpoints) -> (cz, cx), each shaped like node times.
Coefficients = Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]


class Method(str, enum.Enum):
    RK4 = "rk4"
    EXPM = "expm"
    SPLIT = "split"


class NormDriftError(ArithmeticError):
    pass


@dataclass(frozen=True)
class PropagationConfig:
    """``step_size=None`` picks a method-dependent default (see :func:`default_step`)."""

    step_size: float | None = None
    method: Method = Method.EXPM
    record_stride: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.step_size is not None and not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.record_stride < 0:
            raise ValueError("record_stride must be >= 0")


@dataclass
class PropagationResult:
    state: np.ndarray
    norm_drift: float
    n_steps: int
    trajectory: list[dict] = field(default_factory=list)


def default_step(ops: SpinOperators, protocol: ControlProtocol, method: Method, omega: float = OMEGA) -> float:
    """Step size resolving the fastest relevant phase for each integrator.

    rk4 must resolve the spectral radius ``|omega| J + chi J^2``.  split needs
    ``dt ~ 1/(chi J)``, which keeps splitting errors near 1e-6 in overlap.  expm is
    exact for constant H, so only the variation of chi(t) limits its step.
    """
    j = ops.j
    peak = max(protocol.peak(), 1e-12)
    method = Method(method)
    if method is Method.RK4:
        h = min(1e-2, 0.1 / (abs(omega) * j + peak * j * j))
    elif method is Method.SPLIT:
        h = min(1e-2, 1.0 / (peak * j + abs(omega)))
    else:
        h = min(0.05, 1.5 / ops.n_atoms, protocol.total_time / 400)
    return min(h, protocol.total_time)


def time_grid(total_time: float, step: float, breakpoints=None) -> np.ndarray:
    """Uniform step edges on [0, T], refined so no step straddles a breakpoint."""
    n = max(1, math.ceil(total_time / step - 1e-9))
    edges = np.linspace(0.0, total_time, n + 1)
    if breakpoints is not None and len(breakpoints):
        bp = np.asarray(breakpoints, dtype=float)
        bp = bp[(bp > 0) & (bp < total_time)]
        edges = np.union1d(edges, bp)
        keep = np.concatenate([[True], np.diff(edges) > 1e-12 * total_time])
        edges = edges[keep]
        edges[-1] = total_time
    return edges


def _expm_steps(psi, sector, cz, cx, h):
    for k in range(len(h)):
        d, e = sector.hamiltonian(cz[k], cx[k])
        if sector.dim == 1:
            psi *= np.exp(-1j * d[0] * h[k])
            continue
        w, v = eigh_tridiagonal(d, e)
        psi[:] = v @ (np.exp(-1j * w * h[k]) * (v.T @ psi))


def evolve(
    ops: SpinOperators,
    edges: np.ndarray,
    coefficients: Coefficients,
    initial: np.ndarray,
    method: Method = Method.EXPM,
    record_stride: int = 0,
    recorder: Callable[[float, np.ndarray, float], dict] | None = None,
) -> PropagationResult:
    """Integrate ``i dpsi/dt = (cz Jz + cx Jx^2) psi`` over the step edges.

    Parity blocks evolve independently; blocks with no amplitude are skipped.
    """
    method = Method(method)
    psi = np.array(initial, dtype=complex)
    if psi.shape != (ops.dim,):
        raise ValueError(f"initial state has shape {psi.shape}, expected ({ops.dim},)")
    norm0 = np.linalg.norm(psi)
    if abs(norm0 - 1) > 1e-9:
        raise ValueError(f"initial state is not normalised (|psi| = {norm0})")

    h = np.diff(edges)
    mids = edges[:-1] + 0.5 * h
    n_steps = len(h)
    if method is Method.RK4:
        nodes = np.stack([edges[:-1], mids, edges[1:]], axis=1)
        cz, cx = coefficients(nodes, np.repeat(mids[:, None], 3, axis=1))
    else:
        cz, cx = coefficients(mids, mids)
    cz = np.ascontiguousarray(cz, dtype=float)
    cx = np.ascontiguousarray(cx, dtype=float)

    active = [s for s in ops.sectors if s.dim and np.any(psi[s.indices] != 0)]
    blocks = [np.ascontiguousarray(psi[s.indices]) for s in active]
    stride = record_stride if record_stride > 0 else n_steps
    trajectory = []
    if recorder is not None and record_stride > 0:
        trajectory.append(recorder(0.0, psi, 0.0))

    for start in range(0, n_steps, stride):
        stop = min(start + stride, n_steps)
        sl = slice(start, stop)
        for sector, block in zip(active, blocks):
            if method is Method.SPLIT:
                mu, w = sector.jx2_eigen
                _kernels.split_steps(block, sector.jz, w, mu, cz[sl], cx[sl], h[sl])
            elif method is Method.RK4:
                _kernels.rk4_steps(block, sector.jz, sector.jx2_diag, sector.jx2_off, cz[sl], cx[sl], h[sl])
            else:
                _expm_steps(block, sector, cz[sl], cx[sl], h[sl])
        for sector, block in zip(active, blocks):
            psi[sector.indices] = block
        drift = float(np.linalg.norm(psi) - 1)
        if not abs(drift) <= NORM_ABORT:  # also catches nan from overflow
            raise NormDriftError(
                f"norm drift {drift:.3e} after step {stop}/{n_steps} with {method.value} "
                f"(max step {h.max():.3e}); reduce the step size"
            )
        if recorder is not None and record_stride > 0:
            trajectory.append(recorder(float(edges[stop]), psi / np.linalg.norm(psi), drift))

    drift = float(np.linalg.norm(psi) - 1)
    psi /= np.linalg.norm(psi)
    return PropagationResult(psi, drift, n_steps, trajectory)


def protocol_coefficients(protocol: ControlProtocol, omega: float = OMEGA) -> Coefficients:
    def coeffs(t, _mid):
        return np.full(np.shape(t), omega), protocol.field(t)

    return coeffs


def _recorder(ops, protocol):
    def record(t, psi, drift):
        obs = observables(ops, psi, norm_tol=1e-5)
        return {
            "t": t,
            "chi": float(protocol.field(t)),
            "mean_jz": obs.mean_jz,
            "var_jx": obs.var_jx,
            "xi_squared": obs.xi_squared,
            "norm_drift": drift,
        }

    return record


def propagate_full(
    ops: SpinOperators,
    protocol: ControlProtocol,
    config: PropagationConfig,
    initial: np.ndarray,
    omega: float = OMEGA,
) -> PropagationResult:
    step = config.step_size or default_step(ops, protocol, config.method, omega)
    if step > protocol.total_time:
        raise ValueError(f"step size {step} exceeds total time {protocol.total_time}")
    edges = time_grid(protocol.total_time, step)
    return evolve(
        ops,
        edges,
        protocol_coefficients(protocol, omega),
        initial,
        config.method,
        config.record_stride,
        _recorder(ops, protocol) if config.record_stride else None,
    )


def propagate(
    ops: SpinOperators,
    protocol: ControlProtocol,
    config: PropagationConfig,
    initial: np.ndarray,
    omega: float = OMEGA,
) -> np.ndarray:
    """Final state of the Schrodinger evolution under ``protocol``."""
    return propagate_full(ops, protocol, config, initial, omega).state


def infidelity(final: np.ndarray, goal: np.ndarray) -> float:
    """``1 - |<goal|final>|^2``, clipped to [0, 1]."""
    final = np.asarray(final)
    goal = np.asarray(goal)
    if final.shape != goal.shape:
        raise ValueError(f"dimension mismatch: {final.shape} vs {goal.shape}")
    return float(min(1.0, max(0.0, 1 - abs(np.vdot(goal, final)) ** 2)))


def write_trajectory(rows: list[dict], path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRAJECTORY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(row[k])) for k in TRAJECTORY_COLUMNS})


def ramp_infidelity(
    ops: SpinOperators,
    total_time: float,
    chi_final: float,
    goal: np.ndarray,
    config: PropagationConfig = PropagationConfig(),
) -> float:
    protocol = linear_ramp(total_time, chi_final)
    return infidelity(propagate(ops, protocol, config, coherent_state(ops)), goal)


def time_to_reach(
    ops: SpinOperators,
    target_infidelity: float,
    protocol_family: str = "linear",
    signal_fraction: float = 1 / np.sqrt(2),
    config: PropagationConfig = PropagationConfig(),
    t_start: float = 0.1,
    ratio: float = 1.1,
    t_max: float = 1e6,
    rel_tol: float = 1e-3,
) -> float:
    """Shortest linear-ramp duration reaching ``target_infidelity``.

    Scans T on a geometric grid, then bisects between the last failing and
    the first passing grid point.  Ramp infidelity oscillates in T, so this is
    the first crossing, not a global threshold.
    """
    if protocol_family != "linear":
        raise ValueError(f"time_to_reach supports the linear family only, got {protocol_family!r}")
    if not 0 < target_infidelity < 1:
        raise ValueError("target_infidelity must lie in (0, 1)")
    chi_final, goal = target_state(ops, signal_fraction)

    def passes(t):
        return ramp_infidelity(ops, t, chi_final, goal, config) <= target_infidelity

    t = t_start
    last_fail = None
    while not passes(t):
        last_fail = t
        t *= ratio
        if t > t_max:
            raise RuntimeError(f"no ramp duration up to {t_max} reaches infidelity {target_infidelity}")
    if last_fail is None:
        return t
    lo, hi = last_fail, t
    while (hi - lo) > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if passes(mid):
            hi = mid
        else:
            lo = mid
    logger.info("N=%d: ramp reaches I<=%g at T=%.6g", ops.n_atoms, target_infidelity, hi)
    return hi


def goal_for(n_atoms: int, signal_fraction: float = 1 / np.sqrt(2)):
    """``(ops, chi_M, goal)`` convenience bundle."""
    ops = build_operators(n_atoms)
    chi, goal = target_state(ops, signal_fraction)
    return ops, chi, goal

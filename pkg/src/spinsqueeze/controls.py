"""Interaction-strength schedules chi(t): linear ramps and CRAB-corrected ramps."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_CLAMP = 5.0


def _boundary(t, total_time):
    # vanishes at both ends so chi(0) = 0 and chi(T) = chi_final exactly
    inside = (t > 0) & (t < total_time)
    return np.where(inside, np.sin(np.pi * t / total_time), 0.0)


@dataclass(frozen=True)
class CrabAnsatz:
    """Randomised Fourier correction on top of the linear ramp.

    chi(t) = chi_f [1 + lambda(t) sum_j a_j sin(w_j t) + b_j cos(w_j t)] t/T,
    with w_j = 2 pi (1 + r_j) / T and lambda(t) = sin(pi t / T).
    """

    r: np.ndarray
    a: np.ndarray
    b: np.ndarray
    seed: int | None = None
    clamp_factor: float = DEFAULT_CLAMP

    def __post_init__(self):
        for name in ("r", "a", "b"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.r.shape == self.a.shape == self.b.shape) or self.r.ndim != 1:
            raise ValueError("r, a and b must be 1-d arrays of equal length")
        if np.any(self.r <= -1):
            raise ValueError("randomisation r_j must exceed -1 so every frequency is positive")

    @classmethod
    def draw(cls, n_frequencies: int = 10, rng=None, spread: float = 0.5, **kw) -> CrabAnsatz:
        """Fresh frequency randomisation ``r_j ~ U[-spread, spread]`` with zero coefficients."""
        rng = np.random.default_rng(rng)
        r = rng.uniform(-spread, spread, n_frequencies)
        zeros = np.zeros(n_frequencies)
        return cls(r, zeros, zeros.copy(), **kw)

    @property
    def n_frequencies(self) -> int:
        return len(self.r)

    @property
    def coeffs(self) -> np.ndarray:
        return np.concatenate([self.a, self.b])

    def with_coeffs(self, x) -> CrabAnsatz:
        x = np.asarray(x, dtype=float)
        n = self.n_frequencies
        if x.shape != (2 * n,):
            raise ValueError(f"expected {2 * n} coefficients, got shape {x.shape}")
        return replace(self, a=x[:n].copy(), b=x[n:].copy())

    def frequencies(self, total_time: float) -> np.ndarray:
        return 2 * np.pi / total_time * (1 + self.r)

    def correction(self, total_time: float, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        wt = np.multiply.outer(t, self.frequencies(total_time))
        series = np.sin(wt) @ self.a + np.cos(wt) @ self.b
        return _boundary(t, total_time) * series


def field_value(ansatz: CrabAnsatz, chi_final: float, total_time: float, t, clamp: bool = True):
    """CRAB field at time(s) ``t``; clamped to ``+-clamp_factor * chi_final``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > total_time):
        raise ValueError(f"t must lie in [0, {total_time}]")
    chi = chi_final * (1 + ansatz.correction(total_time, t_arr)) * t_arr / total_time
    if clamp:
        bound = ansatz.clamp_factor * abs(chi_final)
        chi = np.clip(chi, -bound, bound)
    return chi if np.ndim(t) else float(chi)


@dataclass(frozen=True)
class ControlProtocol:
    """chi(t) on [0, T]: a linear ramp, or a CRAB-corrected ramp when ``ansatz`` is set."""

    total_time: float
    chi_final: float
    ansatz: CrabAnsatz | None = field(default=None)

    def __post_init__(self):
        if not self.total_time > 0:
            raise ValueError(f"total_time must be positive, got {self.total_time}")

    @property
    def kind(self) -> str:
        return "linear" if self.ansatz is None else "crab"

    def field(self, t) -> np.ndarray:
        """Vectorised chi(t); no domain check (callers pass grid points)."""
        t = np.asarray(t, dtype=float)
        if self.ansatz is None:
            return self.chi_final * t / self.total_time
        return field_value(self.ansatz, self.chi_final, self.total_time, np.clip(t, 0, self.total_time))

    def peak(self, samples: int = 2001) -> float:
        """Largest |chi| on a uniform sample grid."""
        if self.ansatz is None:
            return abs(self.chi_final)
        return float(np.max(np.abs(self.field(np.linspace(0, self.total_time, samples)))))


def linear_ramp(total_time: float, chi_final: float) -> ControlProtocol:
    return ControlProtocol(total_time, chi_final)


def control_value(protocol: ControlProtocol, t: float) -> float:
    if not 0 <= t <= protocol.total_time:
        raise ValueError(f"t={t} outside [0, {protocol.total_time}]")
    return float(protocol.field(t))

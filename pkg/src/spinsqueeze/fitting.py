"""Power-law fits y = A x^B by least squares in log-log space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PowerLawFit:
    amplitude: float
    exponent: float
    r_squared: float
    n_points: int

    def __call__(self, x):
        return self.amplitude * np.asarray(x, dtype=float) ** self.exponent

    def as_dict(self) -> dict:
        return {
            "amplitude": self.amplitude,
            "exponent": self.exponent,
            "r_squared": self.r_squared,
            "n_points": self.n_points,
        }


def fit_power_law(points) -> PowerLawFit:
    """Fit ``y = A x^B`` to ``(x, y)`` pairs.

    A decaying law ``y = A / x^b`` comes back with ``exponent = -b``.
    """
    data = np.asarray(list(points), dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("points must be a sequence of (x, y) pairs")
    if len(data) < 3:
        raise ValueError(f"need at least 3 points, got {len(data)}")
    if np.any(~np.isfinite(data)) or np.any(data <= 0):
        raise ValueError("power-law fit needs finite, strictly positive x and y")
    lx, ly = np.log(data[:, 0]), np.log(data[:, 1])
    design = np.column_stack([np.ones_like(lx), lx])
    (log_a, b), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ np.array([log_a, b])
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1 - np.sum(resid**2) / ss_tot
    return PowerLawFit(float(np.exp(log_a)), float(b), float(np.clip(r2, 0.0, 1.0)), len(data))

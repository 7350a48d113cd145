"""CRAB optimisation of the interaction ramp and minimal-time search.

The cost of a coefficient vector ``(a, b)`` is the infidelity of the state
reached from ``|Jz = +J>`` under the corrected ramp.  Coefficients are
searched with Nelder-Mead; the zero vector (plain linear ramp) is the first
point evaluated, so the optimum never exceeds the ramp cost.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from .controls import DEFAULT_CLAMP, CrabAnsatz, ControlProtocol, field_value
from .propagation import (
    Method,
    NormDriftError,
    PropagationConfig,
    default_step,
    evolve,
    infidelity,
    propagate,
    time_grid,
    time_to_reach,
)
from .spin import OMEGA, SpinOperators, coherent_state, target_state

__all__ = [
    "CrabAnsatz",
    "OptimizerSettings",
    "OptimizationReport",
    "QslResult",
    "field_value",
    "optimize",
    "qsl_time",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerSettings:
    """Knobs of one CRAB optimisation.

    ``budget`` counts cost evaluations per restart.  ``stop_at`` ends a restart
    as soon as the cost drops to that value (used by the minimal-time search).
    """

    n_frequencies: int = 10
    budget: int = 20_000
    restarts: int = 4
    simplex_edge: float = 0.1
    clamp_factor: float = DEFAULT_CLAMP
    seed: int = 0
    collapse_diameter: float = 1e-8
    method: Method = Method.SPLIT
    step_size: float | None = None
    stop_at: float | None = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.budget < 100:
            raise ValueError(f"budget must be at least 100 evaluations, got {self.budget}")
        if self.restarts < 1 or self.n_frequencies < 1:
            raise ValueError("restarts and n_frequencies must be positive")
        if self.simplex_edge <= 0 or self.clamp_factor <= 0:
            raise ValueError("simplex_edge and clamp_factor must be positive")


@dataclass
class RestartOutcome:
    restart: int
    ansatz: CrabAnsatz
    best_infidelity: float
    evaluations: int
    history: list[tuple[int, float]]
    clamp_events: int
    ramp_infidelity: float


@dataclass
class OptimizationReport:
    ansatz: CrabAnsatz
    best_infidelity: float
    evaluations: int
    history: list[tuple[int, float]]
    ramp_infidelity: float
    verified_infidelity: float
    clamp_events: int
    seed: int
    total_time: float
    n_atoms: int
    chi_final: float
    restarts: list[RestartOutcome] = field(default_factory=list, repr=False)

    @property
    def best_coeffs(self) -> tuple[np.ndarray, np.ndarray]:
        return self.ansatz.a, self.ansatz.b

    @property
    def protocol(self) -> ControlProtocol:
        return ControlProtocol(self.total_time, self.chi_final, self.ansatz)


class _BudgetExhausted(Exception):
    pass


class _TargetReached(Exception):
    pass


class CrabCost:
    """Infidelity as a function of the stacked coefficients ``(a, b)``.

    The CRAB basis is tabulated once on the integrator's sample times.
    """

    def __init__(self, ops, total_time, chi_final, goal, ansatz, method=Method.SPLIT, step_size=None, omega=OMEGA):
        self.ops = ops
        self.total_time = total_time
        self.chi_final = chi_final
        self.goal = goal
        self.ansatz = ansatz
        self.method = Method(method)
        self.omega = omega
        # steps sized for the unclamped target field; optimize() re-checks the winner at half step
        step = step_size or default_step(ops, ControlProtocol(total_time, chi_final), self.method, omega)
        self.edges = time_grid(total_time, step)
        self.initial = coherent_state(ops)
        self.bound = ansatz.clamp_factor * abs(chi_final)
        self._tables = {}
        self.clamp_events = 0

    def _table(self, t):
        key = t.shape
        if key not in self._tables:
            wt = np.multiply.outer(t, self.ansatz.frequencies(self.total_time))
            lam = (np.sin(np.pi * t / self.total_time) * ((t > 0) & (t < self.total_time)))[..., None]
            self._tables[key] = (lam * np.sin(wt), lam * np.cos(wt), t / self.total_time)
        return self._tables[key]

    def field(self, x, t):
        s, c, ramp = self._table(t)
        n = self.ansatz.n_frequencies
        raw = self.chi_final * (1 + s @ x[:n] + c @ x[n:]) * ramp
        clipped = np.clip(raw, -self.bound, self.bound)
        if np.any(clipped != raw):
            self.clamp_events += 1
        return clipped

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)

        def coeffs(t, _mid):
            return np.full(t.shape, self.omega), self.field(x, t)

        try:
            res = evolve(self.ops, self.edges, coeffs, self.initial, self.method)
        except NormDriftError:
            return np.inf
        val = infidelity(res.state, self.goal)
        return val if np.isfinite(val) else np.inf


def _run_restart(ops, total_time, chi_final, goal, settings: OptimizerSettings, restart: int) -> RestartOutcome:
    rng = np.random.default_rng([settings.seed, restart])
    ansatz = CrabAnsatz.draw(settings.n_frequencies, rng, seed=settings.seed, clamp_factor=settings.clamp_factor)
    cost = CrabCost(ops, total_time, chi_final, goal, ansatz, settings.method, settings.step_size)
    dim = 2 * settings.n_frequencies

    evals = 0
    best = np.inf
    best_x = np.zeros(dim)
    history: list[tuple[int, float]] = []
    ramp = np.nan

    def tracked(x):
        nonlocal evals, best, best_x, ramp
        if evals >= settings.budget:
            raise _BudgetExhausted
        val = cost(x)
        evals += 1
        if evals == 1:
            ramp = val
        if val < best:
            best, best_x = val, np.array(x, dtype=float)
            history.append((evals, best))
        if settings.stop_at is not None and best <= settings.stop_at:
            raise _TargetReached
        return val

    try:
        tracked(best_x)
        while evals < settings.budget:
            before = best
            simplex = np.vstack([best_x, best_x + settings.simplex_edge * np.eye(dim)])
            minimize(
                tracked,
                best_x,
                method="Nelder-Mead",
                options={
                    "initial_simplex": simplex,
                    "xatol": settings.collapse_diameter,
                    "fatol": np.inf,
                    "maxfev": settings.budget,
                    "maxiter": 10**9,
                    "adaptive": False,
                },
            )
            logger.debug("restart %d: simplex collapsed at %d evals, best %.3e", restart, evals, best)
            if best >= before and evals < settings.budget and before < np.inf:
                # re-seeded simplex found nothing new: fixed point
                break
    except (_BudgetExhausted, _TargetReached):
        pass
    return RestartOutcome(
        restart=restart,
        ansatz=ansatz.with_coeffs(best_x),
        best_infidelity=float(best),
        evaluations=evals,
        history=history,
        clamp_events=cost.clamp_events,
        ramp_infidelity=float(ramp),
    )


def optimize(
    ops: SpinOperators,
    total_time: float,
    goal: np.ndarray,
    chi_final: float,
    settings: OptimizerSettings = OptimizerSettings(),
) -> OptimizationReport:
    """Best CRAB correction at fixed duration over ``settings.restarts`` restarts.

    Restart ``k`` draws its frequencies from a generator seeded by
    ``(seed, k)`` and starts from the zero correction, so results do not
    depend on the worker count.
    """
    if not total_time > 0:
        raise ValueError("total_time must be positive")
    args = (ops, total_time, chi_final, goal, settings)
    indices = range(settings.restarts)
    if settings.workers > 1 and settings.restarts > 1:
        with ProcessPoolExecutor(max_workers=settings.workers) as pool:
            outcomes = list(pool.map(_run_restart, *zip(*[(*args, k) for k in indices])))
    else:
        outcomes = [_run_restart(*args, k) for k in indices]

    history = []
    offset = 0
    running = np.inf
    for out in outcomes:
        for ev, val in out.history:
            if val < running:
                running = val
                history.append((offset + ev, val))
        offset += out.evaluations
    best = min(outcomes, key=lambda o: (o.best_infidelity, o.restart))

    protocol = ControlProtocol(total_time, chi_final, best.ansatz)
    cost = CrabCost(ops, total_time, chi_final, goal, best.ansatz, settings.method, settings.step_size)
    fine = PropagationConfig(step_size=0.5 * (cost.edges[1] - cost.edges[0]), method=settings.method)
    verified = infidelity(propagate(ops, protocol, fine, coherent_state(ops)), goal)

    return OptimizationReport(
        ansatz=best.ansatz,
        best_infidelity=best.best_infidelity,
        evaluations=offset,
        history=history,
        ramp_infidelity=outcomes[0].ramp_infidelity,
        verified_infidelity=verified,
        clamp_events=sum(o.clamp_events for o in outcomes),
        seed=settings.seed,
        total_time=total_time,
        n_atoms=ops.n_atoms,
        chi_final=chi_final,
        restarts=outcomes,
    )


@dataclass
class QslResult:
    total_time: float
    report: OptimizationReport
    probes: list[tuple[float, float]]


def qsl_time(
    ops: SpinOperators,
    target_infidelity: float,
    settings: OptimizerSettings = OptimizerSettings(),
    t_upper: float | None = None,
    t_lower: float = 0.1,
    rel_width: float = 0.05,
    signal_fraction: float = 1 / np.sqrt(2),
) -> QslResult:
    """Shortest duration at which CRAB reaches ``target_infidelity``.

    Geometric bisection between a failing lower and a succeeding upper
    duration; the upper bracket defaults to twice the linear-ramp time for
    the same target.  Success at each probe is ``best_infidelity <= target``.
    """
    if not 0 < target_infidelity < 1:
        raise ValueError("target_infidelity must lie in (0, 1)")
    chi_final, goal = target_state(ops, signal_fraction)
    probe_settings = replace(settings, stop_at=target_infidelity)
    probes: list[tuple[float, float]] = []
    reports: dict[float, OptimizationReport] = {}

    def success(t):
        rep = optimize(ops, t, goal, chi_final, probe_settings)
        probes.append((t, rep.best_infidelity))
        reports[t] = rep
        logger.info("N=%d T=%.4g: best infidelity %.3e", ops.n_atoms, t, rep.best_infidelity)
        return rep.best_infidelity <= target_infidelity

    if t_upper is None:
        t_upper = 2 * time_to_reach(ops, target_infidelity, signal_fraction=signal_fraction)
    if not success(t_upper):
        raise RuntimeError(f"CRAB misses infidelity {target_infidelity} even at the upper bracket T={t_upper}")
    lo = t_lower
    while success(lo):
        if lo < 1e-3:
            return QslResult(lo, reports[lo], probes)
        lo /= 2
    hi = t_upper
    while hi / lo > 1 + rel_width:
        mid = np.sqrt(lo * hi)
        if success(mid):
            hi = mid
        else:
            lo = mid
    return QslResult(hi, reports[hi], probes)

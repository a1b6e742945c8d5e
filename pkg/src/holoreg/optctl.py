"""Detuning-pulse optimization for the charge-qubit gates.

The objective renders a parametrized delta_cpb(t) schedule, propagates it
through the fast block engine and returns the local-Z-corrected average-gate
infidelity plus a weighted leakage penalty.  Optimization is a deterministic
two-stage local search: an adaptive simplex stage followed by
finite-difference quasi-Newton polish with a shrinking difference step.  Both
stages run through a best-so-far recorder, so the published history is
monotone and a rerun with the same seed reproduces it bit for bit.

Initial shapes matter: a raw far-to-far double sweep sits in a shallow basin
(the sqrt(2)-faster leakage block cannot interfere destructively there), so
the default seeds are near-resonant excursions whose height and dwell tune
the transfer-block and leakage-block interference phases independently.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .gates import (cz_fidelity_metrics, propagate_jc_sweep,
                    swap_fidelity_metrics)
from .hilbert import SystemParams
from .pulses import PulseSchedule

logger = logging.getLogger(__name__)

OBJECTIVE_SENTINEL = 1e3
DEFAULT_LEAKAGE_WEIGHT = 10.0

# calibrated seed shapes (units of g_c and of the duration)
SWAP_SEED_DURATION = 5.0e-9
SWAP_SEED_PEAK = 1.2609
SWAP_SEED_DWELL = 0.500
CPHASE_SEED_DURATION = 6.6e-9
CPHASE_SEED_DEPTH = 2.0


@dataclass(frozen=True)
class PulseParametrization:
    """Corrections on a base detuning shape, rendered piecewise-linear.

    ``coefficients`` are knot corrections in units of the detuning bound,
    attached at equally spaced interior times; the endpoints stay pinned to
    the base shape exactly and the rendered samples are clipped to
    [bound_low, bound_high].
    """

    base_schedule: PulseSchedule
    coefficients: np.ndarray
    bound_low: float
    bound_high: float
    basis: str = "knots"

    def __post_init__(self):
        coeff = np.asarray(self.coefficients, dtype=float)
        if coeff.ndim != 1 or coeff.size < 1:
            raise ValueError("need a one-dimensional coefficient vector")
        if self.bound_high <= self.bound_low:
            raise ValueError("bounds must be ordered")
        if self.basis not in ("knots", "fourier"):
            raise ValueError("basis must be 'knots' or 'fourier'")
        object.__setattr__(self, "coefficients", coeff)

    @property
    def duration(self) -> float:
        return self.base_schedule.duration

    @property
    def scale(self) -> float:
        return 0.5 * (self.bound_high - self.bound_low)

    def with_coefficients(self, coeff) -> "PulseParametrization":
        return PulseParametrization(self.base_schedule, coeff,
                                    self.bound_low, self.bound_high,
                                    self.basis)

    def render(self) -> PulseSchedule:
        t = self.base_schedule.t_grid
        base = np.asarray(self.base_schedule.channels["delta_cpb"])
        u = (t - t[0]) / (t[-1] - t[0])
        if self.basis == "knots":
            tk = np.linspace(0.0, 1.0, self.coefficients.size + 2)
            corr = np.interp(u, tk, np.concatenate([[0.0], self.coefficients,
                                                    [0.0]]))
        else:
            corr = np.zeros_like(u)
            for k, c in enumerate(self.coefficients, start=1):
                corr += c * np.sin(np.pi * k * u)
        delta = np.clip(base + corr * self.scale,
                        self.bound_low, self.bound_high)
        # endpoints are exact by construction (corrections vanish there)
        delta[0] = base[0]
        delta[-1] = base[-1]
        return PulseSchedule(t, {"delta_cpb": delta})


@dataclass(frozen=True)
class OptimizationRecord:
    """Best-so-far history and outcome of one optimization run."""

    target: str
    best_objective: float
    best_coefficients: np.ndarray
    history: np.ndarray
    evaluations: int
    seed: int
    stagnated: bool

    def to_json(self) -> str:
        doc = {
            "target": self.target,
            "best_objective": self.best_objective,
            "best_coefficients": self.best_coefficients.tolist(),
            "history_best_so_far": self.history.tolist(),
            "evaluations": self.evaluations,
            "seed": self.seed,
            "stagnated": self.stagnated,
        }
        return json.dumps(doc, indent=2)


def swap_seed_schedule(params: SystemParams, delta_far: float | None = None,
                       duration: float = SWAP_SEED_DURATION,
                       n_samples: int = 257) -> PulseSchedule:
    """Near-resonant excursion seed for SWAP optimization.

    Trapezoid bump from -delta_far over resonance up to a calibrated small
    positive peak and back; the two resonance crossings act as a
    Landau-Zener interferometer whose phases the optimizer refines.
    """
    delta_far = 10 * params.g_c if delta_far is None else delta_far
    peak = SWAP_SEED_PEAK * params.g_c
    dwell = SWAP_SEED_DWELL
    t = np.linspace(0.0, duration, n_samples)
    rise = (1 - dwell) / 2 * duration
    delta = np.empty_like(t)
    for i, ti in enumerate(t):
        if ti < rise:
            delta[i] = -delta_far + (peak + delta_far) * (ti / rise)
        elif ti < rise + dwell * duration:
            delta[i] = peak
        else:
            delta[i] = peak - (peak + delta_far) * (
                (ti - rise - dwell * duration) / rise)
    delta[-1] = -delta_far
    return PulseSchedule(t, {"delta_cpb": delta})


def cphase_seed_schedule(params: SystemParams, delta_far: float | None = None,
                         duration: float = CPHASE_SEED_DURATION,
                         n_samples: int = 257) -> PulseSchedule:
    """Near-resonance dip seed for conditional-phase optimization."""
    from .pulses import sweep_schedule
    delta_far = 10 * params.g_c if delta_far is None else delta_far
    return sweep_schedule("cphase", delta_far, duration, n_samples,
                          g_c=params.g_c, depth=CPHASE_SEED_DEPTH * params.g_c)


def default_parametrization(target: str, params: SystemParams,
                            n_knots: int = 20,
                            duration: float | None = None) -> PulseParametrization:
    """Seed parametrization for a gate target ('swap' or 'cphase')."""
    delta_far = 10 * params.g_c
    if target == "swap":
        base = swap_seed_schedule(params, delta_far,
                                  duration or SWAP_SEED_DURATION)
    elif target == "cphase":
        base = cphase_seed_schedule(params, delta_far,
                                    duration or CPHASE_SEED_DURATION)
    else:
        raise ValueError(f"unknown target {target!r}")
    return PulseParametrization(base, np.zeros(n_knots),
                                -delta_far, delta_far)


def swap_objective_from_operator(u5: np.ndarray,
                                 leakage_weight: float = DEFAULT_LEAKAGE_WEIGHT) -> float:
    """1 - F_avg(SWAP, local-Z corrected) + weight * mean leakage."""
    m = u5[:4, :4]
    _, f_avg, _ = swap_fidelity_metrics(m)
    leak = float(np.mean(np.abs(u5[4, :4]) ** 2))
    return float(1 - f_avg + leakage_weight * leak)


def cphase_objective_from_operator(u5: np.ndarray,
                                   leakage_weight: float = DEFAULT_LEAKAGE_WEIGHT) -> float:
    m = u5[:4, :4]
    _, f_avg, _ = cz_fidelity_metrics(m)
    leak = float(np.mean(np.abs(u5[4, :4]) ** 2))
    return float(1 - f_avg + leakage_weight * leak)


def infidelity_objective(parametrization: PulseParametrization, target: str,
                         params: SystemParams,
                         leakage_weight: float = DEFAULT_LEAKAGE_WEIGHT,
                         n_steps: int = 4000) -> float:
    """Render, propagate and score one candidate pulse."""
    if target not in ("swap", "cphase"):
        raise ValueError(f"unknown target {target!r}")
    try:
        schedule = parametrization.render()
        u5 = propagate_jc_sweep(schedule, params.g_c, n_steps)
    except Exception:
        logger.exception("objective evaluation failed; returning sentinel")
        return OBJECTIVE_SENTINEL
    if target == "swap":
        return swap_objective_from_operator(u5, leakage_weight)
    return cphase_objective_from_operator(u5, leakage_weight)


def optimize(objective, initial: PulseParametrization, budget: int,
             seed: int = 0, simplex_fraction: float = 0.4,
             polish_steps=(1e-6, 1e-7, 1e-8)) -> OptimizationRecord:
    """Deterministic local search from an initial parametrization.

    ``objective`` maps a PulseParametrization to a scalar.  Stage one is an
    adaptive Nelder-Mead simplex seeded with small deterministic jitter;
    stage two polishes with bounded quasi-Newton using finite-difference
    gradients at decreasing difference steps.  The returned history is the
    best value seen up to each evaluation.
    """
    if budget < 100:
        raise ValueError("budget must be at least 100 evaluations")
    rng = np.random.default_rng(seed)
    x0 = np.asarray(initial.coefficients, dtype=float)
    n = x0.size
    history: list[float] = []
    best = {"value": np.inf, "x": x0.copy()}

    def scored(x):
        value = float(objective(initial.with_coefficients(x)))
        if value < best["value"]:
            best["value"] = value
            best["x"] = np.array(x, dtype=float)
        history.append(best["value"])
        return value

    f0 = scored(x0)
    remaining = budget - 1

    simplex_budget = int(budget * simplex_fraction)
    if simplex_budget > n + 2:
        step = 0.01 * (1 + 0.1 * rng.standard_normal(n))
        init_simplex = np.vstack([x0, x0 + np.diag(step)])
        minimize(scored, x0, method="Nelder-Mead",
                 options=dict(maxfev=simplex_budget, xatol=1e-9, fatol=1e-14,
                              adaptive=True, initial_simplex=init_simplex))
        remaining = budget - len(history)

    for eps in polish_steps:
        if remaining < 2 * n + 2:
            break
        allowed = min(remaining, max(2 * n + 2, remaining // len(polish_steps)))
        res = minimize(scored, best["x"], method="L-BFGS-B",
                       bounds=[(-2.0, 2.0)] * n,
                       options=dict(maxfun=allowed, ftol=1e-18, gtol=0.0,
                                    eps=eps))
        remaining = budget - len(history)
        if remaining <= 0:
            break

    stagnated = best["value"] >= f0 - 1e-15
    return OptimizationRecord(
        target=getattr(objective, "target", "custom"),
        best_objective=best["value"],
        best_coefficients=best["x"],
        history=np.array(history),
        evaluations=len(history),
        seed=seed,
        stagnated=stagnated,
    )


@dataclass
class GateObjective:
    """Callable objective bound to one gate target and parameter set."""

    target: str
    params: SystemParams
    leakage_weight: float = DEFAULT_LEAKAGE_WEIGHT
    n_steps: int = 4000

    def __call__(self, parametrization: PulseParametrization) -> float:
        return infidelity_objective(parametrization, self.target, self.params,
                                    self.leakage_weight, self.n_steps)


def optimize_gate(target: str, params: SystemParams, budget: int = 5000,
                  seed: int = 0, n_knots: int = 20,
                  duration: float | None = None):
    """End-to-end: seed, optimize, and return (record, best schedule, report).

    The report re-runs the best pulse through the full gate runner so the
    returned numbers include loss and occupancy accounting.
    """
    from .gates import run_cphase, run_swap
    initial = default_parametrization(target, params, n_knots, duration)
    objective = GateObjective(target, params)
    record = optimize(objective, initial, budget, seed)
    best_schedule = initial.with_coefficients(record.best_coefficients).render()
    runner = run_swap if target == "swap" else run_cphase
    report = runner(best_schedule, params)
    return record, best_schedule, report

"""Game primitives: action set, drift and cost rules, the shipped example.

The shipped instance is a one-dimensional game with drift equal to the
chosen action, zero running cost, and a terminal reward that is bilinear in
the player's state and the population mean: ``c * x * mean``.  Its action
interval [a_lo, b_hi] must straddle zero; the closed-form equilibrium
analysis in :mod:`ccemfg.analytic` relies on that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rng


@dataclass(frozen=True)
class ActionBox:
    """Compact box of admissible actions, componentwise lo <= hi."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.shape != hi.shape or lo.size == 0:
            raise ValueError("action box bounds must be nonempty and matching")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("action box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("action box requires lo <= hi componentwise")

    def contains(self, a, tol: float = 1e-12) -> bool:
        a = np.asarray(a, dtype=np.float64)
        return bool(np.all(a >= self.lo.min() - tol)
                    and np.all(a <= self.hi.max() + tol))


@dataclass(frozen=True)
class MeasureView:
    """Summary view of a probability measure: mean, second moment and,
    optionally, the particles behind them.  Fields may be batched arrays."""

    mean: np.ndarray | float
    second_moment: np.ndarray | float
    particles: Optional[np.ndarray] = None

    @classmethod
    def from_particles(cls, points: np.ndarray, keep: bool = True) -> "MeasureView":
        points = np.asarray(points, dtype=np.float64)
        return cls(mean=points.mean(axis=-1),
                   second_moment=np.mean(points**2, axis=-1),
                   particles=points if keep else None)

    def validate(self, tol: float = 1e-12) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        m2 = np.asarray(self.second_moment, dtype=np.float64)
        if np.any(m2 < -tol):
            raise ValueError("second moment must be nonnegative")
        # Cauchy-Schwarz for the aggregate 1-d summaries
        if np.any(mean**2 > m2 + tol * (1.0 + np.abs(m2))):
            raise ValueError("mean^2 exceeds second moment")
        if self.particles is not None:
            ref = MeasureView.from_particles(self.particles, keep=False)
            if (np.max(np.abs(mean - ref.mean)) > tol
                    or np.max(np.abs(m2 - ref.second_moment)) > tol):
                raise ValueError("particle summaries disagree with stored summaries")


@dataclass(frozen=True)
class PointMass:
    """Degenerate initial law at a fixed state."""

    value: float = 0.0

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return np.full(np.shape(u), float(self.value))


@dataclass(frozen=True)
class GaussianInitial:
    """Gaussian initial law, mapped from the engine's uniform draws."""

    mean: float = 0.0
    std: float = 1.0

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        from . import backend

        return self.mean + self.std * backend.norm_quantile(u)


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of a symmetric stochastic differential game.

    All rules must be pure and numpy-broadcasting: ``drift(t, x, m, a)``,
    ``running_cost(t, x, m, a)`` and ``terminal_cost(x, m)`` receive state
    and action arrays plus a :class:`MeasureView`.  ``sense`` says whether
    the functional is minimized or maximized; gap computations read it and
    flip signs uniformly.  ``drift_uses_measure=False`` unlocks a fast
    deviation path in the equilibrium estimators.
    """

    dim: int
    horizon: float
    actions: ActionBox
    initial_law: PointMass | GaussianInitial
    drift: Callable
    running_cost: Callable
    terminal_cost: Callable
    sense: str = "minimize"
    drift_uses_measure: bool = True
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("state dimension must be positive")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be a positive real")
        if self.sense not in ("minimize", "maximize"):
            raise ValueError("sense must be 'minimize' or 'maximize'")

    @property
    def sign(self) -> float:
        """+1 for minimize, -1 for maximize (cost-adjustment factor)."""
        return 1.0 if self.sense == "minimize" else -1.0


@dataclass(frozen=True)
class _ActionDrift:
    """drift(t, x, m, a) = a (picklable)."""

    def __call__(self, t, x, m, a):
        return np.broadcast_to(np.asarray(a, dtype=np.float64), np.shape(x))


@dataclass(frozen=True)
class _ZeroRunningCost:
    def __call__(self, t, x, m, a):
        return np.zeros(np.shape(x))


@dataclass(frozen=True)
class _BilinearTerminalReward:
    """g(x, m) = c * x * mean(m)."""

    c: float

    def __call__(self, x, m):
        return self.c * np.asarray(x, dtype=np.float64) * np.asarray(m.mean)


def build_bang_bang_model(a_lo: float, b_hi: float, c: float, T: float) -> ModelSpec:
    """The fully explicit 1-d instance: drift = action, reward c*x*mean.

    Requires ``a_lo < 0 < b_hi`` (the equilibrium-region analysis needs the
    action interval to straddle zero) and ``c, T > 0``.
    """
    if not a_lo < 0.0:
        raise ValueError("a_lo must be negative")
    if not b_hi > 0.0:
        raise ValueError("b_hi must be positive")
    if not c > 0.0:
        raise ValueError("c must be positive")
    if not T > 0.0:
        raise ValueError("T must be positive")
    return ModelSpec(
        dim=1,
        horizon=float(T),
        actions=ActionBox(lo=np.array([a_lo]), hi=np.array([b_hi])),
        initial_law=PointMass(0.0),
        drift=_ActionDrift(),
        running_cost=_ZeroRunningCost(),
        terminal_cost=_BilinearTerminalReward(float(c)),
        sense="maximize",
        drift_uses_measure=False,
        params={"a": float(a_lo), "b": float(b_hi), "c": float(c), "T": float(T)},
    )


@dataclass(frozen=True)
class LipschitzReport:
    """Empirical Lipschitz quotients of the drift in action, state and mean."""

    quotient_action: float
    quotient_state: dict        # scale -> max quotient at that probe scale
    quotient_mean: dict
    growth_flag: bool           # True if quotients grow with probe scale


def validate_lipschitz(model: ModelSpec, probe_count: int, seed: int,
                       scales=(1.0, 10.0, 100.0)) -> LipschitzReport:
    """Probe the drift with random pairs and report max difference quotients.

    Diagnostic only: the quotients are empirical, no constant is certified.
    A growth flag is raised when the state- or mean-quotient at the largest
    probe scale exceeds twice the value at the smallest scale.
    """
    if probe_count < 2:
        raise ValueError("probe_count must be at least 2")
    key = rng.stream_key(seed, rng.TAG_PROBE)
    u = rng.uniforms(key, np.arange(probe_count * 8)).reshape(8, probe_count)
    lo, hi = model.actions.lo.min(), model.actions.hi.max()
    a1 = lo + (hi - lo) * u[0]
    a2 = lo + (hi - lo) * u[1]
    t = model.horizon * u[2]

    def q(fa, fb, xa, xb):
        num = np.abs(np.asarray(fa, dtype=np.float64)
                     - np.asarray(fb, dtype=np.float64))
        den = np.abs(xa - xb)
        ok = den > 1e-12
        return float(np.max(num[ok] / den[ok])) if np.any(ok) else 0.0

    mv0 = MeasureView(mean=0.0, second_moment=1.0)
    x0 = np.zeros(probe_count)
    qa = q(model.drift(t, x0, mv0, a1), model.drift(t, x0, mv0, a2), a1, a2)

    qx, qm = {}, {}
    for s in scales:
        x1 = s * (2.0 * u[3] - 1.0)
        x2 = s * (2.0 * u[4] - 1.0)
        am = lo + (hi - lo) * u[5]
        qx[s] = q(model.drift(t, x1, mv0, am), model.drift(t, x2, mv0, am), x1, x2)
        m1 = s * (2.0 * u[6] - 1.0)
        m2 = s * (2.0 * u[7] - 1.0)
        fa = np.array([np.asarray(model.drift(ti, 0.0,
                       MeasureView(mean=mi, second_moment=mi**2), ai)).item()
                       for ti, mi, ai in zip(t, m1, am)])
        fb = np.array([np.asarray(model.drift(ti, 0.0,
                       MeasureView(mean=mi, second_moment=mi**2), ai)).item()
                       for ti, mi, ai in zip(t, m2, am)])
        qm[s] = q(fa, fb, m1, m2)

    smin, smax = min(scales), max(scales)
    growth = (qx[smax] > 2.0 * qx[smin] + 1e-12
              or qm[smax] > 2.0 * qm[smin] + 1e-12)
    return LipschitzReport(quotient_action=qa, quotient_state=qx,
                           quotient_mean=qm, growth_flag=growth)

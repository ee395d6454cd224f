"""Time-indexed measure flows: analytic Gaussian mixtures and particle clouds.

The analytic flows cover the shipped instance, where the population driven
by a constant control r is exactly Normal(r*t, t) started from zero, and a
device flow is a two-component mixture of such laws.  Particle flows come
out of simulation (McKean-Vlasov fixed point, empirical measures).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import GaussianMixture1D, mixture_quantile_table
from .model import MeasureView


@dataclass(frozen=True)
class GaussianMixtureFlow:
    """Mixture of constant-drift Gaussian populations from a point start.

    Component k at time t is Normal(drift_rates[k] * t + x0, t).
    """

    weights: np.ndarray
    drift_rates: np.ndarray
    x0: float = 0.0
    label: str = ""

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        r = np.atleast_1d(np.asarray(self.drift_rates, dtype=np.float64))
        if w.shape != r.shape:
            raise ValueError("weights and drift rates must share a shape")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "drift_rates", r)

    def mean(self, t):
        return self.x0 + float(np.sum(self.weights * self.drift_rates)) * np.asarray(t)

    def var(self, t):
        t = np.asarray(t, dtype=np.float64)
        m = self.x0 + np.multiply.outer(t, self.drift_rates)
        mbar = self.mean(t)
        return np.sum(self.weights * m**2, axis=-1) - mbar**2 + t

    def view(self, t) -> MeasureView:
        t = np.asarray(t, dtype=np.float64)
        comp_means = self.x0 + np.multiply.outer(t, self.drift_rates)
        second = np.sum(self.weights * (comp_means**2 + t[..., None]), axis=-1)
        return MeasureView(mean=self.mean(t), second_moment=second)

    def slice_at(self, t: float) -> GaussianMixture1D:
        return GaussianMixture1D(weights=self.weights,
                                 means=self.x0 + self.drift_rates * t,
                                 sigmas=np.sqrt(t) * np.ones_like(self.drift_rates))

    def quantile_table(self, times: np.ndarray, n_points: int = 512) -> np.ndarray:
        """Mixture quantiles for every time in one vectorized bisection."""
        times = np.asarray(times, dtype=np.float64)
        means = self.x0 + np.multiply.outer(times, self.drift_rates)
        sigmas = np.sqrt(times)[:, None] * np.ones_like(means)
        return mixture_quantile_table(self.weights, means, sigmas, n_points)


@dataclass(frozen=True)
class ParticleFlow:
    """Empirical flow carried by particle paths on a fixed time grid."""

    times: np.ndarray
    particles: np.ndarray          # (P, len(times))
    label: str = ""
    _sorted: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        x = np.asarray(self.particles, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != t.shape[0]:
            raise ValueError("particles must have shape (P, len(times))")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "particles", x)
        object.__setattr__(self, "_sorted", np.sort(x, axis=0))

    def _index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, self.times[-1]):
            raise ValueError(f"time {t} is not on the flow's grid")
        return i

    def mean(self, t):
        tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.array([self.particles[:, self._index(v)].mean() for v in tt])
        return out if np.ndim(t) else float(out[0])

    def var(self, t):
        tt = np.atleast_1d(np.asarray(t, dtype=np.float64))
        out = np.array([self.particles[:, self._index(v)].var() for v in tt])
        return out if np.ndim(t) else float(out[0])

    def view(self, t) -> MeasureView:
        if np.ndim(t):
            cols = np.stack([self.particles[:, self._index(v)]
                             for v in np.asarray(t).ravel()], axis=0)
            return MeasureView(mean=cols.mean(axis=1),
                               second_moment=np.mean(cols**2, axis=1))
        col = self.particles[:, self._index(float(t))]
        return MeasureView(mean=float(col.mean()),
                           second_moment=float(np.mean(col**2)),
                           particles=col)

    def sorted_at(self, t: float) -> np.ndarray:
        return self._sorted[:, self._index(t)]


def device_flow(weight_plus, a: float, b: float, label: str = "",
                x0: float = 0.0) -> GaussianMixtureFlow:
    """Two-component flow mixing the all-b and all-a populations."""
    if not 0.0 <= weight_plus <= 1.0:
        raise ValueError("mixture weight must lie in [0, 1]")
    return GaussianMixtureFlow(weights=np.array([weight_plus, 1.0 - weight_plus]),
                               drift_rates=np.array([b, a]),
                               x0=x0, label=label)

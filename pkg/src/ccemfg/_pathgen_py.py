"""Pure-numpy path generation backend.

Implements the inverse normal CDF (Wichura's PPND16 rational
approximations) and the Brownian-bridge path builder.  The Cython backend
mirrors these routines operation-for-operation; both follow the stream
layout documented in :mod:`ccemfg.rng`.

The bridge draws the terminal value first (draw 0 of each stream), then
fills interior grid points by recursive bisection.  The terminal value is
therefore independent of the number of steps, which keeps coarse and fine
discretizations consistent at the horizon.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .rng import uniforms

# PPND16 coefficients (central region)
_A = (3.3871328727963666080, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
      5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
      2.8729085735721942674e4, 5.2264952788528545610e3)
# intermediate tail
_C = (1.42343711074968357734, 4.63033784615654529590, 5.76949722146069140550,
      3.64784832476320460504, 1.27045825245236838258, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187, 1.67638483018380384940,
      6.89767334985100004550e-1, 1.48103976427480074590e-1,
      1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
# far tail
_E = (6.65790464350110377720, 5.46378491116411436990, 1.78482653991729133580,
      2.96560571828504891230e-1, 2.65321895265761230930e-2,
      1.24266094738807843860e-3, 2.71155556874348757815e-5,
      2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
      1.48753612908506148525e-2, 7.86869131145613259100e-4,
      1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coeffs, r):
    acc = np.full_like(r, coeffs[7])
    for c in (coeffs[6], coeffs[5], coeffs[4], coeffs[3],
              coeffs[2], coeffs[1], coeffs[0]):
        acc = acc * r + c
    return acc


def norm_quantile(p: np.ndarray) -> np.ndarray:
    """Inverse standard normal CDF for p strictly inside (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    central = np.abs(q) <= 0.425

    r_c = 0.180625 - q * q
    out = q * _poly(_A, r_c) / _poly(_B, r_c)

    # tails: r = sqrt(-log(min(p, 1 - p)))
    pt = np.where(q < 0.0, p, 1.0 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        r_t = np.sqrt(-np.log(np.where(central, 0.5, pt)))
    near = r_t <= 5.0
    z_near = _poly(_C, r_t - 1.6) / _poly(_D, r_t - 1.6)
    z_far = _poly(_E, r_t - 5.0) / _poly(_F, r_t - 5.0)
    z_tail = np.where(near, z_near, z_far)
    z_tail = np.where(q < 0.0, -z_tail, z_tail)

    return np.where(central, out, z_tail)


def bridge_plan(steps: int, dt: float):
    """Shared bisection schedule for a grid of ``steps`` intervals.

    Returns int64 arrays (lo, mid, hi), the interpolation fractions and the
    conditional standard deviations, in the fixed breadth-first fill order.
    Node ``n`` consumes draw ``n + 1`` of each stream (draw 0 is terminal).
    """
    los, mids, his = [], [], []
    queue = deque([(0, steps)])
    while queue:
        lo, hi = queue.popleft()
        if hi - lo < 2:
            continue
        mid = (lo + hi) // 2
        los.append(lo)
        mids.append(mid)
        his.append(hi)
        queue.append((lo, mid))
        queue.append((mid, hi))
    lo = np.asarray(los, dtype=np.int64)
    mid = np.asarray(mids, dtype=np.int64)
    hi = np.asarray(his, dtype=np.int64)
    frac = (mid - lo) / (hi - lo)
    sd = np.sqrt((mid - lo) * (hi - mid) / (hi - lo) * dt)
    return lo, mid, hi, frac, sd


def brownian_paths(keys: np.ndarray, steps: int, horizon: float) -> np.ndarray:
    """Brownian paths on the uniform grid, one per stream key.

    Returns an array of shape ``keys.shape + (steps + 1,)`` with W[..., 0] = 0.
    """
    keys = np.asarray(keys, dtype=np.uint64)
    dt = horizon / steps
    lo, mid, hi, frac, sd = bridge_plan(steps, dt)

    w = np.zeros(keys.shape + (steps + 1,), dtype=np.float64)
    w[..., steps] = np.sqrt(horizon) * norm_quantile(uniforms(keys, 0))
    for n in range(lo.shape[0]):
        z = norm_quantile(uniforms(keys, n + 1))
        w_lo = w[..., lo[n]]
        w[..., mid[n]] = w_lo + frac[n] * (w[..., hi[n]] - w_lo) + sd[n] * z
    return w

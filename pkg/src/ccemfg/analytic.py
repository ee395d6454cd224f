"""Closed-form machinery for the bang-bang instance.

A four-outcome lottery with probabilities p_ij recommends the constant
control b (rows i=1) or a (rows i=2) together with one of two mixture
flows (columns j).  After imposing consistency of the flows, the no-gain
condition for unilateral deviations reduces to nonnegativity of an affine
function h*m + k over the action interval [a, b]; this module computes h,
k, margins, payoffs, the equilibrium-region sweep and an exact finite-N
gap oracle.

Zero-mass columns: every fraction with a vanishing denominator contributes
0, the continuity limit, which makes all formulas total on the closed
probability simplex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

PROB_TOL = 1e-12
MARGIN_TOL = 1e-12


@dataclass(frozen=True)
class DeviceProbs:
    """Probabilities of the four (strategy, flow) outcomes."""

    p11: float
    p12: float
    p21: float
    p22: float

    def __post_init__(self):
        vals = self.as_tuple()
        if any(v < -PROB_TOL for v in vals):
            raise ValueError("probabilities must be nonnegative")
        if abs(sum(vals) - 1.0) > PROB_TOL:
            raise ValueError("probabilities must sum to 1")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.p11, self.p12, self.p21, self.p22)

    @property
    def column_masses(self) -> tuple[float, float]:
        return (self.p11 + self.p21, self.p12 + self.p22)

    @property
    def row_masses(self) -> tuple[float, float]:
        return (self.p11 + self.p12, self.p21 + self.p22)

    def swapped(self) -> "DeviceProbs":
        """(p11,p12,p21,p22) -> (p22,p21,p12,p11)."""
        return DeviceProbs(self.p22, self.p21, self.p12, self.p11)


@dataclass(frozen=True)
class AffineCoeffs:
    """Slope and intercept of the deviation-gain condition h*m + k >= 0."""

    h: float
    k: float


def consistency_weights(p: DeviceProbs) -> tuple[Optional[float], Optional[float]]:
    """Mixture weights (a1, a2) making the two flows consistent.

    a_j = p_1j / (p_1j + p_2j); a zero-mass column yields None (that flow
    never occurs).
    """
    c1, c2 = p.column_masses
    a1 = p.p11 / c1 if c1 > 0.0 else None
    a2 = p.p12 / c2 if c2 > 0.0 else None
    return a1, a2


def _ratio(num, den):
    den = np.asarray(den, dtype=np.float64)
    num = np.asarray(num, dtype=np.float64)
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den > 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def _hk_arrays(p11, p12, p21, p22, a: float, b: float):
    """Raw slope/intercept formulas, vectorized; zero-mass columns -> 0."""
    c1 = p11 + p21
    c2 = p12 + p22
    h = (-b * (_ratio(p11 * p11 + p21 * p11, c1)
               + _ratio(p12 * p12 + p12 * p22, c2))
         - a * (_ratio(p21 * p21 + p21 * p11, c1)
                + _ratio(p22 * p22 + p12 * p22, c2)))
    k = (b * b * (_ratio(p11 * p11, c1) + _ratio(p12 * p12, c2))
         + a * a * (_ratio(p21 * p21, c1) + _ratio(p22 * p22, c2))
         + 2.0 * a * b * (_ratio(p11 * p21, c1) + _ratio(p12 * p22, c2)))
    return h, k


def _check_interval(a: float, b: float) -> None:
    if not (a < 0.0 < b):
        raise ValueError("action interval must satisfy a < 0 < b")


def hk_coefficients(p: DeviceProbs, a: float, b: float) -> AffineCoeffs:
    """Affine coefficients from the raw (pre-simplification) formulas."""
    _check_interval(a, b)
    h, k = _hk_arrays(p.p11, p.p12, p.p21, p.p22, a, b)
    return AffineCoeffs(h=float(h), k=float(k))


def diagonal_hk(p11: float, a: float, b: float) -> AffineCoeffs:
    """Simplified coefficients for diagonal devices (p12 = p21 = 0)."""
    _check_interval(a, b)
    if not 0.0 <= p11 <= 1.0:
        raise ValueError("p11 must lie in [0, 1]")
    return AffineCoeffs(h=-b * p11 - a * (1.0 - p11),
                        k=b * b * p11 + a * a * (1.0 - p11))


def cce_margin(p: DeviceProbs, a: float, b: float) -> float:
    """min over [a, b] of h*m + k; the device is an equilibrium iff >= 0."""
    _check_interval(a, b)
    co = hk_coefficients(p, a, b)
    return min(co.h * a + co.k, co.h * b + co.k)


def worst_case_deviation(coeffs: AffineCoeffs, a: float, b: float) -> float:
    """Endpoint minimizing h*m + k; ties at h = 0 return a by convention."""
    if not a < b:
        raise ValueError("need a < b")
    return b if coeffs.h < 0.0 else a


DEFAULT_ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)


@dataclass(frozen=True)
class RegionGrid:
    """Equilibrium-region sweep over (p11, p22) at a fixed mixing alpha.

    Cells with p11 + p22 > 1 fall outside the simplex and are marked
    infeasible (gray in the raster) rather than classified.
    """

    resolution: int
    alpha: float
    a: float
    b: float
    p11: np.ndarray
    p22: np.ndarray
    p12: np.ndarray
    p21: np.ndarray
    h: np.ndarray
    k: np.ndarray
    margin: np.ndarray
    feasible: np.ndarray

    @property
    def is_cce(self) -> np.ndarray:
        return self.feasible & (self.margin >= -MARGIN_TOL)

    def to_csv(self, path, header: Optional[dict] = None) -> None:
        with open(path, "w") as fh:
            if header is not None:
                fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            fh.write("p11,p22,p12,p21,alpha,h,k,margin,is_cce\n")
            cce = self.is_cce
            n = self.resolution
            for i in range(n):
                for j in range(n):
                    if not self.feasible[i, j]:
                        continue
                    fh.write(f"{self.p11[i, j]:.17g},{self.p22[i, j]:.17g},"
                             f"{self.p12[i, j]:.17g},{self.p21[i, j]:.17g},"
                             f"{self.alpha:.17g},{self.h[i, j]:.17g},"
                             f"{self.k[i, j]:.17g},{self.margin[i, j]:.17g},"
                             f"{int(cce[i, j])}\n")

    def to_pgm(self, path, header: Optional[dict] = None) -> None:
        """ASCII (P2) raster: white=equilibrium, black=not, gray=infeasible.

        Rows run from p22 = 1 at the top down to p22 = 0, so the image is
        oriented like a standard plot of the (p11, p22) square.
        """
        n = self.resolution
        shade = np.where(self.feasible, np.where(self.is_cce, 255, 0), 128)
        with open(path, "w") as fh:
            fh.write("P2\n")
            if header is not None:
                fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            fh.write(f"{n} {n}\n255\n")
            for j in range(n - 1, -1, -1):
                fh.write(" ".join(str(int(shade[i, j])) for i in range(n)) + "\n")


def region_sweep(resolution: int, alpha: float, a: float, b: float) -> RegionGrid:
    """Sweep the (p11, p22) square at mixing parameter alpha.

    The leftover mass r = 1 - p11 - p22 is split between the off-diagonal
    outcomes: p12 = alpha*r above the p11 = p22 diagonal and the symmetric
    swap below it, so the sweep is transpose-symmetric for b = -a.
    """
    _check_interval(a, b)
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    n = resolution - 1
    i, j = np.meshgrid(np.arange(resolution), np.arange(resolution),
                       indexing="ij")
    p11 = i / n
    p22 = j / n
    r = (n - i - j) / n                       # exact 0 on the anti-diagonal
    feasible = n - i - j >= 0
    r = np.where(feasible, r, 0.0)
    above = j >= i                            # p22 >= p11
    p12 = np.where(above, alpha * r, (1.0 - alpha) * r)
    p21 = np.where(above, (1.0 - alpha) * r, alpha * r)
    h, k = _hk_arrays(p11, p12, p21, p22, a, b)
    margin = np.minimum(h * a + k, h * b + k)
    return RegionGrid(resolution=resolution, alpha=float(alpha),
                      a=float(a), b=float(b), p11=p11, p22=p22,
                      p12=p12, p21=p21, h=h, k=k, margin=margin,
                      feasible=feasible)


def _flow_means(p: DeviceProbs, a: float, b: float) -> tuple[float, float]:
    """Per-unit-time means of the two consistent flows; 0 for dead columns."""
    a1, a2 = consistency_weights(p)
    m1 = a1 * b + (1.0 - a1) * a if a1 is not None else 0.0
    m2 = a2 * b + (1.0 - a2) * a if a2 is not None else 0.0
    return m1, m2


def mean_field_payoffs(p: DeviceProbs, a: float, b: float, c: float, T: float,
                       m_beta: float) -> tuple[float, float]:
    """Expected payoff of the recommendation and of a deviation with mean
    action m_beta, both at the mean field level.

    Satisfies J_rec - J_dev = c*T^2*(h*m_beta + k) up to roundoff.
    """
    _check_interval(a, b)
    if not (min(a, b) - 1e-12 <= m_beta <= max(a, b) + 1e-12):
        raise ValueError("m_beta must lie in the action interval")
    m1, m2 = _flow_means(p, a, b)
    c1, c2 = p.column_masses
    scale = c * T * T
    j_rec = scale * (p.p11 * b * m1 + p.p12 * b * m2
                     + p.p21 * a * m1 + p.p22 * a * m2)
    j_dev = scale * m_beta * (c1 * m1 + c2 * m2)
    return j_rec, j_dev


def finite_n_gap_oracle(p: DeviceProbs, a: float, b: float, c: float, T: float,
                        N: int) -> float:
    """Exact N-player deviation gap over constant controls.

    Closed-form Gaussian integration of the terminal payoff under the
    recommendation (players conditionally i.i.d. given the flow) and under
    a constant deviation m of player 1; the supremum of the convex
    quadratic in m is attained on {a, b} but the interior vertex is checked
    as well.
    """
    _check_interval(a, b)
    if N < 2:
        raise ValueError("N must be at least 2")
    q_plus, q_minus = p.row_masses
    u_bar = q_plus * b + q_minus * a
    e_u2 = q_plus * b * b + q_minus * a * a
    m1, m2 = _flow_means(p, a, b)
    c1, c2 = p.column_masses
    e_cond2 = c1 * m1 * m1 + c2 * m2 * m2

    frac = (N - 1) / N
    j_rec = c * ((T * T * e_u2 + T) / N + frac * T * T * e_cond2)

    def j_dev(m):
        return c * ((T * T * m * m + T) / N + frac * T * T * m * u_bar)

    candidates = [a, b]
    vertex = -(N - 1) * u_bar / 2.0
    if a < vertex < b:
        candidates.append(vertex)
    best = max(j_dev(m) for m in candidates)
    return max(0.0, best - j_rec)

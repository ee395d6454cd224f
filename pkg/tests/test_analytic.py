"""Closed-form example machinery, cross-checked against an independent
rational-arithmetic evaluation of the raw slope/intercept formulas."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccemfg.analytic import (DeviceProbs, cce_margin, consistency_weights,
                             diagonal_hk, finite_n_gap_oracle, hk_coefficients,
                             mean_field_payoffs, region_sweep,
                             worst_case_deviation, AffineCoeffs)


def hk_rational(p11, p12, p21, p22, a, b):
    """Term-by-term rational evaluation of the raw formulas (oracle)."""
    p11, p12, p21, p22 = (Fraction(v) for v in (p11, p12, p21, p22))
    a, b = Fraction(a), Fraction(b)
    c1, c2 = p11 + p21, p12 + p22

    def r(num, den):
        return num / den if den > 0 else Fraction(0)

    h = (-b * (r(p11 * p11 + p21 * p11, c1) + r(p12 * p12 + p12 * p22, c2))
         - a * (r(p21 * p21 + p21 * p11, c1) + r(p22 * p22 + p12 * p22, c2)))
    k = (b * b * (r(p11 * p11, c1) + r(p12 * p12, c2))
         + a * a * (r(p21 * p21, c1) + r(p22 * p22, c2))
         + 2 * a * b * (r(p11 * p21, c1) + r(p12 * p22, c2)))
    return h, k


def random_device(rng):
    w = rng.random(4)
    w /= w.sum()
    return DeviceProbs(*w)


def random_rational_device(rng, denom=64):
    counts = rng.multinomial(denom, [0.25] * 4)
    return tuple(Fraction(int(c), denom) for c in counts)


def test_device_probs_validation():
    DeviceProbs(0.5, 0.3, 0.2, 0.0)
    with pytest.raises(ValueError):
        DeviceProbs(0.5, 0.5, 0.5, -0.5)
    with pytest.raises(ValueError):
        DeviceProbs(0.5, 0.3, 0.2, 0.1)


def test_consistency_weights_examples():
    assert consistency_weights(DeviceProbs(0.25, 0.25, 0.25, 0.25)) == (0.5, 0.5)
    assert consistency_weights(DeviceProbs(1, 0, 0, 0)) == (1.0, None)
    a1, a2 = consistency_weights(DeviceProbs(0.5, 0.3, 0.2, 0.0))
    assert abs(a1 - 5 / 7) < 1e-15 and a2 == 1.0


def test_hk_against_rational_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        frac = random_rational_device(rng)
        p = DeviceProbs(*(float(v) for v in frac))
        co = hk_coefficients(p, -1.0, 1.0)
        h_ref, k_ref = hk_rational(*frac, Fraction(-1), Fraction(1))
        assert abs(co.h - float(h_ref)) < 1e-13
        assert abs(co.k - float(k_ref)) < 1e-13


def test_hk_corner_values():
    co = hk_coefficients(DeviceProbs(1, 0, 0, 0), -1.5, 2.5)
    assert (co.h, co.k) == (-2.5, 2.5**2)
    co = hk_coefficients(DeviceProbs(0, 0, 0, 1), -1.5, 2.5)
    assert (co.h, co.k) == (1.5, 1.5**2)


def test_hk_black_witness_value():
    co = hk_coefficients(DeviceProbs(0.5, 0.3, 0.2, 0.0), -1.0, 1.0)
    h_ref, k_ref = hk_rational(Fraction(1, 2), Fraction(3, 10),
                               Fraction(1, 5), Fraction(0), -1, 1)
    assert (h_ref, k_ref) == (Fraction(-3, 5), Fraction(3, 7))
    assert abs(co.h + 3 / 5) < 1e-15 and abs(co.k - 3 / 7) < 1e-15


def test_hk_simplified_forms_agree():
    # h = -b*q_plus - a*q_minus and k = sum_j c_j * mbar_j^2
    rng = np.random.default_rng(1)
    for _ in range(10000):
        p = random_device(rng)
        a, b = -1.3, 0.7
        co = hk_coefficients(p, a, b)
        qp, qm = p.row_masses
        h_simpl = -b * qp - a * qm
        a1, a2 = consistency_weights(p)
        c1, c2 = p.column_masses
        k_simpl = 0.0
        for cj, aj in ((c1, a1), (c2, a2)):
            if aj is not None:
                k_simpl += cj * (aj * b + (1 - aj) * a) ** 2
        assert abs(co.h - h_simpl) < 1e-12
        assert abs(co.k - k_simpl) < 1e-12


def test_diagonal_hk_matches_full_formula_exactly():
    # the raw formulas divide p11^2 by p11, which costs one rounding; the
    # two forms agree to a couple of ulps, not bitwise
    for p11 in np.linspace(0, 1, 101):
        full = hk_coefficients(DeviceProbs(p11, 0.0, 0.0, 1.0 - p11), -2.0, 3.0)
        diag = diagonal_hk(p11, -2.0, 3.0)
        assert abs(full.h - diag.h) < 1e-14
        assert abs(full.k - diag.k) < 1e-13
    assert diagonal_hk(1.0, -2.0, 3.0) == AffineCoeffs(-3.0, 9.0)
    assert diagonal_hk(0.0, -2.0, 3.0) == AffineCoeffs(2.0, 4.0)
    assert diagonal_hk(0.5, -1.0, 1.0) == AffineCoeffs(0.0, 1.0)


def test_margin_corner_devices_zero():
    rng = np.random.default_rng(2)
    for _ in range(100):
        a = -rng.uniform(0.1, 5.0)
        b = rng.uniform(0.1, 5.0)
        assert abs(cce_margin(DeviceProbs(1, 0, 0, 0), a, b)) < 1e-12
        assert abs(cce_margin(DeviceProbs(0, 0, 0, 1), a, b)) < 1e-12


def test_margin_black_witness():
    m = cce_margin(DeviceProbs(0.5, 0.3, 0.2, 0.0), -1.0, 1.0)
    assert abs(m + 6 / 35) < 1e-15


def test_margin_interval_validation():
    with pytest.raises(ValueError):
        cce_margin(DeviceProbs(1, 0, 0, 0), 0.5, 1.0)


def test_margin_swap_invariance_for_symmetric_interval():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = random_device(rng)
        m1 = cce_margin(p, -1.0, 1.0)
        m2 = cce_margin(p.swapped(), -1.0, 1.0)
        assert abs(m1 - m2) < 1e-12


def test_margin_continuity_in_p():
    rng = np.random.default_rng(4)
    for _ in range(200):
        p = random_device(rng)
        base = cce_margin(p, -1.0, 1.0)
        delta = 1e-6
        shift = np.array([delta, -delta, 0.0, 0.0])
        vals = np.array(p.as_tuple()) + shift
        if np.any(vals < 0):
            continue
        moved = cce_margin(DeviceProbs(*vals), -1.0, 1.0)
        # continuity away from zero-mass columns; C covers the 1/c_j terms
        c1, c2 = p.column_masses
        if min(c1, c2) > 0.05:
            assert abs(moved - base) < 1e3 * 2 * delta


def test_worst_case_deviation_rule():
    assert worst_case_deviation(AffineCoeffs(-1.0, 0.5), -1.0, 1.0) == 1.0
    assert worst_case_deviation(AffineCoeffs(2.0, 0.5), -1.0, 1.0) == -1.0
    # tie convention, both endpoints equal value
    co = AffineCoeffs(0.0, 0.3)
    assert worst_case_deviation(co, -1.0, 1.0) == -1.0
    assert co.h * -1.0 + co.k == co.h * 1.0 + co.k


def test_region_sweep_diagonal_identity():
    # cells with p11 + p22 = 1 carry p12 = p21 = 0 (the figure's dashed
    # diagonal); they sit on the anti-diagonal of the index grid
    grid = region_sweep(1001, 0.5, -1.0, 1.0)
    diag = np.arange(1001)
    anti = 1000 - diag
    margins = grid.margin[diag, anti]
    p11 = grid.p11[diag, anti]
    assert np.all(grid.p12[diag, anti] == 0.0)
    assert np.all(grid.p21[diag, anti] == 0.0)
    assert np.max(np.abs(margins - (1.0 - np.abs(1.0 - 2.0 * p11)))) < 1e-12
    assert np.all(margins >= -1e-12)


def test_region_sweep_has_both_colors():
    for alpha in (0.0, 0.5, 1.0):
        grid = region_sweep(101, alpha, -1.0, 1.0)
        cce = grid.is_cce[grid.feasible]
        margins = grid.margin[grid.feasible]
        assert np.any(cce) and np.any(~cce)
        assert np.any(margins > 1e-6) and np.any(margins < -1e-6)


def test_region_sweep_transpose_symmetry_exact():
    for alpha in (0.0, 0.3, 0.5, 1.0):
        grid = region_sweep(101, alpha, -1.0, 1.0)
        assert np.array_equal(grid.margin, grid.margin.T)
        assert np.array_equal(grid.feasible, grid.feasible.T)


def test_region_sweep_infeasible_cells():
    grid = region_sweep(11, 0.5, -1.0, 1.0)
    i, j = np.meshgrid(np.arange(11), np.arange(11), indexing="ij")
    assert np.array_equal(grid.feasible, i + j <= 10)


def test_mean_field_payoffs_corner():
    j_rec, j_dev = mean_field_payoffs(DeviceProbs(1, 0, 0, 0), -1, 1, 1, 2, 1.0)
    assert j_rec == 4.0 and j_dev == 4.0


def test_mean_field_payoffs_black_device():
    j_rec, j_dev = mean_field_payoffs(DeviceProbs(0.5, 0.3, 0.2, 0.0),
                                      -1, 1, 1, 2, 1.0)
    assert abs((j_dev - j_rec) - 24 / 35) < 1e-12


@given(st.integers(0, 10**6))
@settings(max_examples=300, deadline=None)
def test_mean_field_payoff_identity(seed):
    rng = np.random.default_rng(seed)
    p = random_device(rng)
    a, b = -rng.uniform(0.2, 3), rng.uniform(0.2, 3)
    c, T = rng.uniform(0.1, 4), rng.uniform(0.1, 4)
    m_beta = rng.uniform(a, b)
    j_rec, j_dev = mean_field_payoffs(p, a, b, c, T, m_beta)
    co = hk_coefficients(p, a, b)
    assert abs((j_rec - j_dev) - c * T * T * (co.h * m_beta + co.k)) < 1e-10


def test_finite_n_oracle_corner_is_exactly_zero():
    # corner devices recommend the optimizer itself, so the gap vanishes at
    # every N (which also makes the decrease-with-N check degenerate there)
    p = DeviceProbs(1, 0, 0, 0)
    e10 = finite_n_gap_oracle(p, -1, 1, 1, 2, 10)
    e1000 = finite_n_gap_oracle(p, -1, 1, 1, 2, 1000)
    assert e10 == 0.0 and e1000 == 0.0 and e1000 <= e10


def test_finite_n_oracle_approaches_limit_monotonically():
    # in this example the finite-N gap never decreases toward the limit:
    # white devices sit at 0 for every N (the 1/N self-term m^2 - E[u^2] is
    # never positive on [a, b]) and black devices increase to the limit;
    # what shrinks with N is the distance to the limit
    p = DeviceProbs(0.5, 0.3, 0.2, 0.0)
    e_inf = 4 * max(0.0, -cce_margin(p, -1, 1))
    gaps = [abs(finite_n_gap_oracle(p, -1, 1, 1, 2, N) - e_inf)
            for N in (10, 100, 1000, 10000)]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
    for N in (10, 100, 1000):
        assert finite_n_gap_oracle(DeviceProbs(0.5, 0, 0, 0.5),
                                   -1, 1, 1, 2, N) == 0.0


def test_finite_n_oracle_black_limit():
    p = DeviceProbs(0.5, 0.3, 0.2, 0.0)
    e = finite_n_gap_oracle(p, -1, 1, 1, 2, 10**7)
    assert abs(e - 24 / 35) < 1e-5


def test_finite_n_oracle_limit_matches_margin_formula():
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = random_device(rng)
        a, b = -rng.uniform(0.2, 2), rng.uniform(0.2, 2)
        c, T = rng.uniform(0.5, 2), rng.uniform(0.5, 3)
        e_inf = c * T * T * max(0.0, -cce_margin(p, a, b))
        e_n = finite_n_gap_oracle(p, a, b, c, T, 10**7)
        assert abs(e_n - e_inf) < 1e-6 * max(1.0, e_inf)


def test_finite_n_oracle_rate():
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = random_device(rng)
        e_inf = 2 * 4 * max(0.0, -cce_margin(p, -1, 1))
        for N in (10, 100, 1000):
            e_n = finite_n_gap_oracle(p, -1, 1, 2, 2, N)
            assert abs(e_n - e_inf) < 100.0 / N


def test_region_csv_and_pgm_serialization(tmp_path):
    grid = region_sweep(11, 0.5, -1.0, 1.0)
    csv = tmp_path / "r.csv"
    pgm = tmp_path / "r.pgm"
    grid.to_csv(csv, header={"seed": 0})
    grid.to_pgm(pgm, header={"seed": 0})
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1] == "p11,p22,p12,p21,alpha,h,k,margin,is_cce"
    assert len(lines) == 2 + int(grid.feasible.sum())
    body = pgm.read_text().splitlines()
    assert body[0] == "P2" and body[1].startswith("# ")
    assert body[2] == "11 11" and body[3] == "255"
    vals = np.array(" ".join(body[4:]).split(), dtype=int)
    assert set(np.unique(vals)) <= {0, 128, 255}
    assert (vals == 128).sum() == 121 - int(grid.feasible.sum())

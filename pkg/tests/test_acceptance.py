"""Acceptance gate: every top-level claim at its stated tolerance.

Each criterion prints one PASS/FAIL line (run ``pytest -s`` to see them all
live); the assertions carry the same numbers.  Statistical criteria run at
fixed seeds so the whole gate is reproducible bit for bit.
"""

import numpy as np
import pytest
from scipy.stats import kstest

from kggibbs import (FrequencyGrid, MeasureSpec, RngStream, SpectralField,
                     WeightFunction, FlowConfig, sample_mu_k, gibbs_weight,
                     evolve_psi_k, linear_flow, nonlinear_term, picard_solve,
                     liouville_check, cross_k_convergence, pointwise_variance,
                     cauchy_rate, l2_mass_profile, run_linear_invariance,
                     run_gibbs_invariance, tail_survival)
from kggibbs.measures import quartic_energy
from kggibbs.spectral import seminorm_closed_form

from conftest import trapezoid_cdf

UNIT_CHI = WeightFunction.indicator([(-1.0, 1.0)])


def _report(cid, ok, detail):
    print(f"[{cid}] {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"{cid}: {detail}"


def test_c01_gradient_keystone():
    """Nonlinearity == finite-difference gradient of the quadrature potential."""
    h = 1e-5
    worst = 0.0
    for k in (1, 2):
        spec = MeasureSpec(k, UNIT_CHI)
        g = spec.grid
        rng = np.random.default_rng(11 + k)
        u = SpectralField(g, 0.7 * (rng.normal(size=g.n_modes)
                                    + 1j * rng.normal(size=g.n_modes)))
        grad = np.zeros(g.n_modes, dtype=complex)
        for l in range(g.n_modes):
            for comp in (1.0, 1j):
                up = u.coeffs.copy(); up[l] += comp * h
                um = u.coeffs.copy(); um[l] -= comp * h
                d = (quartic_energy(SpectralField(g, up), spec)
                     - quartic_energy(SpectralField(g, um), spec)) / (2 * h)
                grad[l] += d * comp
        w_hat = nonlinear_term(u, spec).coeffs * np.sqrt(1 + g.frequencies() ** 2)
        worst = max(worst, float(np.max(np.abs(w_hat - grad / (2 * g.N)))))
    _report("C01", worst <= 1e-6,
            f"gradient keystone at k<=2, h={h:g}: max deviation {worst:.3e} <= 1e-6")


def test_c02_energy_conservation_and_order():
    """Drift <= 1e-8 at the pinned step; drift order 4 +- 0.3 under halving."""
    spec = MeasureSpec(3, UNIT_CHI)
    u = sample_mu_k(spec, RngStream(42))
    rec = evolve_psi_k(u, spec, FlowConfig(dt=1e-3, T=1.0, auto_halve=False))
    drift = float(rec.rel_drift)

    dts = [0.1, 0.05, 0.025, 0.0125]
    drifts = [float(evolve_psi_k(u, spec, FlowConfig(dt=dt, T=1.0, auto_halve=False,
                                                     drift_tolerance=np.inf)).rel_drift)
              for dt in dts]
    order = float(np.polyfit(np.log(dts), np.log(drifts), 1)[0])
    ok = drift <= 1e-8 and abs(order - 4.0) <= 0.3
    _report("C02", ok,
            f"H drift {drift:.2e} <= 1e-8 at k=3, dt=1e-3, T=1; halving order {order:.2f} in 4+-0.3")


def test_c03_liouville_volume():
    """|det J - 1| <= 1e-4 for the k=1 flow map at t=0.1."""
    spec = MeasureSpec(1, UNIT_CHI)
    u = sample_mu_k(spec, RngStream(3))
    err = liouville_check(spec, 0.1, h=1e-5, u0=u, dt=1e-3)
    _report("C03", err <= 1e-4, f"|det J - 1| = {err:.3e} <= 1e-4 at k=1, t=0.1, h=1e-5")


def test_c04_linear_invariance():
    """Free measure invariant under the linear flow; shifted control rejects."""
    spec = MeasureSpec(4, UNIT_CHI)
    report = run_linear_invariance(spec, 1.7, 5000, rng=RngStream(2024),
                                   significance=0.01, control_alpha=1e-4)
    worst = min(r.p_adjusted for r in report.results)
    ctrl = min(r.p_adjusted for r in report.control_results)
    ok = report.all_passed and report.control_rejected
    _report("C04", ok,
            f"k=4, t=1.7, n=5000: min adjusted p {worst:.3f} >= 0.01; "
            f"control min adjusted p {ctrl:.1e} < 1e-4")


def test_c05_gibbs_invariance():
    """Gibbs measure invariant under the Hamiltonian flow; raw ensemble is not."""
    spec = MeasureSpec(3, UNIT_CHI)
    report = run_gibbs_invariance(spec, 1.0, 2000,
                                  cfg=FlowConfig(dt=1e-3, T=1.0, auto_halve=False),
                                  rng=RngStream(515), significance=0.01,
                                  control_alpha=1e-3)
    worst = min(r.p_adjusted for r in report.results)
    quartic = [r for r in report.control_results if r.name == "quartic_potential"][0]
    ok = (report.all_passed and quartic.p_adjusted < 1e-3
          and report.drift_excluded <= 0.01 * 2000)
    _report("C05", ok,
            f"k=3, t=1.0, n=2000 exact rejection samples: min adjusted p {worst:.3f} >= 0.01; "
            f"unreweighted control quartic p {quartic.p_adjusted:.1e} < 1e-3; "
            f"{report.drift_excluded} drift exclusions")


def test_c06_cauchy_refinement_rate():
    """Coupled dyadic refinement converges at rate 2^-m (slope -1 +- 0.15)."""
    res = cauchy_rate([2, 3, 4, 5, 6], 9, 2, 0.0, 10_000, RngStream(21))
    ok = abs(res.slope + 1.0) <= 0.15
    _report("C06", ok,
            f"log2 RMS slope {res.slope:.3f} in -1 +- 0.15 over m=2..6, n=9, 1e4 samples")


def test_c07_variance_limits():
    """Deterministic variance limit pi; windowed mass >= pi*R at k=6."""
    big = FrequencyGrid(2 ** 10, 2 ** 10, M=8 * 2 ** 21)
    v = pointwise_variance(big)
    det_ok = abs(v - np.pi) <= 5e-3

    prof = l2_mass_profile(6, [1.0, 2.0, 4.0], 2000, RngStream(22))
    lower_ok = all(m >= np.pi * R - 3 * se
                   for R, m, se in zip(prof.R_list, prof.mean_mass, prof.std_err))
    ok = det_ok and lower_ok
    _report("C07", ok,
            f"variance sum {v:.5f} within 5e-3 of pi; "
            f"windowed mass {np.round(prof.mean_mass, 2).tolist()} >= pi*R within 3 SE at k=6")


def test_c08_gaussian_tail_bound():
    """Quadratic log-survival fit with positive rate; monotone survival."""
    spec = MeasureSpec(4, UNIT_CHI)
    rep = tail_survival(spec, UNIT_CHI, 2, 2, n_samples=20_000, rng=RngStream(808))
    monotone = bool(np.all(np.diff(rep.survival) <= 1e-12))
    ok = rep.a_quadratic > 0 and monotone
    _report("C08", ok,
            f"k=4, p=r=2, n=2e4: fitted a = {rep.a_quadratic:.4f} > 0 "
            f"(residual {rep.resid_quadratic:.3f} vs linear-form {rep.resid_linear:.3f}); "
            f"survival monotone: {monotone}")


def test_c09_picard_cross_validation():
    """Fixed point matches the integrator; contraction factor < 1, monotone in T."""
    spec = MeasureSpec(2, UNIT_CHI)
    u0 = SpectralField(spec.grid, 0.3 * sample_mu_k(spec, RngStream(9)).coeffs)
    T = 0.3
    res = picard_solve(u0, spec, T)
    ref = evolve_psi_k(u0, spec, FlowConfig(dt=5e-4, T=T, auto_halve=False,
                                            drift_tolerance=np.inf)).final
    v_ref = ref.coeffs - linear_flow(u0, T).coeffs
    gap = float(seminorm_closed_form(SpectralField(spec.grid, res.v_nodes[-1] - v_ref), 1.0))
    factors = [picard_solve(u0, spec, t).contraction_factor
               for t in (0.075, 0.15, 0.3, 0.6)]
    monotone = bool(np.all(np.diff(factors) > 0))
    ok = gap <= 1e-6 and res.contraction_factor < 1.0 and monotone
    _report("C09", ok,
            f"fixed point vs integrator gap {gap:.2e} <= 1e-6 in the H1 norm; "
            f"factor {res.contraction_factor:.2e} < 1, monotone over T grid: {monotone}")


def test_c10_cross_resolution_convergence():
    """Mean weighted H^{3/4} distance to the k=6 flow falls strictly with k."""
    base = MeasureSpec(2, UNIT_CHI)
    dists = []
    for trial in range(20):
        u0 = SpectralField(base.grid,
                           0.5 * sample_mu_k(base, RngStream(1010, trial)).coeffs)
        dists.append([cross_k_convergence(u0, MeasureSpec(k, UNIT_CHI),
                                          MeasureSpec(6, UNIT_CHI), 0.25, 2.0,
                                          dt=2e-3)[0]
                      for k in (2, 3, 4, 5)])
    dists = np.asarray(dists)
    mean = dists.mean(axis=0)
    mean_monotone = bool(np.all(np.diff(mean) < 0))
    frac = float(np.mean([bool(np.all(np.diff(row) < 0)) for row in dists]))
    ok = mean_monotone and frac >= 0.8
    _report("C10", ok,
            f"mean distance {np.round(mean, 5).tolist()} strictly decreasing over k=2..5 "
            f"(t=0.25, 20 data); per-datum monotone fraction {frac:.2f}")


def test_c11_rejection_exactness_single_mode():
    """Accepted single-mode law matches direct quadrature of its density."""
    spec = MeasureSpec(1, UNIT_CHI)
    g = spec.grid
    N, j0 = g.N, g.N * g.R
    c_quartic = g.dx * float(np.sum(spec.weight(g.points()))) / (4 * np.pi)

    gen = RngStream(14).generator()
    accepted = []
    while len(accepted) < 10_000:
        draws = np.zeros((4096, g.n_modes), dtype=complex)
        draws[:, j0] = (gen.normal(size=4096) + 1j * gen.normal(size=4096)) * np.sqrt(1 / (2 * N))
        w = np.asarray(gibbs_weight(SpectralField(g, draws), spec))
        keep = gen.uniform(size=4096) < w
        accepted.extend(draws[keep, j0].real.tolist())
    samples = np.asarray(accepted[:10_000])

    xs = np.linspace(-4, 4, 40_001)
    cdf = trapezoid_cdf(xs, -N * xs**2 - c_quartic * xs**4)
    _, p = kstest(samples, lambda q: np.interp(q, xs, cdf))
    _report("C11", p >= 0.01,
            f"accepted-sample law vs quadrature density: KS p = {p:.3f} >= 0.01, n=1e4")

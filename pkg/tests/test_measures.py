import numpy as np
import pytest
from scipy.stats import kstest, ks_2samp

from kggibbs import (FrequencyGrid, MeasureSpec, RngStream, SpectralField,
                     WeightFunction, sample_mu_k, gibbs_weight, sample_rho_k,
                     sample_rho_k_batch, estimate_gamma_k, tail_survival,
                     hamiltonian)
from kggibbs.errors import PreconditionError, ProposalCapError
from kggibbs.measures import quartic_energy, rejection_sample, write_sample_batch
from kggibbs.random_field import build_phi, sample_increments

from conftest import trapezoid_cdf


def _zero_weight_spec(k):
    return MeasureSpec(k, WeightFunction.zero())


# -------------------------------------------------------------------- mu_k

def test_mu_coefficient_variance():
    # k=3, mode j=8: frequency 1, so E|u_j|^2 = 1/(8*2) = 1/16
    spec = MeasureSpec(3, WeightFunction.zero())
    u = sample_mu_k(spec, RngStream(1), n=100_000)
    idx = list(spec.grid.modes()).index(8)
    emp = np.mean(np.abs(u.coeffs[:, idx]) ** 2)
    se = (1 / 16) / np.sqrt(100_000)
    assert abs(emp - 1 / 16) < 3 * se


def test_mu_kinetic_energy_counts_modes():
    # E[H_c] equals the mode count 2*N*R = 48 at k=3
    spec = _zero_weight_spec(3)
    u = sample_mu_k(spec, RngStream(2), n=20_000)
    _, hc, _ = hamiltonian(u, spec)
    se = np.std(hc, ddof=1) / np.sqrt(len(hc))
    assert abs(np.mean(hc) - 48.0) < 3 * se


def test_mu_matches_brownian_route():
    # the direct Gaussian draw and the increment construction share one law
    spec = _zero_weight_spec(2)
    direct = sample_mu_k(spec, RngStream(3), n=8000)
    j0 = spec.grid.N * spec.grid.R
    a = np.abs(direct.coeffs[:, j0])
    phi = build_phi(sample_increments(spec.grid, RngStream(4), n=8000))
    b = np.abs(phi.coeffs[:, j0])
    _, p = ks_2samp(a, b)
    assert p >= 0.01


# ------------------------------------------------------------------ f_k

def test_weight_of_zero_field(spec_k2):
    assert gibbs_weight(SpectralField.zeros(spec_k2.grid), spec_k2) == 1.0


def test_weight_with_zero_chi():
    spec = _zero_weight_spec(2)
    u = sample_mu_k(spec, RngStream(5), n=16)
    np.testing.assert_array_equal(gibbs_weight(u, spec), np.ones(16))


def test_weight_constant_field_closed_form(spec_k2):
    # continuum value exp(-2 c^4/(4 pi)); collocation quadrature resolves the
    # indicator endpoints only to one cell, so compare at that tolerance
    g = spec_k2.grid
    c = 1.3
    u = SpectralField.zeros(g)
    u.coeffs[g.N * g.R] = c
    got = gibbs_weight(u, spec_k2)
    expect = np.exp(-2 * c**4 / (4 * np.pi))
    assert np.log(got) == pytest.approx(np.log(expect), abs=g.dx * c**4 / (4 * np.pi))


def test_weight_constant_field_exact_on_aligned_interval():
    # an interval ending halfway between collocation points is integrated
    # exactly by the cell rule, making the closed form exact
    k = 2
    g = MeasureSpec(k, WeightFunction.zero()).grid
    a = (10 + 0.5) * g.dx
    spec = MeasureSpec(k, WeightFunction.indicator([(-a, a)]))
    c = 0.9
    u = SpectralField.zeros(g)
    u.coeffs[g.N * g.R] = c
    got = gibbs_weight(u, spec)
    assert got == pytest.approx(np.exp(-2 * a * c**4 / (4 * np.pi)), rel=1e-12)


def test_weight_always_in_unit_interval(spec_k3):
    u = sample_mu_k(spec_k3, RngStream(6), n=500)
    w = gibbs_weight(u, spec_k3)
    assert np.all(w > 0) and np.all(w <= 1)


# ------------------------------------------------------------------- rho_k

def test_rejection_with_zero_chi_accepts_everything():
    spec = _zero_weight_spec(2)
    s = sample_rho_k(spec, RngStream(7))
    assert s.accepted and s.proposals == 1 and s.weight == 1.0
    fields, w, counts = sample_rho_k_batch(spec, RngStream(8), 200)
    assert counts.sum() == 200


def test_acceptance_rate_matches_gamma(spec_k3):
    # two independent estimators of Gamma_k must agree
    gamma, se_g = estimate_gamma_k(spec_k3, 20_000, RngStream(9))
    _, _, counts = sample_rho_k_batch(spec_k3, RngStream(10), 3000)
    rate = 3000 / counts.sum()
    se_rate = np.sqrt(gamma**2 * (1 - gamma) / 3000)
    assert abs(rate - gamma) < 3 * np.hypot(se_g, se_rate)


def test_stronger_weight_lowers_acceptance():
    base = MeasureSpec(3, WeightFunction.indicator([(-1.0, 1.0)]))
    strong = MeasureSpec(3, WeightFunction.indicator([(-1.0, 1.0)], amplitude=5.0))
    _, _, c1 = sample_rho_k_batch(base, RngStream(11), 800)
    _, _, c2 = sample_rho_k_batch(strong, RngStream(11), 800)
    assert 800 / c2.sum() < 800 / c1.sum()


def test_proposal_cap_triggers():
    def propose(gen, n):
        return gen.normal(size=(n, 1))

    with pytest.raises(ProposalCapError):
        rejection_sample(propose, lambda d: np.full(len(d), 1e-12), RngStream(12),
                         proposal_cap=2000)


def test_rho_batch_reproducible(spec_k3):
    a, wa, ca = sample_rho_k_batch(spec_k3, RngStream(13), 50)
    b, wb, cb = sample_rho_k_batch(spec_k3, RngStream(13), 50)
    np.testing.assert_array_equal(a.coeffs, b.coeffs)
    np.testing.assert_array_equal(ca, cb)


# single-mode sub-model: rejection output vs direct quadrature of the density
def test_rejection_exactness_single_mode_submodel():
    k = 1
    spec = MeasureSpec(k, WeightFunction.indicator([(-1.0, 1.0)]))
    g = spec.grid
    N = g.N
    j0 = g.N * g.R
    chi_mass = g.dx * float(np.sum(spec.weight(g.points())))
    c_quartic = chi_mass / (4 * np.pi)

    def propose(gen, n):
        z = np.zeros((n, g.n_modes), dtype=complex)
        z[:, j0] = (gen.normal(size=n) + 1j * gen.normal(size=n)) * np.sqrt(1 / (2 * N))
        return z

    gen = RngStream(14).generator()
    accepted = []
    while len(accepted) < 10_000:
        draws = propose(gen, 4096)
        w = np.asarray(gibbs_weight(SpectralField(g, draws), spec))
        keep = gen.uniform(size=4096) < w
        accepted.extend(draws[keep, j0].real.tolist())
    samples = np.asarray(accepted[:10_000])

    xs = np.linspace(-4, 4, 40_001)
    cdf = trapezoid_cdf(xs, -N * xs**2 - c_quartic * xs**4)
    _, p = kstest(samples, lambda q: np.interp(q, xs, cdf))
    assert p >= 0.01


# ------------------------------------------------------------------- Gamma_k

def test_gamma_with_zero_chi_is_exactly_one():
    gamma, se = estimate_gamma_k(_zero_weight_spec(2), 500, RngStream(15))
    assert gamma == 1.0 and se == 0.0


def test_gamma_bounds(spec_k2):
    gamma, _ = estimate_gamma_k(spec_k2, 2000, RngStream(16))
    assert 0.0 < gamma <= 1.0


def test_gamma_requires_enough_samples(spec_k2):
    with pytest.raises(PreconditionError):
        estimate_gamma_k(spec_k2, 50, RngStream(0))


def test_gamma_sees_only_weight_support():
    # restricting the quadrature to the support of chi leaves f_k unchanged:
    # the energy computed with the weight against a domain-wide field equals
    # the energy computed from the windowed integrand alone
    spec = MeasureSpec(2, WeightFunction.indicator([(-1.0, 1.0)]))
    u = sample_mu_k(spec, RngStream(17), n=64)
    g = spec.grid
    from kggibbs.spectral import synthesize
    re = synthesize(u).real
    mask = np.abs(g.points()) <= 1.0
    windowed = (0.25 / np.pi) * g.dx * (re[:, mask] ** 4).sum(axis=1)
    np.testing.assert_allclose(quartic_energy(u, spec), windowed, rtol=1e-12)


def test_gamma_domain_independence_across_k():
    # with supp chi well inside both domains the remaining k-dependence is
    # the slow covariance drift, below resolution at this sample size
    chi = WeightFunction.indicator([(-1.0, 1.0)])
    g2, s2 = estimate_gamma_k(MeasureSpec(2, chi), 150, RngStream(18))
    g3, s3 = estimate_gamma_k(MeasureSpec(3, chi), 150, RngStream(19))
    assert abs(g2 - g3) < 3 * np.hypot(s2, s3)


# ---------------------------------------------------------------------- tails

def test_tail_survival_shape_and_monotonicity():
    spec = MeasureSpec(3, WeightFunction.zero())
    rep = tail_survival(spec, WeightFunction.indicator([(-1.0, 1.0)]), 2, 2,
                        n_samples=2000, rng=RngStream(20))
    assert np.all(np.diff(rep.survival) <= 1e-12)
    assert rep.a_quadratic > 0


def test_tail_survival_at_zero_threshold():
    spec = MeasureSpec(2, WeightFunction.zero())
    rep = tail_survival(spec, WeightFunction.indicator([(-1.0, 1.0)]), 1, 1,
                        lambda_grid=[0.0, 0.5], n_samples=500, rng=RngStream(21))
    assert rep.survival[0] == 1.0


def test_tail_preconditions():
    spec = MeasureSpec(2, WeightFunction.zero())
    with pytest.raises(PreconditionError):
        tail_survival(spec, WeightFunction.indicator([(-1, 1)]), 0, 1, n_samples=200)


# ----------------------------------------------------------------- persistence

def test_sample_batch_files(tmp_path):
    spec = _zero_weight_spec(1)
    u = sample_mu_k(spec, RngStream(22), n=3)
    write_sample_batch(tmp_path / "batch", u, {"k": 1, "seed": 22})
    csv_rows = (tmp_path / "batch.csv").read_text().strip().splitlines()
    assert len(csv_rows) == 1 + 3 * spec.grid.n_modes
    assert (tmp_path / "batch.manifest.json").exists()

"""Statistical machinery that turns invariance claims into experiments.

An invariance experiment draws two *independent* populations from disjoint
random streams -- one held at time zero, one pushed through the flow --
evaluates a panel of scalar observables on both, and compares each pair of
samples with a two-sample Kolmogorov-Smirnov test under a Bonferroni
correction.  Invariance of the law implies invariance of every scalar
pushforward, so the panel plus negative controls is the falsifiable
surrogate for the measure-level statement.

Negative controls MUST reject: a control that passes indicts the harness
itself, and reports carry an explicit flag for that situation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.stats import ks_2samp

from .errors import DriftExclusionError, PreconditionError
from .dynamics import FlowConfig, evolve_psi_k, linear_flow
from .measures import MeasureSpec, quartic_energy, sample_mu_k, sample_rho_k_batch
from .random_field import (FrequencyGrid, RngStream, build_phi, extend_band,
                           refine_increments, sample_increments)
from .spectral import (SeminormSpec, SpectralField, WeightFunction, embed,
                       evaluate_at, metric_d, seminorm)

__all__ = [
    "Observable",
    "StatReport",
    "ks_two_sample",
    "default_observables",
    "run_linear_invariance",
    "run_gibbs_invariance",
    "coupled_distance_diagnostic",
]


@dataclass(frozen=True)
class Observable:
    """Named scalar functional of a field, evaluated on whole batches."""

    name: str
    fn: object

    def __call__(self, u: SpectralField) -> np.ndarray:
        out = np.asarray(self.fn(u), dtype=float)
        if not np.all(np.isfinite(out)):
            raise PreconditionError(f"observable {self.name!r} produced non-finite values")
        return out


def default_observables(spec: MeasureSpec, window: float = 2.0, order: float = 0.25,
                        probe: float = 0.0, mode: int = 1) -> list[Observable]:
    """The standard four-observable panel.

    A windowed seminorm, the quartic potential, the field value at a probe
    point, and one squared coefficient: four pushforwards of distinct
    character (radial, quartic, linear, single-mode).
    """
    R = min(window, spec.grid.half_period)
    sem = SeminormSpec(R, order)
    j_idx = spec.grid.N * spec.grid.R + mode  # position of mode index `mode`

    return [
        Observable(f"seminorm_R{R:g}_s{order:g}",
                   lambda u, _s=sem: seminorm(u, _s)),
        Observable("quartic_potential",
                   lambda u, _spec=spec: quartic_energy(u, _spec)),
        Observable(f"re_u_at_{probe:g}",
                   lambda u, _x=probe: evaluate_at(u, np.array([_x]))[..., 0].real),
        Observable(f"mode_power_{mode}",
                   lambda u, _j=j_idx: np.abs(u.coeffs[..., _j]) ** 2),
    ]


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic with its asymptotic p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise PreconditionError("KS test requires two nonempty samples")
    res = ks_2samp(a, b, method="asymp")
    return float(res.statistic), float(res.pvalue)


@dataclass
class ObservableResult:
    name: str
    statistic: float
    p_value: float
    p_adjusted: float
    n_base: int
    n_evolved: int
    passed: bool


@dataclass
class StatReport:
    """Full record of one invariance experiment; reproducible from seeds."""

    experiment: str
    k: int
    t: float
    n_samples: int
    significance: float
    seed: int
    base_stream: int
    results: list
    control_results: list
    control_alpha: float
    control_rejected: bool       # the control came out non-invariant, as it must
    harness_fault: bool          # a passing negative control indicts the harness
    all_passed: bool
    drift_excluded: int = 0
    flow: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.all_passed and self.control_rejected and not self.harness_fault

    def to_json(self) -> str:
        payload = asdict(self)
        payload["passed"] = self.passed
        return json.dumps(payload, indent=2, sort_keys=True)


def _compare_populations(observables, base: SpectralField, evolved: SpectralField,
                         significance: float) -> list[ObservableResult]:
    results = []
    m = len(observables)
    for obs in observables:
        fa = obs(base)
        fb = obs(evolved)
        stat, p = ks_two_sample(fa, fb)
        p_adj = min(1.0, p * m)
        results.append(ObservableResult(
            name=obs.name, statistic=stat, p_value=p, p_adjusted=p_adj,
            n_base=fa.size, n_evolved=fb.size, passed=p_adj >= significance))
    return results


def run_linear_invariance(spec: MeasureSpec, t: float, n: int,
                          observables: list[Observable] | None = None,
                          rng: RngStream = RngStream(0),
                          significance: float = 0.01,
                          control_alpha: float = 1e-4,
                          control_shift: float = 0.5) -> StatReport:
    """Test invariance of mu_k under the linear flow at time t.

    Populations: F(u) for u ~ mu_k against F(L(t)u') for independent
    u' ~ mu_k, per observable, Bonferroni-corrected.  The negative control
    shifts every coefficient of a third population by ``control_shift``
    before evolving; its rejection certifies the test has power.
    """
    if n < 1000:
        raise PreconditionError("linear invariance test requires n >= 1000")
    observables = observables or default_observables(spec)
    base = sample_mu_k(spec, rng.child(0), n=n)
    evolved = linear_flow(sample_mu_k(spec, rng.child(1), n=n), t)
    results = _compare_populations(observables, base, evolved, significance)

    ctrl_base = sample_mu_k(spec, rng.child(2), n=n)
    shifted = sample_mu_k(spec, rng.child(3), n=n)
    shifted = SpectralField(spec.grid, shifted.coeffs + control_shift)
    ctrl_results = _compare_populations(observables, ctrl_base,
                                        linear_flow(shifted, t), significance)
    control_rejected = any(r.p_adjusted < control_alpha for r in ctrl_results)

    return StatReport(
        experiment="linear-invariance", k=spec.k, t=t, n_samples=n,
        significance=significance, seed=rng.seed, base_stream=rng.stream,
        results=results, control_results=ctrl_results,
        control_alpha=control_alpha, control_rejected=control_rejected,
        harness_fault=not control_rejected,
        all_passed=all(r.passed for r in results),
        flow={"type": "linear", "t": t, "control_shift": control_shift},
    )


def _evolve_chunk(args):
    coeffs, spec, cfg = args
    rec = evolve_psi_k(SpectralField(spec.grid, coeffs), spec, cfg)
    return rec.final.coeffs, rec.flagged


def _evolve_chunked(u: SpectralField, spec: MeasureSpec, cfg: FlowConfig,
                    chunk: int = 256, workers: int = 1):
    """Evolve a batch in fixed-size chunks; returns (final fields, drift flags).

    The chunk size is constant and results are merged in chunk order, so the
    output is identical for any worker count; ``workers > 1`` maps chunks
    onto a process pool.
    """
    coeffs = u.coeffs
    n = coeffs.shape[0]
    jobs = [(coeffs[lo:lo + chunk], spec, cfg) for lo in range(0, n, chunk)]
    if workers > 1 and len(jobs) > 1:
        import multiprocessing
        with multiprocessing.Pool(min(workers, len(jobs))) as pool:
            results = pool.map(_evolve_chunk, jobs)
    else:
        results = [_evolve_chunk(job) for job in jobs]
    finals = np.concatenate([r[0] for r in results], axis=0)
    flags = np.concatenate([r[1] for r in results])
    return SpectralField(spec.grid, finals), flags


def run_gibbs_invariance(spec: MeasureSpec, t: float, n: int,
                         observables: list[Observable] | None = None,
                         cfg: FlowConfig | None = None,
                         rng: RngStream = RngStream(0),
                         significance: float = 0.01,
                         control_alpha: float = 1e-3,
                         control_weight_factor: float = 5.0,
                         max_excluded_fraction: float = 0.01,
                         workers: int = 1) -> StatReport:
    """Test invariance of rho_k under the truncated Hamiltonian flow.

    Both populations are exact rejection samples of rho_k from disjoint
    streams; the second is integrated to time t.  Trajectories whose energy
    drift exceeds the tolerance are excluded and counted; an exclusion rate
    above ``max_excluded_fraction`` aborts.  The negative control evolves
    *unreweighted* mu_k samples under the flow with the weight scaled by
    ``control_weight_factor`` and must reject on the quartic observable.
    """
    if n < 500:
        raise PreconditionError("Gibbs invariance test requires n >= 500")
    observables = observables or default_observables(spec)
    cfg = cfg or FlowConfig(T=t, auto_halve=False)
    if cfg.T != t:
        raise PreconditionError("flow config horizon must equal the test time")

    base, _, _ = sample_rho_k_batch(spec, rng.child(0), n)
    prop, _, _ = sample_rho_k_batch(spec, rng.child(1), n)
    evolved, flagged = _evolve_chunked(prop, spec, cfg, workers=workers)
    n_excluded = int(flagged.sum())
    if n_excluded > max_excluded_fraction * n:
        raise DriftExclusionError(
            f"{n_excluded}/{n} trajectories exceeded the drift tolerance")
    kept = SpectralField(spec.grid, evolved.coeffs[~flagged])
    results = _compare_populations(observables, base, kept, significance)

    if t == 0.0:
        # the identity flow leaves every ensemble invariant; the negative
        # control is vacuous and recorded as skipped rather than failed
        ctrl_results = []
        control_rejected = True
    else:
        strong = spec.with_weight(_scaled_weight(spec.weight, control_weight_factor))
        ctrl_base = sample_mu_k(spec, rng.child(2), n=n)
        ctrl_prop = sample_mu_k(spec, rng.child(3), n=n)
        ctrl_evolved, ctrl_flagged = _evolve_chunked(ctrl_prop, strong, cfg, workers=workers)
        ctrl_kept = SpectralField(spec.grid, ctrl_evolved.coeffs[~ctrl_flagged])
        ctrl_results = _compare_populations(observables, ctrl_base, ctrl_kept, significance)
        quartic = [r for r in ctrl_results if r.name == "quartic_potential"]
        watched = quartic if quartic else ctrl_results
        control_rejected = any(r.p_adjusted < control_alpha for r in watched)

    return StatReport(
        experiment="gibbs-invariance", k=spec.k, t=t, n_samples=n,
        significance=significance, seed=rng.seed, base_stream=rng.stream,
        results=results, control_results=ctrl_results,
        control_alpha=control_alpha, control_rejected=control_rejected,
        harness_fault=not control_rejected,
        all_passed=all(r.passed for r in results),
        drift_excluded=n_excluded,
        flow={"type": "hamiltonian", "t": t, "dt": cfg.dt,
              "drift_tolerance": cfg.drift_tolerance,
              "control_weight_factor": control_weight_factor,
              "control_skipped": t == 0.0},
    )


def _scaled_weight(w: WeightFunction, factor: float) -> WeightFunction:
    if w.form == "tabulated":
        return WeightFunction.tabulated(w.table_x, [v * factor for v in w.table_y])
    if w.form == "zero":
        return w
    from dataclasses import replace
    return replace(w, amplitude=w.amplitude * factor)


def coupled_distance_diagnostic(k: int, k2: int, n: int,
                                rng: RngStream = RngStream(0),
                                chunk: int = 64) -> tuple[float, float]:
    """Mean metric distance between coupled fields at truncations k < k2.

    The two fields ride one Brownian path: increments are sampled at the
    coarse density, refined to the fine one on the shared frequency band,
    and extended with fresh increments beyond it.  The mean distance
    decreasing in k is the computable surrogate for weak convergence of the
    field laws.  Returns (mean, standard error).
    """
    if k2 < k:
        raise PreconditionError("need k <= k2")
    coarse_grid = FrequencyGrid(2 ** k, k)
    fine_same_band = FrequencyGrid(2 ** k2, k)
    fine_grid = FrequencyGrid(2 ** k2, k2)
    if k == k2:
        return 0.0, 0.0
    total = 0.0
    total_sq = 0.0
    done = 0
    part = 0
    while done < n:
        take = min(chunk, n - done)
        sub = rng.child(part)
        coarse = sample_increments(coarse_grid, sub, n=take)
        fine = refine_increments(coarse, fine_same_band, sub.child(1))
        fine = extend_band(fine, fine_grid, sub.child(2))
        phi_k = embed(build_phi(coarse), fine_grid)
        phi_k2 = build_phi(fine)
        d, _tail = metric_d(phi_k, phi_k2)
        total += float(np.sum(d))
        total_sq += float(np.sum(np.asarray(d) ** 2))
        done += take
        part += 1
    mean = total / n
    var = max(total_sq / n - mean**2, 0.0)
    return mean, float(np.sqrt(var / n))

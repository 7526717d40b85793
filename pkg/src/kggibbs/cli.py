"""Command-line front door: configure, dispatch, and persist experiments.

Every experiment is described by a flat key-value configuration that can
come from flags, from a JSON file (``--config``), or both (flags win).
Unknown keys are rejected with a nearest-match hint rather than silently
ignored.  Reports are written as ``report.json`` (content-stable for a
fixed config and seed) plus ``manifest.json`` (run metadata, including the
only timestamp) and CSV tables ready for plotting.

Exit codes: 0 the experiment ran and its acceptance assertions held;
1 assertions failed; 2 configuration error; 3 precondition violation;
4 numerical diagnostic (overflow, proposal cap, drift exclusion).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import difflib
import json
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, KgError, NumericalError, PreconditionError, WeightError
from .dynamics import (FlowConfig, contraction_profile, energy_monitor, evolve_psi_k,
                       liouville_check, linear_flow, picard_solve,
                       cross_k_convergence, seminorm_closed_form, write_trajectory_csv)
from .invariance import (StatReport, coupled_distance_diagnostic, default_observables,
                         run_gibbs_invariance, run_linear_invariance)
from .measures import (MeasureSpec, estimate_gamma_k, sample_mu_k, sample_rho_k_batch,
                       tail_survival, write_sample_batch)
from .random_field import RngStream, cauchy_rate, l2_mass_profile
from .spectral import SpectralField, WeightFunction

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_NUMERICAL = 4

COMMANDS = ("sample", "evolve", "lin-invariance", "gibbs-invariance",
            "cauchy-rate", "tails", "liouville", "picard", "converge-k")

_KNOWN_KEYS = {
    "command", "k", "chi", "t", "dt", "T", "n_samples", "seed", "stream",
    "out_dir", "workers", "measure", "m_list", "n_exponent", "R", "x_probe",
    "R_list", "p", "r", "h", "alpha", "k2", "margin", "observables",
    "significance", "drift_tolerance", "tol",
}


@dataclass
class ExperimentConfig:
    """Validated description of one experiment run."""

    command: str
    k: int = 3
    chi: str = "indicator:-1,1"
    t: float = 1.0
    dt: float = 1e-3
    T: float = 1.0
    n_samples: int = 1000
    seed: int = 0
    stream: int = 0
    out_dir: str = "out"
    workers: int = 1
    measure: str = "mu"
    m_list: tuple = (2, 3, 4, 5, 6)
    n_exponent: int = 9
    R: int = 2
    x_probe: float = 0.0
    R_list: tuple = (1.0, 2.0, 4.0)
    p: int = 2
    r: int = 2
    h: float = 1e-5
    alpha: float = 2.0
    k2: int = 0
    margin: float = 1.0
    significance: float = 0.01
    drift_tolerance: float = 1e-6
    tol: float = 1e-4

    def weight(self) -> WeightFunction:
        return parse_weight(self.chi)

    def rng(self) -> RngStream:
        return RngStream(self.seed, self.stream)

    def spec(self) -> MeasureSpec:
        return MeasureSpec(self.k, self.weight())


def parse_weight(text: str) -> WeightFunction:
    """Parse a compact weight descriptor.

    Grammar: ``zero`` | ``indicator:a,b[;c,d...][:amp=V]`` |
    ``rational:c=V,beta=V``.
    """
    text = text.strip()
    if text == "zero":
        return WeightFunction.zero()
    head, _, rest = text.partition(":")
    if head == "indicator":
        parts = rest.split(":")
        ivs = []
        for seg in parts[0].split(";"):
            try:
                a, b = (float(v) for v in seg.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad indicator interval {seg!r}") from exc
            ivs.append((a, b))
        amp = 1.0
        for extra in parts[1:]:
            key, _, val = extra.partition("=")
            if key != "amp":
                raise ConfigError(f"unknown indicator option {key!r}")
            amp = float(val)
        return WeightFunction.indicator(ivs, amp).validate()
    if head == "rational":
        kv = {}
        for seg in rest.split(","):
            key, _, val = seg.partition("=")
            try:
                kv[key.strip()] = float(val)
            except ValueError as exc:
                raise ConfigError(f"bad rational parameter {seg!r}") from exc
        unknown = set(kv) - {"c", "beta"}
        if unknown:
            raise ConfigError(f"unknown rational options {sorted(unknown)}")
        return WeightFunction.rational(kv.get("c", 1.0), kv.get("beta", 1.5)).validate()
    raise ConfigError(f"unknown weight form {head!r} (use zero, indicator, rational)")


def _check_keys(mapping: dict) -> None:
    for key in mapping:
        if key not in _KNOWN_KEYS:
            hint = difflib.get_close_matches(key, sorted(_KNOWN_KEYS), n=1)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"unknown config key {key!r}{extra}")


def parse_config(argv: list[str]) -> ExperimentConfig:
    """Build a validated ExperimentConfig from flags and an optional JSON file."""
    parser = argparse.ArgumentParser(
        prog="kggibbs",
        description="Klein-Gordon Gibbs-measure laboratory")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON file with config keys (flags override)")
    parser.add_argument("--k", type=int)
    parser.add_argument("--chi", type=str)
    parser.add_argument("--t", type=float)
    parser.add_argument("--dt", type=float)
    parser.add_argument("--T", type=float)
    parser.add_argument("--n", dest="n_samples", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--stream", type=int)
    parser.add_argument("--out", dest="out_dir", type=str)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--measure", choices=("mu", "rho"))
    parser.add_argument("--m-list", dest="m_list", type=str)
    parser.add_argument("--n-exponent", dest="n_exponent", type=int)
    parser.add_argument("--R", type=int)
    parser.add_argument("--x-probe", dest="x_probe", type=float)
    parser.add_argument("--R-list", dest="R_list", type=str)
    parser.add_argument("--p", type=int)
    parser.add_argument("--r", type=int)
    parser.add_argument("--h", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--k2", type=int)
    parser.add_argument("--margin", type=float)
    parser.add_argument("--significance", type=float)
    parser.add_argument("--drift-tolerance", dest="drift_tolerance", type=float)
    parser.add_argument("--tol", type=float)
    ns = parser.parse_args(argv)

    values: dict = {}
    if ns.config:
        try:
            with open(ns.config) as fh:
                file_values = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
        _check_keys(file_values)
        values.update(file_values)
    for key, val in vars(ns).items():
        if key in ("config",) or val is None:
            continue
        values[key] = val
    for key in ("m_list", "R_list"):
        if isinstance(values.get(key), str):
            values[key] = tuple(float(v) if key == "R_list" else int(v)
                                for v in values[key].split(","))
        elif isinstance(values.get(key), list):
            values[key] = tuple(values[key])

    cfg = ExperimentConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}")
    if not 1 <= cfg.k <= 8:
        raise ConfigError(f"k={cfg.k} outside the supported range [1, 8]")
    if cfg.k2 and not 1 <= cfg.k2 <= 8:
        raise ConfigError(f"k2={cfg.k2} outside the supported range [1, 8]")
    if cfg.n_samples < 1:
        raise ConfigError("n_samples must be positive")
    if cfg.workers < 1:
        raise ConfigError("workers must be >= 1")
    parse_weight(cfg.chi)
    floor = {"lin-invariance": 1000, "gibbs-invariance": 500, "cauchy-rate": 100}
    need = floor.get(cfg.command)
    if need and cfg.n_samples < need:
        raise PreconditionError(
            f"{cfg.command} requires n_samples >= {need}, got {cfg.n_samples}")


def _write_report(out: Path, payload: dict, config: ExperimentConfig) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
    manifest = {
        "config": dataclasses.asdict(config),
        "version": __version__,
        "numpy": np.__version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_observable_csv(path: Path, report: StatReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["population", "observable", "ks_stat", "p_value", "p_adjusted",
                    "n_base", "n_evolved", "passed"])
        for tag, rows in (("main", report.results), ("control", report.control_results)):
            for r in rows:
                w.writerow([tag, r.name, repr(r.statistic), repr(r.p_value),
                            repr(r.p_adjusted), r.n_base, r.n_evolved, r.passed])


def _report_payload(report: StatReport) -> dict:
    return json.loads(report.to_json())


def dispatch(cfg: ExperimentConfig) -> int:
    """Run the configured experiment, write artifacts, return the exit code."""
    out = Path(cfg.out_dir)
    rng = cfg.rng()

    if cfg.command == "sample":
        spec = cfg.spec()
        if cfg.measure == "rho":
            fields, weights, counts = sample_rho_k_batch(spec, rng, cfg.n_samples)
            manifest = {"measure": "rho", "k": cfg.k, "chi": cfg.chi,
                        "seed": cfg.seed, "stream": cfg.stream,
                        "n": cfg.n_samples, "proposals": int(counts.sum()),
                        "acceptance_rate": cfg.n_samples / int(counts.sum())}
        else:
            fields = sample_mu_k(spec, rng, n=cfg.n_samples)
            manifest = {"measure": "mu", "k": cfg.k, "chi": cfg.chi,
                        "seed": cfg.seed, "stream": cfg.stream, "n": cfg.n_samples}
        out.mkdir(parents=True, exist_ok=True)
        write_sample_batch(out / "samples", fields, manifest)
        _write_report(out, {"command": "sample", **manifest, "passed": True}, cfg)
        return EXIT_OK

    if cfg.command == "evolve":
        spec = cfg.spec()
        flow = FlowConfig(dt=cfg.dt, T=cfg.T, drift_tolerance=cfg.drift_tolerance)
        u0 = sample_mu_k(spec, rng)
        traj = evolve_psi_k(u0, spec, flow)
        energy = energy_monitor(traj, u0, spec)
        out.mkdir(parents=True, exist_ok=True)
        write_trajectory_csv(out / "trajectory.csv", traj, energy)
        ok = not bool(traj.flagged)
        _write_report(out, {
            "command": "evolve", "k": cfg.k, "chi": cfg.chi, "T": cfg.T,
            "dt_used": traj.dt_used, "halvings": traj.halvings,
            "rel_drift": float(traj.rel_drift), "passed": ok}, cfg)
        return EXIT_OK if ok else EXIT_ASSERTION

    if cfg.command == "lin-invariance":
        spec = cfg.spec()
        report = run_linear_invariance(spec, cfg.t, cfg.n_samples,
                                       rng=rng, significance=cfg.significance)
        out.mkdir(parents=True, exist_ok=True)
        _write_observable_csv(out / "observables.csv", report)
        _write_report(out, _report_payload(report), cfg)
        return EXIT_OK if report.passed else EXIT_ASSERTION

    if cfg.command == "gibbs-invariance":
        spec = cfg.spec()
        flow = FlowConfig(dt=cfg.dt, T=cfg.t, auto_halve=False,
                          drift_tolerance=cfg.drift_tolerance)
        report = run_gibbs_invariance(spec, cfg.t, cfg.n_samples, cfg=flow,
                                      rng=rng, significance=cfg.significance,
                                      workers=cfg.workers)
        out.mkdir(parents=True, exist_ok=True)
        _write_observable_csv(out / "observables.csv", report)
        _write_report(out, _report_payload(report), cfg)
        return EXIT_OK if report.passed else EXIT_ASSERTION

    if cfg.command == "cauchy-rate":
        res = cauchy_rate(cfg.m_list, cfg.n_exponent, cfg.R, cfg.x_probe,
                          cfg.n_samples, rng)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "cauchy.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "rms", "rms_times_2^m"])
            for m, rms, c in zip(res.m_list, res.rms, res.bound_constants):
                w.writerow([m, repr(float(rms)), repr(float(c))])
        ok = abs(res.slope + 1.0) <= 0.15
        _write_report(out, {
            "command": "cauchy-rate", "m_list": list(res.m_list), "n": res.n,
            "R": res.R, "x_probe": res.x_probe, "slope": res.slope,
            "rms": res.rms.tolist(), "passed": ok}, cfg)
        return EXIT_OK if ok else EXIT_ASSERTION

    if cfg.command == "tails":
        spec = cfg.spec()
        report = tail_survival(spec, cfg.weight(), cfg.p, cfg.r,
                               n_samples=cfg.n_samples, rng=rng)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "survival.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["lambda", "survival"])
            for lam, s in zip(report.lambdas, report.survival):
                w.writerow([repr(float(lam)), repr(float(s))])
        monotone = bool(np.all(np.diff(report.survival) <= 1e-12))
        ok = report.a_quadratic > 0 and monotone
        _write_report(out, {
            "command": "tails", "k": cfg.k, "p": cfg.p, "r": cfg.r,
            "a_quadratic": report.a_quadratic, "resid_quadratic": report.resid_quadratic,
            "a_linear": report.a_linear, "resid_linear": report.resid_linear,
            "note": report.note, "monotone": monotone, "passed": ok}, cfg)
        return EXIT_OK if ok else EXIT_ASSERTION

    if cfg.command == "liouville":
        spec = cfg.spec()
        u0 = sample_mu_k(spec, rng)
        err = liouville_check(spec, cfg.t, cfg.h, u0=u0, dt=cfg.dt)
        ok = err <= cfg.tol
        _write_report(out, {
            "command": "liouville", "k": cfg.k, "t": cfg.t, "h": cfg.h,
            "abs_det_minus_one": err, "tolerance": cfg.tol, "passed": ok}, cfg)
        return EXIT_OK if ok else EXIT_ASSERTION

    if cfg.command == "picard":
        spec = cfg.spec()
        u0 = SpectralField(spec.grid, 0.3 * sample_mu_k(spec, rng).coeffs)
        grid_T = [cfg.T * f for f in (0.25, 0.5, 0.75, 1.0)]
        profile = contraction_profile(u0, spec, grid_T)
        res = picard_solve(u0, spec, cfg.T)
        flow = FlowConfig(dt=cfg.dt, T=cfg.T, auto_halve=False, store_points=2,
                          drift_tolerance=np.inf)
        ref = evolve_psi_k(u0, spec, flow).final
        v_ref = ref.coeffs - linear_flow(u0, cfg.T).coeffs
        gap = float(seminorm_closed_form(
            SpectralField(spec.grid, res.v_nodes[-1] - v_ref), 1.0))
        monotone = bool(np.all(np.diff(profile.factors) >= -1e-9))
        ok = res.contraction_factor < 1.0 and monotone and gap <= 1e-6
        _write_report(out, {
            "command": "picard", "k": cfg.k, "T": cfg.T,
            "contraction_factor": res.contraction_factor,
            "factors_over_T": profile.factors.tolist(),
            "T_grid": profile.T_grid.tolist(),
            "largest_contractive_T": profile.largest_contractive_T,
            "C_empirical": profile.C_empirical, "Lambda": profile.Lambda,
            "integrator_gap": gap, "passed": ok}, cfg)
        return EXIT_OK if ok else EXIT_ASSERTION

    if cfg.command == "converge-k":
        k2 = cfg.k2 or 6
        ks = [k for k in range(cfg.k, k2)]
        weight = cfg.weight()
        base_spec = MeasureSpec(ks[0], weight)
        dists = []
        rows = []
        for trial in range(cfg.n_samples):
            u0 = SpectralField(base_spec.grid,
                               0.5 * sample_mu_k(base_spec, rng.child(trial)).coeffs)
            per_k = []
            for k in ks:
                d, tail = cross_k_convergence(u0, MeasureSpec(k, weight),
                                              MeasureSpec(k2, weight),
                                              cfg.t, cfg.alpha, dt=cfg.dt)
                per_k.append(d)
                rows.append((trial, k, k2, d, tail))
            dists.append(per_k)
        dists = np.asarray(dists)
        # the trend claim is about the ensemble: the mean distance must fall
        # strictly with k; per-trial monotonicity is reported as a fraction
        mean_monotone = bool(np.all(np.diff(dists.mean(axis=0)) < 0))
        per_trial = float(np.mean([bool(np.all(np.diff(row) < 0)) for row in dists]))
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "convergence.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "k", "k_ref", "distance", "tail_scale"])
            for row in rows:
                w.writerow([row[0], row[1], row[2], repr(float(row[3])), repr(float(row[4]))])
        _write_report(out, {
            "command": "converge-k", "k_values": ks, "k_ref": k2, "t": cfg.t,
            "alpha": cfg.alpha, "mean_distance": dists.mean(axis=0).tolist(),
            "monotone_fraction": per_trial,
            "mean_monotone": mean_monotone, "passed": mean_monotone}, cfg)
        return EXIT_OK if mean_monotone else EXIT_ASSERTION

    raise ConfigError(f"unknown command {cfg.command!r}")


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        return dispatch(cfg)
    except (ConfigError, WeightError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except NumericalError as exc:
        print(f"numerical diagnostic: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except KgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())

"""Gaussian fields built from complex Brownian increments.

The field on grid (N, R) is

    phi(x) = sum_k delta_k * (1 + (k/N)^2)^(-1/2) * exp(i k x / N),

where delta_k is the Brownian increment over [k/N, (k+1)/N].  Increments
are independent complex Gaussians with E|delta|^2 = 1/N (real and
imaginary parts each of variance 1/(2N)); the resulting coefficient
covariance is diagonal with E|a_k|^2 = 1/(N*(1+k^2/N^2)).

Dyadic refinement conditionally splits each increment in two (a Brownian
bridge midpoint per cell), so tables at densities 2^m and 2^n share one
underlying Brownian path; that coupling is what the Cauchy-rate
diagnostic measures.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .spectral import FrequencyGrid, SpectralField, seminorm, SeminormSpec

__all__ = [
    "RngStream",
    "IncrementTable",
    "sample_increments",
    "refine_increments",
    "extend_band",
    "build_phi",
    "pointwise_variance",
    "cauchy_rate",
    "l2_mass_profile",
    "write_increments_csv",
]


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream: a (seed, stream id) pair.

    Identical pairs reproduce identical draws; distinct stream ids are
    statistically independent.  Parallel work assigns one stream per
    worker; experiments derive consecutive ids with ``child``.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream + offset)


@dataclass
class IncrementTable:
    """Complex Brownian increments indexed by mode, shape (..., 2*N*R).

    Entry k covers the Brownian time cell [k/N, (k+1)/N], so tables with
    the same R but different dyadic N describe the same path at different
    resolutions.
    """

    grid: FrequencyGrid
    increments: np.ndarray

    def __post_init__(self):
        self.increments = np.asarray(self.increments, dtype=np.complex128)
        if self.increments.shape[-1] != self.grid.n_modes:
            raise PreconditionError("increment table length must equal the mode count")

    @property
    def batch_shape(self) -> tuple:
        return self.increments.shape[:-1]


def _complex_normal(rng: np.random.Generator, shape: tuple, var: float) -> np.ndarray:
    """Mean-zero complex Gaussian with E|z|^2 = var (halved per component)."""
    scale = np.sqrt(var / 2.0)
    return rng.normal(0.0, scale, shape) + 1j * rng.normal(0.0, scale, shape)


def sample_increments(grid: FrequencyGrid, rng: RngStream, n: int | None = None) -> IncrementTable:
    """Draw a fresh table (or a batch of n tables) of independent increments."""
    shape = (grid.n_modes,) if n is None else (n, grid.n_modes)
    return IncrementTable(grid, _complex_normal(rng.generator(), shape, 1.0 / grid.N))


def refine_increments(coarse: IncrementTable, fine_grid: FrequencyGrid,
                      rng: RngStream) -> IncrementTable:
    """Conditionally refine a table to a dyadically finer density.

    Each halving replaces the increment delta over a cell of width h by the
    pair delta/2 +- xi with xi complex Gaussian of E|xi|^2 = h/4 (the
    Brownian-bridge midpoint), so consecutive fine blocks sum back to the
    coarse increments exactly while the fine marginal law stays the
    unconditional one.  Requires fine_grid.N = coarse.N * 2^levels, same R.
    """
    cg = coarse.grid
    if fine_grid.R != cg.R:
        raise PreconditionError("refinement keeps the frequency cutoff R fixed")
    if fine_grid.N < cg.N:
        raise PreconditionError("target density below source density")
    if fine_grid.N % cg.N != 0 or (fine_grid.N // cg.N) & (fine_grid.N // cg.N - 1):
        raise PreconditionError("refinement factor must be a power of two")
    gen = rng.generator()
    inc = coarse.increments
    N = cg.N
    while N < fine_grid.N:
        h = 1.0 / N
        xi = _complex_normal(gen, inc.shape, h / 4.0)
        halves = np.stack([0.5 * inc + xi, 0.5 * inc - xi], axis=-1)
        inc = halves.reshape(inc.shape[:-1] + (2 * inc.shape[-1],))
        N *= 2
    return IncrementTable(fine_grid, inc)


def aggregate_increments(fine: IncrementTable, coarse_grid: FrequencyGrid) -> IncrementTable:
    """Sum consecutive fine blocks down to a coarser dyadic density."""
    fg = fine.grid
    if coarse_grid.R != fg.R or fg.N % coarse_grid.N != 0:
        raise PreconditionError("grids are not dyadically nested")
    block = fg.N // coarse_grid.N
    shaped = fine.increments.reshape(fine.batch_shape + (coarse_grid.n_modes, block))
    return IncrementTable(coarse_grid, shaped.sum(axis=-1))


def extend_band(table: IncrementTable, wide_grid: FrequencyGrid, rng: RngStream) -> IncrementTable:
    """Pad a table to a wider cutoff with fresh independent increments.

    The new cells cover disjoint Brownian time, so independence is exact.
    """
    g = table.grid
    if wide_grid.N != g.N or wide_grid.R < g.R:
        raise PreconditionError("band extension keeps N and enlarges R")
    pad = g.N * (wide_grid.R - g.R)
    fresh = _complex_normal(rng.generator(), table.batch_shape + (2 * pad,), 1.0 / g.N)
    inc = np.concatenate(
        [fresh[..., :pad], table.increments, fresh[..., pad:]], axis=-1
    )
    return IncrementTable(wide_grid, inc)


def build_phi(table: IncrementTable) -> SpectralField:
    """Field coefficients a_k = delta_k * (1 + (k/N)^2)^(-1/2)."""
    mult = (1.0 + table.grid.frequencies() ** 2) ** (-0.5)
    return SpectralField(table.grid, table.increments * mult)


def pointwise_variance(grid: FrequencyGrid) -> float:
    """E|phi(x)|^2 = sum_k 1/(N*(1+(k/N)^2)), independent of x.

    Riemann sum of 1/(1+y^2) over [-R, R); tends to 2*arctan(R) as N grows
    and to pi as R grows.
    """
    y = grid.frequencies()
    return float(np.sum(1.0 / (1.0 + y**2)) / grid.N)


@dataclass
class CauchyRateResult:
    m_list: list
    n: int
    R: int
    x_probe: float
    rms: np.ndarray          # coupled RMS distance per m
    slope: float             # fitted slope of log2(rms) vs m
    intercept: float
    bound_constants: np.ndarray  # rms * 2^m, stable across m when the rate holds
    n_samples: int


def cauchy_rate(m_list, n: int, R: int, x_probe: float, n_samples: int,
                rng: RngStream, chunk: int = 2000) -> CauchyRateResult:
    """Monte Carlo L^2 distance at a probe point between coupled resolutions.

    One Brownian path per sample: a table at density 2^min(m) is refined
    level by level up to 2^n, and the field difference phi_{2^n} - phi_{2^m}
    is evaluated at the probe.  The log2 slope of the RMS against m is the
    measured refinement rate (expected close to -1).
    """
    m_list = sorted(int(m) for m in m_list)
    if n_samples < 100:
        raise PreconditionError("cauchy_rate needs at least 100 samples")
    if n <= max(m_list):
        raise PreconditionError("fine exponent n must exceed every m")
    sq_accum = np.zeros(len(m_list))
    done = 0
    part = 0
    while done < n_samples:
        take = min(chunk, n_samples - done)
        sub = rng.child(part)
        table = sample_increments(FrequencyGrid(2 ** m_list[0], R), sub, n=take)
        values = {}
        for level in range(m_list[0], n + 1):
            if level in m_list or level == n:
                phi = build_phi(table)
                kernel = np.exp(1j * phi.grid.frequencies() * x_probe)
                values[level] = phi.coeffs @ kernel
            if level < n:
                table = refine_increments(
                    table, FrequencyGrid(2 ** (level + 1), R), sub.child(1000 + level))
        for i, m in enumerate(m_list):
            sq_accum[i] += np.sum(np.abs(values[n] - values[m]) ** 2)
        done += take
        part += 1
    rms = np.sqrt(sq_accum / n_samples)
    slope, intercept = np.polyfit(np.asarray(m_list, dtype=float), np.log2(rms), 1)
    return CauchyRateResult(
        m_list=m_list, n=n, R=R, x_probe=x_probe, rms=rms,
        slope=float(slope), intercept=float(intercept),
        bound_constants=rms * 2.0 ** np.asarray(m_list, dtype=float),
        n_samples=n_samples,
    )


def coupled_rms_exact(m: int, n: int, R: int, x_probe: float) -> float:
    """Closed-form RMS of phi_{2^n}(x) - phi_{2^m}(x) under the coupling.

    The difference is linear in the fine increments, so its second moment
    is the deterministic sum of 2^-n * |c_j - d_{l(j)}|^2 over fine modes j,
    with c, d the fine/coarse synthesis kernels.  Serves as the independent
    oracle for the Monte Carlo estimate.
    """
    Nf, Nc = 2 ** n, 2 ** m
    j = np.arange(-Nf * R, Nf * R)
    yf = j / Nf
    l = np.floor_divide(j, Nf // Nc)
    yc = l / Nc
    cf = np.exp(1j * yf * x_probe) / np.sqrt(1.0 + yf**2)
    cc = np.exp(1j * yc * x_probe) / np.sqrt(1.0 + yc**2)
    return float(np.sqrt(np.sum(np.abs(cf - cc) ** 2) / Nf))


@dataclass
class MassProfileResult:
    k: int
    R_list: list
    mean_mass: np.ndarray    # E[p_{R,0}(phi_k)^2] per window
    std_err: np.ndarray
    slope: float             # fitted linear growth in R
    variance: float          # pointwise variance of the field
    n_samples: int


def l2_mass_profile(k: int, R_list, n_samples: int, rng: RngStream,
                    chunk: int = 500) -> MassProfileResult:
    """Expected windowed L^2 mass of phi_k; grows linearly, slope 2*variance."""
    grid = FrequencyGrid(2 ** k, k)
    R_list = [float(R) for R in R_list]
    if any(R > grid.half_period for R in R_list if R > 0):
        raise PreconditionError("mass window exceeds the fundamental domain")
    sums = np.zeros(len(R_list))
    sqsums = np.zeros(len(R_list))
    done = 0
    part = 0
    while done < n_samples:
        take = min(chunk, n_samples - done)
        phi = build_phi(sample_increments(grid, rng.child(part), n=take))
        for i, R in enumerate(R_list):
            if R == 0.0:
                continue
            mass = seminorm(phi, SeminormSpec(R, 0.0)) ** 2
            sums[i] += mass.sum()
            sqsums[i] += (mass**2).sum()
        done += take
        part += 1
    mean = sums / n_samples
    var = np.maximum(sqsums / n_samples - mean**2, 0.0)
    se = np.sqrt(var / n_samples)
    pos = [i for i, R in enumerate(R_list) if R > 0]
    slope = float(np.polyfit([R_list[i] for i in pos], mean[pos], 1)[0]) if len(pos) > 1 else np.nan
    return MassProfileResult(k=k, R_list=R_list, mean_mass=mean, std_err=se,
                             slope=slope, variance=pointwise_variance(grid),
                             n_samples=n_samples)


def write_increments_csv(path, tables: list[tuple[int, IncrementTable]]) -> None:
    """Persist increment tables as (stream, k index, Re delta, Im delta) rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stream", "k_index", "re_delta", "im_delta"])
        for stream_id, table in tables:
            if table.batch_shape:
                raise PreconditionError("CSV export expects unbatched tables")
            for k, z in zip(table.grid.modes(), table.increments):
                w.writerow([stream_id, int(k), repr(float(z.real)), repr(float(z.imag))])

"""Band-limited fields on a long torus and the operators acting on them.

Fields live on the fundamental domain [-pi*N, pi*N) with integer mode
indices j in [-N*R, N*R); mode j oscillates at physical frequency j/N, so
the frequency lattice fills [-R, R) with spacing 1/N.  Everything keeps the
coefficient convention

    u(x) = sum_j u_j exp(i j x / N).

Collocation uses M equispaced points starting at -pi*N, which introduces a
half-period phase twist (-1)^j relative to a plain DFT.  The default
M = 4*(2*N*R) leaves the cubic product of band-limited data alias-free.

All operations are pure value transforms; coefficient arrays may carry
leading batch axes and every transform broadcasts over them.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import gamma as _gamma_fn

from .errors import PreconditionError, WeightError

__all__ = [
    "FrequencyGrid",
    "SpectralField",
    "WeightFunction",
    "SeminormSpec",
    "apply_bessel_power",
    "synthesize",
    "analyze",
    "evaluate_at",
    "truncate_pi_k",
    "embed",
    "periodize_weight",
    "seminorm",
    "metric_d",
]


@dataclass(frozen=True)
class FrequencyGrid:
    """Frequency lattice (N, R) with its collocation grid.

    N is the frequency density (lattice spacing 1/N), R the frequency
    cutoff; the 2*N*R modes are j = -N*R .. N*R-1.  The spatial period is
    2*pi*N and the M collocation points are x_m = -pi*N + 2*pi*N*m/M.
    """

    N: int
    R: int
    M: int = 0  # 0 means "use the dealiased default 8*N*R"

    def __post_init__(self):
        if self.N < 1 or self.R < 1:
            raise PreconditionError(f"need N, R >= 1, got N={self.N}, R={self.R}")
        if self.M == 0:
            object.__setattr__(self, "M", 4 * self.n_modes)
        if self.M < 4 * self.n_modes:
            raise PreconditionError(
                f"collocation size M={self.M} below dealiasing margin {4 * self.n_modes}"
            )

    @property
    def n_modes(self) -> int:
        return 2 * self.N * self.R

    @property
    def period(self) -> float:
        return 2.0 * np.pi * self.N

    @property
    def half_period(self) -> float:
        return np.pi * self.N

    @property
    def dx(self) -> float:
        return self.period / self.M

    def modes(self) -> np.ndarray:
        """Integer mode indices j, ordered -N*R .. N*R-1."""
        return _mode_indices(self.N, self.R)

    def frequencies(self) -> np.ndarray:
        """Physical frequencies j/N of the modes."""
        return self.modes() / self.N

    def points(self) -> np.ndarray:
        """Collocation points x_m on [-pi*N, pi*N)."""
        return -self.half_period + self.dx * np.arange(self.M)

    def dispersion(self) -> np.ndarray:
        """Klein-Gordon frequencies sqrt(1 + (j/N)^2) per mode."""
        return np.sqrt(1.0 + self.frequencies() ** 2)


def _abs2(z: np.ndarray) -> np.ndarray:
    """|z|^2 without the square root (hot-path helper)."""
    return z.real * z.real + z.imag * z.imag


@lru_cache(maxsize=None)
def _mode_indices(N: int, R: int) -> np.ndarray:
    js = np.arange(-N * R, N * R)
    js.setflags(write=False)
    return js


@lru_cache(maxsize=None)
def _mode_phase(N: int, R: int) -> np.ndarray:
    # (-1)^j from the half-period shift of the first collocation point
    ph = np.where(_mode_indices(N, R) % 2 == 0, 1.0, -1.0)
    ph.setflags(write=False)
    return ph


@dataclass
class SpectralField:
    """Complex Fourier coefficients of one field (or a batch) on a grid.

    ``coeffs`` has shape (..., 2*N*R); leading axes index independent
    fields and broadcast through every operator.
    """

    grid: FrequencyGrid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        if self.coeffs.shape[-1] != self.grid.n_modes:
            raise PreconditionError(
                f"coefficient axis has length {self.coeffs.shape[-1]}, "
                f"grid has {self.grid.n_modes} modes"
            )

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[:-1]

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        if other.grid != self.grid:
            raise PreconditionError("fields live on different grids; embed first")
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        if other.grid != self.grid:
            raise PreconditionError("fields live on different grids; embed first")
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    @classmethod
    def zeros(cls, grid: FrequencyGrid, batch_shape: tuple = ()) -> "SpectralField":
        return cls(grid, np.zeros(batch_shape + (grid.n_modes,), dtype=np.complex128))


def apply_bessel_power(u: SpectralField, s: float) -> SpectralField:
    """Fourier multiplier (1 + (j/N)^2)^(s/2).

    s=1 realizes sqrt(1-Lap), s=-1 its inverse, s=0 the identity.
    """
    mult = (1.0 + u.grid.frequencies() ** 2) ** (s / 2.0)
    return SpectralField(u.grid, u.coeffs * mult)


def synthesize(u: SpectralField) -> np.ndarray:
    """Evaluate the field on the collocation grid; returns shape (..., M)."""
    g = u.grid
    js = g.modes()
    spec = np.zeros(u.batch_shape + (g.M,), dtype=np.complex128)
    spec[..., js % g.M] = u.coeffs * _mode_phase(g.N, g.R)
    return np.fft.ifft(spec, axis=-1) * g.M


def analyze(samples: np.ndarray, grid: FrequencyGrid) -> SpectralField:
    """Project collocation samples onto the grid's band.

    Input of length M that is not band-limited is aliased implicitly: the
    M-point DFT folds frequencies modulo M before the band is extracted.
    """
    samples = np.asarray(samples, dtype=np.complex128)
    if samples.shape[-1] != grid.M:
        raise PreconditionError(
            f"sample axis has length {samples.shape[-1]}, expected M={grid.M}"
        )
    hat = np.fft.fft(samples, axis=-1) / grid.M
    js = grid.modes()
    return SpectralField(grid, hat[..., js % grid.M] * _mode_phase(grid.N, grid.R))


def evaluate_at(u: SpectralField, x: np.ndarray) -> np.ndarray:
    """Exact trigonometric evaluation at arbitrary points x (shape (..., len(x)))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    kernel = np.exp(1j * np.outer(u.grid.frequencies(), x))
    return u.coeffs @ kernel


def truncate_pi_k(source, target: FrequencyGrid) -> SpectralField:
    """Band truncation: keep modes with physical frequency in [-R, R).

    ``source`` is either a SpectralField on a grid with the same N and a
    cutoff >= target.R, or an array of M collocation samples on the target
    grid (which is analyzed, aliasing implicitly onto the band).
    """
    if isinstance(source, SpectralField):
        sg = source.grid
        if sg.N != target.N:
            raise PreconditionError("band truncation requires matching frequency density N")
        if sg.R < target.R:
            raise PreconditionError("source cutoff below target band")
        lo = sg.N * (sg.R - target.R)
        return SpectralField(target, source.coeffs[..., lo:lo + target.n_modes].copy())
    return analyze(source, target)


def embed(u: SpectralField, target: FrequencyGrid) -> SpectralField:
    """Represent a field on a refined grid (target.N a multiple of u.grid.N,
    target band covering the source band); new modes are zero.

    The embedding is exact as a function on R: mode j at density N maps to
    mode j * (target.N // N) at density target.N, the same frequency j/N.
    """
    sg = u.grid
    if target.N % sg.N != 0 or target.R < sg.R:
        raise PreconditionError("target grid does not refine the source grid")
    step = target.N // sg.N
    out = SpectralField.zeros(target, u.batch_shape)
    idx = sg.modes() * step + target.N * target.R  # positions in the target mode axis
    out.coeffs[..., idx] = u.coeffs
    return out


# ---------------------------------------------------------------------------
# localizing weight


@dataclass(frozen=True)
class WeightFunction:
    """Nonnegative localizing weight chi multiplying the cubic nonlinearity.

    Supported forms: "zero", "indicator" (finite union of bounded intervals,
    one amplitude), "rational" (c*(1+x^2)^(-beta)), "tabulated" (piecewise
    linear, compact support).  ``validate`` enforces chi >= 0 together with
    finiteness of int(chi), sup(chi) and int(sqrt(1+x^2)*chi), which are the
    three conditions the estimates actually consume.
    """

    form: str
    amplitude: float = 1.0
    intervals: tuple = ()          # indicator: ((a, b), ...)
    beta: float = 0.0              # rational decay exponent
    table_x: tuple = ()            # tabulated abscissae (sorted)
    table_y: tuple = ()            # tabulated values

    @classmethod
    def zero(cls) -> "WeightFunction":
        return cls(form="zero", amplitude=0.0)

    @classmethod
    def indicator(cls, intervals, amplitude: float = 1.0) -> "WeightFunction":
        ivs = tuple((float(a), float(b)) for a, b in intervals)
        return cls(form="indicator", amplitude=float(amplitude), intervals=ivs)

    @classmethod
    def rational(cls, c: float, beta: float) -> "WeightFunction":
        return cls(form="rational", amplitude=float(c), beta=float(beta))

    @classmethod
    def tabulated(cls, x, values) -> "WeightFunction":
        x = tuple(float(v) for v in x)
        values = tuple(float(v) for v in values)
        if len(x) != len(values) or len(x) < 2:
            raise WeightError("tabulated weight needs matching x/value tables, length >= 2")
        if any(b <= a for a, b in zip(x, x[1:])):
            raise WeightError("tabulated abscissae must be strictly increasing")
        return cls(form="tabulated", table_x=x, table_y=values)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.form == "zero":
            return np.zeros_like(x)
        if self.form == "indicator":
            out = np.zeros_like(x)
            for a, b in self.intervals:
                out += ((x >= a) & (x <= b)).astype(float)
            return self.amplitude * np.minimum(out, 1.0)
        if self.form == "rational":
            return self.amplitude * (1.0 + x**2) ** (-self.beta)
        if self.form == "tabulated":
            return np.interp(x, self.table_x, self.table_y, left=0.0, right=0.0)
        raise WeightError(f"unknown weight form {self.form!r}")

    # the three integrability conditions, in closed form where possible
    def mass(self) -> float:
        """int chi dx."""
        if self.form == "zero":
            return 0.0
        if self.form == "indicator":
            return self.amplitude * sum(b - a for a, b in self.intervals)
        if self.form == "rational":
            if self.beta <= 0.5:
                return np.inf
            return self.amplitude * np.sqrt(np.pi) * _gamma_fn(self.beta - 0.5) / _gamma_fn(self.beta)
        return float(np.trapezoid(self.table_y, self.table_x))

    def supremum(self) -> float:
        if self.form == "zero":
            return 0.0
        if self.form in ("indicator", "rational"):
            return abs(self.amplitude) if self.amplitude != 0.0 else 0.0
        return float(np.max(np.abs(self.table_y))) if self.table_y else 0.0

    def first_moment(self) -> float:
        """int sqrt(1+x^2) chi dx."""
        if self.form == "zero":
            return 0.0
        if self.form == "indicator":
            def prim(t):  # antiderivative of sqrt(1+t^2)
                return 0.5 * (t * np.sqrt(1.0 + t * t) + np.arcsinh(t))
            return self.amplitude * sum(prim(b) - prim(a) for a, b in self.intervals)
        if self.form == "rational":
            if self.beta <= 1.0:
                return np.inf
            return self.amplitude * np.sqrt(np.pi) * _gamma_fn(self.beta - 1.0) / _gamma_fn(self.beta - 0.5)
        xs = np.asarray(self.table_x)
        return float(np.trapezoid(np.sqrt(1.0 + xs**2) * np.asarray(self.table_y), xs))

    def validate(self) -> "WeightFunction":
        """Raise WeightError unless chi >= 0 with all three integrals finite."""
        if self.form == "indicator":
            if self.amplitude < 0:
                raise WeightError("weight must satisfy chi >= 0 (negative amplitude)")
            if any(not np.isfinite([a, b]).all() or b <= a for a, b in self.intervals):
                raise WeightError("indicator intervals must be bounded with a < b")
        elif self.form == "rational":
            if self.amplitude < 0:
                raise WeightError("weight must satisfy chi >= 0 (negative amplitude)")
        elif self.form == "tabulated":
            if any(v < 0 for v in self.table_y):
                raise WeightError("weight must satisfy chi >= 0 (negative lobe in table)")
        elif self.form != "zero":
            raise WeightError(f"unknown weight form {self.form!r}")
        for name, value in (
            ("int(chi)", self.mass()),
            ("sup(chi)", self.supremum()),
            ("int(sqrt(1+x^2) chi)", self.first_moment()),
        ):
            if not np.isfinite(value):
                raise WeightError(f"weight fails integrability: {name} is not finite")
        return self

    def decay_report(self) -> dict:
        """Which pointwise bound chi <= C*(1+x^2)^(-3a/2), a > 1 (if any) holds.

        Compactly supported profiles satisfy the bound for every a; a
        rational profile only for 2*beta/3 > 1.  Profiles can pass the three
        integral conditions while satisfying no such pointwise bound.
        """
        if self.form in ("zero", "indicator", "tabulated"):
            return {"pointwise_bound": True, "max_alpha": np.inf,
                    "note": "compact support dominates any polynomial decay"}
        alpha = 2.0 * self.beta / 3.0
        return {"pointwise_bound": bool(alpha > 1.0), "max_alpha": alpha,
                "note": "rational decay exponent beta = 3*alpha/2"}


def periodize_weight(chi: WeightFunction, grid: FrequencyGrid) -> np.ndarray:
    """Samples of the periodized weight on the collocation grid.

    Periodization restricts to [-pi*N, pi*N) and repeats, so on the
    fundamental domain the samples are just chi(x_m).
    """
    chi.validate()
    return chi(grid.points())


# ---------------------------------------------------------------------------
# seminorms and the metric


@dataclass(frozen=True)
class SeminormSpec:
    """Windowed Sobolev seminorm p_{R,s}: the L^2 mass of D^s u on [-R, R].

    The metric family uses orders in (-1, 1), but p_{R,1} is the natural
    norm of the truncated system and is accepted here too.
    """

    R: float
    s: float

    def __post_init__(self):
        if self.R <= 0:
            raise PreconditionError("seminorm window radius must be positive")
        if not np.isfinite(self.s):
            raise PreconditionError("seminorm order must be finite")


@lru_cache(maxsize=None)
def _window_weights(N: int, R_grid: int, M: int, R_win: float) -> np.ndarray:
    """Quadrature weights for int_{-R}^{R} over the collocation cells.

    Each collocation point owns the cell [x_m - dx/2, x_m + dx/2); the
    weight is the cell's overlap with the window, accumulated over periodic
    images so the wrap-around cell at -pi*N is handled exactly.  For
    R = pi*N every weight is exactly dx and the rule integrates any
    polynomial of the band (degree < M) exactly, which is the closed-form
    Parseval check.
    """
    grid = FrequencyGrid(N, R_grid, M)
    x = grid.points()
    dx = grid.dx
    lo, hi = x - 0.5 * dx, x + 0.5 * dx
    w = np.zeros_like(x)
    n_images = int(np.ceil((R_win + grid.half_period) / grid.period)) + 1
    for t in range(-n_images, n_images + 1):
        shift = t * grid.period
        w += np.clip(np.minimum(hi + shift, R_win) - np.maximum(lo + shift, -R_win), 0.0, None)
    w.setflags(write=False)
    return w


def seminorm(u: SpectralField, spec: SeminormSpec) -> np.ndarray | float:
    """p_{R,s}(u) by windowed quadrature of the synthesized D^s u.

    Requires R <= pi*N so the window sits inside the fundamental domain.
    At R = pi*N the value matches the coefficient closed form
    p^2 = 2*pi*N * sum_j (1+(j/N)^2)^s |u_j|^2 to round-off.
    """
    g = u.grid
    if spec.R > g.half_period * (1.0 + 1e-12):
        raise PreconditionError(
            f"window R={spec.R} exceeds fundamental half-period {g.half_period}"
        )
    w = _window_weights(g.N, g.R, g.M, float(spec.R))
    gs = synthesize(apply_bessel_power(u, spec.s))
    val = np.sqrt(_abs2(gs) @ w)
    return float(val) if val.ndim == 0 else val


def seminorm_closed_form(u: SpectralField, s: float) -> np.ndarray | float:
    """Full-domain p_{pi*N,s} from coefficients alone (the quadrature oracle)."""
    g = u.grid
    mult = (1.0 + g.frequencies() ** 2) ** s
    val = np.sqrt(g.period * np.sum(mult * np.abs(u.coeffs) ** 2, axis=-1))
    return float(val) if np.ndim(val) == 0 else val


def metric_d(u: SpectralField, v: SpectralField | None = None,
             k_max: int = 16, l_max: int = 16) -> tuple:
    """Truncated metric of the local-Sobolev topology, with its tail bound.

    Computes  sum_{k,l>=1} 2^-(k+l) * p_{k,1/2-1/l}(u-v) / (1 + p_{k,1/2-1/l}(u-v))
    truncated at (k_max, l_max).  Windows are additionally clamped to the
    fundamental half-period (each term of the double sum is < 2^-(k+l), so
    clamping only enlarges the reported tail bound, never the value).

    Returns ``(value, tail_bound)``; value is batched like the inputs and
    always falls in [0, 1), the full double sum being bounded by 1.
    """
    diff = u if v is None else u - v
    g = diff.grid
    k_eff = min(k_max, int(np.floor(g.half_period)))
    if k_eff < 1:
        raise PreconditionError("fundamental domain too small for any metric window")
    total = np.zeros(diff.batch_shape)
    for l in range(1, l_max + 1):
        s = 0.5 - 1.0 / l
        gs = _abs2(synthesize(apply_bessel_power(diff, s)))
        for k in range(1, k_eff + 1):
            w = _window_weights(g.N, g.R, g.M, float(k))
            p = np.sqrt(gs @ w)
            total = total + 2.0 ** (-(k + l)) * p / (1.0 + p)
    tail = 2.0 ** (-k_eff) + 2.0 ** (-l_max)
    value = float(total) if total.ndim == 0 else total
    return value, tail

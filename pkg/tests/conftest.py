"""Shared fixtures and independent oracles for the test suite.

Oracles here deliberately avoid the library's FFT pathway: band products
are checked against explicit circular convolutions and integrals against
direct summation, so the two routes only agree if both are right.
"""

import numpy as np
import pytest

from kggibbs import FrequencyGrid, SpectralField, WeightFunction, MeasureSpec, RngStream


@pytest.fixture
def grid_small():
    return FrequencyGrid(2, 1)   # k=1 geometry: 4 modes, M=16


@pytest.fixture
def grid_mid():
    return FrequencyGrid(4, 2)   # k=2 geometry: 16 modes, M=64


@pytest.fixture
def indicator_unit():
    return WeightFunction.indicator([(-1.0, 1.0)])


@pytest.fixture
def spec_k2(indicator_unit):
    return MeasureSpec(2, indicator_unit)


@pytest.fixture
def spec_k3(indicator_unit):
    return MeasureSpec(3, indicator_unit)


def random_field(grid, seed, scale=1.0, batch=None):
    rng = np.random.default_rng(seed)
    shape = (grid.n_modes,) if batch is None else (batch, grid.n_modes)
    co = scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape))
    return SpectralField(grid, co)


def dft_analyze_oracle(samples, grid):
    """Band coefficients by the raw definition: (1/M) sum_m s_m e^{-i j x_m / N}.

    Direct O(M*K) summation; no FFT, no phase bookkeeping shared with the
    library implementation.
    """
    x = grid.points()
    js = grid.modes()
    out = np.empty(len(js), dtype=complex)
    for i, j in enumerate(js):
        out[i] = np.sum(samples * np.exp(-1j * j * x / grid.N)) / grid.M
    return out


def circular_convolution_oracle(a, b):
    """Plain O(M^2) circular convolution of two M-point DFT spectra."""
    M = len(a)
    out = np.zeros(M, dtype=complex)
    for n in range(M):
        for m in range(M):
            out[n] += a[m] * b[(n - m) % M]
    return out


def trapezoid_cdf(xs, log_density):
    """Numerical CDF of exp(log_density) on the grid xs."""
    dens = np.exp(log_density - log_density.max())
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(xs))])
    return cdf / cdf[-1]

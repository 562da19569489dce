"""FFT helpers, cepstral spectral factorization and filtered Gaussian noise."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import InputError, UnsupportedError
from .grid import GridSamples, check_grid_size, hermitian

SPECTRUM_FLOOR = 1e-12


def dft(x) -> np.ndarray:
    """X_k = sum_n x_n exp(-j 2 pi k n / N); N must be a power of two."""
    x = np.asarray(x, dtype=complex)
    check_grid_size(x.shape[0])
    return np.fft.fft(x, axis=0)


def idft(X) -> np.ndarray:
    """Inverse of :func:`dft`, carrying the 1/N factor."""
    X = np.asarray(X, dtype=complex)
    check_grid_size(X.shape[0])
    return np.fft.ifft(X, axis=0)


def hermitian_sqrt(M, tol: float = 1e-10) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix (or a stack of them).

    Eigenvalues down to ``-tol * ||M||`` are treated as rounding and clipped.
    """
    M = np.asarray(M, dtype=complex)
    scale = max(float(np.max(np.abs(M), initial=0.0)), 1e-300)
    if np.max(np.abs(M - hermitian(M)), initial=0.0) > tol * scale:
        raise InputError("hermitian_sqrt: input is not Hermitian")
    w, V = np.linalg.eigh((M + hermitian(M)) / 2)
    if w.size and w.min() < -tol * scale:
        raise InputError(f"hermitian_sqrt: input is not PSD (min eigenvalue {w.min():.3e})")
    root = np.sqrt(np.clip(w, 0, None))
    return (V * root[..., None, :]) @ hermitian(V)


def avg_trace(X: GridSamples) -> float:
    """Grid average (1/N) sum_k tr X(z_k) of a square-valued function."""
    rows, cols = X.shape
    if rows != cols:
        raise InputError(f"avg_trace needs square samples, got {X.shape}")
    return float(np.mean(np.trace(X.values, axis1=1, axis2=2)).real)


def check_spectrum(S: GridSamples, tol: float = 1e-10) -> None:
    v = S.values
    scale = np.maximum(np.linalg.norm(v, axis=(1, 2)), 1e-300)
    if np.any(np.linalg.norm(v - hermitian(v), axis=(1, 2)) > tol * scale):
        raise InputError(f"{S.label or 'spectrum'} is not Hermitian at every sample")
    if np.linalg.eigvalsh((v + hermitian(v)) / 2).min() < -tol * scale.max():
        raise InputError(f"{S.label or 'spectrum'} is not PSD at every sample")


def cepstral_factor(spectrum: GridSamples, floor: float = SPECTRUM_FLOOR) -> GridSamples:
    """Causal minimum-phase factor L of a positive scalar spectrum, |L|^2 = N.

    With lambda = IDFT(log N), the factor on the grid is
    ``exp(lambda_0/2 + sum_{k=1}^{N/2-1} lambda_k z^{-k} + (-1)^n lambda_{N/2}/2)``.
    The constant term makes L(infinity) = exp(lambda_0 / 2) > 0.

    Samples that are non-positive beyond rounding raise; samples in
    ``[0, floor]`` are clipped to ``floor`` before the logarithm.
    """
    if spectrum.shape != (1, 1):
        raise UnsupportedError("cepstral factorization is implemented for scalar spectra only")
    vals = spectrum.scalar()
    scale = float(np.max(np.abs(vals)))
    if scale == 0 or np.max(np.abs(vals.imag)) > 1e-8 * scale:
        raise InputError("spectrum must be real and not identically zero")
    vals = vals.real
    if vals.min() < -1e-10 * scale:
        raise InputError(f"spectrum has negative samples (min {vals.min():.3e})")
    vals = np.maximum(vals, floor)

    N = spectrum.N
    lam = idft(np.log(vals)).real
    causal = np.zeros(N)
    causal[0] = lam[0] / 2
    causal[1 : N // 2] = lam[1 : N // 2]
    causal[N // 2] = lam[N // 2] / 2
    # dft(c)_n = sum_k c_k z_n^{-k}
    L = np.exp(dft(causal))
    return GridSamples(L[:, None, None], "L")


def causal_impulse(L: GridSamples, taps: int) -> tuple[np.ndarray, float]:
    """First ``taps`` impulse-response coefficients of a causal factor.

    Returns ``(coeffs, tail)`` where coeffs has shape (taps, rows, cols) and
    ``tail`` is the relative energy of all discarded inverse-DFT coefficients.
    """
    if taps < 1 or taps > L.N:
        raise InputError(f"taps must lie in [1, {L.N}], got {taps}")
    h = idft(L.values).real
    energy = float(np.sum(h**2))
    tail = float(np.sum(h[taps:] ** 2)) / energy if energy > 0 else 0.0
    return h[:taps].copy(), tail


def stationary_gaussian(L: GridSamples, horizon: int, taps: int = 256, seed=0) -> np.ndarray:
    """Gaussian sequence (horizon, p) whose spectrum is approximately L L^*.

    i.i.d. standard normal noise is filtered by direct convolution with the
    truncated impulse response of L. ``taps - 1`` extra leading samples make
    the output stationary from t = 0. ``seed`` may be an int, a SeedSequence
    or a Generator.
    """
    rows, cols = L.shape
    coeffs, tail = causal_impulse(L, min(taps, L.N))
    if tail > 1e-6:
        warnings.warn(f"impulse response truncated with relative tail energy {tail:.2e}", stacklevel=2)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k = coeffs.shape[0]
    v = rng.standard_normal((horizon + k - 1, cols))
    w = np.zeros((horizon, rows))
    for i in range(rows):
        for j in range(cols):
            w[:, i] += np.convolve(v[:, j], coeffs[:, i, j], mode="valid")
    return w

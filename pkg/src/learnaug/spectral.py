"""Amplitude spectra, spectral distance, spectral PMFs and low-band extraction.

DFT convention: X_k = sum_t x_t exp(-2 pi i k t / T), unnormalized forward.
All functions operate on the last axis, so stacked series are accepted.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from .errors import DegenerateWeightingError, DimensionError


@dataclass(frozen=True)
class Spectrum:
    amplitudes: np.ndarray
    source_length: int

    def __len__(self):
        return self.amplitudes.shape[-1]


@dataclass(frozen=True)
class DecayVector:
    alpha: np.ndarray
    rate: float


def half_length(T: int) -> int:
    return T // 2


def amplitudes(x) -> np.ndarray:
    """|X_k| for k = 1 .. floor(T/2), along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    if T < 2:
        raise DimensionError(f"need T >= 2, got {T}")
    return np.abs(np.fft.rfft(x, axis=-1))[..., 1:T // 2 + 1]


def amplitude_spectrum(x) -> Spectrum:
    x = np.asarray(x, dtype=np.float64)
    return Spectrum(amplitudes(x), x.shape[-1])


def spectral_distance(x, z) -> float | np.ndarray:
    """Squared L2 distance between the amplitude spectra of x and z."""
    x = np.asarray(x, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if x.shape[-1] != z.shape[-1]:
        raise DimensionError(f"length mismatch: {x.shape[-1]} vs {z.shape[-1]}")
    d = amplitudes(x) - amplitudes(z)
    out = np.sum(d * d, axis=-1)
    return float(out) if out.ndim == 0 else out


def softmax(v, tau: float = 1.0, axis: int = -1) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64) / tau
    v = v - v.max(axis=axis, keepdims=True)
    e = np.exp(v)
    return e / e.sum(axis=axis, keepdims=True)


def spectrum_pmf(x, tau: float) -> np.ndarray:
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return softmax(amplitudes(x), tau)


def make_decay(half_len: int, gamma: float = 4.0) -> DecayVector:
    """alpha_k = exp(-gamma * (k-1) / half_len), k = 1 .. half_len."""
    if half_len < 1:
        raise DimensionError("half_len must be >= 1")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    k = np.arange(half_len)
    return DecayVector(np.exp(-gamma * k / half_len), float(gamma))


def _alpha(alpha, n):
    a = alpha.alpha if isinstance(alpha, DecayVector) else np.asarray(alpha, dtype=np.float64)
    if a.shape[-1] != n:
        raise DimensionError(f"decay length {a.shape[-1]} != PMF length {n}")
    return a


def weighted_js(p, q, alpha) -> float | np.ndarray:
    """JS divergence (natural log) between normalize(alpha*p) and normalize(alpha*q)."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape[-1] != q.shape[-1]:
        raise DimensionError("p and q lengths differ")
    a = _alpha(alpha, p.shape[-1])
    pw, qw = a * p, a * q
    sp, sq = pw.sum(-1, keepdims=True), qw.sum(-1, keepdims=True)
    if np.any(sp <= 0) or np.any(sq <= 0):
        raise DegenerateWeightingError("weighted PMF has zero total mass")
    pw, qw = pw / sp, qw / sq
    m = 0.5 * (pw + qw)
    js = 0.5 * np.sum(xlogy(pw, pw) - xlogy(pw, m), -1) + 0.5 * np.sum(xlogy(qw, qw) - xlogy(qw, m), -1)
    js = np.clip(js, 0.0, np.log(2.0))
    return float(js) if js.ndim == 0 else js


def low_freq_count_ok(T: int, count: int) -> bool:
    return 0 <= count <= T // 2


def extract_low_freq(x, count: int) -> np.ndarray:
    """Time-domain reconstruction from DC plus the ``count`` lowest frequencies.

    Linear in x. With count == T // 2 the input is reproduced exactly
    (the Nyquist bin of an even-length series is weighted once, not twice).
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    if not low_freq_count_ok(T, count):
        raise DimensionError(f"count {count} exceeds floor(T/2) = {T // 2}")
    X = np.fft.rfft(x, axis=-1)
    X[..., count + 1:] = 0.0
    return np.fft.irfft(X, n=T, axis=-1)


def low_freq_matrix(T: int, count: int) -> np.ndarray:
    """Matrix H with extract_low_freq(x, count) == H @ x."""
    return extract_low_freq(np.eye(T), count).T


def dft_basis(T: int) -> tuple[np.ndarray, np.ndarray]:
    """(cos, sin) matrices of shape (T, floor(T/2)) for frequencies 1 .. floor(T/2).

    ``x @ cos`` and ``-(x @ sin)`` are the real and imaginary DFT parts; the
    differentiable amplitude path in the trainer is built on these.
    """
    t = np.arange(T)[:, None]
    k = np.arange(1, T // 2 + 1)[None, :]
    ang = 2.0 * np.pi * ((t * k) % T) / T
    return np.cos(ang), np.sin(ang)

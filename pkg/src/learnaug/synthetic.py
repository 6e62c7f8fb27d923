"""Deterministic toy datasets used by the CLI defaults, experiments and tests."""
from __future__ import annotations

import numpy as np

from .series import SeriesInstance


def sinusoid_instances(count: int, T: int, freq_range=(2.0, 5.0), noise: float = 0.1,
                       n_vars: int = 1, seed: int = 0, domain_tag: str = "synthetic"):
    """Random-phase sinusoids with a frequency (cycles per series) drawn per variable."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    out = []
    for _ in range(count):
        f = rng.uniform(*freq_range, size=(n_vars, 1))
        phase = rng.uniform(0, 2 * np.pi, size=(n_vars, 1))
        amp = rng.uniform(0.8, 1.2, size=(n_vars, 1))
        x = amp * np.sin(2 * np.pi * f * t / T + phase) + noise * rng.standard_normal((n_vars, T))
        out.append(SeriesInstance(x, None, domain_tag))
    return out


def pretrain_domains(per_domain: int = 16, T: int = 128, seed: int = 0):
    """Two domains: slow and fast oscillations."""
    return [
        sinusoid_instances(per_domain, T, (2.0, 5.0), 0.1, seed=seed, domain_tag="slow"),
        sinusoid_instances(per_domain, T, (6.0, 10.0), 0.1, seed=seed + 1, domain_tag="fast"),
    ]


def two_class_sinusoids(n_train: int = 200, n_test: int = 100, T: int = 128, freqs=(3.0, 7.0),
                        noise: float = 0.3, seed: int = 0):
    """Binary task: class c is a random-phase sinusoid with ``freqs[c]`` cycles plus noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)

    def draw(n):
        y = rng.integers(0, 2, size=n)
        f = np.asarray(freqs)[y][:, None]
        phase = rng.uniform(0, 2 * np.pi, size=(n, 1))
        amp = rng.uniform(0.7, 1.3, size=(n, 1))
        x = amp * np.sin(2 * np.pi * f * t / T + phase) + noise * rng.standard_normal((n, T))
        return x, y

    X_tr, y_tr = draw(n_train)
    X_te, y_te = draw(n_test)
    return X_tr, y_tr, X_te, y_te


def forecasting_windows(n: int = 200, lookback: int = 96, horizon: int = 16, seed: int = 0):
    """Sliding windows over noisy multi-tone signals: (inputs, targets)."""
    rng = np.random.default_rng(seed)
    L = lookback + horizon
    t = np.arange(L)
    f = rng.uniform(1.0, 4.0, size=(n, 1))
    phase = rng.uniform(0, 2 * np.pi, size=(n, 1))
    x = np.sin(2 * np.pi * f * t / lookback + phase) + 0.05 * rng.standard_normal((n, L))
    return x[:, :lookback], x[:, lookback:]

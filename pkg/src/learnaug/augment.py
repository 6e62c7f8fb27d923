"""Classical augmentations, their affine forms, and the learnable unified operation.

The unified operation maps a length-K window to ``(A + G) x + y`` where G and
y are Gaussian with trainable means and scales. The scalable variant applies
one fixed K x K operation window by window to series of any length, after
removing (and later restoring) the lowest floor(T/K) frequency components.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, ValidationError
from .series import cyclic_extend
from .spectral import Spectrum, amplitudes, extract_low_freq, low_freq_matrix

ARRAY_NAMES = ("A", "mu_G", "rho_G", "mu_y", "rho_y")
# softplus(beta * ZERO_RAW) / beta underflows to exactly 0.0 for beta >= 1
ZERO_RAW = -1.0e3


def softplus(x, beta=1.0):
    return np.logaddexp(0.0, beta * np.asarray(x, dtype=np.float64)) / beta


def inverse_softplus(s, beta=1.0):
    s = np.asarray(s, dtype=np.float64)
    if np.any(s < 0):
        raise ValidationError("sigma must be non-negative")
    with np.errstate(divide="ignore"):
        z = beta * s
        # log(expm1(z)) = z + log(-expm1(-z)), stable for large z
        raw = np.where(z > 0, (z + np.log(-np.expm1(-np.maximum(z, 1e-300)))) / beta, ZERO_RAW)
    return raw


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 63-bit child seed of ``seed`` for the given integer keys."""
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


# --------------------------------------------------------------------------
# learnable parameters and noise


@dataclass
class AugmentParams:
    """Trainable parameters of the fix-sized unified operation.

    Scales are stored unconstrained (``rho_G``, ``rho_y``) and mapped through
    ``softplus(sharpness * rho) / sharpness`` wherever they are used.
    """

    A: np.ndarray
    mu_G: np.ndarray
    rho_G: np.ndarray
    mu_y: np.ndarray
    rho_y: np.ndarray
    sharpness: float = 100.0

    def __post_init__(self):
        for name in ARRAY_NAMES:
            setattr(self, name, np.array(getattr(self, name), dtype=np.float64))
        K = self.A.shape[0]
        if K < 2:
            raise DimensionError("window size must be >= 2")
        for name in ("A", "mu_G", "rho_G"):
            if getattr(self, name).shape != (K, K):
                raise DimensionError(f"{name} must be {K}x{K}, got {getattr(self, name).shape}")
        for name in ("mu_y", "rho_y"):
            if getattr(self, name).shape != (K,):
                raise DimensionError(f"{name} must have length {K}, got {getattr(self, name).shape}")
        if self.sharpness <= 0:
            raise ValidationError("sharpness must be positive")

    @property
    def window(self) -> int:
        return self.A.shape[0]

    @property
    def sigma_G(self) -> np.ndarray:
        return softplus(self.rho_G, self.sharpness)

    @property
    def sigma_y(self) -> np.ndarray:
        return softplus(self.rho_y, self.sharpness)

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in ARRAY_NAMES}

    def copy(self) -> "AugmentParams":
        return AugmentParams(**{k: v.copy() for k, v in self.arrays().items()},
                             sharpness=self.sharpness)

    @classmethod
    def from_sigmas(cls, A, mu_G, sigma_G, mu_y, sigma_y, sharpness=100.0):
        return cls(A, mu_G, inverse_softplus(sigma_G, sharpness), mu_y,
                   inverse_softplus(sigma_y, sharpness), sharpness)

    @classmethod
    def identity(cls, K: int, sharpness: float = 100.0):
        z = np.zeros((K, K))
        return cls(np.eye(K), z, np.full((K, K), ZERO_RAW), np.zeros(K), np.full(K, ZERO_RAW), sharpness)

    @classmethod
    def initial(cls, K: int, sigma: float = 0.05, sharpness: float = 100.0):
        """Near-identity start: A = I, zero means, every scale equal to ``sigma``."""
        return cls.from_sigmas(np.eye(K), np.zeros((K, K)), np.full((K, K), sigma),
                               np.zeros(K), np.full(K, sigma), sharpness)

    @classmethod
    def from_affine(cls, A, y, sharpness: float = 100.0):
        """Deterministic unified operation reproducing the affine map x -> A x + y."""
        A = np.asarray(A, dtype=np.float64)
        K = A.shape[0]
        return cls(A, np.zeros((K, K)), np.full((K, K), ZERO_RAW), np.asarray(y, dtype=np.float64),
                   np.full(K, ZERO_RAW), sharpness)


@dataclass
class NoiseDraw:
    eps_G: np.ndarray
    eps_y: np.ndarray
    seed: int


def draw_noise(params: AugmentParams, seed: int) -> NoiseDraw:
    rng = np.random.default_rng(seed)
    K = params.window
    eps_G = rng.standard_normal((K, K))
    eps_y = rng.standard_normal(K)
    return NoiseDraw(eps_G, eps_y, seed)


def sample_operator(params: AugmentParams, noise: NoiseDraw) -> tuple[np.ndarray, np.ndarray]:
    """Reparameterized draw: (A + G, y) with G = eps*sigma + mu, y likewise."""
    G = noise.eps_G * params.sigma_G + params.mu_G
    y = noise.eps_y * params.sigma_y + params.mu_y
    return params.A + G, y


def apply_unified(params: AugmentParams, noise: NoiseDraw, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.window:
        raise DimensionError(f"input length {x.shape[-1]} != window {params.window}")
    M, y = sample_operator(params, noise)
    return x @ M.T + y


def apply_nonscalable(params: AugmentParams, x, seed: int) -> np.ndarray:
    """Whole-series unified operation (the window must equal the series length)."""
    return apply_unified(params, draw_noise(params, seed), x)


def window_noise(params: AugmentParams, seed: int, n_windows: int) -> tuple[np.ndarray, np.ndarray]:
    """Independent per-window draws, stacked: eps_G (W, K, K), eps_y (W, K)."""
    draws = [draw_noise(params, derive_seed(seed, w)) for w in range(n_windows)]
    return np.stack([d.eps_G for d in draws]), np.stack([d.eps_y for d in draws])


def apply_scalable(params: AugmentParams, x, seed: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("apply_scalable expects a 1-D series")
    K, T = params.window, x.shape[0]
    if T < 2:
        raise DimensionError("T must be >= 2")
    if T < K:
        ext = cyclic_extend(x, K)
        return apply_unified(params, draw_noise(params, derive_seed(seed, 0)), ext)[:T]
    W = T // K
    g = extract_low_freq(x, W)
    out = x - g
    # one window at a time keeps the working set at O(K^2) however long x is
    base, sigma_G, sigma_y = params.A + params.mu_G, params.sigma_G, params.sigma_y
    for w in range(W):
        noise = draw_noise(params, derive_seed(seed, w))
        seg = out[w * K:(w + 1) * K]
        seg[:] = (base + noise.eps_G * sigma_G) @ seg + noise.eps_y * sigma_y + params.mu_y
    return out + g


def scalable_equivalent(params: AugmentParams, T: int, seed: int):
    """Explicit block form of :func:`apply_scalable` for length ``T >= K``.

    Returns ``(A_blk, G_blk, y_blk, H)`` so that the scalable output equals
    ``(A_blk + G_blk) @ (x - H x) + y_blk + H x``. The trailing residual
    block is the identity in ``A_blk`` and zero in ``G_blk`` and ``y_blk``.
    """
    K = params.window
    if T < K:
        raise DimensionError("block form needs T >= K")
    W = T // K
    eps_G, eps_y = window_noise(params, seed, W)
    A_blk = np.eye(T)
    G_blk = np.zeros((T, T))
    y_blk = np.zeros(T)
    for w in range(W):
        s = slice(w * K, (w + 1) * K)
        A_blk[s, s] = params.A
        G_blk[s, s] = eps_G[w] * params.sigma_G + params.mu_G
        y_blk[s] = eps_y[w] * params.sigma_y + params.mu_y
    return A_blk, G_blk, y_blk, low_freq_matrix(T, W)


def scalable_as_unified(params: AugmentParams, T: int, seed: int):
    """(A_new, G_new, y_new) of the length-T unified operation equal to one scalable draw."""
    if T < params.window:
        K = params.window
        E = cyclic_extend(np.eye(T), K)        # T x K, columns cycle
        E = E.T                                # K x T extension
        M, y = sample_operator(params, draw_noise(params, derive_seed(seed, 0)))
        R = np.eye(K)[:T]
        return R @ params.A @ E, R @ (M - params.A) @ E, R @ y
    A_blk, G_blk, y_blk, H = scalable_equivalent(params, T, seed)
    I = np.eye(T)
    return A_blk @ (I - H) + H, G_blk @ (I - H), y_blk


def scalable_low_freq_preservation(params: AugmentParams, x, seed: int) -> tuple[Spectrum, Spectrum]:
    """Lowest floor(T/K) amplitudes of x and of one scalable view of x."""
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[0]
    if T < params.window:
        raise DimensionError("needs T >= K")
    count = T // params.window
    aug = apply_scalable(params, x, seed)
    return (Spectrum(amplitudes(x)[:count], T), Spectrum(amplitudes(aug)[:count], T))


# --------------------------------------------------------------------------
# classical operations

KINDS = ("jitter", "scale", "magnitude_warp", "mask", "mean_pool", "permute", "time_warp")
AFFINE_KINDS = KINDS[:-1]


@dataclass(frozen=True)
class ClassicalOp:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown operation kind {self.kind!r}")


def jitter(sigma: float, mu: float = 0.0, seed: int = 0) -> ClassicalOp:
    return ClassicalOp("jitter", {"mu": mu, "sigma": sigma, "seed": seed})


def scale(a: float) -> ClassicalOp:
    return ClassicalOp("scale", {"a": a})


def magnitude_warp(a: Sequence[float]) -> ClassicalOp:
    return ClassicalOp("magnitude_warp", {"a": np.asarray(a, dtype=np.float64)})


def mask(a: Sequence[int]) -> ClassicalOp:
    return ClassicalOp("mask", {"a": np.asarray(a)})


def mean_pool(w: int) -> ClassicalOp:
    return ClassicalOp("mean_pool", {"w": int(w)})


def permute(perm: Sequence[int]) -> ClassicalOp:
    """0-based: output[k] = x[perm[k]]."""
    return ClassicalOp("permute", {"perm": np.asarray(perm, dtype=np.int64)})


def time_warp(knots: int = 4, strength: float = 0.2, seed: int = 0) -> ClassicalOp:
    return ClassicalOp("time_warp", {"knots": knots, "strength": strength, "seed": seed})


def segment_permutation(T: int, n_segments: int, rng: np.random.Generator) -> np.ndarray:
    """Index permutation that shuffles ``n_segments`` near-equal contiguous segments."""
    segs = np.array_split(np.arange(T), n_segments)
    order = rng.permutation(len(segs))
    return np.concatenate([segs[i] for i in order])


def _check_len(op, T, key):
    a = op.params[key]
    if len(a) != T:
        raise DimensionError(f"{op.kind} needs {T} factors, got {len(a)}")
    return a


def _jitter_eps(op: ClassicalOp, T: int) -> np.ndarray:
    p = op.params
    return p["mu"] + p["sigma"] * np.random.default_rng(p["seed"]).standard_normal(T)


def _validate(op: ClassicalOp, T: int):
    if op.kind == "mean_pool":
        w = op.params["w"]
        if w < 1 or T % w:
            raise DimensionError(f"pool width {w} does not divide T={T}")
    elif op.kind == "permute":
        perm = op.params["perm"]
        if perm.shape != (T,) or not np.array_equal(np.sort(perm), np.arange(T)):
            raise ValidationError("perm is not a permutation of 0..T-1")
    elif op.kind == "mask":
        a = _check_len(op, T, "a")
        if not np.all((a == 0) | (a == 1)):
            raise ValidationError("mask entries must be 0 or 1")
    elif op.kind == "magnitude_warp":
        _check_len(op, T, "a")


def _warp_path(op: ClassicalOp, T: int) -> np.ndarray:
    p = op.params
    rng = np.random.default_rng(p["seed"])
    knots = np.linspace(0, T - 1, p["knots"] + 2)
    speed = np.clip(1.0 + p["strength"] * rng.standard_normal(p["knots"] + 2), 0.05, None)
    t = np.arange(T)
    cum = np.cumsum(np.interp(t, knots, speed))
    return (cum - cum[0]) / (cum[-1] - cum[0]) * (T - 1)


def apply_classical(op: ClassicalOp, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    _validate(op, T)
    p = op.params
    if op.kind == "jitter":
        return x + _jitter_eps(op, T)
    if op.kind == "scale":
        return p["a"] * x
    if op.kind in ("magnitude_warp", "mask"):
        return p["a"] * x
    if op.kind == "mean_pool":
        w = p["w"]
        bins = x.reshape(*x.shape[:-1], T // w, w).mean(axis=-1)
        return np.repeat(bins, w, axis=-1)
    if op.kind == "permute":
        return x[..., p["perm"]]
    return np.interp(_warp_path(op, T), np.arange(T), x)


def classical_to_affine(op: ClassicalOp, T: int) -> tuple[np.ndarray, np.ndarray]:
    if op.kind not in AFFINE_KINDS:
        raise ValidationError(f"{op.kind} has no affine construction here")
    _validate(op, T)
    p = op.params
    zero = np.zeros(T)
    if op.kind == "jitter":
        return np.eye(T), _jitter_eps(op, T)
    if op.kind == "scale":
        return p["a"] * np.eye(T), zero
    if op.kind in ("magnitude_warp", "mask"):
        return np.diag(np.asarray(p["a"], dtype=np.float64)), zero
    if op.kind == "mean_pool":
        w = p["w"]
        return np.kron(np.eye(T // w), np.full((w, w), 1.0 / w)), zero
    return np.eye(T)[p["perm"]], zero


def compose_affine(ops: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Fold x -> A_i x + y_i in order; the result is again affine."""
    if not ops:
        raise ValidationError("nothing to compose")
    A, y = (np.asarray(v, dtype=np.float64) for v in ops[0])
    for i, (Ai, yi) in enumerate(ops[1:], start=1):
        Ai = np.asarray(Ai, dtype=np.float64)
        yi = np.asarray(yi, dtype=np.float64)
        if Ai.shape[1] != A.shape[0] or yi.shape != (Ai.shape[0],):
            raise DimensionError(f"operation {i} is not conformable")
        A, y = Ai @ A, Ai @ y + yi
    return A, y

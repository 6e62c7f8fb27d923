"""Spectrum-preservation / spectrum-diversity objective and its optimizer loop.

Gradients come from :mod:`learnaug.autodiff`: the noise draws are fixed per
call and the graph differentiates through G = eps * sigma + mu (the
reparameterization), the real DFT, the amplitude, the softmax PMF and the
decay-weighted Jensen-Shannon divergence.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .augment import (ARRAY_NAMES, AugmentParams, apply_nonscalable, apply_scalable,
                      derive_seed, draw_noise, window_noise)
from .errors import ConfigError, ContractError, DimensionError, NumericError
from .optim import AdamW, AdamWConfig
from .series import Batch, cyclic_extend, flatten_variables
from .spectral import amplitudes, dft_basis, extract_low_freq, make_decay, spectrum_pmf, weighted_js

log = logging.getLogger(__name__)

OPERATORS = ("scalable", "unified")


@dataclass(frozen=True)
class AugLossConfig:
    lam: float = 0.01
    tau: float = 10.0
    C1: int = 5
    C2: int = 2
    js_floor: float = 1e-8
    gamma: float = 4.0

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.C1 < 2:
            raise ConfigError("C1 must be >= 2 so that view pairs exist")
        if not 1 <= self.C2 <= math.comb(self.C1, 2):
            raise ConfigError(f"C2 must lie in [1, C1*(C1-1)/2], got {self.C2}")
        if not self.js_floor > 0:
            raise ConfigError("js_floor must be positive")
        if self.lam > 0.4:
            warnings.warn(f"lambda={self.lam} > 0.4: downstream quality is known to degrade",
                          stacklevel=2)

    def decay(self, half_len: int) -> np.ndarray:
        return make_decay(half_len, self.gamma).alpha


@dataclass
class LossReport:
    l_p: float
    l_d: float
    total: float
    grads: dict[str, np.ndarray] = field(default_factory=dict)


# --------------------------------------------------------------------------
# forward-only Monte-Carlo estimates


def _view(params, x, seed, operator):
    if operator == "unified":
        return apply_nonscalable(params, x, seed)
    return apply_scalable(params, x, seed)


def preservation_loss(params: AugmentParams, x, seeds: Sequence[int], operator="scalable") -> float:
    x = np.asarray(x, dtype=np.float64)
    views = np.stack([_view(params, x, s, operator) for s in seeds])
    d = amplitudes(views) - amplitudes(x)
    return float(np.mean(np.sum(d * d, axis=-1)))


def diversity_loss(params: AugmentParams, x, pair_seeds: Sequence[tuple[int, int]],
                   cfg: AugLossConfig, operator="scalable") -> float:
    x = np.asarray(x, dtype=np.float64)
    alpha = cfg.decay(x.shape[-1] // 2)
    vals = []
    for s1, s2 in pair_seeds:
        p = spectrum_pmf(_view(params, x, s1, operator), cfg.tau)
        q = spectrum_pmf(_view(params, x, s2, operator), cfg.tau)
        vals.append(-math.log(max(cfg.js_floor, weighted_js(p, q, alpha))))
    return float(np.mean(vals))


# --------------------------------------------------------------------------
# batch objective with gradients


@dataclass
class SamplingPlan:
    """Per-row view seeds (rows = flattened variables) and per-row view-index pairs."""

    view_seeds: np.ndarray    # (R, C1)
    pairs: np.ndarray         # (R, C2, 2); rows of one instance share pairs


def sampling_plan(owner: np.ndarray, cfg: AugLossConfig, seed: int) -> SamplingPlan:
    rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    R = len(owner)
    view_seeds = rng.integers(0, 2**63 - 1, size=(R, cfg.C1), dtype=np.int64)
    all_pairs = np.array(list(itertools.combinations(range(cfg.C1), 2)))
    n_inst = int(owner.max()) + 1
    chosen = np.stack([all_pairs[rng.choice(len(all_pairs), cfg.C2, replace=False)]
                       for _ in range(n_inst)])
    return SamplingPlan(view_seeds, chosen[owner])


def _param_tensors(params: AugmentParams) -> dict[str, ad.Tensor]:
    return {k: ad.Tensor(v, requires_grad=True) for k, v in params.arrays().items()}


def _noise_stack(params, view_seeds, n_windows, operator):
    R, C = view_seeds.shape
    K = params.window
    eps_G = np.empty((R, C, n_windows, K, K))
    eps_y = np.empty((R, C, n_windows, K))
    for r in range(R):
        for c in range(C):
            s = int(view_seeds[r, c])
            if operator == "unified":
                d = draw_noise(params, s)
                eps_G[r, c, 0], eps_y[r, c, 0] = d.eps_G, d.eps_y
            else:
                eps_G[r, c], eps_y[r, c] = window_noise(params, s, n_windows)
    return eps_G, eps_y


def views_graph(t: dict[str, ad.Tensor], params: AugmentParams, X: np.ndarray,
                view_seeds: np.ndarray, operator: str = "scalable") -> ad.Tensor:
    """Differentiable stack of augmented views, shape (R, C1, T)."""
    R, T = X.shape
    K = params.window
    C = view_seeds.shape[1]
    beta = params.sharpness
    sig_G = ad.softplus(t["rho_G"], beta)
    sig_y = ad.softplus(t["rho_y"], beta)
    if operator == "unified":
        if T != K:
            raise DimensionError(f"non-scalable operator needs T == K, got T={T}, K={K}")
        W, ext, base, tail = 1, X, np.zeros_like(X), None
    elif T < K:
        W, ext, base, tail = 1, cyclic_extend(X, K), None, None
    else:
        W = T // K
        g = extract_low_freq(X, W)
        r = X - g
        ext, base, tail = r[:, :W * K], g, r[:, W * K:]
    eps_G, eps_y = _noise_stack(params, view_seeds, W, operator)
    h = ext.reshape(R, 1, W, K, 1)
    M = (ad.Tensor(eps_G) * sig_G + t["mu_G"]) + t["A"]
    y = ad.Tensor(eps_y) * sig_y + t["mu_y"]
    out = (M @ h).reshape(R, C, W, K) + y
    out = out.reshape(R, C, W * K)
    if operator != "unified" and T < K:
        return out[:, :, :T]
    if tail is not None and tail.shape[-1]:
        out = ad.concat([out, ad.Tensor(np.broadcast_to(tail[:, None, :], (R, C, tail.shape[-1])))], axis=2)
    return out + ad.Tensor(base[:, None, :])


def _weighted_js_graph(P: ad.Tensor, Q: ad.Tensor, alpha: np.ndarray) -> ad.Tensor:
    pw = P * alpha
    qw = Q * alpha
    pw = pw / pw.sum(axis=-1, keepdims=True)
    qw = qw / qw.sum(axis=-1, keepdims=True)
    m = (pw + qw) * 0.5
    return (ad.xlogx(pw).sum(axis=-1) * 0.5 + ad.xlogx(qw).sum(axis=-1) * 0.5
            - ad.xlogx(m).sum(axis=-1))


def _check_batch(batch: Batch):
    for inst in batch.instances:
        if inst.has_missing:
            raise ContractError("batch contains missing values; run preprocess first")


def batch_aug_loss(params: AugmentParams, batch: Batch, cfg: AugLossConfig, seed: int,
                   operator: str = "scalable", need_grads: bool = True) -> LossReport:
    """Mean over instances of l_p + lambda * l_d, with gradients for every array."""
    if operator not in OPERATORS:
        raise ConfigError(f"operator must be one of {OPERATORS}")
    _check_batch(batch)
    X, owner = flatten_variables(batch.instances)
    R, T = X.shape
    m = len(batch.instances)
    n_of = np.array([inst.n for inst in batch.instances], dtype=np.float64)
    weight = 1.0 / (m * n_of[owner])
    plan = sampling_plan(owner, cfg, seed)

    t = _param_tensors(params)
    V = views_graph(t, params, X, plan.view_seeds, operator)
    cos, sin = dft_basis(T)
    amp = ad.hypot(V @ cos, V @ sin)                 # (R, C1, H)
    amp_x = amplitudes(X)[:, None, :]
    diff = amp - amp_x
    sd = (diff * diff).sum(axis=-1)                  # (R, C1)
    lp_rows = sd.mean(axis=-1)

    Pm = ad.softmax(amp * (1.0 / cfg.tau), axis=-1)
    rows = np.arange(R)[:, None]
    P1 = Pm[rows, plan.pairs[:, :, 0]]
    P2 = Pm[rows, plan.pairs[:, :, 1]]
    js = _weighted_js_graph(P1, P2, cfg.decay(T // 2))
    ld_rows = (-(js.clamp_min(cfg.js_floor).log())).mean(axis=-1)

    w = ad.Tensor(weight)
    lp_t = (lp_rows * w).sum()
    ld_t = (ld_rows * w).sum()
    total_t = lp_t + ld_t * cfg.lam
    l_p, l_d = lp_t.item(), ld_t.item()
    grads = {}
    if need_grads:
        total_t.backward()
        grads = {k: t[k].grad if t[k].grad is not None else np.zeros_like(t[k].data)
                 for k in ARRAY_NAMES}
    return LossReport(l_p, l_d, l_p + cfg.lam * l_d, grads)


# --------------------------------------------------------------------------
# optimizer loop


@dataclass
class TraceRow:
    step: int
    l_p: float
    l_d: float
    total: float


def train_augmentation(params: AugmentParams, batches: Sequence[Batch], cfg: AugLossConfig,
                       opt: AdamWConfig = AdamWConfig(), steps: int = 200, seed: int = 0,
                       operator: str = "scalable", fixed_noise: bool = False
                       ) -> tuple[AugmentParams, list[TraceRow]]:
    """Run ``steps`` AdamW updates; returns trained copy and the per-step trace.

    Step ``s`` uses batch ``s mod len(batches)`` and noise seed
    ``derive_seed(seed, s)`` (or ``seed`` itself for every step when
    ``fixed_noise``); the trace row records the loss before its update.
    """
    if not batches:
        raise ConfigError("no batches to train on")
    params = params.copy()
    state = params.arrays()
    optimizer = AdamW(state, opt)
    trace = []
    for step in range(steps):
        batch = batches[step % len(batches)]
        step_seed = seed if fixed_noise else derive_seed(seed, step)
        rep = batch_aug_loss(params, batch, cfg, step_seed, operator)
        bad = not math.isfinite(rep.total) or any(not np.all(np.isfinite(g)) for g in rep.grads.values())
        if bad:
            raise NumericError(f"non-finite augmentation loss at step {step}", step=step,
                               context={"params": params.copy(), "trace": trace})
        trace.append(TraceRow(step, rep.l_p, rep.l_d, rep.total))
        optimizer.step(rep.grads)
        if step % 50 == 0:
            log.debug("aug step %d: total=%.6g l_p=%.6g l_d=%.6g", step, rep.total, rep.l_p, rep.l_d)
    return params, trace


def write_trace(path, trace: Sequence[TraceRow]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "l_p", "l_d", "total"])
        for r in trace:
            w.writerow([r.step, repr(r.l_p), repr(r.l_d), repr(r.total)])

"""Toy patch transformer, hierarchical contrastive loss and alternating pre-training."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .augment import AugmentParams, apply_scalable, derive_seed
from .augtrain import AugLossConfig, batch_aug_loss
from .errors import DimensionError, InsufficientNegativesError, NumericError, ValidationError
from .optim import AdamW, AdamWConfig
from .series import Batch, flatten_variables

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderConfig:
    patch_len: int = 16
    stride: int = 8
    dim: int = 64
    blocks: int = 2
    heads: int = 4
    causal: bool = True
    ff_mult: int = 2

    def __post_init__(self):
        if self.patch_len < 1 or self.stride < 1:
            raise ValidationError("patch_len and stride must be positive")
        if self.dim < 1 or self.blocks < 0 or self.heads < 1:
            raise ValidationError("dim, heads must be positive and blocks non-negative")
        if self.dim % self.heads:
            raise ValidationError(f"dim {self.dim} not divisible by heads {self.heads}")

    def n_patches(self, T: int) -> int:
        if T < self.patch_len:
            raise DimensionError(f"series length {T} shorter than patch length {self.patch_len}")
        return (T - self.patch_len) // self.stride + 1


@dataclass
class EncoderState:
    cfg: EncoderConfig
    weights: dict[str, np.ndarray]

    def copy(self) -> "EncoderState":
        return EncoderState(self.cfg, {k: v.copy() for k, v in self.weights.items()})

    def layer_norm_names(self) -> list[str]:
        return [k for k in self.weights if ".ln" in k]


@dataclass(frozen=True)
class PretrainConfig:
    E1: int = 3
    E2: int = 1
    outer_epochs: int = 1
    eta1: float = 1e-4
    eta2: float = 1e-4
    tau_cl: float = 0.2

    def __post_init__(self):
        if self.E1 < 1 or self.E2 < 1 or self.outer_epochs < 1:
            raise ValidationError("E1, E2 and outer_epochs must be >= 1")
        if self.tau_cl <= 0:
            raise ValidationError("tau_cl must be positive")


def init_encoder(cfg: EncoderConfig, seed: int = 0) -> EncoderState:
    rng = np.random.default_rng(seed)
    D, F = cfg.dim, cfg.dim * cfg.ff_mult

    def lin(fan_in, fan_out, scale=1.0):
        return scale * rng.standard_normal((fan_in, fan_out)) / math.sqrt(fan_in)

    w = {"embed.W": lin(cfg.patch_len, D), "embed.b": np.zeros(D)}
    for i in range(cfg.blocks):
        p = f"block{i}."
        w[p + "ln1.w"], w[p + "ln1.b"] = np.ones(D), np.zeros(D)
        for name in ("q", "k", "v"):
            w[p + f"attn.W{name}"] = lin(D, D)
            w[p + f"attn.b{name}"] = np.zeros(D)
        w[p + "attn.Wo"] = lin(D, D, 0.5)
        w[p + "attn.bo"] = np.zeros(D)
        w[p + "ln2.w"], w[p + "ln2.b"] = np.ones(D), np.zeros(D)
        w[p + "ff.W1"], w[p + "ff.b1"] = lin(D, F), np.zeros(F)
        w[p + "ff.W2"], w[p + "ff.b2"] = lin(F, D, 0.5), np.zeros(D)
    return EncoderState(cfg, w)


def patchify(x, cfg: EncoderConfig) -> np.ndarray:
    """Sliding windows of length patch_len and step stride along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    P = cfg.n_patches(T)
    idx = np.arange(P)[:, None] * cfg.stride + np.arange(cfg.patch_len)[None, :]
    return x[..., idx]


def _attention(h, t, p, cfg, P):
    B = h.shape[0]
    Hn, dh = cfg.heads, cfg.dim // cfg.heads

    def split(z):
        return z.reshape(B, P, Hn, dh).transpose(0, 2, 1, 3)
    q = split(h @ t[p + "attn.Wq"] + t[p + "attn.bq"])
    k = split(h @ t[p + "attn.Wk"] + t[p + "attn.bk"])
    v = split(h @ t[p + "attn.Wv"] + t[p + "attn.bv"])
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    if cfg.causal and P > 1:
        scores = ad.where_const(np.triu(np.ones((P, P), dtype=bool), k=1), scores, -np.inf)
    ctx = ad.softmax(scores, axis=-1) @ v
    ctx = ctx.transpose(0, 2, 1, 3).reshape(B, P, cfg.dim)
    return ctx @ t[p + "attn.Wo"] + t[p + "attn.bo"]


def forward(t: dict[str, ad.Tensor], patches: np.ndarray, cfg: EncoderConfig) -> ad.Tensor:
    """Patch embeddings (B, P, D) for patches shaped (B, P, patch_len)."""
    B, P, _ = patches.shape
    h = ad.Tensor(patches) @ t["embed.W"] + t["embed.b"]
    for i in range(cfg.blocks):
        p = f"block{i}."
        h = h + _attention(ad.layer_norm(h, t[p + "ln1.w"], t[p + "ln1.b"]), t, p, cfg, P)
        f = ad.layer_norm(h, t[p + "ln2.w"], t[p + "ln2.b"])
        f = ad.gelu(f @ t[p + "ff.W1"] + t[p + "ff.b1"]) @ t[p + "ff.W2"] + t[p + "ff.b2"]
        h = h + f
        if not np.all(np.isfinite(h.data)):
            raise NumericError(f"non-finite activations after block {i}", layer=i)
    return h


def _tensors(state: EncoderState, trainable: Sequence[str] | None = ()) -> dict[str, ad.Tensor]:
    trainable = set(state.weights) if trainable is None else set(trainable)
    return {k: ad.Tensor(v, requires_grad=k in trainable) for k, v in state.weights.items()}


def encode_rows(state: EncoderState, rows) -> np.ndarray:
    """(B, T) univariate rows -> (B, P, D) embeddings."""
    rows = np.asarray(rows, dtype=np.float64)
    return forward(_tensors(state), patchify(rows, state.cfg), state.cfg).data


def encode(state: EncoderState, x, cfg: EncoderConfig | None = None) -> np.ndarray:
    """Patch-wise embeddings; variables are encoded independently.

    A 1-D series gives (P, D); an (n, T) instance gives (n, P, D).
    """
    if cfg is not None and cfg != state.cfg:
        raise ValidationError("cfg does not match the encoder state")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return encode_rows(state, x[None])[0]
    if x.ndim != 2:
        raise DimensionError("encode expects a 1-D series or an (n, T) instance")
    return encode_rows(state, x)


def pooled(state: EncoderState, rows) -> np.ndarray:
    """Mean over patches: (B, T) -> (B, D)."""
    return encode_rows(state, rows).mean(axis=1)


# --------------------------------------------------------------------------
# hierarchical contrastive loss


def _normalize(z: ad.Tensor) -> ad.Tensor:
    return z / ((z * z).sum(axis=-1, keepdims=True) + 1e-24).sqrt()


def _contrast(z: ad.Tensor, half: int, tau: float) -> ad.Tensor:
    """Mean -log softmax of the positive over all non-self candidates.

    ``z`` is (G, 2*half, D) with item i positive to item (i + half) mod 2*half.
    """
    n = 2 * half
    sim = (z @ z.swapaxes(-1, -2)) * (1.0 / tau)
    sim = ad.where_const(np.eye(n, dtype=bool), sim, -np.inf)
    logp = ad.log_softmax(sim, axis=-1)
    anchors = np.arange(n)
    return -(logp[:, anchors, (anchors + half) % n].mean())


def instance_contrastive(z1: ad.Tensor, z2: ad.Tensor, tau: float) -> ad.Tensor:
    B = z1.shape[0]
    z = _normalize(ad.concat([z1, z2], axis=0)).transpose(1, 0, 2)
    return _contrast(z, B, tau)


def temporal_contrastive(z1: ad.Tensor, z2: ad.Tensor, tau: float) -> ad.Tensor:
    P = z1.shape[1]
    z = _normalize(ad.concat([z1, z2], axis=1))
    return _contrast(z, P, tau)


def _max_pool2(z: ad.Tensor) -> ad.Tensor:
    P = z.shape[1]
    even = (P // 2) * 2
    pooled_ = ad.maximum(z[:, 0:even:2], z[:, 1:even:2])
    if P % 2:
        pooled_ = ad.concat([pooled_, z[:, P - 1:P]], axis=1)
    return pooled_


def hierarchy_levels(P: int) -> int:
    return math.ceil(math.log2(P)) + 1 if P > 1 else 1


def hierarchical_contrastive_loss(z1, z2, tau_cl: float = 0.2):
    """Instance + temporal contrast at every max-pool-by-2 scale, averaged over scales.

    Accepts tensors (returns a tensor, for training) or arrays (returns a float).
    Odd lengths keep their last position as its own pooling bin.
    """
    as_float = not isinstance(z1, ad.Tensor)
    z1, z2 = ad.as_tensor(z1), ad.as_tensor(z2)
    if z1.shape != z2.shape or z1.ndim != 3:
        raise DimensionError("z1 and z2 must both be (B, P, D)")
    if z1.shape[0] < 2:
        raise InsufficientNegativesError("need at least 2 series in the batch for negatives")
    levels = []
    while True:
        P = z1.shape[1]
        level = instance_contrastive(z1, z2, tau_cl)
        if P > 1:
            level = (level + temporal_contrastive(z1, z2, tau_cl)) * 0.5
        levels.append(level)
        if P == 1:
            break
        z1, z2 = _max_pool2(z1), _max_pool2(z2)
    loss = levels[0]
    for lv in levels[1:]:
        loss = loss + lv
    loss = loss * (1.0 / len(levels))
    return loss.item() if as_float else loss


def contrastive_step_loss(state: EncoderState, view1: np.ndarray, view2: np.ndarray, tau_cl: float,
                          trainable: Sequence[str] | None = None):
    """Loss tensor and leaf tensors for two (B, T) view stacks."""
    t = _tensors(state, trainable)
    cfg = state.cfg
    z1 = forward(t, patchify(view1, cfg), cfg)
    z2 = forward(t, patchify(view2, cfg), cfg)
    return hierarchical_contrastive_loss(z1, z2, tau_cl), t


def encoder_grads(state: EncoderState, view1, view2, tau_cl, trainable=None):
    loss, t = contrastive_step_loss(state, view1, view2, tau_cl, trainable)
    loss.backward()
    return loss.item(), {k: v.grad for k, v in t.items() if v.grad is not None}


# --------------------------------------------------------------------------
# alternating pre-training


@dataclass
class PretrainTraces:
    aug: list[dict] = field(default_factory=list)
    cl: list[dict] = field(default_factory=list)

    def updates_per_batch(self) -> dict[tuple[int, int], tuple[int, int]]:
        counts: dict[tuple[int, int], list[int]] = {}
        for row in self.aug:
            counts.setdefault((row["epoch"], row["batch"]), [0, 0])[0] += 1
        for row in self.cl:
            counts.setdefault((row["epoch"], row["batch"]), [0, 0])[1] += 1
        return {k: tuple(v) for k, v in counts.items()}


def draw_view_pair(aug: AugmentParams, rows: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    v1 = np.stack([apply_scalable(aug, r, derive_seed(seed, i, 0)) for i, r in enumerate(rows)])
    v2 = np.stack([apply_scalable(aug, r, derive_seed(seed, i, 1)) for i, r in enumerate(rows)])
    return v1, v2


def pretrain(aug_params: AugmentParams, enc_state: EncoderState, batches: Sequence[Batch],
             pcfg: PretrainConfig, acfg: AugLossConfig, seed: int = 0,
             weight_decay: float = 0.0):
    """Per batch: E1 augmentation updates, then E2 encoder updates on fresh views."""
    aug = aug_params.copy()
    enc = enc_state.copy()
    aug_opt = AdamW(aug.arrays(), AdamWConfig(lr=pcfg.eta1, weight_decay=weight_decay))
    enc_opt = AdamW(enc.weights, AdamWConfig(lr=pcfg.eta2, weight_decay=weight_decay))
    traces = PretrainTraces()
    for epoch in range(pcfg.outer_epochs):
        for bi, batch in enumerate(batches):
            for e in range(pcfg.E1):
                rep = batch_aug_loss(aug, batch, acfg, derive_seed(seed, epoch, bi, e, 0))
                if not math.isfinite(rep.total):
                    raise NumericError("augmentation loss diverged", step=(epoch, bi, e))
                aug_opt.step(rep.grads)
                traces.aug.append({"epoch": epoch, "batch": batch.batch_index, "iter": e,
                                   "l_p": rep.l_p, "l_d": rep.l_d, "total": rep.total})
            rows, _ = flatten_variables(batch.instances)
            for e in range(pcfg.E2):
                v1, v2 = draw_view_pair(aug, rows, derive_seed(seed, epoch, bi, e, 1))
                loss, grads = encoder_grads(enc, v1, v2, pcfg.tau_cl)
                if not math.isfinite(loss) or any(not np.all(np.isfinite(g)) for g in grads.values()):
                    raise NumericError("contrastive loss diverged", step=(epoch, bi, e))
                enc_opt.step(grads)
                traces.cl.append({"epoch": epoch, "batch": batch.batch_index, "iter": e, "l_cl": loss})
        log.info("pretrain epoch %d done", epoch)
    return aug, enc, traces


def config_dict(cfg: EncoderConfig) -> dict:
    return asdict(cfg)

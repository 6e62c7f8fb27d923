"""Bias estimation, the bias vs spectral-distance experiment, fine-tuning, benchmarks."""
from __future__ import annotations

import csv
import logging
import math
import timeit
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.stats import spearmanr

from . import autodiff as ad
from .augment import (AugmentParams, apply_classical, apply_nonscalable, apply_scalable,
                      derive_seed, jitter, permute, scale, segment_permutation)
from .encoder import (EncoderConfig, EncoderState, _tensors, encoder_grads, forward, init_encoder,
                      patchify, pooled)
from .errors import ConfigError, NumericError, ValidationError
from .optim import AdamW, AdamWConfig
from .spectral import spectral_distance
from .synthetic import two_class_sinusoids

log = logging.getLogger(__name__)

Sampler = Callable[[np.ndarray, int, np.random.Generator], np.ndarray]


# --------------------------------------------------------------------------
# bias


def estimate_bias(encoder: Callable[[np.ndarray], np.ndarray], aug_sampler: Sampler, x,
                  K_bias: int = 500, seed: int = 0) -> float:
    """|| mean_k f(view_k) - f(x) ||_2 over K_bias sampled views.

    ``encoder`` maps a (B, T) stack to (B, D) outputs; ``aug_sampler(x, k, rng)``
    returns k views of x stacked as (k, T).
    """
    if K_bias < 2:
        raise ConfigError("K_bias must be >= 2")
    x = np.asarray(x, dtype=np.float64)
    views = aug_sampler(x, K_bias, np.random.default_rng(seed))
    fx = encoder(x[None])[0]
    fv = encoder(views)
    return float(np.linalg.norm(fv.mean(axis=0) - fx))


@dataclass(frozen=True)
class VariantSpec:
    """One classical augmentation setting: jitter (sigma), permutation (segments) or scaling (a)."""

    kind: str
    value: float

    @property
    def name(self) -> str:
        v = int(self.value) if self.kind == "permutation" else self.value
        return f"{self.kind}:{v}"


def make_sampler(spec: VariantSpec) -> Sampler:
    if spec.kind == "jitter":
        def sample(x, k, rng):
            return np.stack([apply_classical(jitter(spec.value, seed=int(s)), x)
                             for s in rng.integers(0, 2**62, size=k)])
    elif spec.kind == "permutation":
        n_seg = int(spec.value)

        def sample(x, k, rng):
            return np.stack([apply_classical(permute(segment_permutation(x.shape[-1], n_seg, rng)), x)
                             for _ in range(k)])
    elif spec.kind == "scaling":
        def sample(x, k, rng):
            return np.repeat(apply_classical(scale(spec.value), x)[None], k, axis=0)
    else:
        raise ConfigError(f"unknown variant kind {spec.kind!r}")
    return sample


def unified_sampler(params: AugmentParams) -> Sampler:
    def sample(x, k, rng):
        return np.stack([apply_scalable(params, x, int(s)) for s in rng.integers(0, 2**62, size=k)])
    return sample


DEFAULT_VARIANTS = (
    VariantSpec("jitter", 0.05), VariantSpec("jitter", 0.2), VariantSpec("jitter", 0.8),
    VariantSpec("permutation", 2), VariantSpec("permutation", 8),
    VariantSpec("scaling", 1.1), VariantSpec("scaling", 2.0),
)


@dataclass
class VariantRecord:
    name: str
    avg_spectral_distance: float
    avg_bias: float
    downstream_accuracy: float


@dataclass
class BiasReport:
    records: list[VariantRecord]
    correlation: float
    excluded: list[str] = field(default_factory=list)

    def to_rows(self) -> list[list]:
        rows = [["variant", "avg_spectral_distance", "avg_bias", "downstream_accuracy"]]
        rows += [[r.name, repr(r.avg_spectral_distance), repr(r.avg_bias), repr(r.downstream_accuracy)]
                 for r in self.records]
        rows.append(["spearman", repr(self.correlation)])
        return rows


@dataclass(frozen=True)
class BiasExperimentSpec:
    """Synthetic two-class sinusoid data plus the per-variant training budget."""

    n_train: int = 64
    n_test: int = 64
    n_eval: int = 16
    T: int = 128
    freqs: tuple[float, float] = (3.0, 7.0)
    noise: float = 0.3
    K_bias: int = 500
    train_steps: int = 100
    batch_size: int = 16
    lr: float = 1e-3
    tau_cl: float = 0.2
    encoder: EncoderConfig = EncoderConfig(patch_len=16, stride=8, dim=16, blocks=1, heads=2)


def train_contrastive(state: EncoderState, X: np.ndarray, sampler: Sampler, steps: int,
                      batch_size: int, lr: float, tau_cl: float, seed: int) -> tuple[EncoderState, list[float]]:
    """Plain contrastive training of an encoder with a fixed augmentation sampler."""
    state = state.copy()
    opt = AdamW(state.weights, AdamWConfig(lr=lr))
    rng = np.random.default_rng(seed)
    losses = []
    for step in range(steps):
        idx = rng.choice(len(X), size=min(batch_size, len(X)), replace=False)
        v1 = np.stack([sampler(X[i], 1, rng)[0] for i in idx])
        v2 = np.stack([sampler(X[i], 1, rng)[0] for i in idx])
        loss, grads = encoder_grads(state, v1, v2, tau_cl)
        if not math.isfinite(loss) or any(not np.all(np.isfinite(g)) for g in grads.values()):
            raise NumericError("contrastive training diverged", step=step)
        opt.step(grads)
        losses.append(loss)
    return state, losses


def bias_sd_experiment(variants: Sequence[VariantSpec] = DEFAULT_VARIANTS,
                       spec: BiasExperimentSpec = BiasExperimentSpec(), seed: int = 0) -> BiasReport:
    if len(variants) < 2:
        raise ConfigError("correlation needs at least two variants")
    X_tr, y_tr, X_te, y_te = two_class_sinusoids(spec.n_train, spec.n_test, spec.T, spec.freqs,
                                                 spec.noise, seed)
    X_eval = X_tr[:spec.n_eval]
    records, excluded = [], []
    for vi, variant in enumerate(variants):
        sampler = make_sampler(variant)
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                state, _ = train_contrastive(init_encoder(spec.encoder, seed), X_tr, sampler,
                                             spec.train_steps, spec.batch_size, spec.lr,
                                             spec.tau_cl, seed + 1)
        except NumericError as exc:
            log.warning("variant %s diverged: %s", variant.name, exc)
            excluded.append(variant.name)
            continue
        f = lambda rows: pooled(state, rows)  # noqa: E731
        sds, biases = [], []
        with np.errstate(over="ignore", invalid="ignore"):
            for j, x in enumerate(X_eval):
                rng_seed = derive_seed(seed, vi, j)
                views = sampler(x, spec.K_bias, np.random.default_rng(rng_seed))
                sds.append(float(np.mean(spectral_distance(views, x))))
                biases.append(estimate_bias(f, sampler, x, spec.K_bias, rng_seed))
        if not (np.all(np.isfinite(sds)) and np.all(np.isfinite(biases))):
            log.warning("variant %s produced non-finite statistics", variant.name)
            excluded.append(variant.name)
            continue
        acc = finetune(state, TaskSpec("classification", labels=(0, 1)),
                       (X_tr, y_tr, X_te, y_te), "P-FT").metrics["accuracy"]
        records.append(VariantRecord(variant.name, float(np.mean(sds)), float(np.mean(biases)), acc))
    if len(records) < 2:
        raise ConfigError("fewer than two variants trained successfully")
    rho = spearmanr([r.avg_spectral_distance for r in records], [r.avg_bias for r in records]).statistic
    return BiasReport(records, float(rho), excluded)


# --------------------------------------------------------------------------
# fine-tuning


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    lookback: int | None = None
    horizon: int | None = None
    labels: tuple = ()

    def __post_init__(self):
        if self.kind not in ("classification", "forecasting"):
            raise ValidationError(f"unknown task kind {self.kind!r}")
        if self.kind == "forecasting" and not (self.lookback and self.horizon and
                                               self.lookback >= 1 and self.horizon >= 1):
            raise ValidationError("forecasting needs lookback >= 1 and horizon >= 1")


@dataclass
class FinetuneResult:
    decoder: dict[str, np.ndarray]
    metrics: dict[str, float]
    encoder: EncoderState | None = None


def mse(y, yhat) -> float:
    d = np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64)
    return float(np.mean(d * d))


def mae(y, yhat) -> float:
    return float(np.mean(np.abs(np.asarray(y, dtype=np.float64) - np.asarray(yhat, dtype=np.float64))))


def _features_graph(t, X, cfg):
    """Mean-pooled embeddings; (N, n, T) inputs concatenate per-variable features."""
    N = X.shape[0]
    rows = X.reshape(-1, X.shape[-1])
    z = forward(t, patchify(rows, cfg), cfg).mean(axis=1)
    return z.reshape(N, -1)


def _as_3d(X):
    X = np.asarray(X, dtype=np.float64)
    return X[:, None, :] if X.ndim == 2 else X


def finetune(encoder_state: EncoderState, task: TaskSpec, data, mode: str = "P-FT",
             steps: int = 300, lr: float = 1e-2, seed: int = 0) -> FinetuneResult:
    """Linear decoder on mean-pooled embeddings.

    ``data`` is ``(X_train, Y_train, X_test, Y_test)``; X is (N, T) or (N, n, T).
    P-FT keeps the encoder frozen (forecasting then uses a closed-form least
    squares fit); F-FT also updates the encoder's layer-norm parameters.
    """
    if mode not in ("P-FT", "F-FT"):
        raise ValidationError("mode must be 'P-FT' or 'F-FT'")
    X_tr, Y_tr, X_te, Y_te = data
    X_tr, X_te = _as_3d(X_tr), _as_3d(X_te)
    Y_tr, Y_te = np.asarray(Y_tr), np.asarray(Y_te)
    if len(X_tr) != len(Y_tr) or len(X_te) != len(Y_te):
        raise ValidationError("label and instance counts differ")
    cfg = encoder_state.cfg
    state = encoder_state.copy()
    frozen = _tensors(state)
    F_tr = _features_graph(frozen, X_tr, cfg).data
    mu, sd = F_tr.mean(axis=0), F_tr.std(axis=0) + 1e-8

    if task.kind == "classification":
        classes = np.array(sorted(set(task.labels) | set(np.unique(Y_tr).tolist())))
        lookup = {c: i for i, c in enumerate(classes.tolist())}
        yi = np.array([lookup[v] for v in Y_tr.tolist()])
        dec = {"W": np.zeros((F_tr.shape[1], len(classes))), "b": np.zeros(len(classes))}
    else:
        Y_tr = Y_tr.reshape(len(Y_tr), -1)
        A = np.hstack([(F_tr - mu) / sd, np.ones((len(F_tr), 1))])
        sol, *_ = np.linalg.lstsq(A, Y_tr, rcond=None)
        dec = {"W": sol[:-1], "b": sol[-1]}

    ln_names = state.layer_norm_names() if mode == "F-FT" else []
    if task.kind == "classification" or ln_names:
        names = list(dec) + ln_names
        store = {**dec, **{k: state.weights[k] for k in ln_names}}
        opt = AdamW(store, AdamWConfig(lr=lr), names=names)
        onehot = None
        if task.kind == "classification":
            onehot = np.eye(len(classes))[yi]
        for _ in range(steps):
            t = _tensors(state, ln_names)
            feats = _features_graph(t, X_tr, cfg) if ln_names else ad.Tensor(F_tr)
            feats = (feats - mu) * (1.0 / sd)
            W = ad.Tensor(store["W"], requires_grad=True)
            b = ad.Tensor(store["b"], requires_grad=True)
            out = feats @ W + b
            if task.kind == "classification":
                loss = -(ad.log_softmax(out, axis=-1) * onehot).sum(axis=-1).mean() \
                    + (W * W).sum() * 1e-4
            else:
                diff = out - Y_tr
                loss = (diff * diff).mean()
            loss.backward()
            grads = {"W": W.grad, "b": b.grad}
            grads.update({k: t[k].grad for k in ln_names})
            opt.step(grads)

    F_te = _features_graph(_tensors(state), X_te, cfg).data
    pred = ((F_te - mu) / sd) @ dec["W"] + dec["b"]
    dec = {**dec, "feature_mean": mu, "feature_scale": sd}
    if task.kind == "classification":
        yhat = classes[np.argmax(pred, axis=1)]
        metrics = {"accuracy": float(np.mean(yhat == Y_te))}
    else:
        Y_te = Y_te.reshape(len(Y_te), -1)
        metrics = {"mse": mse(Y_te, pred), "mae": mae(Y_te, pred)}
    return FinetuneResult(dec, metrics, state if ln_names else None)


# --------------------------------------------------------------------------
# runtime scaling


def _calibrate(timer: timeit.Timer, min_block: float) -> int:
    number = 1
    while timer.timeit(number) < min_block:
        number *= 2
    return number


def _median_times(fns, reps, min_block=0.05) -> list[float]:
    """Median per-call time of each callable over ``reps`` blocks lasting >= ``min_block`` s.

    Blocks are interleaved round-robin across the callables so that a slow
    stretch of wall-clock time hits every length instead of just one.
    """
    timers = [timeit.Timer(fn) for fn in fns]
    numbers = [_calibrate(t, min_block) for t in timers]
    samples = [[] for _ in timers]
    for _ in range(reps):
        for t, n, out in zip(timers, numbers, samples):
            out.append(t.timeit(n) / n)
    return [float(np.median(s)) for s in samples]


def bench_scaling(K: int = 100, lengths: Sequence[int] = (1000, 2000, 4000), reps: int = 5,
                  seed: int = 0, dense: bool = True) -> list[dict]:
    """Median wall time of the scalable operation and of the dense length-T operation."""
    lengths = list(lengths)
    if lengths != sorted(lengths):
        raise ConfigError("lengths must be sorted ascending")
    rng = np.random.default_rng(seed)
    params = AugmentParams.initial(K)
    xs = [rng.standard_normal(T) for T in lengths]
    fns = [lambda x=x: apply_scalable(params, x, seed) for x in xs]
    rows = [{"method": "scalable", "T": T, "median_s": m}
            for T, m in zip(lengths, _median_times(fns, reps))]
    if dense:
        bigs = [AugmentParams.initial(T) for T in lengths]
        fns = [lambda p=p, x=x: apply_nonscalable(p, x, seed) for p, x in zip(bigs, xs)]
        rows += [{"method": "nonscalable", "T": T, "median_s": m}
                 for T, m in zip(lengths, _median_times(fns, reps))]
    return rows


def write_rows(path, rows: Sequence[Sequence]) -> None:
    with Path(path).open("w", newline="") as fh:
        csv.writer(fh).writerows(rows)


def bench_rows(rows: Sequence[dict]) -> list[list]:
    return [["method", "T", "median_s"]] + [[r["method"], r["T"], repr(r["median_s"])] for r in rows]


def scatter_svg(report: BiasReport, path) -> None:
    """Optional figure: avg spectral distance vs avg bias, one point per variant."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4, 3))
    xs = [r.avg_spectral_distance for r in report.records]
    ys = [r.avg_bias for r in report.records]
    ax.scatter(xs, ys)
    for r in report.records:
        ax.annotate(r.name, (r.avg_spectral_distance, r.avg_bias), fontsize=6)
    ax.set_xscale("log")
    ax.set_xlabel("average spectral distance")
    ax.set_ylabel("average bias")
    ax.set_title(f"Spearman = {report.correlation:.3f}")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)

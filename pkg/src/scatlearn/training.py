"""Supervised training of (scattering -> batch norm -> linear head).

The optimization protocol is SGD with momentum 0.9 under a one-cycle
learning-rate schedule, cross-entropy loss, weight decay on the linear head
only, and two learning-rate groups (scattering parameters vs. head and batch
norm affine).  Training is full batch unless a batch size is given.  With a
fixed (non-learnable) scattering stage, features are computed once up front
and only the head is trained, which is numerically identical to running the
full loop with filter gradients masked.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .autograd import param_chain, scattering_backward
from .data import Dataset, subsample_dataset
from .filterbank import FilterBank, FilterbankSpec
from .scattering import ScatteringOutput, forward


class DegenerateBatch(ValueError):
    """Batch statistics were requested for fewer than two samples."""


class NumericalDivergence(RuntimeError):
    """Loss became non-finite during training."""


def one_cycle_lr(step: int, total_steps: int, max_lr: float,
                 warmup_frac: float = 0.3, div: float = 25.0,
                 final_div: float = 1e4) -> float:
    """One-cycle schedule: linear warmup from max_lr/div to max_lr over the
    first 30% of steps, then linear anneal to max_lr/(div*final_div)."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    peak = int(round(warmup_frac * total_steps))
    start = max_lr / div
    final = max_lr / (div * final_div)
    if step <= peak:
        if peak == 0:
            return max_lr
        return start + (max_lr - start) * step / peak
    span = total_steps - 1 - peak
    if span <= 0:
        return max_lr
    return max_lr + (final - max_lr) * (step - peak) / span


@dataclass
class BatchNormState:
    """Per-channel batch normalization with learnable affine parameters."""

    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def create(cls, channels: int) -> "BatchNormState":
        return cls(scale=np.ones(channels), shift=np.zeros(channels),
                   running_mean=np.zeros(channels), running_var=np.ones(channels))


def batchnorm_forward(x: np.ndarray, state: BatchNormState, training: bool
                      ) -> tuple[np.ndarray, dict | None]:
    """Standardize (B, C, m, m) per channel over batch and spatial dims,
    then apply the affine transform.  Returns (output, cache-for-backward);
    the cache is None in inference mode."""
    axes = (0, 2, 3)
    if training:
        if x.shape[0] < 2:
            raise DegenerateBatch(f"need batch size >= 2, got {x.shape[0]}")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        state.running_mean = ((1 - state.momentum) * state.running_mean
                              + state.momentum * mean)
        state.running_var = ((1 - state.momentum) * state.running_var
                             + state.momentum * var)
    else:
        mean, var = state.running_mean, state.running_var
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x - mean[:, None, None]) * inv[:, None, None]
    out = state.scale[:, None, None] * xhat + state.shift[:, None, None]
    cache = {"xhat": xhat, "inv": inv, "scale": state.scale} if training else None
    return out, cache


def batchnorm_backward(cache: dict, gbar: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Backward of training-mode batch norm; returns (dx, dscale, dshift)."""
    xhat, inv, scale = cache["xhat"], cache["inv"], cache["scale"]
    axes = (0, 2, 3)
    m = xhat.shape[0] * xhat.shape[2] * xhat.shape[3]
    dscale = (gbar * xhat).sum(axis=axes)
    dshift = gbar.sum(axis=axes)
    g = gbar * scale[:, None, None]
    dx = inv[:, None, None] * (
        g - g.mean(axis=axes)[:, None, None]
        - xhat * (g * xhat).sum(axis=axes)[:, None, None] / m)
    return dx, dscale, dshift


def softmax_xent(logits: np.ndarray, labels: np.ndarray
                 ) -> tuple[float, np.ndarray]:
    """Mean cross-entropy with log-sum-exp stabilization.

    Returns (loss, dloss/dlogits) with the gradient already scaled by 1/B.
    """
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - logz
    b = logits.shape[0]
    loss = -float(logp[np.arange(b), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(b), labels] -= 1.0
    return loss, grad / b


def sgd_momentum_step(params: np.ndarray, grads: np.ndarray,
                      velocity: np.ndarray, lr: float, momentum: float = 0.9,
                      weight_decay: float = 0.0,
                      wd_mask: np.ndarray | None = None,
                      clamp_mask: np.ndarray | None = None) -> None:
    """In-place SGD step: v <- momentum*v + g (+ wd*p where masked);
    p <- p - lr*v.  Entries under ``clamp_mask`` are clamped to >= 1e-6
    after the step."""
    if params.shape != grads.shape or params.shape != velocity.shape:
        raise ValueError("params, grads and velocity must share a shape")
    g = grads
    if weight_decay:
        decay = weight_decay * params
        if wd_mask is not None:
            decay = decay * wd_mask
        g = g + decay
    velocity *= momentum
    velocity += g
    params -= lr * velocity
    if clamp_mask is not None and clamp_mask.any():
        np.maximum(params, 1e-6, where=clamp_mask, out=params)


@dataclass
class LinearHead:
    weight: np.ndarray  # (classes, features)
    bias: np.ndarray    # (classes,)

    @classmethod
    def create(cls, classes: int, features: int, seed: int) -> "LinearHead":
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                           spawn_key=(303,)))
        return cls(weight=0.01 * rng.standard_normal((classes, features)),
                   bias=np.zeros(classes))


@dataclass
class TrainConfig:
    epochs: int
    J: int = 2
    L: int = 4
    batch_size: int | None = None       # None = full batch
    max_lr_scattering: float = 0.1
    max_lr_head: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 5e-4          # head only; coefficient unverified
    seed: int = 0
    subsample_size: int | None = None
    parameterization: str = "canonical"
    init: str = "tight_frame"
    learnable: bool = True
    eval_every: int = 0                 # 0 = evaluate test set at the end only
    workers: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        for name in ("max_lr_scattering", "max_lr_head", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class RunLog:
    """Header plus one record per epoch, serialized as JSON lines."""

    header: dict
    records: list[dict] = field(default_factory=list)

    def to_jsonl(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(json.dumps({"header": self.header}, sort_keys=True) + "\n")
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

    @classmethod
    def from_jsonl(cls, path) -> "RunLog":
        with open(path) as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        return cls(header=lines[0]["header"], records=lines[1:])


@dataclass
class ScatteringClassifier:
    bank: FilterBank
    bn: BatchNormState
    head: LinearHead
    learnable: bool
    in_channels: int = 1
    workers: int = 1

    def features(self, images: np.ndarray, grad_mode: bool = False):
        """Scattering features (B, c*C, m, m); color channels are folded into
        the batch and their features concatenated channel-wise."""
        x = np.asarray(images, dtype=float)
        if x.ndim == 3:
            x = x[:, None]
        b, c = x.shape[:2]
        out, tape = forward(x.reshape(b * c, *x.shape[2:]), self.bank,
                            grad_mode=grad_mode, workers=self.workers)
        stacked = out.stack()
        m = stacked.shape[-1]
        return stacked.reshape(b, c * stacked.shape[1], m, m), out, tape

    def logits(self, images: np.ndarray, training: bool = False):
        feats, _, _ = self.features(images)
        y, _ = batchnorm_forward(feats, self.bn, training=training)
        return y.reshape(len(feats), -1) @ self.head.weight.T + self.head.bias

    def accuracy(self, ds: Dataset) -> float:
        pred = np.argmax(self.logits(ds.images, training=False), axis=1)
        return float((pred == ds.labels).mean())


def _params_snapshot(bank: FilterBank):
    if bank.spec.parameterization == "pixelwise":
        return None
    return [[p.sigma, p.theta, p.xi, p.gamma] for p in bank.params]


def _head_vector(model: ScatteringClassifier) -> np.ndarray:
    return np.concatenate([model.head.weight.ravel(), model.head.bias,
                           model.bn.scale, model.bn.shift])


def _set_head_vector(model: ScatteringClassifier, vec: np.ndarray) -> None:
    w = model.head.weight
    nw, nb = w.size, model.head.bias.size
    nc = model.bn.scale.size
    model.head.weight = vec[:nw].reshape(w.shape)
    model.head.bias = vec[nw:nw + nb]
    model.bn.scale = vec[nw + nb:nw + nb + nc]
    model.bn.shift = vec[nw + nb + nc:]


def _head_wd_mask(model: ScatteringClassifier) -> np.ndarray:
    # weight decay applies to the linear model only, not batch-norm affine
    mask = np.zeros(_head_vector(model).size, dtype=bool)
    mask[:model.head.weight.size + model.head.bias.size] = True
    return mask


def _head_step(model, feats, labels, lr, cfg, velocity):
    y, cache = batchnorm_forward(feats, model.bn, training=True)
    flat = y.reshape(len(feats), -1)
    logits = flat @ model.head.weight.T + model.head.bias
    loss, dlogits = softmax_xent(logits, labels)
    if not np.isfinite(loss):
        raise NumericalDivergence(f"loss = {loss!r}")
    dweight = dlogits.T @ flat
    dbias = dlogits.sum(axis=0)
    dflat = dlogits @ model.head.weight
    dfeats, dscale, dshift = batchnorm_backward(cache, dflat.reshape(y.shape))
    hvec = _head_vector(model)
    hgrad = np.concatenate([dweight.ravel(), dbias, dscale, dshift])
    sgd_momentum_step(hvec, hgrad, velocity, lr, cfg.momentum,
                      cfg.weight_decay, wd_mask=_head_wd_mask(model))
    _set_head_vector(model, hvec)
    acc = float((np.argmax(logits, axis=1) == labels).mean())
    return loss, acc, dfeats


def _upstream_output(dS: np.ndarray, template: ScatteringOutput) -> ScatteringOutput:
    c0 = template.order0.shape[1]
    c1 = template.order1.shape[1]
    return ScatteringOutput(order0=dS[:, :c0], order1=dS[:, c0:c0 + c1],
                            order2=dS[:, c0 + c1:], paths=template.paths,
                            J=template.J, L=template.L)


def train(ds: Dataset, cfg: TrainConfig, test_ds: Dataset | None = None
          ) -> tuple[ScatteringClassifier, RunLog]:
    """Full training loop; returns the trained model and its RunLog.

    The RunLog holds one record per epoch with learning rates, training
    loss/accuracy, the filter-parameter snapshot, and (at the end, or every
    ``eval_every`` epochs) test accuracy.
    """
    if cfg.subsample_size is not None:
        ds = subsample_dataset(ds, cfg.subsample_size, cfg.seed)
    x = np.asarray(ds.images, dtype=float)
    in_channels = 1 if x.ndim == 3 else x.shape[1]
    n = x.shape[-1]
    spec = FilterbankSpec(J=cfg.J, L=cfg.L, n=n,
                          parameterization=cfg.parameterization,
                          init=cfg.init, seed=cfg.seed)
    bank = FilterBank(spec).realize()
    out0, _ = forward(x[:1].reshape(in_channels, n, n), bank, workers=cfg.workers)
    channels = in_channels * out0.n_channels
    feat_dim = channels * out0.order0.shape[-1] ** 2
    model = ScatteringClassifier(
        bank=bank, bn=BatchNormState.create(channels),
        head=LinearHead.create(ds.n_classes, feat_dim, cfg.seed),
        learnable=cfg.learnable, in_channels=in_channels, workers=cfg.workers)

    runlog = RunLog(header={
        "J": cfg.J, "L": cfg.L, "n": n, "classes": ds.n_classes,
        "parameterization": cfg.parameterization, "init": cfg.init,
        "seed": cfg.seed, "epochs": cfg.epochs, "batch_size": cfg.batch_size,
        "max_lr_scattering": cfg.max_lr_scattering,
        "max_lr_head": cfg.max_lr_head, "momentum": cfg.momentum,
        "weight_decay": cfg.weight_decay, "learnable": cfg.learnable,
        "train_size": len(ds), "provenance": ds.provenance,
        "color_policy": "per-channel scattering, channels folded into batch",
    })

    batch = len(ds) if cfg.batch_size is None else min(cfg.batch_size, len(ds))
    steps_per_epoch = (len(ds) + batch - 1) // batch
    total_steps = cfg.epochs * steps_per_epoch
    shuffle_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=cfg.seed, spawn_key=(404,)))

    head_vel = np.zeros(_head_vector(model).size)
    scat_vel = np.zeros(bank.param_vector().size)
    clamp = bank.clamp_mask()

    fixed_feats = None
    if not cfg.learnable:
        fixed_feats, _, _ = model.features(x)

    step = 0
    for epoch in range(cfg.epochs):
        order = (np.arange(len(ds)) if batch == len(ds)
                 else shuffle_rng.permutation(len(ds)))
        losses, accs = [], []
        lr_s = lr_h = 0.0
        for start in range(0, len(ds), batch):
            idx = order[start:start + batch]
            labels = ds.labels[idx]
            lr_s = one_cycle_lr(step, total_steps, cfg.max_lr_scattering)
            lr_h = one_cycle_lr(step, total_steps, cfg.max_lr_head)
            if cfg.learnable:
                bank.ensure_realized()
                feats, template, tape = model.features(x[idx], grad_mode=True)
                loss, acc, dfeats = _head_step(model, feats, labels, lr_h,
                                               cfg, head_vel)
                b2 = template.order0.shape[0]
                dS = dfeats.reshape(b2, -1, *dfeats.shape[-2:])
                psi_bar, _ = scattering_backward(
                    tape, _upstream_output(dS, template),
                    need_input_grad=False, workers=cfg.workers)
                gset = param_chain(psi_bar, bank, workers=cfg.workers)
                pvec = bank.param_vector()
                sgd_momentum_step(pvec, gset.vector(), scat_vel, lr_s,
                                  cfg.momentum, clamp_mask=clamp)
                bank.set_param_vector(pvec)
            else:
                loss, acc, _ = _head_step(model, fixed_feats[idx], labels,
                                          lr_h, cfg, head_vel)
            losses.append(loss)
            accs.append(acc)
            step += 1
        record = {
            "epoch": epoch,
            "lr": lr_s if cfg.learnable else lr_h,
            "lr_head": lr_h,
            "train_loss": float(np.mean(losses)),
            "train_acc": float(np.mean(accs)),
            "params": _params_snapshot(bank),
        }
        last = epoch == cfg.epochs - 1
        if test_ds is not None and (last or (cfg.eval_every
                                             and (epoch + 1) % cfg.eval_every == 0)):
            record["test_acc"] = model.accuracy(test_ds)
        runlog.records.append(record)
    return model, runlog


def perturb_and_reoptimize(model: ScatteringClassifier, ds: Dataset,
                           param_index: int, delta: float, steps: int,
                           max_lr: float = 0.1) -> dict:
    """Perturb one scattering scalar, freeze everything else, and let the
    optimizer pull it back.  Returns the recovery trajectory and the final
    distance to the pre-perturbation value."""
    bank = model.bank
    vec = bank.param_vector()
    pre = float(vec[param_index])
    vec[param_index] += delta
    bank.set_param_vector(vec)
    clamp = bank.clamp_mask()
    velocity = np.zeros_like(vec)
    x = np.asarray(ds.images, dtype=float)
    trajectory, losses = [], []
    for step in range(steps):
        lr = one_cycle_lr(step, steps, max_lr)
        bank.ensure_realized()
        feats, template, tape = model.features(x, grad_mode=True)
        y, cache = batchnorm_forward(feats, model.bn, training=True)
        flat = y.reshape(len(feats), -1)
        logits = flat @ model.head.weight.T + model.head.bias
        loss, dlogits = softmax_xent(logits, ds.labels)
        if not np.isfinite(loss):
            raise NumericalDivergence(f"loss = {loss!r}")
        dflat = dlogits @ model.head.weight
        dfeats, _, _ = batchnorm_backward(cache, dflat.reshape(y.shape))
        dS = dfeats.reshape(template.order0.shape[0], -1, *dfeats.shape[-2:])
        psi_bar, _ = scattering_backward(tape, _upstream_output(dS, template),
                                         need_input_grad=False)
        grad = param_chain(psi_bar, bank).vector()
        masked = np.zeros_like(grad)
        masked[param_index] = grad[param_index]
        pvec = bank.param_vector()
        sgd_momentum_step(pvec, masked, velocity, lr, clamp_mask=clamp)
        bank.set_param_vector(pvec)
        trajectory.append(float(pvec[param_index]))
        losses.append(loss)
    final = trajectory[-1] if trajectory else pre + delta
    return {
        "param_index": param_index,
        "pre_value": pre,
        "perturbed_value": pre + delta,
        "final_value": final,
        "final_distance": abs(final - pre),
        "trajectory": trajectory,
        "losses": losses,
    }

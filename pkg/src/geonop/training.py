"""Loss, Adam optimizer, learning-rate schedules, the training loop, and
checkpointing for operator models.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import autodiff as ad
from . import gnp as gnp_mod
from .autodiff import Tensor
from .storage import Container

__all__ = ["Schedule", "TrainConfig", "Sample", "Metrics", "Adam",
           "TrainingDiverged", "l2_loss", "lr_at", "relative_l2", "train",
           "evaluate", "save_checkpoint", "load_checkpoint", "Normalizer"]


class TrainingDiverged(RuntimeError):
    """Loss or gradient became non-finite."""


@dataclass(frozen=True)
class Schedule:
    """Learning-rate schedule: 'halve_every' or 'cosine' (with restarts)."""

    kind: str = "halve_every"
    period: int = 100
    lr_min: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("halve_every", "cosine", "constant"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.period < 1:
            raise ValueError("schedule period must be >= 1")


def lr_at(lr0, schedule, epoch):
    """Closed-form learning rate at an integer epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if schedule.kind == "constant":
        return lr0
    if schedule.kind == "halve_every":
        return lr0 * 2.0 ** (-(epoch // schedule.period))
    frac = (epoch % schedule.period) / schedule.period
    return schedule.lr_min + (lr0 - schedule.lr_min) * (
        1.0 + math.cos(math.pi * frac)) / 2.0


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 1
    lr0: float = 1e-4
    schedule: Schedule = field(default_factory=Schedule)
    seed: int = 0
    runs: int = 1
    clip_norm: float = 10.0
    normalize: bool = True
    eval_every: int = 0  # 0: only at the end
    checkpoint_every: int = 0  # 0: only at the end

    def to_dict(self):
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("schedule"), dict):
            d["schedule"] = Schedule(**d["schedule"])
        return cls(**d)


@dataclass
class Sample:
    """One training item: a point cloud with node features and targets."""

    points: np.ndarray
    features: np.ndarray
    target: np.ndarray
    cloud_id: int = 0  # samples sharing a cloud share its radius graph


@dataclass
class Metrics:
    run_seed: int
    epochs: list = field(default_factory=list)
    final: dict = field(default_factory=dict)
    clip_events: int = 0

    def to_json(self):
        return json.dumps({"run_seed": self.run_seed, "epochs": self.epochs,
                           "final": self.final,
                           "clip_events": self.clip_events}, indent=1)


@dataclass
class Normalizer:
    """Per-channel affine normalization fit on the training split."""

    feat_mean: np.ndarray
    feat_std: np.ndarray
    target_mean: np.ndarray
    target_std: np.ndarray

    @classmethod
    def fit(cls, samples):
        feats = np.concatenate([s.features for s in samples], axis=0)
        targs = np.concatenate([s.target for s in samples], axis=0)

        def stats(x):
            mean = x.mean(axis=0)
            std = x.std(axis=0)
            return mean, np.where(std < 1e-12, 1.0, std)

        fm, fs = stats(feats)
        tm, ts = stats(targs)
        return cls(fm, fs, tm, ts)

    @classmethod
    def identity(cls, d_in, d_out):
        return cls(np.zeros(d_in), np.ones(d_in), np.zeros(d_out),
                   np.ones(d_out))

    def encode_features(self, x):
        return (x - self.feat_mean) / self.feat_std

    def encode_target(self, y):
        return (y - self.target_mean) / self.target_std

    def decode_target(self, y):
        return y * self.target_std + self.target_mean


def l2_loss(pred, target):
    """Mean over nodes and channels of the squared difference (Tensor)."""
    if pred.shape != np.shape(target):
        raise ValueError(f"shape mismatch {pred.shape} vs {np.shape(target)}")
    diff = ad.add(pred, Tensor(-np.asarray(target)))
    count = float(np.prod(pred.shape))
    return ad.mul(ad.sum_all(ad.mul(diff, diff)), 1.0 / count)


def relative_l2(pred, target):
    """||pred - target||_2 / ||target||_2 over one sample."""
    pred = np.asarray(pred)
    target = np.asarray(target)
    return float(np.linalg.norm(pred - target) / np.linalg.norm(target))


class Adam:
    """Standard bias-corrected Adam over named parameters."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params}

    def step(self, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name, p in self.params:
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingDiverged(
                    f"non-finite gradient in {name!r} at step {self.t}")
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p.data -= lr * mhat / (np.sqrt(vhat) + self.eps)

    def state_dict(self):
        out = {"t": float(self.t)}
        for n in self.m:
            out[f"m.{n}"] = self.m[n]
            out[f"v.{n}"] = self.v[n]
        return out

    def load_state_dict(self, state):
        self.t = int(state["t"])
        for n in self.m:
            self.m[n] = np.array(state[f"m.{n}"]).reshape(self.m[n].shape)
            self.v[n] = np.array(state[f"v.{n}"]).reshape(self.v[n].shape)


def clip_gradients(params, max_norm):
    """Global-norm gradient clipping; returns True if clipping fired."""
    total = 0.0
    for _, p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = math.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for _, p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
        return True
    return False


def _graphs_for(samples, radius, cache=None):
    cache = {} if cache is None else cache
    for s in samples:
        if s.cloud_id not in cache:
            cache[s.cloud_id] = gnp_mod.build_graph(s.points, radius)
    return cache


def evaluate(model, samples, normalizer=None, graphs=None):
    """Mean relative L2 error over samples; never mutates parameters."""
    graphs = _graphs_for(samples, model.cfg.radius, graphs)
    norm = normalizer or Normalizer.identity(model.cfg.in_channels,
                                             model.cfg.out_channels)
    errs = []
    with ad.no_grad():
        for s in samples:
            out = model(graphs[s.cloud_id], norm.encode_features(s.features))
            errs.append(relative_l2(norm.decode_target(out.data), s.target))
    return float(np.mean(errs))


def train(model, train_samples, test_samples, cfg, checkpoint_dir=None,
          log=None, start_epoch=0, opt_state=None):
    """Seeded epoch loop: shuffle, forward, loss, backward, clip, Adam.

    Returns (model, Metrics, Normalizer).  Aborts with the last checkpoint
    retained if the loss goes non-finite.  Resuming mid-schedule picks up
    lr_at at start_epoch (the schedule is stateless in the epoch index).
    """
    if not train_samples:
        raise ValueError("training dataset is empty")
    params = model.named_parameters()
    opt = Adam(params)
    if opt_state is not None:
        opt.load_state_dict(opt_state)
    graphs = _graphs_for(train_samples, model.cfg.radius)
    norm = (Normalizer.fit(train_samples) if cfg.normalize
            else Normalizer.identity(model.cfg.in_channels,
                                     model.cfg.out_channels))
    metrics = Metrics(run_seed=cfg.seed)
    n = len(train_samples)
    feats = [norm.encode_features(s.features) for s in train_samples]
    targs = [norm.encode_target(s.target) for s in train_samples]
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.monotonic()
        lr = lr_at(cfg.lr0, cfg.schedule, epoch)
        order_rng = np.random.Generator(np.random.Philox(
            key=np.array([cfg.seed, epoch], dtype=np.uint64)))
        order = order_rng.permutation(n)
        epoch_loss = 0.0
        for i in order:
            s = train_samples[i]
            out = model(graphs[s.cloud_id], feats[i])
            loss = l2_loss(out, targs[i])
            val = loss.item()
            if not math.isfinite(val):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, sample {i}")
            loss.backward()
            if clip_gradients(params, cfg.clip_norm):
                metrics.clip_events += 1
            opt.step(lr)
            for _, p in params:
                p.zero_grad()
            epoch_loss += val
        entry = {"epoch": epoch, "loss": epoch_loss / n, "lr": lr,
                 "wall_ms": 1000.0 * (time.monotonic() - t0)}
        if cfg.eval_every and (epoch + 1) % cfg.eval_every == 0 and test_samples:
            entry["test_rel_l2"] = evaluate(model, test_samples, norm)
        metrics.epochs.append(entry)
        if log:
            log(entry)
        if (checkpoint_dir and cfg.checkpoint_every
                and (epoch + 1) % cfg.checkpoint_every == 0):
            save_checkpoint(checkpoint_dir, model, opt, norm, cfg,
                            epoch=epoch + 1)
    metrics.final = {
        "train_rel_l2": evaluate(model, train_samples, norm, graphs),
        "test_rel_l2": (evaluate(model, test_samples, norm)
                        if test_samples else None),
    }
    if checkpoint_dir:
        save_checkpoint(checkpoint_dir, model, opt, norm, cfg,
                        epoch=cfg.epochs)
    return model, metrics, norm


def save_checkpoint(directory, model, opt=None, normalizer=None, cfg=None,
                    epoch=None):
    """Bitwise round-trippable snapshot of parameters and optimizer state."""
    c = Container(meta={
        "model_config": model.cfg.to_dict(),
        "train_config": cfg.to_dict() if cfg else None,
        "epoch": epoch,
    })
    for name, p in model.named_parameters():
        c[f"param.{name}"] = p.data
    if opt is not None:
        for name, arr in opt.state_dict().items():
            c[f"adam.{name}"] = np.atleast_1d(arr)
    if normalizer is not None:
        c["norm.feat_mean"] = normalizer.feat_mean
        c["norm.feat_std"] = normalizer.feat_std
        c["norm.target_mean"] = normalizer.target_mean
        c["norm.target_std"] = normalizer.target_std
    return c.save(directory)


def load_checkpoint(directory):
    """Returns (model, optimizer_state or None, normalizer, meta)."""
    c = Container.load(directory)
    cfg = gnp_mod.GnpConfig.from_dict(c.meta["model_config"])
    model = gnp_mod.GnpModel(cfg, seed=0)
    for name, p in model.named_parameters():
        p.data = np.array(c[f"param.{name}"]).reshape(p.data.shape)
    opt_state = None
    if "adam.t" in c:
        opt_state = {}
        for name in c.names():
            if name.startswith("adam."):
                key = name[len("adam."):]
                arr = np.array(c[name])
                opt_state[key] = arr if key != "t" else float(arr[0])
    normalizer = None
    if "norm.feat_mean" in c:
        normalizer = Normalizer(
            np.array(c["norm.feat_mean"]), np.array(c["norm.feat_std"]),
            np.array(c["norm.target_mean"]), np.array(c["norm.target_std"]))
    return model, opt_state, normalizer, c.meta


def parameter_hash(model):
    """Checksum over all parameters (evaluation must not change it)."""
    from .storage import fnv1a64
    h = 0
    for name, p in model.named_parameters():
        h ^= fnv1a64(np.ascontiguousarray(p.data).astype("<f8").tobytes())
    return h

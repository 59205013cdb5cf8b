"""Shallow joint-conditioned SDF networks.

Every weight and bias of a small ReLU MLP is an affine function of the joint
angles: slab 0 is the constant term and slab a multiplies angle a. For a
fixed pose the slabs collapse to ordinary "effective" matrices, so inference
costs the same as a plain MLP.

Inputs are normalised to the joint's training box: X_n = (X - center) / (L_G/2).
An SDF network's output is scaled back by L_G/2; a boolean network's output
is used as is.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

SDF, BOOL = "sdf", "bool"


class TrainingDiverged(RuntimeError):
    pass


def layer_dims(n_layers: int, hidden: int) -> list[tuple[int, int]]:
    """(fan_in, fan_out) of each of the n_layers - 1 transitions."""
    if n_layers < 3 or hidden < 1:
        raise ValueError("need at least one hidden layer and one channel")
    sizes = [3] + [hidden] * (n_layers - 2) + [1]
    return list(zip(sizes[:-1], sizes[1:]))


def parameter_counts(n_layers: int, hidden: int, dof: int) -> tuple[int, int]:
    """(inference, training) parameter counts."""
    p_inf = sum(i * o + o for i, o in layer_dims(n_layers, hidden))
    return p_inf, (dof + 1) * p_inf


@dataclass
class SsdfModel:
    n_layers: int
    hidden: int
    dof: int
    params: np.ndarray                        # flat, see slabs()
    box_side: float = 2.0
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    kind: str = SDF
    joint: int = 0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        expected = parameter_counts(self.n_layers, self.hidden, self.dof)[1]
        if self.params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {self.params.shape}")

    @property
    def in_scale(self) -> float:
        return 0.5 * self.box_side

    @property
    def out_scale(self) -> float:
        return self.in_scale if self.kind == SDF else 1.0

    def slabs(self, flat: np.ndarray | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
        """Views (W, c) per transition with W: (D+1, out, in), c: (D+1, out).

        The flat layout is, per transition in order, W then c (C order)."""
        flat = self.params if flat is None else flat
        out, o = [], 0
        A = self.dof + 1
        for fi, fo in layer_dims(self.n_layers, self.hidden):
            W = flat[o:o + A * fo * fi].reshape(A, fo, fi)
            o += A * fo * fi
            c = flat[o:o + A * fo].reshape(A, fo)
            o += A * fo
            out.append((W, c))
        return out

    def normalise(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.center) / self.in_scale

    def astype(self, dtype) -> "SsdfModel":
        return SsdfModel(self.n_layers, self.hidden, self.dof, self.params.astype(dtype), self.box_side,
                         self.center, self.kind, self.joint)

    # bundle: magic 'SSDF', u8 kind (0 sdf, 1 bool), u32 joint, u32 dof, u32 n_layers,
    # u32 hidden, f32 L_G, 3*f32 center, then the flat f32 parameters
    _HEAD = struct.Struct("<4sBIIIIf3f")

    def save(self, path) -> None:
        head = self._HEAD.pack(b"SSDF", 0 if self.kind == SDF else 1, self.joint, self.dof, self.n_layers,
                               self.hidden, self.box_side, *self.center.astype(np.float32))
        Path(path).write_bytes(head + self.params.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "SsdfModel":
        raw = Path(path).read_bytes()
        magic, kind, joint, dof, nl, nh, L, cx, cy, cz = cls._HEAD.unpack_from(raw)
        if magic != b"SSDF":
            raise ValueError(f"{path}: not a model bundle")
        params = np.frombuffer(raw, "<f4", offset=cls._HEAD.size).astype(np.float32)
        return cls(nl, nh, dof, params, float(L), np.array([cx, cy, cz], dtype=np.float32),
                   SDF if kind == 0 else BOOL, joint)


def init_model(n_layers: int, hidden: int, dof: int, rng: np.random.Generator, *, box_side: float = 2.0,
               center=(0.0, 0.0, 0.0), kind: str = SDF, joint: int = 0, dtype=np.float64) -> SsdfModel:
    """Glorot-uniform constant slabs; angle slabs and biases start at zero so
    the initial network ignores the pose."""
    params = np.zeros(parameter_counts(n_layers, hidden, dof)[1], dtype=dtype)
    model = SsdfModel(n_layers, hidden, dof, params, float(np.float32(box_side)),
                      np.asarray(center, np.float32), kind, joint)
    for (W, _), (fi, fo) in zip(model.slabs(), layer_dims(n_layers, hidden)):
        lim = np.sqrt(6.0 / (fi + fo))
        W[0] = rng.uniform(-lim, lim, size=(fo, fi))
    return model


# ----------------------------------------------------------------------------
# inference

@dataclass(frozen=True)
class EffectiveParams:
    weights: tuple          # per transition (out, in)
    biases: tuple           # per transition (out,)
    center: np.ndarray
    in_scale: float
    out_scale: float


def _pose_vector(model: SsdfModel, pose) -> np.ndarray:
    pose = np.atleast_1d(np.asarray(pose, dtype=float))
    if pose.shape != (model.dof,):
        raise ValueError(f"pose has {pose.shape[0]} values, model expects {model.dof}")
    return np.concatenate([[1.0], pose])


def effective_params(model: SsdfModel, pose, dtype=np.float32) -> EffectiveParams:
    p = _pose_vector(model, pose)
    Ws, cs = [], []
    for W, c in model.slabs():
        Ws.append(np.tensordot(p, W, axes=1).astype(dtype))
        cs.append((p @ c).astype(dtype))
    return EffectiveParams(tuple(Ws), tuple(cs), model.center.astype(dtype), dtype(model.in_scale),
                           dtype(model.out_scale))


def forward_batch(eff: EffectiveParams, X: np.ndarray) -> np.ndarray:
    dtype = eff.weights[0].dtype
    y = (np.asarray(X, dtype=dtype).reshape(-1, 3) - eff.center) / eff.in_scale
    last = len(eff.weights) - 1
    for n, (W, c) in enumerate(zip(eff.weights, eff.biases)):
        y = y @ W.T + c
        if n < last:
            np.maximum(y, 0, out=y)
    return y[:, 0] * eff.out_scale


def forward(eff: EffectiveParams, X) -> float:
    return float(forward_batch(eff, np.asarray(X).reshape(1, 3))[0])


# ----------------------------------------------------------------------------
# loss and gradients

def clamp(v, delta):
    return np.minimum(delta, np.maximum(-delta, v))


def clamped_loss(pred, s, delta):
    if np.any(np.asarray(delta) <= 0):
        raise ValueError("delta must be positive")
    return (clamp(pred, delta) - clamp(s, delta)) ** 2


def _loss_and_grad(model: SsdfModel, flat: np.ndarray, P: np.ndarray, Xn: np.ndarray, target: np.ndarray,
                   delta: float, grad: np.ndarray | None = None):
    """Mean clamped loss over a batch in network units and its gradient
    w.r.t. the flat parameters.

    P: (B, D+1) pose features with a leading 1; Xn: (B, 3) normalised inputs;
    target and delta are in network output units.
    """
    B = len(Xn)
    slabs = model.slabs(flat)
    A = model.dof + 1
    ys, us = [Xn], []
    Wks = []
    y = Xn
    last = len(slabs) - 1
    for n, (W, c) in enumerate(slabs):
        _, fo, fi = W.shape
        u = (P[:, :, None] * y[:, None, :]).reshape(B, A * fi)
        Wk = W.transpose(1, 0, 2).reshape(fo, A * fi)
        z = u @ Wk.T + P @ c
        us.append(u)
        Wks.append(Wk)
        y = np.maximum(z, 0) if n < last else z
        ys.append(y)
    pred = y[:, 0]
    cp, ct = clamp(pred, delta), clamp(target, delta)
    diff = cp - ct
    loss = float(np.mean(diff * diff))

    if grad is None:
        grad = np.empty_like(flat)
    gslabs = model.slabs(grad)
    # clamp has zero slope outside [-delta, delta]
    dz = ((2.0 / B) * diff * (np.abs(pred) < delta))[:, None]
    for n in range(last, -1, -1):
        W, _ = slabs[n]
        _, fo, fi = W.shape
        gW, gc = gslabs[n]
        gW[...] = (dz.T @ us[n]).reshape(fo, A, fi).transpose(1, 0, 2)
        gc[...] = P.T @ dz
        if n == 0:
            break
        du = (dz @ Wks[n]).reshape(B, A, fi)
        dy = np.einsum("ba,bai->bi", P, du)
        dz = dy * (ys[n] > 0)
    return loss, grad


def backward(model: SsdfModel, pose, X, s, delta) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    """Clamped loss of one sample (model units) and its gradient for every
    (W, c) slab."""
    P = _pose_vector(model, pose)[None]
    Xn = model.normalise(np.asarray(X).reshape(1, 3))
    k = model.out_scale
    flat = model.params.astype(np.float64)
    loss, g = _loss_and_grad(model, flat, P, Xn, np.array([s], float) / k, delta / k)
    g *= k * k
    return loss * k * k, [(W.copy(), c.copy()) for W, c in model.slabs(g)]


def sample_loss(model: SsdfModel, pose, X, s, delta) -> float:
    """Straight evaluation path (effective params + forward) for checks."""
    eff = effective_params(model, pose, dtype=np.float64)
    return float(clamped_loss(forward(eff, X), s, delta))


# ----------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10_000
    batch_size: int = 1024
    delta_factor: float = 0.2        # delta = delta_factor * L_G for SDF nets
    val_fraction: float = 0.1
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.delta_factor <= 0:
            raise ValueError("learning rate and delta must be positive")


class Adam:
    def __init__(self, size: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * grad * grad
        step = self.lr / (1.0 - self.beta1 ** self.t)
        denom = np.sqrt(self.v / (1.0 - self.beta2 ** self.t)) + self.eps
        params -= step * self.m / denom


@dataclass
class History:
    """Per-epoch mean losses (training loss averaged while the parameters
    move) plus both losses re-evaluated with the final parameters."""
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    final_train: float = float("nan")
    final_val: float = float("nan")

    def to_csv(self, path) -> None:
        rows = ["epoch,train_loss,val_loss"]
        rows += [f"{e + 1},{t:.9g},{v:.9g}" for e, (t, v) in enumerate(zip(self.train, self.val))]
        Path(path).write_text("\n".join(rows) + "\n")


def split_indices(n: int, val_fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(n)
    n_val = int(round(val_fraction * n)) if n > 1 else 0
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def fit(X, pose, target, *, n_layers: int, hidden: int, box_side: float, center, kind: str, delta: float,
        config: TrainConfig, joint: int = 0) -> tuple[SsdfModel, History]:
    """Mini-batch Adam on the clamped loss; losses are reported in model units."""
    X = np.asarray(X, float)
    pose = np.asarray(pose, float).reshape(len(X), -1)
    target = np.asarray(target, float).reshape(-1)
    if len(X) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    model = init_model(n_layers, hidden, pose.shape[1], rng, box_side=box_side, center=center, kind=kind,
                       joint=joint)
    k = model.out_scale
    Xn = model.normalise(X)
    P = np.concatenate([np.ones((len(X), 1)), pose], axis=1)
    T = target / k
    dn = delta / k
    tr, va = split_indices(len(X), config.val_fraction, rng)
    Xt, Pt, Tt = Xn[tr], P[tr], T[tr]
    Xv, Pv, Tv = Xn[va], P[va], T[va]

    flat = model.params
    grad = np.empty_like(flat)
    opt = Adam(flat.size, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    hist = History()
    n, bs = len(Xt), config.batch_size
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        Xs, Ps, Ts = Xt[perm], Pt[perm], Tt[perm]
        total = 0.0
        for b in range(0, n, bs):
            loss, _ = _loss_and_grad(model, flat, Ps[b:b + bs], Xs[b:b + bs], Ts[b:b + bs], dn, grad)
            total += loss * len(Xs[b:b + bs])
            opt.step(flat, grad)
        train_loss = total / n * k * k
        if len(Xv):
            val_loss = evaluate_loss(model, Pv, Xv, Tv, dn) * k * k
        else:
            val_loss = float("nan")
        if not np.isfinite(train_loss):
            raise TrainingDiverged(f"loss became {train_loss} at epoch {epoch + 1} "
                                   f"(lr={config.learning_rate}, batch={bs})")
        hist.train.append(train_loss)
        hist.val.append(val_loss)
        if config.log_every and (epoch + 1) % config.log_every == 0:
            log.info("epoch %d train %.4g val %.4g", epoch + 1, train_loss, val_loss)
    final = model.astype(np.float32)
    hist.final_train = evaluate_loss(final, Pt, Xt, Tt, dn) * k * k
    if len(Xv):
        hist.final_val = evaluate_loss(final, Pv, Xv, Tv, dn) * k * k
    return final, hist


def evaluate_loss(model: SsdfModel, P: np.ndarray, Xn: np.ndarray, T: np.ndarray, dn: float) -> float:
    """Mean clamped loss in network units without touching gradients."""
    y = Xn
    slabs = model.slabs()
    last = len(slabs) - 1
    for n, (W, c) in enumerate(slabs):
        Weff = np.einsum("ba,aoi->boi", P, W)
        y = np.einsum("boi,bi->bo", Weff, y) + P @ c
        if n < last:
            y = np.maximum(y, 0)
    d = clamp(y[:, 0], dn) - clamp(T, dn)
    return float(np.mean(d * d))


def train(dataset, n_layers: int = 5, hidden: int = 8, config: TrainConfig | None = None) -> tuple[SsdfModel, History]:
    """SDF network for one joint dataset (see dataset.JointDataset)."""
    config = config or TrainConfig()
    return fit(dataset.X, dataset.pose, dataset.s, n_layers=n_layers, hidden=hidden, box_side=dataset.box_side,
               center=dataset.center, kind=SDF, delta=config.delta_factor * dataset.box_side, config=config,
               joint=dataset.joint)


def train_bool(dataset, n_layers: int = 4, hidden: int = 8, config: TrainConfig | None = None) -> tuple[SsdfModel, History]:
    """Boolean companion network regressing the +1/-1 boundary labels with delta = 1."""
    config = config or TrainConfig()
    labels = np.asarray(dataset.label)
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    return fit(dataset.X, dataset.pose, labels, n_layers=n_layers, hidden=hidden, box_side=dataset.box_side,
               center=dataset.center, kind=BOOL, delta=1.0, config=config, joint=dataset.joint)

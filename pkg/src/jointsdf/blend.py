"""Global body SDF from per-joint augmented fields.

Each joint contributes a distance phi_i and a flag b_i evaluated in its
canonical frame. A point's distance is the smallest phi_i among joints whose
flag says the closest boundary point is real skin; if no joint claims the
point we fall back to the minimum over all joints and count the event.

Two kinds of joint field share one interface: networks (``NetJointField``)
and ground-truth grids (``GridJointField``, the oracle used to test the
blending logic without any training).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .distance_field import GridSdf, trilinear_gradient, trilinear_sample
from .rig import Rig, joint_local_transform
from .ssdf import SsdfModel, effective_params, forward_batch


@dataclass
class QueryStats:
    """Instrumentation: counts accumulate until reset()."""
    queries: int = 0             # points evaluated through query_batch
    calls: int = 0               # query_batch invocations
    fallbacks: int = 0           # points where no joint claimed the point
    param_updates: int = 0       # effective-parameter evaluations

    def reset(self) -> None:
        self.queries = self.calls = self.fallbacks = self.param_updates = 0


def _box_distance(X: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Distance to an axis-aligned box (0 inside) and the nearest box point."""
    c = np.clip(X, lo, hi)
    return np.linalg.norm(X - c, axis=1), c


def _extrapolate(X: np.ndarray, c: np.ndarray, value, grad) -> np.ndarray:
    """Distance outside a field's box: project the nearest box point c to its
    closest surface point and measure from there."""
    g = grad(c)
    g /= np.maximum(np.linalg.norm(g, axis=1, keepdims=True), 1e-12)
    p = c - value(c)[:, None] * g
    return np.linalg.norm(X - p, axis=1)


class BoundField(Protocol):
    def __call__(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class JointField(Protocol):
    joint: int
    box_side: float

    def bind(self, theta_i: np.ndarray, stats: QueryStats) -> BoundField: ...


class NetJointField:
    """SDF and boolean networks of one joint.

    Outside its training box a network is unconstrained, so there phi is
    extrapolated from the box boundary and the flag is forced true."""

    def __init__(self, sdf_net: SsdfModel, bool_net: SsdfModel):
        if sdf_net.joint != bool_net.joint or sdf_net.dof != bool_net.dof:
            raise ValueError("sdf and bool networks belong to different joints")
        self.sdf_net, self.bool_net = sdf_net, bool_net
        self.joint = sdf_net.joint
        self.box_side = float(sdf_net.box_side)
        half = 0.5 * self.box_side
        self.lo, self.hi = sdf_net.center - half, sdf_net.center + half

    def bind(self, theta_i, stats: QueryStats) -> BoundField:
        e_sdf = effective_params(self.sdf_net, theta_i)
        e_bool = effective_params(self.bool_net, theta_i)
        stats.param_updates += 2
        lo, hi = self.lo, self.hi
        step = 1e-3 * self.box_side

        def value(X):
            return forward_batch(e_sdf, X).astype(float)

        def grad(X):
            f0 = value(X)
            return np.stack([(value(X + step * e) - f0) / step for e in np.eye(3)], axis=1)

        def evaluate(X):
            phi = value(X)
            b = forward_batch(e_bool, X) > 0
            out, c = _box_distance(X, lo, hi)
            outside = out > 0
            if outside.any():
                phi[outside] = _extrapolate(X[outside], c[outside], value, grad)
                b |= outside
            return phi, b
        return evaluate


class GridJointField:
    """Ground-truth oracle: region SDF and boundary labels on a grid.

    ``provider(theta_i)`` returns (GridSdf, labels) for a pose; a static pair
    can be passed directly instead. Labels are interpolated and thresholded
    at zero, ties going to +1."""

    def __init__(self, joint: int, provider: Callable | tuple[GridSdf, np.ndarray]):
        self.joint = joint
        if isinstance(provider, tuple):
            fixed = provider
            provider = lambda theta: fixed
        self.provider = provider
        self._cache: dict = {}
        sdf, _ = self._lookup(None)
        self.box_side = sdf.box_side

    def _lookup(self, theta_i):
        key = None if theta_i is None else tuple(np.round(np.asarray(theta_i, float), 12))
        if key not in self._cache:
            self._cache[key] = self.provider(theta_i)
        return self._cache[key]

    def bind(self, theta_i, stats: QueryStats) -> BoundField:
        sdf, labels = self._lookup(theta_i)
        stats.param_updates += 1
        lab = GridSdf(sdf.grid, labels.astype(np.float32))
        lo, hi = sdf.origin, sdf.grid.upper

        def value(X):
            return trilinear_sample(sdf, X).astype(float)

        def evaluate(X):
            phi, oob = trilinear_sample(sdf, X, return_flag=True)
            phi = phi.astype(float)
            b = trilinear_sample(lab, X) >= 0
            if oob.any():
                _, c = _box_distance(X[oob], lo, hi)
                phi[oob] = _extrapolate(X[oob], c, value, lambda P: trilinear_gradient(sdf, P))
            return phi, b | oob
        return evaluate


@dataclass
class AvatarSdf:
    rig: Rig
    fields: Sequence[JointField]
    h_fd: float | None = None
    stats: QueryStats = field(default_factory=QueryStats)

    def __post_init__(self):
        if len(self.fields) == 0:
            raise ValueError("an avatar needs at least one joint field")
        for f in self.fields:
            if not 0 <= f.joint < len(self.rig):
                raise ValueError(f"field for joint {f.joint} but the rig has {len(self.rig)} joints")
        if self.h_fd is None:
            self.h_fd = 1e-3 * self.box_side

    @property
    def box_side(self) -> float:
        """Largest joint box side; sets the default difference step and
        collision offsets."""
        return max(f.box_side for f in self.fields)

    def pose_update(self, state) -> "PosedAvatarSdf":
        state = self.rig.check_state(state)
        parts = []
        for f in self.fields:
            Ti = joint_local_transform(self.rig, state, f.joint)
            parts.append((Ti, f.bind(state[self.rig.joint_slice(f.joint)], self.stats)))
        return PosedAvatarSdf(tuple(parts), float(self.h_fd), self.stats)

    # manifest: {"rig": path, "h_fd": float | null, "joints": [{"joint", "sdf", "bool"}]}
    def save_manifest(self, path, rig_path, bundles: Sequence[tuple[int, str, str]]) -> None:
        data = {"rig": str(rig_path), "h_fd": self.h_fd,
                "joints": [{"joint": j, "sdf": str(s), "bool": str(b)} for j, s, b in bundles]}
        Path(path).write_text(json.dumps(data, indent=2))

    @classmethod
    def load_manifest(cls, path) -> "AvatarSdf":
        path = Path(path)
        data = json.loads(path.read_text())
        resolve = lambda p: Path(p) if Path(p).is_absolute() else path.parent / p
        rig = Rig.load(resolve(data["rig"]))
        fields = [NetJointField(SsdfModel.load(resolve(j["sdf"])), SsdfModel.load(resolve(j["bool"])))
                  for j in data["joints"]]
        return cls(rig, fields, data.get("h_fd"))


@dataclass(frozen=True)
class PosedAvatarSdf:
    parts: tuple                      # (T_i, bound field) per joint
    h_fd: float
    stats: QueryStats

    def evaluate_joints(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(J, N) distances and flags of every joint field."""
        xs = np.asarray(xs, float).reshape(-1, 3)
        phis, flags = [], []
        for Ti, fn in self.parts:
            phi, b = fn(Ti.apply(xs))
            phis.append(phi)
            flags.append(b)
        return np.array(phis).reshape(len(self.parts), -1), np.array(flags).reshape(len(self.parts), -1)

    def query_batch(self, xs, return_flags: bool = False):
        phis, flags = self.evaluate_joints(xs)
        claimed = flags.any(axis=0)
        out = np.where(flags, phis, np.inf).min(axis=0)
        out[~claimed] = phis[:, ~claimed].min(axis=0)
        self.stats.calls += 1
        self.stats.queries += out.size
        self.stats.fallbacks += int((~claimed).sum())
        return (out, ~claimed) if return_flags else out

    def query(self, x) -> float:
        return float(self.query_batch(np.asarray(x).reshape(1, 3))[0])

    def gradient_batch(self, xs, phi=None) -> np.ndarray:
        """Forward differences; 3 extra queries per point when phi is given."""
        xs = np.asarray(xs, float).reshape(-1, 3)
        if phi is None:
            phi = self.query_batch(xs)
        h = self.h_fd
        shifted = np.concatenate([xs + h * e for e in np.eye(3)])
        ph = self.query_batch(shifted).reshape(3, -1)
        return ((ph - phi) / h).T

    def gradient(self, x) -> np.ndarray:
        return self.gradient_batch(np.asarray(x).reshape(1, 3))[0]

    def project_batch(self, xs, phi=None, grad=None) -> np.ndarray:
        xs = np.asarray(xs, float).reshape(-1, 3)
        if phi is None:
            phi = self.query_batch(xs)
        if grad is None:
            grad = self.gradient_batch(xs, phi)
        return xs - phi[:, None] * grad

    def project(self, x) -> np.ndarray:
        return self.project_batch(np.asarray(x).reshape(1, 3))[0]


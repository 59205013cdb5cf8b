"""Skeletal kinematics: joints, forward kinematics, linear blend skinning and
the joint-local canonical frames used by every per-joint SDF query."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

_AXIS_TOL = 1e-6


class RigError(ValueError):
    pass


def axis_rotation(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


@dataclass(frozen=True)
class RigidTransform:
    """x -> R x + t."""
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-6) or abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise RigError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls()

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self ∘ other (other is applied first)."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M


@dataclass(frozen=True)
class Joint:
    id: int
    parent: int | None
    center: np.ndarray
    axes: np.ndarray                      # (dof, 3)
    name: str = ""
    # per-DOF (min, increment, max) in degrees; only used for training ranges
    ranges_deg: tuple = ()

    def __post_init__(self):
        axes = np.atleast_2d(np.asarray(self.axes, dtype=float))
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if not 1 <= len(axes) <= 3:
            raise RigError(f"joint {self.id}: dof must be 1..3, got {len(axes)}")
        if np.any(np.abs(np.linalg.norm(axes, axis=1) - 1.0) > _AXIS_TOL):
            raise RigError(f"joint {self.id}: rotation axes must be unit length")
        if self.parent is not None and not 0 <= self.parent < self.id:
            raise RigError(f"joint {self.id}: parent index must precede the joint")

    @property
    def dof(self) -> int:
        return len(self.axes)

    def local_rotation(self, angles: np.ndarray) -> np.ndarray:
        # extrinsic: the first declared axis is applied first
        R = np.eye(3)
        for axis, a in zip(self.axes, angles):
            R = axis_rotation(axis, a) @ R
        return R


class Rig:
    """Topologically ordered joint list with helpers for the packed state vector."""

    def __init__(self, joints: Sequence[Joint]):
        self.joints = tuple(joints)
        for i, j in enumerate(self.joints):
            if j.id != i:
                raise RigError(f"joint ids must be 0..N-1 in order (got {j.id} at {i})")
        self.offsets = np.concatenate([[0], np.cumsum([j.dof for j in self.joints])]).astype(int)

    def __len__(self):
        return len(self.joints)

    def __getitem__(self, i) -> Joint:
        return self.joints[i]

    @property
    def n_dof(self) -> int:
        return int(self.offsets[-1])

    def rest_state(self) -> np.ndarray:
        return np.zeros(self.n_dof)

    def joint_slice(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i + 1])

    def split(self, state) -> list[np.ndarray]:
        state = self.check_state(state)
        return [state[self.joint_slice(i)] for i in range(len(self))]

    def check_state(self, state) -> np.ndarray:
        state = np.asarray(state, dtype=float).reshape(-1)
        if state.shape[0] != self.n_dof:
            raise RigError(f"joint state has length {state.shape[0]}, rig expects {self.n_dof}")
        return state

    def with_joint(self, i: int, theta_i, base=None) -> np.ndarray:
        """Full state with joint i set to theta_i and everything else at ``base`` (rest)."""
        state = self.rest_state() if base is None else self.check_state(base).copy()
        state[self.joint_slice(i)] = theta_i
        return state

    def ancestors(self, i: int) -> list[int]:
        out = []
        p = self.joints[i].parent
        while p is not None:
            out.append(p)
            p = self.joints[p].parent
        return out

    # -- config -----------------------------------------------------------------
    def to_dict(self) -> dict:
        return {"joints": [
            {"id": j.id, "name": j.name, "parent": j.parent,
             "center": j.center.tolist(), "dof": j.dof, "axes": j.axes.tolist(),
             "ranges_deg": [list(r) for r in j.ranges_deg]}
            for j in self.joints]}

    @classmethod
    def from_dict(cls, data: dict) -> "Rig":
        joints = []
        for d in data["joints"]:
            axes = d["axes"]
            if "dof" in d and int(d["dof"]) != len(axes):
                raise RigError(f"joint {d['id']}: dof {d['dof']} does not match {len(axes)} axes")
            joints.append(Joint(id=int(d["id"]), parent=d.get("parent"), center=d["center"],
                                axes=axes, name=d.get("name", ""),
                                ranges_deg=tuple(tuple(float(v) for v in r)
                                                 for r in d.get("ranges_deg", ()))))
        return cls(joints)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "Rig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def pose_transforms(rig: Rig, state) -> list[RigidTransform]:
    """World transform of every joint (maps rest-pose points to posed points)."""
    thetas = rig.split(state)
    world: list[RigidTransform] = []
    for j, theta in zip(rig.joints, thetas):
        R = j.local_rotation(theta)
        local = RigidTransform(R, j.center - R @ j.center)
        world.append(local if j.parent is None else world[j.parent].compose(local))
    return world


def joint_local_transform(rig: Rig, state, i: int) -> RigidTransform:
    """T_i: world -> canonical frame of joint i (its parent bone held fixed).

    Forward kinematics is relative to the rest pose, so a root's rest-frame
    placement is the identity.
    """
    if not 0 <= i < len(rig):
        raise IndexError(f"joint index {i} out of range for {len(rig)} joints")
    parent = rig[i].parent
    if parent is None:
        rig.check_state(state)
        return RigidTransform.identity()
    return pose_transforms(rig, state)[parent].inverse()


@dataclass
class SkinnedMesh:
    rest_vertices: np.ndarray           # (V, 3)
    triangles: np.ndarray               # (F, 3) int
    weights: np.ndarray                 # (V, n_transforms), rows sum to 1

    def __post_init__(self):
        self.rest_vertices = np.asarray(self.rest_vertices, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=float)
        self.validate()

    def validate(self):
        V = len(self.rest_vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= V):
            raise RigError("triangle index out of range")
        if self.weights.shape[0] != V:
            raise RigError("need one weight row per vertex")
        if np.any(self.weights < 0):
            raise RigError("skin weights must be non-negative")
        if np.any(np.abs(self.weights.sum(axis=1) - 1.0) > 1e-6):
            raise RigError("skin weights must sum to 1 per vertex")


def lbs_deform(mesh: SkinnedMesh, transforms: Sequence[RigidTransform]) -> np.ndarray:
    W = mesh.weights
    used = np.flatnonzero(W.any(axis=0))
    if used.size and used.max() >= len(transforms):
        raise RigError(f"skin weights reference transform {used.max()} "
                       f"but only {len(transforms)} transforms were given")
    n = W.shape[1]
    Rs = np.stack([transforms[k].rotation if k < len(transforms) else np.eye(3) for k in range(n)])
    ts = np.stack([transforms[k].translation if k < len(transforms) else np.zeros(3) for k in range(n)])
    X = mesh.rest_vertices
    # blend displacements so identity transforms return X bit for bit
    per_bone = np.einsum("kab,vb->vka", Rs, X) + ts[None] - X[:, None]
    return X + np.einsum("vk,vka->va", W, per_bone)


def read_skin_weights(path, n_vertices: int, n_transforms: int | None = None) -> np.ndarray:
    """Sidecar format: one ``vertexIndex transformIndex weight`` triple per line."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            v, k, w = line.split()
            rows.append((int(v), int(k), float(w)))
    if not rows:
        raise RigError(f"{path}: no skin weights")
    arr = np.array(rows, dtype=float)
    n_t = int(arr[:, 1].max()) + 1 if n_transforms is None else n_transforms
    W = np.zeros((n_vertices, n_t))
    np.add.at(W, (arr[:, 0].astype(int), arr[:, 1].astype(int)), arr[:, 2])
    return W


def write_skin_weights(path, weights: np.ndarray) -> None:
    v, k = np.nonzero(weights)
    lines = [f"{a} {b} {weights[a, b]:.9g}" for a, b in zip(v, k)]
    Path(path).write_text("\n".join(lines) + "\n")

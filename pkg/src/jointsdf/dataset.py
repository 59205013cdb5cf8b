"""Per-joint training data: pose product spaces, posed region SDFs with
boundary labels, and the near-surface-biased node selection."""

from __future__ import annotations

import hashlib
import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import distance_field as df
from .distance_field import Grid, GridSdf
from .mesh import TriMesh
from .partition import (RegionPartition, covered_by_true_boundary, diffuse_weights, dilate_regions,
                        grow_regions, region_surface, seed_regions, surface_boundary_values)
from .rig import Rig, RigidTransform, SkinnedMesh, joint_local_transform, lbs_deform, pose_transforms

EPS_FACTOR = 0.025
BETA_FACTOR = 0.001


def derive_seed(seed: int, *role) -> int:
    """Stable per-stage seed: hash of the top-level seed and a role tuple."""
    key = ":".join(str(r) for r in (seed,) + role).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


@dataclass(frozen=True)
class PoseRange:
    """Per-DOF (min, increment, max) triples in degrees."""
    dofs: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        for lo, inc, hi in self.dofs:
            if inc <= 0 or lo > hi:
                raise ValueError(f"bad pose range [{lo}:{inc}:{hi}]")
            steps = (hi - lo) / inc
            if abs(steps - round(steps)) > 1e-9:
                raise ValueError(f"pose range [{lo}:{inc}:{hi}] does not land on its maximum")

    @property
    def dof(self) -> int:
        return len(self.dofs)

    def values(self, k: int) -> np.ndarray:
        lo, inc, hi = self.dofs[k]
        n = int(round((hi - lo) / inc))
        return lo + inc * np.arange(n + 1)


def pose_grid(prange: PoseRange) -> np.ndarray:
    """(P, D) Cartesian product of the per-DOF values, lexicographic, degrees."""
    axes = [prange.values(k) for k in range(prange.dof)]
    return np.array(list(itertools.product(*axes)), dtype=float).reshape(-1, prange.dof)


def select_samples(sdf: GridSdf, eps: float, beta: float, rng: np.random.Generator) -> np.ndarray:
    """Flat (x-slowest) indices of nodes with |s| < eps or u*|s| < beta, one
    uniform u per node."""
    if eps <= 0 or beta <= 0:
        raise ValueError("eps and beta must be positive")
    s = np.abs(sdf.values.astype(np.float64).ravel())
    u = rng.random(s.shape[0])
    return np.flatnonzero((s < eps) | (u * s < beta))


# ----------------------------------------------------------------------------
# reference body and regions

@dataclass
class ReferenceBody:
    rig: Rig
    skin: SkinnedMesh
    sdf: GridSdf
    body_mask: np.ndarray
    weights: np.ndarray          # (nx, ny, nz, J) diffused skin weights

    @property
    def grid(self) -> Grid:
        return self.sdf.grid

    @property
    def mesh(self) -> TriMesh:
        return TriMesh(self.skin.rest_vertices, self.skin.triangles)


def build_reference(rig: Rig, skin: SkinnedMesh, resolution: int) -> ReferenceBody:
    mesh = TriMesh(skin.rest_vertices, skin.triangles)
    lo, hi = mesh.bounds()
    grid = Grid.cube_around(lo, hi, resolution, pad=0.1)
    inside = df.inside_mask(mesh, grid)
    sdf = df.fast_march(df.exact_band(mesh, grid, inside=inside))
    bnd = surface_boundary_values(skin.rest_vertices, skin.weights, grid, inside)
    weights = diffuse_weights(bnd, inside)
    return ReferenceBody(rig, skin, sdf, inside, weights)


def base_partition(ref: ReferenceBody, threshold: float = 0.4) -> RegionPartition:
    seeds = seed_regions(ref.weights, threshold, ref.body_mask)
    return grow_regions(seeds, ref.body_mask, ref.grid)


@dataclass
class Region:
    """One joint region in the reference pose: its closed surface and skin weights."""
    joint: int
    surface: TriMesh
    weights: np.ndarray

    def posed(self, transforms) -> TriMesh:
        skin = SkinnedMesh(self.surface.vertices, self.surface.triangles, self.weights)
        return TriMesh(lbs_deform(skin, transforms), self.surface.triangles)


def build_regions(ref: ReferenceBody, partition: RegionPartition) -> list[Region]:
    return [Region(i, *region_surface(ref.sdf, partition.members[i], ref.body_mask, ref.weights))
            for i in range(partition.region_count)]


def posed_body(ref: ReferenceBody, transforms) -> TriMesh:
    return TriMesh(lbs_deform(ref.skin, transforms), ref.skin.triangles)


def joint_range(rig: Rig, joint: int) -> PoseRange:
    r = rig[joint].ranges_deg
    if len(r) != rig[joint].dof:
        raise ValueError(f"joint {joint} needs one range per DOF in the rig config")
    return PoseRange(tuple(tuple(x) for x in r))


def training_states(rig: Rig, joint: int, prange: PoseRange | None = None) -> np.ndarray:
    """Full joint states (radians) for the joint's pose grid, others at rest."""
    prange = prange or joint_range(rig, joint)
    return np.stack([rig.with_joint(joint, np.radians(th)) for th in pose_grid(prange)])


def region_masks(regions: list[Region], transforms, grid: Grid, to_frame: RigidTransform | None = None):
    """Posed inside masks of every region; their union is the body mask.

    Taking the body as the union of the region surfaces (rather than the
    original skin mesh) keeps true-surface tags consistent: both come from
    the same discretised surfaces.
    """
    masks = []
    for reg in regions:
        m = reg.posed(transforms)
        if to_frame is not None:
            m = TriMesh(to_frame.apply(m.vertices), m.triangles)
        masks.append(df.inside_mask(m, grid))
    return masks, np.logical_or.reduce(masks)


def partition_labels(ref: ReferenceBody, regions: list[Region], state, grid: Grid):
    """Body mask and per-region boundary labels of the posed body on ``grid``."""
    masks, body = region_masks(regions, pose_transforms(ref.rig, state), grid)
    return body, [df.classify_boundary(m, body, spacing=grid.spacing) for m in masks]


def check_partition(ref: ReferenceBody, regions: list[Region], states) -> bool:
    """Every body node keeps a region with a true-surface closest point, for
    every given pose."""
    for state in states:
        T = pose_transforms(ref.rig, state)
        lo, hi = posed_body(ref, T).bounds()
        grid = Grid.cube_around(lo, hi, ref.grid.dims[0], pad=0.1)
        body, labels = partition_labels(ref, regions, state, grid)
        if not covered_by_true_boundary(labels, body):
            return False
    return True


def auto_partition(ref: ReferenceBody, threshold: float = 0.4, margin: int = 3, max_margin: int = 16,
                   states=None) -> tuple[RegionPartition, list[Region], int]:
    """Grow regions, then raise the dilation margin until check_partition
    passes on every training pose."""
    base = base_partition(ref, threshold)
    if states is None:
        states = np.concatenate([training_states(ref.rig, j) for j in range(len(ref.rig))])
    for m in range(margin, max_margin + 1):
        part = dilate_regions(base, m, ref.body_mask)
        regions = build_regions(ref, part)
        if check_partition(ref, regions, states):
            return part, regions, m
    raise RuntimeError(f"no dilation margin up to {max_margin} cells gives full true-boundary coverage")


# ----------------------------------------------------------------------------
# per-joint ground truth

@dataclass
class JointGroundTruth:
    """Posed ground truth for one joint region over the joint's training box
    (in the joint's canonical frame)."""
    ref: ReferenceBody
    regions: list[Region]
    joint: int
    grid: Grid

    @property
    def region(self) -> Region:
        return self.regions[self.joint]

    @classmethod
    def build(cls, ref: ReferenceBody, regions: list[Region], joint: int, resolution: int,
              states=None) -> "JointGroundTruth":
        """The box covers the posed region over all training poses, padded 10%
        per side and made cubic."""
        if states is None:
            states = training_states(ref.rig, joint)
        lo, hi = np.full(3, np.inf), np.full(3, -np.inf)
        for state in states:
            T = pose_transforms(ref.rig, state)
            v = joint_local_transform(ref.rig, state, joint).apply(regions[joint].posed(T).vertices)
            lo, hi = np.minimum(lo, v.min(0)), np.maximum(hi, v.max(0))
        return cls(ref, regions, joint, Grid.cube_around(lo, hi, resolution, pad=0.1))

    def at_state(self, state) -> tuple[GridSdf, np.ndarray, np.ndarray]:
        """Region SDF, boundary labels and body mask on the canonical grid."""
        rig = self.ref.rig
        T = pose_transforms(rig, state)
        Ti = joint_local_transform(rig, state, self.joint)
        masks, body = region_masks(self.regions, T, self.grid, Ti)
        reg = self.region.posed(T)
        reg = TriMesh(Ti.apply(reg.vertices), reg.triangles)
        rin = masks[self.joint]
        sdf = df.fast_march(df.exact_band(reg, self.grid, inside=rin))
        labels = df.classify_boundary(rin, body, spacing=self.grid.spacing)
        return sdf, labels, body

    def at_pose(self, theta_deg) -> tuple[GridSdf, np.ndarray, np.ndarray]:
        return self.at_state(self.ref.rig.with_joint(self.joint, np.radians(theta_deg)))


# ----------------------------------------------------------------------------
# datasets

@dataclass
class JointDataset:
    joint: int
    box_side: float
    center: np.ndarray       # canonical box center (network input normalisation)
    X: np.ndarray            # (N, 3) canonical positions
    pose: np.ndarray         # (N, D) radians
    s: np.ndarray            # (N,) signed distance
    label: np.ndarray        # (N,) +1 / -1

    def __post_init__(self):
        self.X = np.asarray(self.X, np.float32).reshape(-1, 3)
        self.pose = np.asarray(self.pose, np.float32).reshape(len(self.X), -1)
        self.s = np.asarray(self.s, np.float32).reshape(-1)
        self.label = np.asarray(self.label, np.float32).reshape(-1)
        self.center = np.asarray(self.center, np.float32).astype(np.float64)
        self.box_side = float(np.float32(self.box_side))

    @property
    def dof(self) -> int:
        return self.pose.shape[1]

    def __len__(self):
        return len(self.s)

    def subset(self, idx) -> "JointDataset":
        return JointDataset(self.joint, self.box_side, self.center, self.X[idx], self.pose[idx],
                            self.s[idx], self.label[idx])

    # file: magic 'JSDS', u32 joint, u32 dof, f32 L_G, 3*f32 center, u64 count,
    # then count records of f32 (X[3], pose[D], s, label)
    _HEAD = struct.Struct("<4sIIf3fQ")

    def save(self, path) -> None:
        head = self._HEAD.pack(b"JSDS", self.joint, self.dof, self.box_side, *self.center.astype(np.float32),
                               len(self))
        rec = np.concatenate([self.X, self.pose, self.s[:, None], self.label[:, None]], axis=1)
        Path(path).write_bytes(head + rec.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "JointDataset":
        raw = Path(path).read_bytes()
        magic, joint, dof, L, cx, cy, cz, n = cls._HEAD.unpack_from(raw)
        if magic != b"JSDS":
            raise ValueError(f"{path}: not a dataset file")
        rec = np.frombuffer(raw, "<f4", offset=cls._HEAD.size).reshape(n, 3 + dof + 2).astype(np.float32)
        return cls(joint, L, np.array([cx, cy, cz]), rec[:, :3], rec[:, 3:3 + dof], rec[:, 3 + dof],
                   rec[:, 4 + dof])


def pose_samples(sdf: GridSdf, labels: np.ndarray, eps: float, beta: float, rng) -> tuple[np.ndarray, ...]:
    idx = select_samples(sdf, eps, beta, rng)
    X = sdf.grid.nodes().reshape(-1, 3)[idx]
    return X, sdf.values.ravel()[idx], labels.ravel()[idx].astype(np.float32)


def build_dataset(gt: JointGroundTruth, prange: PoseRange | None = None, seed: int = 0,
                  eps_factor: float = EPS_FACTOR, beta_factor: float = BETA_FACTOR,
                  cache: dict | None = None) -> JointDataset:
    """Samples for every pose of the joint's training range.

    ``cache`` (optional) maps the pose tuple in degrees to (sdf, labels);
    grids already present are reused, missing ones are computed and stored.
    """
    rig = gt.ref.rig
    prange = prange or joint_range(rig, gt.joint)
    L = gt.grid.box_side
    eps, beta = eps_factor * L, beta_factor * L
    Xs, Ps, Ss, Ls = [], [], [], []
    for p, theta in enumerate(pose_grid(prange)):
        key = tuple(float(t) for t in theta)
        if cache is not None and key in cache:
            sdf, labels = cache[key]
        else:
            sdf, labels, _ = gt.at_pose(theta)
            if cache is not None:
                cache[key] = (sdf, labels)
        rng = np.random.default_rng(derive_seed(seed, "select", gt.joint, p))
        X, s, lab = pose_samples(sdf, labels, eps, beta, rng)
        Xs.append(X)
        Ps.append(np.repeat(np.radians(theta)[None], len(X), axis=0))
        Ss.append(s)
        Ls.append(lab)
    return JointDataset(gt.joint, L, gt.grid.center, np.concatenate(Xs), np.concatenate(Ps),
                        np.concatenate(Ss), np.concatenate(Ls))

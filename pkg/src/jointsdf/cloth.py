"""A small mass-spring cloth that collides with an articulated SDF body.

Integration is semi-implicit Euler (spring forces and gravity update the
velocity, the new velocity moves the particles), followed by a collision pass
that pushes particles found inside the body back out along the SDF gradient.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .mesh import TriMesh, write_obj

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    pass


@dataclass
class ClothState:
    positions: np.ndarray        # (N, 3)
    velocities: np.ndarray       # (N, 3)
    rest_mesh: TriMesh
    springs: np.ndarray          # (S, 2) particle indices
    rest_lengths: np.ndarray     # (S,)
    stiffness: np.ndarray        # (S,)
    mass: float
    damping: float               # fraction of velocity removed per second
    shape: tuple[int, int]

    def __post_init__(self):
        n, m = self.shape
        if self.positions.shape != (n * m, 3):
            raise ValueError("particle count must equal n*m")
        if np.any(self.rest_lengths <= 0):
            raise ValueError("spring rest lengths must be positive")

    @property
    def n_particles(self) -> int:
        return len(self.positions)

    def mesh(self) -> TriMesh:
        return TriMesh(self.positions.copy(), self.rest_mesh.triangles)


def make_cloth(n: int, m: int, size=(1.0, 1.0), origin=(0.0, 0.0, 0.0), *, k_struct: float = 400.0,
               k_shear: float = 100.0, k_bend: float = 20.0, total_mass: float = 0.5,
               damping: float = 0.5) -> ClothState:
    """An n x m particle sheet in the x-z plane with its corner at origin."""
    if n < 2 or m < 2:
        raise ValueError("cloth needs at least 2x2 particles")
    ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    pos = np.zeros((n, m, 3))
    pos[..., 0] = ii * size[0] / (n - 1)
    pos[..., 2] = jj * size[1] / (m - 1)
    pos = pos.reshape(-1, 3) + np.asarray(origin, float)
    idx = np.arange(n * m).reshape(n, m)
    tris = np.concatenate([
        np.stack([idx[:-1, :-1], idx[:-1, 1:], idx[1:, :-1]], -1).reshape(-1, 3),
        np.stack([idx[1:, :-1], idx[:-1, 1:], idx[1:, 1:]], -1).reshape(-1, 3)])
    pairs, ks = [], []
    for (a, b), k in [((idx[:-1, :], idx[1:, :]), k_struct), ((idx[:, :-1], idx[:, 1:]), k_struct),
                      ((idx[:-1, :-1], idx[1:, 1:]), k_shear), ((idx[1:, :-1], idx[:-1, 1:]), k_shear),
                      ((idx[:-2, :], idx[2:, :]), k_bend), ((idx[:, :-2], idx[:, 2:]), k_bend)]:
        p = np.stack([a.ravel(), b.ravel()], 1)
        pairs.append(p)
        ks.append(np.full(len(p), k))
    springs = np.concatenate(pairs)
    rest = np.linalg.norm(pos[springs[:, 1]] - pos[springs[:, 0]], axis=1)
    return ClothState(pos, np.zeros_like(pos), TriMesh(pos.copy(), tris), springs, rest,
                      np.concatenate(ks), total_mass / (n * m), damping, (n, m))


def spring_forces(state: ClothState, positions: np.ndarray | None = None) -> np.ndarray:
    x = state.positions if positions is None else positions
    a, b = state.springs[:, 0], state.springs[:, 1]
    d = x[b] - x[a]
    length = np.linalg.norm(d, axis=1)
    f = (state.stiffness * (length - state.rest_lengths) / np.maximum(length, 1e-12))[:, None] * d
    out = np.zeros_like(x)
    np.add.at(out, a, f)
    np.add.at(out, b, -f)
    return out


@dataclass
class CollisionReport:
    inside: int = 0                  # particles with phi < offset in the first round
    queries: int = 0                 # SDF points evaluated by this pass
    reprojection_queries: int = 0    # queries beyond N_P + 3*inside
    rounds: int = 0
    min_phi: float = np.inf          # smallest distance after the pass
    t_sdf: float = 0.0               # seconds spent in SDF queries


def resolve_collisions(positions: np.ndarray, velocities: np.ndarray | None, posed, offset: float,
                       max_iter: int = 3) -> tuple[np.ndarray, np.ndarray | None, CollisionReport]:
    """Push particles with phi < offset out to phi = offset.

    One batched query over all particles, then per inside particle a forward
    difference gradient (3 more queries) and a move along it. Moved particles
    are re-queried; those still below 0.9*offset get up to max_iter - 1 more
    projections. Inward normal velocity of moved particles is removed.
    """
    x = np.array(positions, float)
    v = None if velocities is None else np.array(velocities, float)
    rep = CollisionReport()
    t0 = time.perf_counter()
    phi = posed.query_batch(x)
    rep.queries += len(x)
    idx = np.flatnonzero(phi < offset)
    rep.inside = len(idx)
    final = phi.copy()
    cur = phi[idx]
    for it in range(max_iter):
        if len(idx) == 0:
            break
        rep.rounds += 1
        g = posed.gradient_batch(x[idx], cur)
        rep.queries += 3 * len(idx)
        norm = np.linalg.norm(g, axis=1, keepdims=True)
        nrm = np.where(norm > 1e-12, g / np.maximum(norm, 1e-12), [0.0, 1.0, 0.0])
        x[idx] += (offset - cur)[:, None] * nrm
        if v is not None:
            vn = np.einsum("ij,ij->i", v[idx], nrm)
            v[idx] -= np.minimum(vn, 0.0)[:, None] * nrm
        cur = posed.query_batch(x[idx])
        rep.queries += len(idx)
        final[idx] = cur
        keep = cur < 0.9 * offset
        idx, cur = idx[keep], cur[keep]
    rep.t_sdf = time.perf_counter() - t0
    rep.reprojection_queries = rep.queries - len(x) - 3 * rep.inside
    rep.min_phi = float(final.min()) if len(final) else np.inf
    return x, v, rep


def step(state: ClothState, posed, dt: float, *, gravity=(0.0, -9.81, 0.0), offset: float | None = None,
         max_iter: int = 3, pinned: np.ndarray | None = None) -> tuple[ClothState, CollisionReport]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    acc = spring_forces(state) / state.mass + np.asarray(gravity, float)
    v = (state.velocities + dt * acc) * max(0.0, 1.0 - state.damping * dt)
    if pinned is not None:
        v[pinned] = 0.0
    x = state.positions + dt * v
    if posed is not None:
        x, v, rep = resolve_collisions(x, v, posed, offset, max_iter)
    else:
        rep = CollisionReport()
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise SimulationError(f"non-finite cloth state (dt={dt}); reduce the time step or stiffness")
    return replace(state, positions=x, velocities=v), rep


# ----------------------------------------------------------------------------
# scenes

@dataclass
class SceneConfig:
    resolution: tuple[int, int] = (64, 64)
    size: tuple[float, float] = (1.4, 1.0)
    origin: tuple[float, float, float] = (-0.25, 0.2, -0.5)
    k_struct: float = 10.0
    k_shear: float = 3.0
    k_bend: float = 1.0
    total_mass: float = 0.5
    damping: float = 0.5
    dt: float = 1.0 / 60.0
    substeps: int = 16
    frames: int = 200
    gravity: tuple[float, float, float] = (0.0, -9.81, 0.0)
    offset_factor: float = 2e-3      # collision offset as a fraction of the avatar box side
    max_iter: int = 3
    pin_corners: bool = True
    keyframes: list = field(default_factory=list)   # [[frame, [state in degrees]], ...]

    def state_at(self, t_frame: float, n_dof: int) -> np.ndarray:
        """Joint state in radians, linear between keyframes, clamped at the ends."""
        if not self.keyframes:
            return np.zeros(n_dof)
        frames = np.array([k[0] for k in self.keyframes], float)
        states = np.array([k[1] for k in self.keyframes], float).reshape(len(frames), -1)
        if states.shape[1] != n_dof:
            raise ValueError(f"keyframes have {states.shape[1]} values, rig has {n_dof}")
        return np.radians([np.interp(t_frame, frames, states[:, d]) for d in range(n_dof)])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def load(cls, path) -> "SceneConfig":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown scene keys: {sorted(unknown)}")
        for k in ("resolution", "size", "origin", "gravity"):
            if k in data:
                data[k] = tuple(data[k])
        return cls(**data)


@dataclass
class SimReport:
    max_penetration: float = 0.0
    frames: int = 0
    steps: int = 0
    fallbacks: int = 0
    query_identity_ok: bool = True
    rows: list = field(default_factory=list)


def simulate(scene: SceneConfig, avatar, out_dir=None, write_every: int = 1) -> SimReport:
    """Run the scene; optionally write frame_XXXX.obj files and timing.csv."""
    cloth = make_cloth(*scene.resolution, scene.size, scene.origin, k_struct=scene.k_struct,
                       k_shear=scene.k_shear, k_bend=scene.k_bend, total_mass=scene.total_mass,
                       damping=scene.damping)
    offset = scene.offset_factor * avatar.box_side
    n, m = scene.resolution
    pinned = np.array([0, m - 1, (n - 1) * m, n * m - 1]) if scene.pin_corners else None
    h = scene.dt / scene.substeps
    n_dof = avatar.rig.n_dof
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    report = SimReport()
    avatar.stats.reset()
    for frame in range(scene.frames):
        t_sim = t_sdf = 0.0
        inside = 0
        for sub in range(scene.substeps):
            t0 = time.perf_counter()
            state = scene.state_at(frame + (sub + 1) / scene.substeps, n_dof)
            posed = avatar.pose_update(state)
            t_pose = time.perf_counter() - t0
            before = avatar.stats.queries
            cloth, rep = step(cloth, posed, h, gravity=scene.gravity, offset=offset, max_iter=scene.max_iter,
                             pinned=pinned)
            if avatar.stats.queries - before != cloth.n_particles + 3 * rep.inside + rep.reprojection_queries:
                report.query_identity_ok = False
            t_sim += time.perf_counter() - t0
            t_sdf += t_pose + rep.t_sdf
            inside += rep.inside
            report.max_penetration = max(report.max_penetration, -rep.min_phi)
            report.steps += 1
        report.frames += 1
        report.rows.append((frame, 1e3 * t_sim, 1e3 * t_sdf, 100.0 * t_sdf / max(t_sim, 1e-12), inside))
        if out is not None and frame % write_every == 0:
            write_obj(out / f"frame_{frame:04d}.obj", cloth.mesh())
    report.fallbacks = avatar.stats.fallbacks
    if out is not None:
        with open(out / "timing.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "T_sim_ms", "T_SDF_ms", "percentage", "inside"])
            for r in report.rows:
                w.writerow([r[0], f"{r[1]:.4f}", f"{r[2]:.4f}", f"{r[3]:.2f}", r[4]])
    log.info("simulated %d frames, max penetration %.3g", report.frames, report.max_penetration)
    return report

"""Project-level pipeline: config, on-disk layout and the stages the CLI runs.

Layout under ``work_dir``::

    rig.json                      copy of the rig (the avatar manifest points here)
    partition.prtn, partition.json
    regions/region_<j>.obj, region_<j>.weights
    joint_<j>/gt/pose_<p>.gsdf, pose_<p>.glbl, poses.json
    joint_<j>/dataset.jsds
    joint_<j>/{sdf,bool}.ssdf, {sdf,bool}_loss.csv
    avatar.json
"""

from __future__ import annotations

import json
import logging
import shutil
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import distance_field as df
from .blend import AvatarSdf, GridJointField, NetJointField
from .dataset import (BETA_FACTOR, EPS_FACTOR, JointDataset, JointGroundTruth, PoseRange, Region,
                      ReferenceBody, auto_partition, build_dataset, build_reference, derive_seed,
                      joint_range, pose_grid, posed_body)
from .mesh import TriMesh, read_obj, write_obj
from .partition import RegionPartition
from .rig import Rig, SkinnedMesh, pose_transforms, read_skin_weights, write_skin_weights
from .ssdf import SsdfModel, TrainConfig, effective_params, forward_batch, train, train_bool

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class TrainSettings:
    epochs: int = 10_000
    batch_size: int = 1024
    learning_rate: float = 1e-3
    sdf_layers: int = 5
    sdf_hidden: int = 8
    bool_layers: int = 4
    bool_hidden: int = 8


@dataclass
class ProjectConfig:
    rig: str
    mesh: str
    weights: str
    pose_ranges: dict = field(default_factory=dict)   # "joint" -> [[min, inc, max], ...] degrees
    resolution: int = 48
    threshold: float = 0.4
    margin: int = 3
    eps_factor: float = EPS_FACTOR
    beta_factor: float = BETA_FACTOR
    delta_factor: float = 0.2
    train: TrainSettings = field(default_factory=TrainSettings)
    seed: int = 0
    work_dir: str = "build"
    root: Path = field(default=Path("."), repr=False, compare=False)

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.root / p

    def validate(self) -> None:
        for name in ("rig", "mesh", "weights"):
            if not self.path(getattr(self, name)).is_file():
                raise ConfigError(f"{name} file not found: {self.path(getattr(self, name))}")
        if min(self.eps_factor, self.beta_factor, self.delta_factor) <= 0:
            raise ConfigError("eps, beta and delta factors must be positive")
        if self.resolution < 8:
            raise ConfigError("resolution must be at least 8")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("root")
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "ProjectConfig":
        path = Path(path)
        data = json.loads(path.read_text())
        unknown = set(data) - set(cls.__dataclass_fields__) - {"root"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data["train"] = TrainSettings(**data.get("train", {}))
        cfg = cls(**data, root=path.parent)
        cfg.validate()
        return cfg


class Project:
    def __init__(self, config: ProjectConfig):
        self.config = config
        self.work = config.path(config.work_dir)
        self.rig = Rig.load(config.path(config.rig))
        mesh = read_obj(config.path(config.mesh))
        W = read_skin_weights(config.path(config.weights), len(mesh.vertices), len(self.rig))
        self.skin = SkinnedMesh(mesh.vertices, mesh.triangles, W)
        self._ref: ReferenceBody | None = None
        self._regions: list[Region] | None = None

    # -- shared pieces ---------------------------------------------------------
    def joint_dir(self, j: int) -> Path:
        return self.work / f"joint_{j}"

    def pose_range(self, j: int) -> PoseRange:
        r = self.config.pose_ranges.get(str(j))
        return PoseRange(tuple(tuple(x) for x in r)) if r else joint_range(self.rig, j)

    def check_joint(self, j: int) -> int:
        if not 0 <= j < len(self.rig):
            raise ConfigError(f"joint {j} not in rig (0..{len(self.rig) - 1})")
        return j

    def reference(self) -> ReferenceBody:
        if self._ref is None:
            self._ref = build_reference(self.rig, self.skin, self.config.resolution)
        return self._ref

    def regions(self) -> list[Region]:
        if self._regions is None:
            d = self.work / "regions"
            if not (self.work / "partition.json").is_file():
                raise ConfigError("no partition found; run the partition command first")
            regs = []
            for j in range(len(self.rig)):
                m = read_obj(d / f"region_{j}.obj")
                regs.append(Region(j, m, read_skin_weights(d / f"region_{j}.weights", len(m.vertices),
                                                           len(self.rig))))
            self._regions = regs
        return self._regions

    def ground_truth(self, j: int) -> JointGroundTruth:
        states = np.stack([self.rig.with_joint(j, np.radians(t)) for t in pose_grid(self.pose_range(j))])
        return JointGroundTruth.build(self.reference(), self.regions(), j, self.config.resolution, states)

    # -- stages ----------------------------------------------------------------
    def partition(self) -> dict:
        self.work.mkdir(parents=True, exist_ok=True)
        ref = self.reference()
        states = {j: np.stack([self.rig.with_joint(j, np.radians(t)) for t in pose_grid(self.pose_range(j))])
                  for j in range(len(self.rig))}
        all_states = np.concatenate(list(states.values()))
        part, regions, margin = auto_partition(ref, self.config.threshold, self.config.margin,
                                               states=all_states)
        part.save(self.work / "partition.prtn")
        d = self.work / "regions"
        d.mkdir(exist_ok=True)
        for r in regions:
            write_obj(d / f"region_{r.joint}.obj", r.surface)
            write_skin_weights(d / f"region_{r.joint}.weights", r.weights)
        shutil.copyfile(self.config.path(self.config.rig), self.work / "rig.json")
        info = {"margin": margin, "threshold": self.config.threshold,
                "nodes_per_region": [int(m.sum()) for m in part.members]}
        (self.work / "partition.json").write_text(json.dumps(info, indent=2))
        self._regions = regions
        return info

    def load_partition(self) -> RegionPartition:
        return RegionPartition.load(self.work / "partition.prtn", len(self.rig))

    def gensdf(self, j: int) -> int:
        gt = self.ground_truth(self.check_joint(j))
        d = self.joint_dir(j) / "gt"
        d.mkdir(parents=True, exist_ok=True)
        poses = pose_grid(self.pose_range(j))
        for p, theta in enumerate(poses):
            sdf, labels, _ = gt.at_pose(theta)
            df.save_sdf(d / f"pose_{p:03d}.gsdf", sdf)
            df.save_labels(d / f"pose_{p:03d}.glbl", sdf.grid, labels)
        (d / "poses.json").write_text(json.dumps(poses.tolist()))
        return len(poses)

    def _gt_cache(self, j: int) -> dict:
        d = self.joint_dir(j) / "gt"
        if not (d / "poses.json").is_file():
            return {}
        poses = json.loads((d / "poses.json").read_text())
        cache = {}
        for p, theta in enumerate(poses):
            _, labels = df.load_labels(d / f"pose_{p:03d}.glbl")
            cache[tuple(float(t) for t in theta)] = (df.load_sdf(d / f"pose_{p:03d}.gsdf"), labels)
        return cache

    def dataset(self, j: int) -> JointDataset:
        gt = self.ground_truth(self.check_joint(j))
        ds = build_dataset(gt, self.pose_range(j), seed=derive_seed(self.config.seed, "dataset"),
                           eps_factor=self.config.eps_factor, beta_factor=self.config.beta_factor,
                           cache=self._gt_cache(j))
        self.joint_dir(j).mkdir(parents=True, exist_ok=True)
        ds.save(self.joint_dir(j) / "dataset.jsds")
        return ds

    def train(self, j: int, net: str = "sdf") -> tuple[SsdfModel, list]:
        self.check_joint(j)
        path = self.joint_dir(j) / "dataset.jsds"
        if not path.is_file():
            raise ConfigError(f"no dataset for joint {j}; run the dataset command first")
        ds = JointDataset.load(path)
        t = self.config.train
        cfg = TrainConfig(learning_rate=t.learning_rate, epochs=t.epochs, batch_size=t.batch_size,
                          delta_factor=self.config.delta_factor, seed=derive_seed(self.config.seed, "train", j, net))
        if net == "sdf":
            model, hist = train(ds, t.sdf_layers, t.sdf_hidden, cfg)
        elif net == "bool":
            model, hist = train_bool(ds, t.bool_layers, t.bool_hidden, cfg)
        else:
            raise ConfigError(f"unknown network kind {net!r}")
        model.save(self.joint_dir(j) / f"{net}.ssdf")
        hist.to_csv(self.joint_dir(j) / f"{net}_loss.csv")
        self.write_manifest()
        return model, hist

    def write_manifest(self) -> Path:
        bundles = [(j, f"joint_{j}/sdf.ssdf", f"joint_{j}/bool.ssdf") for j in range(len(self.rig))
                   if (self.joint_dir(j) / "sdf.ssdf").is_file() and (self.joint_dir(j) / "bool.ssdf").is_file()]
        data = {"rig": "rig.json", "h_fd": None,
                "joints": [{"joint": j, "sdf": s, "bool": b} for j, s, b in bundles]}
        path = self.work / "avatar.json"
        path.write_text(json.dumps(data, indent=2))
        return path

    def avatar(self, oracle_state=None) -> AvatarSdf:
        """Trained avatar, or with ``oracle_state`` a grid-backed one built
        from the ground truth of that full state."""
        if oracle_state is None:
            path = self.work / "avatar.json"
            if not path.is_file() or not json.loads(path.read_text())["joints"]:
                raise ConfigError("no trained joints; run the train command for sdf and bool first")
            return AvatarSdf.load_manifest(path)
        fields = []
        for j in range(len(self.rig)):
            sdf, labels, _ = self.ground_truth(j).at_state(oracle_state)
            fields.append(GridJointField(j, (sdf, labels)))
        return AvatarSdf(self.rig, fields)

    def state_from_degrees(self, pose_deg) -> np.ndarray:
        if pose_deg is None:
            return self.rig.rest_state()
        return self.rig.check_state(np.radians(np.asarray(pose_deg, float)))

    def body_ground_truth(self, state) -> df.GridSdf:
        body = posed_body(self.reference(), pose_transforms(self.rig, state))
        lo, hi = body.bounds()
        return df.mesh_to_sdf(body, df.Grid.cube_around(lo, hi, self.config.resolution, pad=0.1))

    def evaluate(self, pose_deg=None, oracle: bool = False) -> dict:
        """Band errors |phi - phi_gt| over |phi_gt| < delta, per joint and for
        the blended body."""
        state = self.state_from_degrees(pose_deg)
        avatar = self.avatar(state if oracle else None)
        report = {"pose_deg": np.degrees(state).tolist(), "mode": "oracle" if oracle else "learned", "joints": []}
        if not oracle:
            for f in avatar.fields:
                gt = self.ground_truth(f.joint)
                sdf, labels, _ = gt.at_state(state)
                X = sdf.grid.nodes().reshape(-1, 3)
                s = sdf.values.ravel().astype(float)
                band = np.abs(s) < self.config.delta_factor * sdf.box_side
                theta = state[self.rig.joint_slice(f.joint)]
                err = np.abs(forward_batch(effective_params(f.sdf_net, theta), X[band]) - s[band])
                pred = forward_batch(effective_params(f.bool_net, theta), X) > 0
                report["joints"].append({"joint": f.joint, "L_G": sdf.box_side, "band_mean": float(err.mean()),
                                         "band_max": float(err.max()),
                                         "bool_accuracy": float(np.mean(pred == (labels.ravel() > 0)))})
        gt = self.body_ground_truth(state)
        X = gt.grid.nodes().reshape(-1, 3)
        s = gt.values.ravel().astype(float)
        band = np.abs(s) < self.config.delta_factor * avatar.box_side
        avatar.stats.reset()
        phi = avatar.pose_update(state).query_batch(X[band])
        err = np.abs(phi - s[band])
        report["body"] = {"h": gt.spacing, "band_mean": float(err.mean()), "band_max": float(err.max()),
                          "fallbacks": avatar.stats.fallbacks, "nodes": int(band.sum())}
        return report

    def mesh(self, pose_deg=None, which: str = "both", out_dir=None) -> list[Path]:
        state = self.state_from_degrees(pose_deg)
        out = Path(out_dir) if out_dir else self.work / "meshes"
        out.mkdir(parents=True, exist_ok=True)
        gt = self.body_ground_truth(state)
        written = []
        if which in ("gt", "both"):
            written.append(out / "gt.obj")
            write_obj(written[-1], df.marching_cubes(gt, 0.0))
        if which in ("learned", "both"):
            posed = self.avatar().pose_update(state)
            vals = posed.query_batch(gt.grid.nodes().reshape(-1, 3)).reshape(gt.grid.dims)
            written.append(out / "learned.obj")
            write_obj(written[-1], df.marching_cubes(df.GridSdf(gt.grid, vals.astype(np.float32)), 0.0))
        if which not in ("gt", "learned", "both"):
            raise ConfigError(f"unknown mesh kind {which!r}")
        return written


def mesh_grid_file(path, out, iso: float = 0.0) -> TriMesh:
    mesh = df.marching_cubes(df.load_sdf(path), iso)
    write_obj(out, mesh)
    return mesh

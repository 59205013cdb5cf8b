"""Command line entry point: ``jointsdf <command> ...``.

Every command takes ``-c project.json``; ``--seed``, ``--resolution`` and
``--epochs`` override the config. Failures print a one-line JSON error on
stderr and exit with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import shapes
from .cloth import SceneConfig, simulate
from .mesh import TriMesh, write_obj
from .pipeline import Project, ProjectConfig, mesh_grid_file
from .rig import write_skin_weights


def _project(args) -> Project:
    cfg = ProjectConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.resolution is not None:
        cfg.resolution = args.resolution
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    cfg.validate()
    return Project(cfg)


def _joints(project: Project, joint) -> list[int]:
    return [project.check_joint(joint)] if joint is not None else list(range(len(project.rig)))


def cmd_init_demo(args) -> dict:
    """Write the bundled two-joint arm, a project config and a cloth scene."""
    out = Path(args.directory)
    out.mkdir(parents=True, exist_ok=True)
    rig, skin = shapes.two_joint_arm()
    rig.save(out / "rig.json")
    write_obj(out / "arm.obj", TriMesh(skin.rest_vertices, skin.triangles))
    write_skin_weights(out / "arm.weights", skin.weights)
    ProjectConfig("rig.json", "arm.obj", "arm.weights", root=out).save(out / "project.json")
    SceneConfig(keyframes=[[0, [0.0, 0.0]], [40, [0.0, 0.0]], [120, [10.0, -90.0]],
                           [200, [-10.0, -30.0]]]).save(out / "scene.json")
    return {"written": sorted(p.name for p in out.iterdir())}


def cmd_partition(args) -> dict:
    return _project(args).partition()


def cmd_gensdf(args) -> dict:
    p = _project(args)
    return {f"joint_{j}": p.gensdf(j) for j in _joints(p, args.joint)}


def cmd_dataset(args) -> dict:
    p = _project(args)
    return {f"joint_{j}": len(p.dataset(j)) for j in _joints(p, args.joint)}


def cmd_train(args) -> dict:
    p = _project(args)
    nets = ["sdf", "bool"] if args.net == "both" else [args.net]
    out = {}
    for j in _joints(p, args.joint):
        for net in nets:
            _, hist = p.train(j, net)
            out[f"joint_{j}/{net}"] = {"train": hist.train[-1], "val": hist.val[-1]}
    return out


def cmd_eval(args) -> dict:
    return _project(args).evaluate(args.pose, oracle=args.oracle)


def cmd_mesh(args) -> dict:
    if args.grid:
        out = Path(args.out or Path(args.grid).with_suffix(".obj"))
        mesh = mesh_grid_file(args.grid, out, args.iso)
        return {"written": [str(out)], "triangles": len(mesh.triangles)}
    paths = _project(args).mesh(args.pose, args.which, args.out)
    return {"written": [str(p) for p in paths]}


def cmd_sim(args) -> dict:
    p = _project(args)
    scene = SceneConfig.load(args.scene)
    if args.frames is not None:
        scene.frames = args.frames
    out = Path(args.out) if args.out else p.work / "sim"
    rep = simulate(scene, p.avatar(), out)
    return {"frames": rep.frames, "max_penetration": rep.max_penetration,
            "offset": scene.offset_factor * p.avatar().box_side, "fallbacks": rep.fallbacks,
            "query_identity_ok": rep.query_identity_ok, "timing": str(out / "timing.csv")}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="jointsdf", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, project=True, joint=False):
        sp = sub.add_parser(name, help=help_)
        if project:
            sp.add_argument("-c", "--config", default="project.json")
            sp.add_argument("--seed", type=int)
            sp.add_argument("--resolution", type=int)
            sp.add_argument("--epochs", type=int)
        if joint:
            sp.add_argument("--joint", type=int, help="default: every joint")
        sp.set_defaults(func=fn)
        return sp

    sp = add("init-demo", cmd_init_demo, "write the bundled two-joint arm project", project=False)
    sp.add_argument("directory")
    add("partition", cmd_partition, "build overlapping joint regions")
    add("gensdf", cmd_gensdf, "ground-truth region SDFs and labels per training pose", joint=True)
    add("dataset", cmd_dataset, "sample training data", joint=True)
    sp = add("train", cmd_train, "train SDF and/or boolean networks", joint=True)
    sp.add_argument("--net", choices=["sdf", "bool", "both"], default="both")
    sp = add("eval", cmd_eval, "band error against ground truth at a pose")
    sp.add_argument("--pose", type=float, nargs="+", help="full joint state in degrees (default: rest)")
    sp.add_argument("--oracle", action="store_true", help="use ground-truth grids instead of networks")
    sp = add("mesh", cmd_mesh, "zero level set as OBJ")
    sp.add_argument("--pose", type=float, nargs="+")
    sp.add_argument("--which", choices=["learned", "gt", "both"], default="both")
    sp.add_argument("--grid", help="mesh a grid SDF file instead of the project")
    sp.add_argument("--iso", type=float, default=0.0)
    sp.add_argument("--out")
    sp = add("sim", cmd_sim, "cloth over the animated avatar")
    sp.add_argument("--scene", default="scene.json")
    sp.add_argument("--frames", type=int)
    sp.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except Exception as exc:  # noqa: BLE001 - every failure becomes a structured message
        print(json.dumps({"error": type(exc).__name__, "command": args.command, "message": str(exc)}),
              file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, default=float))
    return 0


if __name__ == "__main__":
    sys.exit(main())

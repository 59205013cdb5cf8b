import csv

import numpy as np
import pytest

from jointsdf import cloth
from jointsdf.blend import AvatarSdf, GridJointField
from jointsdf.cloth import SceneConfig, make_cloth, resolve_collisions, step
from jointsdf.distance_field import Grid, GridSdf
from jointsdf.mesh import read_obj
from jointsdf.rig import Joint, Rig

from oracles import sphere_sdf

R = 0.3


@pytest.fixture(scope="module")
def sphere():
    n = 61
    grid = Grid(np.full(3, -1.5), 3.0 / (n - 1), (n, n, n))
    sdf = GridSdf(grid, sphere_sdf(grid.nodes(), np.zeros(3), R))
    rig = Rig([Joint(0, None, [0, 0, 0], [[0.0, 0.0, 1.0]])])
    return AvatarSdf(rig, [GridJointField(0, (sdf, np.ones(grid.dims, np.int8)))])


def test_equilibrium_without_gravity():
    c = make_cloth(5, 4, (1.0, 0.8))
    out, _ = step(c, None, 0.01, gravity=(0, 0, 0))
    assert np.array_equal(out.positions, c.positions) and not out.velocities.any()


def test_free_fall_one_step():
    c = make_cloth(2, 2, damping=0.0)
    g, dt = np.array([0.0, -9.81, 0.0]), 0.01
    out, _ = step(c, None, dt, gravity=g)
    assert np.allclose(out.velocities[0], g * dt)
    assert np.allclose(out.positions[0], c.positions[0] + dt * g * dt)


def test_cloth_validation():
    with pytest.raises(ValueError):
        make_cloth(1, 5)
    c = make_cloth(3, 3)
    with pytest.raises(ValueError):
        step(c, None, 0.0)
    bad = make_cloth(3, 3)
    bad.velocities[0] = np.nan
    with pytest.raises(cloth.SimulationError):
        step(bad, None, 0.01)


def test_spring_count_and_rest_lengths():
    c = make_cloth(4, 3, (0.3, 0.2))
    # structural, shear and bend springs
    assert len(c.springs) == (3 * 3 + 4 * 2) + 2 * (3 * 2) + (2 * 3 + 4 * 1)
    assert np.all(c.rest_lengths > 0)
    assert not spring_force_nonzero(c)


def spring_force_nonzero(c):
    return np.abs(cloth.spring_forces(c)).max() > 1e-12


def test_all_outside_is_a_single_query_round(sphere):
    posed = sphere.pose_update([0.0])
    x = np.random.default_rng(0).uniform(0.5, 0.9, (30, 3))
    sphere.stats.reset()
    out, _, rep = resolve_collisions(x, None, posed, 0.01)
    assert np.array_equal(out, x)
    assert sphere.stats.calls == 1 and sphere.stats.queries == 30 and rep.inside == 0


def test_particle_at_center_is_pushed_to_offset(sphere):
    posed = sphere.pose_update([0.0])
    offset = 2e-3 * sphere.box_side
    out, _, rep = resolve_collisions(np.zeros((1, 3)), None, posed, offset)
    assert rep.rounds <= 3
    assert abs(np.linalg.norm(out[0]) - (R + offset)) <= 5e-2 * R


def test_particle_exactly_at_offset_is_untouched(sphere):
    posed = sphere.pose_update([0.0])
    x = np.array([[0.0, 0.31, 0.0]])
    offset = float(posed.query_batch(x)[0])
    out, _, rep = resolve_collisions(x, np.ones((1, 3)), posed, offset)
    assert np.array_equal(out, x) and rep.inside == 0


def test_inward_velocity_is_removed(sphere):
    posed = sphere.pose_update([0.0])
    x = np.array([[0.0, 0.29, 0.0]])
    v = np.array([[0.5, -2.0, 0.0]])
    _, v2, rep = resolve_collisions(x, v, posed, 0.005)
    assert rep.rounds == 1
    n = posed.gradient(x[0])
    n /= np.linalg.norm(n)
    assert abs(v2[0] @ n) < 1e-12
    assert np.allclose(v2[0], v[0] - (v[0] @ n) * n)
    _, v3, _ = resolve_collisions(x, np.array([[0.5, 2.0, 0.0]]), posed, 0.005)
    assert np.array_equal(v3, [[0.5, 2.0, 0.0]])      # outward motion is kept


def test_query_accounting(sphere):
    posed = sphere.pose_update([0.0])
    rng = np.random.default_rng(1)
    x = rng.uniform(-0.5, 0.5, (400, 3))
    sphere.stats.reset()
    _, _, rep = resolve_collisions(x, None, posed, 0.006)
    assert rep.inside > 0
    assert sphere.stats.queries == rep.queries == 400 + 3 * rep.inside + rep.reprojection_queries
    assert rep.reprojection_queries >= rep.inside      # each moved particle is re-checked at least once


def test_hanging_cloth_over_sphere(sphere):
    c = make_cloth(16, 16, (1.0, 1.0), (-0.5, R + 0.05, -0.5), k_struct=10, k_shear=3, k_bend=1)
    offset = 2e-3 * sphere.box_side
    posed = sphere.pose_update([0.0])
    for _ in range(200):
        sphere.stats.reset()
        c, rep = step(c, posed, 1 / 240, offset=offset)
        assert sphere.stats.queries == c.n_particles + 3 * rep.inside + rep.reprojection_queries
        assert posed.query_batch(c.positions).min() >= -2e-3 * sphere.box_side
    # the sheet has draped: its middle rests on the sphere, its edges hang lower
    assert c.positions[:, 1].min() < 0.0


def test_scene_keyframes_and_file(tmp_path):
    sc = SceneConfig(keyframes=[[0, [0.0, 0.0]], [10, [20.0, -90.0]]])
    assert np.allclose(sc.state_at(5, 2), np.radians([10.0, -45.0]))
    assert np.allclose(sc.state_at(-3, 2), 0.0) and np.allclose(sc.state_at(99, 2), np.radians([20, -90]))
    with pytest.raises(ValueError):
        sc.state_at(1, 3)
    sc.save(tmp_path / "s.json")
    assert SceneConfig.load(tmp_path / "s.json") == sc
    (tmp_path / "bad.json").write_text('{"speed": 3}')
    with pytest.raises(ValueError):
        SceneConfig.load(tmp_path / "bad.json")


def test_simulate_writes_frames_and_timing(sphere, tmp_path):
    sc = SceneConfig(resolution=(8, 8), size=(0.8, 0.8), origin=(-0.4, R + 0.02, -0.4), frames=3, substeps=4)
    rep = cloth.simulate(sc, sphere, tmp_path)
    assert rep.frames == 3 and rep.steps == 12 and rep.query_identity_ok and rep.fallbacks == 0
    assert len(read_obj(tmp_path / "frame_0002.obj").vertices) == 64
    rows = list(csv.reader(open(tmp_path / "timing.csv")))
    assert rows[0] == ["frame", "T_sim_ms", "T_SDF_ms", "percentage", "inside"] and len(rows) == 4
    assert all(0 <= float(r[3]) <= 100 for r in rows[1:])

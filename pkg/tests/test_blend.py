import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointsdf import ssdf
from jointsdf.blend import AvatarSdf, GridJointField, NetJointField
from jointsdf.distance_field import Grid, GridSdf
from jointsdf.rig import Joint, Rig, joint_local_transform
from jointsdf.ssdf import SsdfModel

from oracles import box_sdf, loop_forward, sphere_sdf

Z = [[0.0, 0.0, 1.0]]


def net_pair(rng, joint, dof=1, box_side=1.0, center=(0, 0, 0), scale=0.4):
    def make(kind, nl, nh):
        n = ssdf.parameter_counts(nl, nh, dof)[1]
        return SsdfModel(nl, nh, dof, rng.normal(0, scale, n).astype(np.float32), box_side,
                         np.asarray(center, float), kind, joint)
    return make(ssdf.SDF, 5, 8), make(ssdf.BOOL, 4, 8)


def two_joint_rig():
    return Rig([Joint(0, None, [0, 0, 0], Z), Joint(1, 0, [0.5, 0, 0], Z)])


def sphere_avatar(r=0.3, n=49):
    grid = Grid(np.full(3, -1.0), 2.0 / (n - 1), (n, n, n))
    sdf = GridSdf(grid, sphere_sdf(grid.nodes(), np.zeros(3), r))
    rig = Rig([Joint(0, None, [0, 0, 0], Z)])
    return AvatarSdf(rig, [GridJointField(0, (sdf, np.ones(grid.dims, np.int8)))]), grid


def test_single_joint_query_is_the_net_through_its_frame():
    rng = np.random.default_rng(0)
    rig = two_joint_rig()
    sdf, bnet = net_pair(rng, 1, box_side=4.0)
    av = AvatarSdf(rig, [NetJointField(sdf, bnet)])
    state = np.array([0.4, -0.3])
    posed = av.pose_update(state)
    X = rng.uniform(-0.5, 0.5, (50, 3))
    Ti = joint_local_transform(rig, state, 1)
    expect = ssdf.forward_batch(ssdf.effective_params(sdf, state[1:]), Ti.apply(X))
    assert np.allclose(posed.query_batch(X), expect, atol=1e-6)


def test_pose_update_is_deterministic_and_counted():
    rng = np.random.default_rng(1)
    rig = two_joint_rig()
    av = AvatarSdf(rig, [NetJointField(*net_pair(rng, 0)), NetJointField(*net_pair(rng, 1))])
    X = rng.uniform(-0.4, 0.4, (200, 3))
    a = av.pose_update([0.2, 0.7]).query_batch(X)
    b = av.pose_update([0.2, 0.7]).query_batch(X)
    assert np.array_equal(a, b)
    av.stats.reset()
    posed = av.pose_update([0.1, 0.1])
    assert av.stats.param_updates == 4          # two nets per joint, once per update
    for _ in range(5):
        posed.query_batch(X)
    assert av.stats.param_updates == 4
    assert av.stats.queries == 1000 and av.stats.calls == 5


def test_rest_pose_uses_constant_terms():
    rng = np.random.default_rng(2)
    rig = two_joint_rig()
    sdf, bnet = net_pair(rng, 1, box_side=4.0)
    const = SsdfModel(5, 8, 1, sdf.params.copy(), sdf.box_side, sdf.center, sdf.kind, 1)
    for W, c in const.slabs():
        W[1:] = 99.0
        c[1:] = 99.0
    X = rng.uniform(-0.4, 0.4, (64, 3))
    a = AvatarSdf(rig, [NetJointField(sdf, bnet)]).pose_update(rig.rest_state()).query_batch(X)
    b = AvatarSdf(rig, [NetJointField(const, bnet)]).pose_update(rig.rest_state()).query_batch(X)
    assert np.array_equal(a, b)


def loop_query(av, state, x):
    vals, flags = [], []
    for f in av.fields:
        th = state[av.rig.joint_slice(f.joint)]
        y = joint_local_transform(av.rig, state, f.joint).apply(x)
        s, b = f.sdf_net, f.bool_net
        vals.append(loop_forward(s.slabs(), th, y, s.center, s.in_scale, s.out_scale))
        flags.append(loop_forward(b.slabs(), th, y, b.center, b.in_scale, b.out_scale) > 0)
    claimed = [v for v, ok in zip(vals, flags) if ok]
    return min(claimed) if claimed else min(vals)


def test_query_batch_matches_loop_oracle():
    rng = np.random.default_rng(3)
    rig = two_joint_rig()
    av = AvatarSdf(rig, [NetJointField(*net_pair(rng, 0, box_side=6.0, scale=0.3)),
                         NetJointField(*net_pair(rng, 1, box_side=6.0, center=(0.2, 0, 0), scale=0.3))])
    state = np.array([0.3, -0.8])
    posed = av.pose_update(state)
    X = rng.uniform(-0.8, 0.8, (4096, 3))
    batch = posed.query_batch(X)
    sub = np.arange(0, 4096, 8)
    ref = np.array([loop_query(av, state, X[i]) for i in sub])
    assert np.abs(batch[sub] - ref).max() <= 1e-6
    # float32 BLAS kernels depend on the batch shape, so equality is to rounding
    assert abs(posed.query(X[5]) - batch[5]) <= 1e-6
    assert np.abs(np.concatenate([posed.query_batch(X[:100]), posed.query_batch(X[100:])]) - batch).max() <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_min_over_claimed_joints(seed):
    rng = np.random.default_rng(seed)
    rig = two_joint_rig()
    av = AvatarSdf(rig, [NetJointField(*net_pair(rng, 0, box_side=3.0)),
                         NetJointField(*net_pair(rng, 1, box_side=3.0))])
    posed = av.pose_update(rng.uniform(-1, 1, 2))
    X = rng.uniform(-1, 1, (300, 3))
    phis, flags = posed.evaluate_joints(X)
    phi, fell_back = posed.query_batch(X, return_flags=True)
    for i in range(2):
        assert np.all(phi[flags[i]] <= phis[i, flags[i]])
    assert np.array_equal(fell_back, ~flags.any(0))
    assert np.array_equal(phi[fell_back], phis[:, fell_back].min(0))


def test_fallback_is_counted():
    rng = np.random.default_rng(4)
    rig = Rig([Joint(0, None, [0, 0, 0], Z)])
    sdf, bnet = net_pair(rng, 0, box_side=4.0)
    bnet.params[:] = 0
    bnet.slabs()[-1][1][0, 0] = -1.0           # never claims anything
    av = AvatarSdf(rig, [NetJointField(sdf, bnet)])
    posed = av.pose_update([0.0])
    phi = posed.query_batch(np.zeros((7, 3)))
    assert av.stats.fallbacks == 7 and np.all(np.isfinite(phi))


def test_points_outside_every_box_are_claimed_and_positive():
    av, grid = sphere_avatar()
    posed = av.pose_update([0.0])
    X = np.array([[3.0, 0, 0], [0, -2.5, 1.0], [2.0, 2.0, 2.0]])
    phis, flags = posed.evaluate_joints(X)
    assert flags.all()
    assert np.allclose(posed.query_batch(X), np.linalg.norm(X, axis=1) - 0.3, atol=2 * grid.spacing)


def test_net_field_extrapolates_outside_its_box():
    rng = np.random.default_rng(5)
    rig = Rig([Joint(0, None, [0, 0, 0], Z)])
    av = AvatarSdf(rig, [NetJointField(*net_pair(rng, 0, box_side=1.0))])
    posed = av.pose_update([0.0])
    far = np.array([[10.0, 0.0, 0.0]])
    phi, flags = posed.evaluate_joints(far)
    assert flags.all() and phi[0, 0] > 9.0


def test_gradient_exact_in_linear_region():
    rng = np.random.default_rng(6)
    rig = Rig([Joint(0, None, [0, 0, 0], Z)])
    sdf, bnet = net_pair(rng, 0, box_side=2.0)
    bnet.params[:] = 0
    bnet.slabs()[-1][1][0, 0] = 1.0
    av = AvatarSdf(rig, [NetJointField(sdf, bnet)])
    posed = av.pose_update([0.2])
    eff = ssdf.effective_params(sdf, [0.2], np.float64)
    done = 0
    for x in rng.uniform(-0.6, 0.6, (40, 3)):
        pats, J = [], None
        for p in [x] + [x + av.h_fd * e for e in np.eye(3)]:
            y, M, pat = (p - eff.center) / eff.in_scale, np.eye(3) / eff.in_scale, []
            for n, (W, c) in enumerate(zip(eff.weights, eff.biases)):
                z = W @ y + c
                M = W @ M
                if n < len(eff.weights) - 1:
                    y, M = np.maximum(z, 0), M * (z > 0)[:, None]
                    pat.append(z > 0)
            pats.append(np.concatenate(pat))
            J = J if J is not None else M[0] * eff.out_scale
        if all(np.array_equal(pats[0], q) for q in pats[1:]):
            assert np.abs(posed.gradient(x) - J).max() < 1e-5 * max(1, np.abs(J).max()) * 10
            done += 1
    assert done > 10


def test_grid_avatar_gradient_near_planar_face():
    grid = Grid(np.full(3, -1.0), 2.0 / 40, (41, 41, 41))
    sdf = GridSdf(grid, box_sdf(grid.nodes(), [-0.5, -0.4, -0.3], [0.5, 0.4, 0.3]))
    rig = Rig([Joint(0, None, [0, 0, 0], Z)])
    av = AvatarSdf(rig, [GridJointField(0, (sdf, np.ones(grid.dims, np.int8)))])
    posed = av.pose_update([0.0])
    for x, n in [([0.52, 0.05, 0.02], [1, 0, 0]), ([0.1, -0.43, 0.0], [0, -1, 0]), ([-0.2, 0.1, 0.28], [0, 0, 1])]:
        assert np.abs(posed.gradient(x) - n).max() < 1e-2


def test_sphere_projection_and_contraction():
    av, grid = sphere_avatar(0.3)
    posed = av.pose_update([0.0])
    x = np.array([0.6, 0.0, 0.0])
    assert np.linalg.norm(posed.project(x)) == pytest.approx(0.3, abs=2e-2)
    on = np.array([0.3, 0.0, 0.0])
    assert abs(posed.query(on)) < 1e-6
    assert np.linalg.norm(posed.project(on) - on) < 1e-5
    rng = np.random.default_rng(7)
    d = rng.normal(size=(500, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    X = d * (0.3 + rng.uniform(-0.05, 0.05, (500, 1)) * av.box_side)
    phi = posed.query_batch(X)
    far = np.abs(phi) > 2 * grid.spacing      # the trilinear floor dominates closer in
    after = posed.query_batch(posed.project_batch(X))
    assert np.all(np.abs(after[far]) <= 0.2 * np.abs(phi[far]))


def test_manifest_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    rig = two_joint_rig()
    pairs = [net_pair(rng, 0), net_pair(rng, 1)]
    av = AvatarSdf(rig, [NetJointField(*p) for p in pairs], h_fd=2e-3)
    rig.save(tmp_path / "rig.json")
    bundles = []
    for j, (s, b) in enumerate(pairs):
        s.save(tmp_path / f"j{j}.sdf.ssdf")
        b.save(tmp_path / f"j{j}.bool.ssdf")
        bundles.append((j, f"j{j}.sdf.ssdf", f"j{j}.bool.ssdf"))
    av.save_manifest(tmp_path / "avatar.json", "rig.json", bundles)
    back = AvatarSdf.load_manifest(tmp_path / "avatar.json")
    X = rng.uniform(-0.4, 0.4, (100, 3))
    assert back.h_fd == 2e-3
    assert np.array_equal(back.pose_update([0.3, 0.2]).query_batch(X), av.pose_update([0.3, 0.2]).query_batch(X))


def test_avatar_validation():
    with pytest.raises(ValueError):
        AvatarSdf(two_joint_rig(), [])
    rng = np.random.default_rng(9)
    with pytest.raises(ValueError):
        AvatarSdf(Rig([Joint(0, None, [0, 0, 0], Z)]), [NetJointField(*net_pair(rng, 3))])
    s, _ = net_pair(rng, 0)
    _, b = net_pair(rng, 1)
    with pytest.raises(ValueError):
        NetJointField(s, b)

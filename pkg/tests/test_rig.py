import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointsdf.rig import (Joint, Rig, RigError, RigidTransform, SkinnedMesh, axis_rotation, joint_local_transform,
                          lbs_deform, pose_transforms, read_skin_weights, write_skin_weights)
from jointsdf.shapes import capsule_chain

Z = [0.0, 0.0, 1.0]


def chain(n=3, dof=1):
    axes = [[1, 0, 0], [0, 1, 0], [0, 0, 1]][:dof]
    return Rig([Joint(i, None if i == 0 else i - 1, [float(i), 0, 0], axes) for i in range(n)])


def test_rest_pose_is_identity():
    rig = chain(4, dof=3)
    for T in pose_transforms(rig, rig.rest_state()):
        assert np.allclose(T.as_matrix(), np.eye(4))


def test_quarter_turn_about_z():
    rig = Rig([Joint(0, None, [0, 0, 0], [Z])])
    T = pose_transforms(rig, [np.pi / 2])[0]
    assert np.allclose(T.apply([1.0, 0, 0]), [0, 1, 0])
    assert np.allclose(T.translation, 0)


def test_child_inherits_parent_rotation():
    rig = Rig([Joint(0, None, [0, 0, 0], [Z]), Joint(1, 0, [1, 0, 0], [Z])])
    T0, T1 = pose_transforms(rig, [np.pi / 2, 0.0])
    # hand composition: child local is identity at zero angle
    assert np.allclose(T1.as_matrix(), T0.as_matrix())


def test_child_pivot_moves_with_parent():
    rig = Rig([Joint(0, None, [0, 0, 0], [Z]), Joint(1, 0, [1, 0, 0], [Z])])
    _, T1 = pose_transforms(rig, [np.pi / 2, np.pi / 2])
    # the point (2,0,0) goes to (1,1,0) under the child, then to (-1,1,0) under the parent
    assert np.allclose(T1.apply([2.0, 0, 0]), [-1.0, 1.0, 0])
    assert np.allclose(T1.apply([1.0, 0, 0]), [0.0, 1.0, 0])


def test_multi_axis_order_is_extrinsic_in_declared_order():
    rig = Rig([Joint(0, None, [0, 0, 0], [[1, 0, 0], [0, 1, 0], [0, 0, 1]])])
    a = [0.3, -0.5, 0.9]
    R = pose_transforms(rig, a)[0].rotation
    expect = axis_rotation(np.array(Z), a[2]) @ axis_rotation(np.array([0, 1.0, 0]), a[1]) \
        @ axis_rotation(np.array([1.0, 0, 0]), a[0])
    assert np.allclose(R, expect)


def test_validation_errors():
    with pytest.raises(RigError):
        Joint(0, None, [0, 0, 0], [[0, 0, 2.0]])
    with pytest.raises(RigError):
        Joint(1, 1, [0, 0, 0], [Z])
    with pytest.raises(RigError):
        Joint(0, None, [0, 0, 0], np.eye(3).tolist() + [Z])
    rig = chain(2)
    with pytest.raises(RigError):
        pose_transforms(rig, [0.0])
    with pytest.raises(RigError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]))


def test_state_slices_cover_without_overlap():
    rig = Rig([Joint(0, None, [0, 0, 0], [Z]), Joint(1, 0, [0, 0, 0], [Z, [1, 0, 0]]),
               Joint(2, 1, [0, 0, 0], np.eye(3))])
    state = np.arange(rig.n_dof, dtype=float)
    parts = rig.split(state)
    assert [len(p) for p in parts] == [1, 2, 3]
    assert np.array_equal(np.concatenate(parts), state)


def test_lbs_examples():
    verts = np.array([[1.0, 0, 0]])
    quarter = RigidTransform(axis_rotation(np.array(Z), np.pi / 2))
    ident = RigidTransform()
    assert np.allclose(lbs_deform(SkinnedMesh(verts, np.zeros((0, 3)), [[0.0, 1.0]]), [ident, quarter]), [0, 1, 0])
    half = lbs_deform(SkinnedMesh(verts, np.zeros((0, 3)), [[0.5, 0.5]]), [ident, quarter])
    assert np.allclose(half, [0.5, 0.5, 0])
    rig, skin = capsule_chain()
    out = lbs_deform(skin, pose_transforms(rig, rig.rest_state()))
    assert np.array_equal(out, skin.rest_vertices)


def test_lbs_rejects_missing_transform():
    skin = SkinnedMesh(np.zeros((1, 3)), np.zeros((0, 3)), [[0.0, 1.0]])
    with pytest.raises(RigError):
        lbs_deform(skin, [RigidTransform()])


def test_skin_weight_validation():
    with pytest.raises(RigError):
        SkinnedMesh(np.zeros((1, 3)), np.zeros((0, 3)), [[0.6, 0.6]])
    with pytest.raises(RigError):
        SkinnedMesh(np.zeros((1, 3)), [[0, 1, 2]], [[1.0]])


def test_local_transform_at_rest_and_root():
    rig = chain(3)
    for i in range(3):
        assert np.allclose(joint_local_transform(rig, rig.rest_state(), i).as_matrix(), np.eye(4))
    assert np.allclose(joint_local_transform(rig, [0.4, 0.2, 0.1], 0).as_matrix(), np.eye(4))
    with pytest.raises(IndexError):
        joint_local_transform(rig, rig.rest_state(), 3)


def test_local_transform_matches_hand_composition():
    rig = Rig([Joint(0, None, [0, 0, 0], [Z]), Joint(1, 0, [1, 0, 0], [Z]), Joint(2, 1, [2, 0, 0], [Z])])
    state = [0.3, -0.7, 1.1]
    # world transform of joint 1 written out by hand
    R0 = axis_rotation(np.array(Z), 0.3)
    R1 = axis_rotation(np.array(Z), -0.7)
    c1 = np.array([1.0, 0, 0])
    M = np.eye(4)
    M[:3, :3] = R0 @ R1
    M[:3, 3] = R0 @ (c1 - R1 @ c1)
    T2 = joint_local_transform(rig, state, 2)
    assert np.allclose(T2.as_matrix(), np.linalg.inv(M))
    # a point carried by the parent bone maps back to its rest position
    x_rest = np.array([1.5, 0.2, 0.0])
    x_world = (M @ np.r_[x_rest, 1.0])[:3]
    assert np.allclose(T2.apply(x_world), x_rest)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_local_transform_ignores_own_and_descendant_angles(a, b):
    rig = Rig([Joint(0, None, [0, 0, 0], [Z]), Joint(1, 0, [1, 0, 0], [Z, [0, 1, 0]]),
               Joint(2, 1, [2, 0, 0], [Z]), Joint(3, 0, [0, 1, 0], [[1, 0, 0]]), Joint(4, 2, [3, 0, 0], [Z])])
    sa, sb = np.array(a), np.array(a)
    # joint 2's ancestors are 0 and 1 (slots 0..2); perturb everything else
    sb[3:] = b[3:]
    T_a = joint_local_transform(rig, sa, 2)
    T_b = joint_local_transform(rig, sb, 2)
    assert np.allclose(T_a.as_matrix(), T_b.as_matrix(), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 1), st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_lbs_is_linear_in_transforms(lam, angles):
    rig, skin = capsule_chain()
    T_a = pose_transforms(rig, angles[:2])
    T_b = pose_transforms(rig, angles[2:])
    # blend of two transform sets (as affine maps, not necessarily rigid)
    Ra = np.stack([t.rotation for t in T_a])
    Rb = np.stack([t.rotation for t in T_b])
    ta = np.stack([t.translation for t in T_a])
    tb = np.stack([t.translation for t in T_b])
    R = lam * Ra + (1 - lam) * Rb
    t = lam * ta + (1 - lam) * tb
    X = skin.rest_vertices
    blended = np.einsum("vk,vka->va", skin.weights, np.einsum("kab,vb->vka", R, X) + t[None])
    expect = lam * lbs_deform(skin, T_a) + (1 - lam) * lbs_deform(skin, T_b)
    assert np.allclose(blended, expect)


def test_rig_and_weight_files_round_trip(tmp_path):
    rig, skin = capsule_chain(3)
    rig.save(tmp_path / "rig.json")
    back = Rig.load(tmp_path / "rig.json")
    assert len(back) == 3 and back[2].parent == 1
    assert np.array_equal(back[1].center, rig[1].center)
    write_skin_weights(tmp_path / "w.txt", skin.weights)
    W = read_skin_weights(tmp_path / "w.txt", len(skin.rest_vertices), 3)
    assert np.allclose(W, skin.weights, atol=1e-8)

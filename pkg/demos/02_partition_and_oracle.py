"""
Regions, boundary labels and the blended body
=============================================

The arm is split into two overlapping regions, one per joint. Each region
knows, at every grid node, whether its nearest boundary point is real skin
(+1) or an interior cut (-1). Taking the minimum distance over the regions
that report real skin rebuilds the distance to the whole body.

Here the per-joint fields are ground-truth grids, so any error comes from
the blending rule and the grids, not from learning.
"""

import numpy as np

from jointsdf import dataset as ds
from jointsdf import distance_field as df
from jointsdf.blend import AvatarSdf, GridJointField
from jointsdf.rig import pose_transforms
from jointsdf.shapes import two_joint_arm

rig, skin = two_joint_arm()
ref = ds.build_reference(rig, skin, 32)
part, regions, margin = ds.auto_partition(ref)
print(f"dilation margin: {margin} cells")
print("nodes per region:", [int(m.sum()) for m in part.members])
print("nodes in both regions:", int((part.members[0] & part.members[1]).sum()))

# %%
# Bend the elbow to 70 degrees and build oracle fields for that state.

state = np.radians([5.0, -70.0])
fields = []
for j in range(len(rig)):
    gt = ds.JointGroundTruth.build(ref, regions, j, 32)
    sdf, labels, body = gt.at_state(state)
    print(f"joint {j}: {int((labels[body] < 0).sum())} body nodes labelled as near a cut")
    fields.append(GridJointField(j, (sdf, labels)))
avatar = AvatarSdf(rig, fields)

# %%
# Compare against the distance to the skinned mesh itself.

body = ds.posed_body(ref, pose_transforms(rig, state))
lo, hi = body.bounds()
truth = df.mesh_to_sdf(body, df.Grid.cube_around(lo, hi, 32))
X = truth.grid.nodes().reshape(-1, 3)
s = truth.values.ravel()
band = np.abs(s) < 0.2 * avatar.box_side

phi = avatar.pose_update(state).query_batch(X[band])
err = np.abs(phi - s[band])
print(f"band nodes {band.sum()}: mean error {err.mean() / truth.spacing:.2f}h, max {err.max() / truth.spacing:.2f}h")
print("points claimed by no joint:", avatar.stats.fallbacks)

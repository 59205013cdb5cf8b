"""
Learning the elbow
==================

Train the elbow's distance and label networks on the poses -120..0 degrees
in 10 degree steps, then look at poses in between that were never seen.

Pass an epoch count on the command line (default 300); the acceptance
runs use 10000, which takes a few minutes per network on one core.
"""

import sys
from pathlib import Path

import numpy as np

from jointsdf import dataset as ds
from jointsdf import distance_field as df
from jointsdf import ssdf
from jointsdf.mesh import write_obj
from jointsdf.shapes import two_joint_arm

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 300
out = Path("demo_out")
out.mkdir(exist_ok=True)

rig, skin = two_joint_arm()
ref = ds.build_reference(rig, skin, 48)
_, regions, _ = ds.auto_partition(ref)
gt = ds.JointGroundTruth.build(ref, regions, 1, 48)
data = ds.build_dataset(gt, seed=0)
L = data.box_side
print(f"{len(data)} samples over {len(ds.pose_grid(ds.joint_range(rig, 1)))} poses, L_G = {L:.3f}")

cfg = ssdf.TrainConfig(epochs=epochs, log_every=max(1, epochs // 5))
net, hist = ssdf.train(data, 5, 8, cfg)
flag, _ = ssdf.train_bool(data, 4, 8, cfg)
print(f"clamped loss: train {hist.final_train:.3g}, validation {hist.final_val:.3g}")
hist.to_csv(out / "elbow_loss.csv")

# %%
# Held-out poses: band error and label accuracy.

for theta in (-15.0, -55.0, -105.0):
    sdf, labels, _ = gt.at_pose([theta])
    X = sdf.grid.nodes().reshape(-1, 3)
    s = sdf.values.ravel()
    band = np.abs(s) < 0.2 * L
    phi = ssdf.forward_batch(ssdf.effective_params(net, np.radians([theta])), X)
    b = ssdf.forward_batch(ssdf.effective_params(flag, np.radians([theta])), X) > 0
    print(f"theta {theta:6.1f}: band error {np.abs(phi[band] - s[band]).mean() / L:.4f} L_G, "
          f"label accuracy {np.mean(b == (labels.ravel() > 0)):.3f}")

# %%
# Zero level sets of the learned and the true region, for a viewer.

theta = -55.0
sdf, _, _ = gt.at_pose([theta])
phi = ssdf.forward_batch(ssdf.effective_params(net, np.radians([theta])), sdf.grid.nodes().reshape(-1, 3))
write_obj(out / "elbow_learned.obj", df.marching_cubes(df.GridSdf(sdf.grid, phi.reshape(sdf.grid.dims)), 0.0))
write_obj(out / "elbow_truth.obj", df.marching_cubes(sdf, 0.0))
print("wrote", sorted(p.name for p in out.glob("elbow_*.obj")))

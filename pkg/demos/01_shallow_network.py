"""
A pose-conditioned shallow network
==================================

Every weight and bias of a joint network is an affine function of the
joint angles. Fixing the angles gives an ordinary small MLP, so a pose
change costs one pass over the parameters and each query after that is a
plain forward pass.
"""

import numpy as np

from jointsdf import ssdf
from jointsdf.dataset import JointDataset

rng = np.random.default_rng(0)

# 5 layers, 8 channels, one angle: 185 weights per angle slot, two slots
print("parameters (inference, training):", ssdf.parameter_counts(5, 8, 1))

model = ssdf.init_model(5, 8, 1, rng, box_side=2.0)
W0, c0 = model.slabs()[0]
print("first transition slabs:", W0.shape, c0.shape)

# at initialisation the angle slabs are zero, so the pose has no effect yet
X = rng.uniform(-1, 1, (5, 3))
a = ssdf.forward_batch(ssdf.effective_params(model, [0.0]), X)
b = ssdf.forward_batch(ssdf.effective_params(model, [1.2]), X)
print("pose-independent at init:", np.allclose(a, b))

# %%
# Fit a field that really depends on the angle: a plane whose offset
# moves with theta. Positions live in a box of side 2 centred at the origin.

n = 4096
X = rng.uniform(-1, 1, (n, 3))
theta = rng.uniform(-1, 1, (n, 1))
s = 0.4 * X[:, 0] + 0.2 * theta[:, 0]
data = JointDataset(0, 2.0, np.zeros(3), X, theta, s, np.ones(n))

model, hist = ssdf.train(data, 5, 8, ssdf.TrainConfig(epochs=300, batch_size=256))
print(f"final loss train {hist.final_train:.2e}  val {hist.final_val:.2e}")

for t in (-0.5, 0.0, 0.5):
    eff = ssdf.effective_params(model, [t])
    x = np.array([[0.1, 0.3, -0.2]])
    print(f"theta={t:+.1f}  phi={ssdf.forward_batch(eff, x)[0]:+.4f}  exact={0.04 + 0.2 * t:+.4f}")

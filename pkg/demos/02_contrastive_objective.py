#!/usr/bin/env python3
# The symmetric contrastive objective: normalize both embedding batches, scale
# cosine similarities by a temperature, and cross-entropy the diagonal targets
# in both directions.

import numpy as np

from neuralign import contrastive_loss, l2_normalize, make_targets, similarity_logits

rng = np.random.default_rng(1)
batch, dim = 6, 32

z_neural = rng.normal(size=(batch, dim))     # raw encoder outputs
z_image = rng.normal(size=(batch, dim))      # frozen image embeddings

u = l2_normalize(z_neural)
v = l2_normalize(z_image)
print("unit rows:", np.linalg.norm(u, axis=1))

logits = similarity_logits(u, v, temperature=1.0)
print("logit matrix shape:", logits.shape, " targets:", make_targets(batch))

loss, d_neural, d_image = contrastive_loss(z_neural, z_image, temperature=1.0)
print(f"loss on random pairs: {loss:.4f}  (ln B = {np.log(batch):.4f})")

# matched pairs drive the loss down
loss_matched, _, _ = contrastive_loss(z_image + 0.05 * rng.normal(size=(batch, dim)),
                                      z_image)
print(f"loss on nearly-matched pairs: {loss_matched:.4f}")

# the loss only sees directions: rescaling any row changes nothing
scales = rng.uniform(0.1, 10.0, size=(batch, 1))
loss_scaled, _, _ = contrastive_loss(z_neural * scales, z_image)
print(f"positive rescaling shifts the loss by {abs(loss - loss_scaled):.2e}")

# and therefore gradients are tangential to their raw rows
alignment = np.abs((d_neural * z_neural).sum(axis=1)).max()
print(f"max |<row, grad>| = {alignment:.2e}")

# swapping the two sides leaves the symmetric loss unchanged
loss_swapped, _, _ = contrastive_loss(z_image, z_neural)
print(f"swap symmetry: {abs(loss - loss_swapped):.2e}")

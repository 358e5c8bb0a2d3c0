"""Randomized response on labels and the loss that undoes it.

Each server flips a label with probability 1/(1 + e^eps) before training.
The modified loss is built so that its expectation over the flip equals the
ordinary logistic loss on the true label, which is what lets ADMM train on the
noisy labels without bias.
"""

import math

import numpy as np

from pdml import RRMechanism, loss, modified_loss
from pdml.data import randomize_labels

y = np.where(np.random.default_rng(0).random(20_000) < 0.5, 1, -1)

print("eps    flip prob   observed   Pr ratio / e^eps")
for eps in (0.2, 0.4, 1.0, 3.0):
    m = RRMechanism(eps)
    flipped = np.mean(randomize_labels(y, m, server_id=0) != y)
    print(f"{eps:<6} {m.p:9.4f}   {flipped:8.4f}   {m.privacy_ratio() / math.exp(eps):.12f}")

# expectation of the modified loss over the flip, against the clean loss
eps = 0.4
p = RRMechanism(eps).p
zs = np.linspace(-6, 6, 7)
print(f"\nz       loss(+1, z)   E[modified]   (eps={eps})")
for z in zs:
    e = (1 - p) * modified_loss(1, z, eps) + p * modified_loss(-1, z, eps)
    print(f"{z:5.1f}   {loss(1, z):11.6f}   {e:11.6f}")

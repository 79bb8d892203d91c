"""Layered trace sets and the capacity saturation phenomenon.

Layer 1 is the early trace of a single walk; layer s is the early trace of
the fresh trajectories that touch layer s-1.  Expected capacity grows like
R^{2s} until it saturates at the ball scale R^{d-2}; at d = 5 this happens
at layer 2, which is why two intermediate trajectories suffice to connect
everything.
"""

import numpy as np

from interlace.lattice import RngStream
from interlace.graph import build_layers, verify_witness_chains
from interlace.potential import capacity_mc_sampled, capacity_variational

print(__doc__)

d, u, r = 5, 8.0, 1
for R in (8, 16):
    caps = []
    for s_idx in (1, 2):
        vals = []
        for k in range(3):
            layers = build_layers(2, r, R, u, d, RngStream(55, R * 10 + k))
            L = layers[s_idx - 1]
            if len(L.sites) <= 1800:
                vals.append(capacity_variational(L.sites)[0])
            else:
                vals.append(capacity_mc_sampled(L.sites, n_sites=400, walkers_per_site=48,
                                                stream=RngStream(56, R * 10 + k))[0])
        caps.append(np.mean(vals))
    print(f"R={R:3d}:  E cap(layer 1) ~ {caps[0]:9.1f}   E cap(layer 2) ~ {caps[1]:9.1f}")

layers = build_layers(2, r, 12, u, d, RngStream(57, 0))
print(f"\nwitness chains verified: {verify_witness_chains(layers)}")
print(f"layer 2 was built from {layers[1].n_traj} trajectories "
      f"({layers[1].dropped_near_ball} dropped for meeting B(0,{r}))")
print("each site of layer 2 records the trajectory that visited it and that")
print("trajectory's anchor in layer 1, so connection paths can be read off.")

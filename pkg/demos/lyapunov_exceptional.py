"""Lyapunov exponents of the radial transfer cocycle next to the exceptional energies.

Prints L(E) for the branching and length models on a coarse grid, marks the
energies where the commutator certificate fails, and shows that L stays
positive at the RBM exceptional energy pi^2 while vanishing for an elliptic
pair.
"""
import math

import numpy as np

from radloc.cocycle import lyapunov_curve, lyapunov_mc
from radloc.furstenberg import elliptic_boundedness_probe, exceptional_set_continuum
from radloc.model import SingleGenDistribution, rbm, rlm

WINDOW = (0.5, 40.0)

for name, dist in (("branching {2,3}", rbm()), ("lengths {1,3}", rlm((1, 3)))):
    ex = exceptional_set_continuum(dist, WINDOW)
    print(f"\n{name}: exceptional energies {[round(e, 4) for e in ex.energies]}")
    E = np.linspace(*WINDOW, 14)
    for est in lyapunov_curve(E, dist, n=4000, trials=20, seed=0):
        near = min((abs(est.energy - e) for e in ex.energies), default=math.inf) < 1.5
        print(f"  E = {est.energy:7.3f}  L = {est.value:.4f} +- {est.stderr:.1e}{'  (near exceptional)' if near else ''}")

L = lyapunov_mc(math.pi ** 2, rbm(), n=10_000, trials=50)
print(f"\nbranching model at E = pi^2: L = {L.value:.4f} (diagonal steps, L = mean log sqrt(b))")

pair = ((2, 1, 0), (2, 3, 0))
probe = elliptic_boundedness_probe(math.pi ** 2 / 4, *pair, max_n=10_000, trials=5)
L = lyapunov_mc(math.pi ** 2 / 4, SingleGenDistribution(pair), n=10_000, trials=50)
print(f"lengths {{1,3}} at pi^2/4: commutator {probe.comm_norm:.1e}, "
      f"max product norm {probe.max_product_norm:.2f}, L = {L.value:.1e}")

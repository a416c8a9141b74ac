"""Sample a grouping graph with Gumbel-Sigmoid and inspect the groups.

Shows the soft/hard sample pair, the self-link and drop masks, group
extraction, and the average-information metric for the three canonical
link structures (self-links, learned links, pairwise links).
"""

import numpy as np

import gtde.tensor as tz
from gtde.grouping import (apply_drop_mask, apply_self_link_mask,
                           avg_node_information, extract_groups,
                           sample_adjacency)
from gtde.rng import Rng
from gtde.tensor import Tensor

rng = Rng(7)
n = 4

# Link probabilities, one row per agent (here hand-picked for the demo).
probabilities = np.array([
    [0.50, 0.20, 0.30, 0.10],
    [0.10, 0.60, 0.30, 0.80],
    [0.90, 0.05, 0.05, 0.40],
    [0.25, 0.25, 0.70, 0.50],
])
logodds = Tensor(np.log(probabilities / (1.0 - probabilities)))

adj = sample_adjacency(logodds, temperature=1.0, rng=rng)
print("soft sample:\n", np.round(adj.soft.data, 3))
print("hard sample (soft > 0.5):\n", adj.hard.data)

adj = apply_self_link_mask(adj)
print("after self-link mask (diagonal forced to 1):\n", adj.hard.data)

adj = apply_drop_mask(adj, drop_prob=0.1, rng=rng)
print("after 0.1 drop mask (diagonal exempt):\n", adj.hard.data)

groups = extract_groups(adj)
for agent, members in enumerate(groups.members):
    print(f"g(v_{agent}) = {set(members)}")

alive = np.ones(n, dtype=bool)
print("avg node information (this step):",
      avg_node_information([groups], [alive]))

# The canonical extremes: self-links give 1, pairwise links give n.
identity = apply_self_link_mask(
    sample_adjacency(Tensor(np.full((n, n), -50.0)), 1.0, rng))
pairwise = apply_self_link_mask(
    sample_adjacency(tz.zeros(n, n), 1.0, rng, mode="all_ones"))
print("self-linked information:",
      avg_node_information([extract_groups(identity)], [alive]))
print("pairwise information:",
      avg_node_information([extract_groups(pairwise)], [alive]))

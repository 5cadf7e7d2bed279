"""
What the directed-graph entropy rewards
=======================================

The evaluation entropy is a degree-based score over directed edges.  A
tree whose internal nodes branch evenly scores near the upper bound
1 - 1/n; chains and spurious shortcut edges pull it down toward
1 - 1.5/n.  Comparing a reconstruction's entropy against its ground
truth gives a single structural-quality delta.
"""

from phylokit import entropy_bounds, entropy_delta, von_neumann_entropy

# three tiny graphs over the same nodes {1, 2, 3}
fork = {(1, 2), (1, 3)}            # root with two children
fork_plus = fork | {(2, 3)}        # same, plus a sibling shortcut
chain = {(1, 2), (2, 3)}           # everything in one line

for name, g in (("fork", fork), ("fork+shortcut", fork_plus), ("chain", chain)):
    print(f"{name:14s} H = {von_neumann_entropy(g):.4f}")
print("bounds for n=3:", entropy_bounds(3))

# the delta view: mistaking the fork for a chain loses more structure
# than adding one shortcut edge
print("\ndelta fork -> fork+shortcut:", f"{entropy_delta(fork, fork_plus):+.4f}")
print("delta fork -> chain:        ", f"{entropy_delta(fork, chain):+.4f}")

# a 10-node two-level tree sits close to the upper bound; flattening it
# into a star reaches the bound exactly, a full chain drops furthest
tree = [(0, 1), (0, 2), (1, 3), (1, 4), (1, 5), (2, 6), (2, 7), (2, 8), (3, 9)]
star = [(0, v) for v in range(1, 10)]
chain10 = [(v, v + 1) for v in range(9)]
print("\nn=10 bounds:", entropy_bounds(10))
for name, g in (("two-level tree", tree), ("star", star), ("chain", chain10)):
    print(f"{name:14s} H = {von_neumann_entropy(g, n=10):.4f}")

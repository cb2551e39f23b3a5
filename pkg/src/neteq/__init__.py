"""Transport network equilibrium solvers.

Subpackages cover: the network/cost model (BPR and capacity-constrained),
shortest-path flow oracles, traffic assignment (Frank-Wolfe variants and a
primal-dual universal similar-triangles method), entropy trip distribution
with nested mode choice (Sinkhorn and accelerated variants), the combined
distribution-modal-split-assignment model, and a CLI experiment harness.
"""

__version__ = "0.1.0"

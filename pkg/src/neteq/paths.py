"""Label-setting shortest paths and demand aggregation onto path trees.

This is the oracle behind every solver: Dijkstra trees per origin, OD cost
matrices per mode, and link flows obtained by loading demand leaf-to-root
along the trees.  Path sets are never materialized; everything is
link-based.  Ties between equal-cost paths are broken toward the smallest
link index so the selected supergradient is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from heapq import heappop, heappush

import numpy as np

from .network import ConnectivityError, Network


@dataclass
class ShortestPathTree:
    """Single-origin tree: per-node cost and incoming tree link.

    ``dist`` is +inf at unreachable nodes; ``pred_link`` is -1 at the origin
    and at unreachable nodes.  ``order`` lists settled nodes in settlement
    sequence (tails always settle before heads along tree links), which is
    what the reverse aggregation pass walks.
    """

    origin: int
    dist: np.ndarray
    pred_link: np.ndarray
    order: np.ndarray


@dataclass(frozen=True)
class CostMatrix:
    """Zone-to-zone travel costs per mode: values[i, j, m] in hours."""

    values: np.ndarray
    modes: tuple[str, ...]

    def mode_slice(self, m: int) -> np.ndarray:
        return self.values[:, :, m]


def dijkstra(network: Network, link_times: np.ndarray, origin: int) -> ShortestPathTree:
    """Shortest-path tree from ``origin`` under per-link times.

    Times must be nonnegative; +inf marks untraversable links.  Nodes with
    index below ``network.first_thru`` are not expanded except as origin.
    Equal-cost ties pick the smallest incoming link index among candidates
    whose tail settled first.
    """
    times = np.asarray(link_times, dtype=float)
    if times.shape != (network.n_links,):
        raise ValueError(f"link_times must have shape ({network.n_links},)")
    if np.any(times < 0) or np.any(np.isnan(times)):
        raise ValueError("link times must be nonnegative")
    return _dijkstra_core(
        network.n_nodes, network.out_start.tolist(), network.out_links.tolist(),
        network.head.tolist(), times.tolist(), int(origin), network.first_thru)


def _dijkstra_core(n_nodes: int, out_start: list, out_links: list, head: list,
                   times: list, origin: int, first_thru: int) -> ShortestPathTree:
    inf = float("inf")
    dist = [inf] * n_nodes
    pred = [-1] * n_nodes
    settled = [False] * n_nodes
    order: list[int] = []
    dist[origin] = 0.0
    fringe: list[tuple[float, int]] = [(0.0, origin)]
    while fringe:
        d, v = heappop(fringe)
        if settled[v]:
            continue
        settled[v] = True
        order.append(v)
        if v != origin and v < first_thru:
            continue
        for j in range(out_start[v], out_start[v + 1]):
            e = out_links[j]
            w = times[e]
            if w == inf:
                continue
            u = head[e]
            nd = d + w
            du = dist[u]
            if nd < du:
                dist[u] = nd
                pred[u] = e
                heappush(fringe, (nd, u))
            elif nd == du and not settled[u] and (pred[u] < 0 or e < pred[u]):
                pred[u] = e
    return ShortestPathTree(origin=origin,
                            dist=np.asarray(dist, dtype=float),
                            pred_link=np.asarray(pred, dtype=np.int64),
                            order=np.asarray(order, dtype=np.int64))


def tree_flows(network: Network, tree: ShortestPathTree,
               dest_demand: np.ndarray) -> np.ndarray:
    """Load per-zone destination demand onto the tree; returns link flows.

    One reverse pass over the settlement order, linear in the node count.
    Demand on an unreachable destination raises ConnectivityError.
    """
    demand = np.asarray(dest_demand, dtype=float)
    load = np.zeros(network.n_nodes)
    zones = network.zones
    bad = (demand > 0) & ~np.isfinite(tree.dist[zones])
    if np.any(bad):
        js = zones[np.nonzero(bad)[0][:5]]
        raise ConnectivityError(
            f"demand from origin {tree.origin} to unreachable zones {js.tolist()}")
    load[zones] = demand
    load[tree.origin] = 0.0
    flows = np.zeros(network.n_links)
    pred = tree.pred_link
    tail = network.tail
    for v in tree.order[::-1]:
        lv = load[v]
        if lv == 0.0:
            continue
        e = pred[v]
        if e < 0:
            continue
        flows[e] += lv
        load[tail[e]] += lv
    return flows


def tree_cost(tree: ShortestPathTree, zones: np.ndarray, dest_demand: np.ndarray) -> float:
    """Total demand-weighted cost sum(d_j * dist[zone_j]) for one origin."""
    demand = np.asarray(dest_demand, dtype=float)
    d = tree.dist[zones]
    active = demand > 0
    return float(np.dot(demand[active], d[active]))


def all_origin_costs(network: Network, link_times_by_mode: np.ndarray,
                     modes: tuple[str, ...] | None = None,
                     demand: np.ndarray | None = None) -> CostMatrix:
    """OD cost matrix per mode; entry (i, j, m) is the mode-m shortest cost.

    ``link_times_by_mode`` has shape (n_modes, n_links); rows already include
    any per-mode constant costs.  If ``demand`` is given, a non-finite cost
    on a positive-demand pair raises ConnectivityError.
    """
    times = np.atleast_2d(np.asarray(link_times_by_mode, dtype=float))
    n_modes = times.shape[0]
    if modes is None:
        modes = tuple(f"m{k}" for k in range(n_modes))
    zones = network.zones
    values = np.empty((zones.size, zones.size, n_modes))
    for m in range(n_modes):
        for k, z in enumerate(zones):
            tree = dijkstra(network, times[m], int(z))
            values[k, :, m] = tree.dist[zones]
    cm = CostMatrix(values=values, modes=modes)
    if demand is not None:
        dm = np.asarray(demand, dtype=float)
        if dm.ndim == 2:
            dm = dm[:, :, None]
        bad = ~np.isfinite(values) & (dm > 0)
        if np.any(bad):
            idx = np.argwhere(bad)[:5]
            raise ConnectivityError(f"infeasible OD pairs (zone_i, zone_j, mode): {idx.tolist()}")
    return cm


def tree_as_text(tree: ShortestPathTree) -> str:
    """Debug dump: one ``node dist pred_link`` row per node."""
    rows = ["node\tdist\tpred_link"]
    for v in range(tree.dist.size):
        rows.append(f"{v}\t{tree.dist[v]!r}\t{tree.pred_link[v]}")
    return "\n".join(rows) + "\n"

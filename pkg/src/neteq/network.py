"""Directed link network with zones, cost parameters, and turn expansion."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .costs import BeckmannModel, CostModel


class NetworkError(ValueError):
    """Structural problem in network data."""


class ConnectivityError(NetworkError):
    """A positive-demand OD pair has no finite-cost path."""


@dataclass(frozen=True)
class Link:
    """One directed road link.

    ``bpr_b``/``bpr_power`` are per-link BPR overrides parsed from network
    files (None means "use the cost model defaults").  ``mode_costs`` holds
    constant per-mode add-on costs in hours for multi-modal networks.
    Auxiliary turn links (``is_aux``) carry a turn penalty as free-flow time
    and unbounded capacity; they are modeling artifacts excluded from
    capacity metrics.
    """

    id: int
    tail: int
    head: int
    t_free: float
    cap: float
    bpr_b: float | None = None
    bpr_power: float | None = None
    length: float = 0.0
    is_aux: bool = False
    mode_costs: Mapping[str, float] | None = None


@dataclass(frozen=True)
class TurnTable:
    """Allowed turns per intersection: rows (node, in_link, out_link, penalty_hours)."""

    entries: tuple[tuple[int, int, int, float], ...]

    @classmethod
    def from_rows(cls, rows: Iterable[Sequence]) -> "TurnTable":
        ent = tuple((int(n), int(a), int(b), float(p)) for n, a, b, p in rows)
        return cls(ent)

    def nodes(self) -> set[int]:
        return {n for n, _, _, _ in self.entries}


class Network:
    """Immutable directed graph with zone set and per-link cost parameters.

    Attributes (all numpy arrays are per-link unless noted):
      n_nodes        number of nodes
      links          tuple of Link records
      zones          int array of zone (centroid) node indices
      first_thru     nodes with index < first_thru cannot be passed through
                     (0 disables the restriction)
      tail, head     int arrays
      t_free, cap    float arrays (cap may be +inf on auxiliary links)
      aux_mask       bool array marking auxiliary turn links
      out_start/out_links  CSR adjacency: outgoing link ids of node v are
                     out_links[out_start[v]:out_start[v+1]], sorted by link id
    """

    def __init__(self, n_nodes: int, links: Sequence[Link], zones: Sequence[int],
                 first_thru: int = 0):
        links = tuple(links)
        zones_arr = np.asarray(sorted(set(int(z) for z in zones)), dtype=np.int64)
        if n_nodes <= 0:
            raise NetworkError("network must have at least one node")
        if zones_arr.size and (zones_arr.min() < 0 or zones_arr.max() >= n_nodes):
            raise NetworkError("zone index outside node range")
        for lk in links:
            if not (0 <= lk.tail < n_nodes and 0 <= lk.head < n_nodes):
                raise NetworkError(
                    f"link {lk.id} references node beyond declared count "
                    f"({lk.tail}->{lk.head}, {n_nodes} nodes)")
            if lk.is_aux:
                if lk.t_free < 0:
                    raise NetworkError(f"auxiliary link {lk.id} has negative penalty")
            else:
                if not lk.t_free > 0:
                    raise NetworkError(f"link {lk.id} has non-positive free-flow time")
                if not 0 < lk.cap < np.inf:
                    raise NetworkError(f"link {lk.id} has non-positive or infinite capacity")
            mc = lk.mode_costs or {}
            for m, c in mc.items():
                if not (np.isfinite(c) and c >= 0):
                    raise NetworkError(f"link {lk.id} mode cost {m!r} must be finite and >= 0")
        self.n_nodes = int(n_nodes)
        self.links = links
        self.zones = zones_arr
        self.first_thru = int(first_thru)
        self.tail = np.array([lk.tail for lk in links], dtype=np.int64)
        self.head = np.array([lk.head for lk in links], dtype=np.int64)
        self.t_free = np.array([lk.t_free for lk in links], dtype=float)
        self.cap = np.array([lk.cap for lk in links], dtype=float)
        self.aux_mask = np.array([lk.is_aux for lk in links], dtype=bool)
        order = np.lexsort((np.arange(len(links)), self.tail))
        self.out_links = order.astype(np.int64)
        counts = np.bincount(self.tail, minlength=n_nodes) if links else np.zeros(n_nodes, np.int64)
        self.out_start = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_zones(self) -> int:
        return int(self.zones.size)

    def mode_cost_array(self, mode: str) -> np.ndarray:
        """Constant per-link cost for a named mode (0 where unset)."""
        return np.array([(lk.mode_costs or {}).get(mode, 0.0) for lk in self.links])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (self.n_nodes == other.n_nodes
                and self.first_thru == other.first_thru
                and np.array_equal(self.zones, other.zones)
                and self.links == other.links)


def effective_bpr_params(network: Network, model: BeckmannModel) -> tuple[np.ndarray, np.ndarray]:
    """Per-link (rho, power) with file values taking precedence over model defaults."""
    rho = np.array([lk.bpr_b if lk.bpr_b is not None else model.rho
                    for lk in network.links], dtype=float)
    power = np.array([lk.bpr_power if lk.bpr_power is not None else 1.0 / model.mu
                      for lk in network.links], dtype=float)
    rho[network.aux_mask] = 0.0
    return rho, power


def reachable_from(network: Network, origin: int, link_times: np.ndarray | None = None) -> np.ndarray:
    """Bool array of nodes reachable from ``origin`` honoring the thru rule.

    Links with non-finite times are untraversable when ``link_times`` given.
    """
    ok = np.ones(network.n_links, dtype=bool)
    if link_times is not None:
        ok = np.isfinite(link_times)
    seen = np.zeros(network.n_nodes, dtype=bool)
    seen[origin] = True
    stack = [origin]
    out_start, out_links = network.out_start, network.out_links
    head = network.head
    while stack:
        v = stack.pop()
        if v != origin and v < network.first_thru:
            continue
        for j in range(out_start[v], out_start[v + 1]):
            e = out_links[j]
            if not ok[e]:
                continue
            u = head[e]
            if not seen[u]:
                seen[u] = True
                stack.append(u)
    return seen


def check_zone_connectivity(network: Network, demand: np.ndarray | None = None) -> None:
    """Raise ConnectivityError if a demanded zone pair is unreachable.

    With no demand matrix, requires full zone-to-zone connectivity.  One
    forward reachability sweep per zone (batched by callers that
    parallelize); the backward direction is covered because every zone is
    also swept as an origin.
    """
    zones = network.zones
    zpos = {int(z): k for k, z in enumerate(zones)}
    bad: list[tuple[int, int]] = []
    for k, z in enumerate(zones):
        seen = reachable_from(network, int(z))
        for j, zj in enumerate(zones):
            if seen[zj]:
                continue
            if demand is None or demand[k, j] > 0:
                bad.append((int(z), int(zj)))
                if len(bad) >= 10:
                    raise ConnectivityError(f"unreachable OD pairs (first 10): {bad}")
    if bad:
        raise ConnectivityError(f"unreachable OD pairs: {bad}")
    del zpos


def expand_turns(network: Network, turns: TurnTable) -> Network:
    """Insert auxiliary links so intersection movements follow allowed turns.

    At each node v appearing in the turn table, incoming links are recabled
    to fresh entry nodes and outgoing links to fresh exit nodes; one
    auxiliary link per allowed turn connects an entry node to an exit node,
    carrying the turn penalty as free-flow time and unbounded capacity.
    Paths through v then exist only for listed turns.  Turn tables at zone
    nodes are rejected: centroids are not intersections.
    """
    by_node: dict[int, list[tuple[int, int, float]]] = {}
    for node, a, b, pen in turns.entries:
        if not (0 <= a < network.n_links and 0 <= b < network.n_links):
            raise NetworkError(f"turn references unknown link ({a}, {b})")
        if network.head[a] != node or network.tail[b] != node:
            raise NetworkError(
                f"turn ({a}->{b}) does not pass through node {node}")
        if pen < 0:
            raise NetworkError("negative turn penalty")
        by_node.setdefault(int(node), []).append((int(a), int(b), float(pen)))
    zone_set = set(int(z) for z in network.zones)
    clash = sorted(set(by_node) & zone_set)
    if clash:
        raise NetworkError(f"turn table at zone nodes {clash}; zones are not intersections")

    new_head = {}
    new_tail = {}
    next_node = network.n_nodes
    for node in sorted(by_node):
        for e in sorted(np.nonzero(network.head == node)[0]):
            new_head[int(e)] = next_node
            next_node += 1
        for e in sorted(np.nonzero(network.tail == node)[0]):
            new_tail[int(e)] = next_node
            next_node += 1

    links: list[Link] = []
    for lk in network.links:
        tail = new_tail.get(lk.id, lk.tail)
        head = new_head.get(lk.id, lk.head)
        links.append(replace(lk, tail=tail, head=head))
    next_id = network.n_links
    for node in sorted(by_node):
        for a, b, pen in sorted(by_node[node]):
            links.append(Link(id=next_id, tail=new_head[a], head=new_tail[b],
                              t_free=pen, cap=np.inf, is_aux=True))
            next_id += 1
    return Network(next_node, links, network.zones, network.first_thru)

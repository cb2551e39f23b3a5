"""Per-origin map/reduce for shortest-path sweeps.

Origins are independent, so trees, costs, and tree-loaded flows fan out to
a process pool.  Work is cut into fixed-size origin batches and partial
results are summed in batch order, independent of the worker count, so a
run with 4 workers is bit-identical to a sequential run.
"""

from __future__ import annotations

import multiprocessing as mp
from typing import Iterable

import numpy as np

from .network import Network
from .paths import dijkstra, tree_cost, tree_flows

BATCH = 16

_NET: Network | None = None


def _init_worker(network: Network) -> None:
    global _NET
    globals()["_NET"] = network


def _run_batch(task):
    """One origin batch: (mode, lo, hi, times, demand_rows, want_dist).

    Returns (flows or None, cost, dist_rows or None); flows is None when the
    batch carries no demand.
    """
    mode, lo, hi, times, demand_rows, want_dist = task
    net = _NET
    zones = net.zones
    flows = None
    cost = 0.0
    dist_rows = np.empty((hi - lo, zones.size)) if want_dist else None
    for k in range(lo, hi):
        row = demand_rows[k - lo] if demand_rows is not None else None
        if row is not None and not np.any(row):
            row = None
        if row is None and not want_dist:
            continue
        tree = dijkstra(net, times, int(zones[k]))
        if want_dist:
            dist_rows[k - lo] = tree.dist[zones]
        if row is not None:
            if flows is None:
                flows = np.zeros(net.n_links)
            flows += tree_flows(net, tree, row)
            cost += tree_cost(tree, zones, row)
    return flows, cost, dist_rows


class FlowComputer:
    """Shortest-path oracle with an optional worker pool.

    All reductions run in fixed batch order, so results do not depend on
    the worker count.  ``sweeps`` counts full origin passes per mode (the
    oracle-call metric traces report).
    """

    def __init__(self, network: Network, workers: int = 1):
        self.network = network
        self.workers = max(1, int(workers))
        self.sweeps = 0
        self._pool = None
        if self.workers > 1:
            ctx = mp.get_context("fork")
            self._pool = ctx.Pool(self.workers, initializer=_init_worker,
                                  initargs=(network,))

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _map(self, tasks: list) -> Iterable:
        if self._pool is None:
            global _NET
            _NET = self.network
            return map(_run_batch, tasks)
        return self._pool.imap(_run_batch, tasks, chunksize=1)

    def _tasks(self, times_by_mode, demand_by_mode, want_dist):
        z = self.network.n_zones
        tasks = []
        for m in range(times_by_mode.shape[0]):
            for lo in range(0, z, BATCH):
                hi = min(lo + BATCH, z)
                rows = demand_by_mode[m, lo:hi] if demand_by_mode is not None else None
                tasks.append((m, lo, hi, times_by_mode[m], rows, want_dist))
        return tasks

    def flows_and_cost(self, times_by_mode: np.ndarray, demand_by_mode: np.ndarray,
                       want_dist: bool = False):
        """All-or-nothing loading of per-mode OD demand at given link times.

        Returns (flows (M, E), total_cost, dist (Z, Z, M) or None) where
        total_cost = sum over modes and OD of demand * shortest cost.
        """
        times_by_mode = np.atleast_2d(np.asarray(times_by_mode, dtype=float))
        demand_by_mode = np.asarray(demand_by_mode, dtype=float)
        if demand_by_mode.ndim == 2:
            demand_by_mode = demand_by_mode[None, :, :]
        n_modes = times_by_mode.shape[0]
        flows = np.zeros((n_modes, self.network.n_links))
        dist = (np.empty((self.network.n_zones, self.network.n_zones, n_modes))
                if want_dist else None)
        cost = 0.0
        tasks = self._tasks(times_by_mode, demand_by_mode, want_dist)
        for task, (bf, bc, bd) in zip(tasks, self._map(tasks)):
            m, lo, hi = task[0], task[1], task[2]
            if bf is not None:
                flows[m] += bf
            cost += bc
            if want_dist:
                dist[lo:hi, :, m] = bd
        self.sweeps += n_modes
        return flows, cost, dist

    def cost_matrices(self, times_by_mode: np.ndarray) -> np.ndarray:
        """Zone-to-zone cost array (Z, Z, M) at the given per-mode times."""
        times_by_mode = np.atleast_2d(np.asarray(times_by_mode, dtype=float))
        n_modes = times_by_mode.shape[0]
        z = self.network.n_zones
        dist = np.empty((z, z, n_modes))
        tasks = self._tasks(times_by_mode, None, True)
        for task, (_, _, bd) in zip(tasks, self._map(tasks)):
            m, lo, hi = task[0], task[1], task[2]
            dist[lo:hi, :, m] = bd
        self.sweeps += n_modes
        return dist

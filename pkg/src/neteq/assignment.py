"""Traffic assignment: Frank-Wolfe variants and primal-dual USTM.

Frank-Wolfe minimizes the Beckmann potential directly, one all-or-nothing
loading per iteration, with five step-size rules.  The USTM route solves
the dual (times are the variables, t >= t_free) for either cost model and
recovers flows as the weighted average of the all-or-nothing loadings seen
along the way.  Under hard capacities (stable dynamics) the recovered
flows may exceed capacity mid-run, so the duality gap is signed and a
capacity-violation norm is reported next to it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.optimize import minimize_scalar

from . import costs as _costs
from .costs import BeckmannModel, CostModel, StableDynamicsModel
from .network import Network, effective_bpr_params
from .parallel import FlowComputer
from .trace import SolveTrace, Stopwatch
from .ustm import ustm_solve

ASSIGN_COLUMNS = ("iter", "elapsed_s", "primal", "dual", "gap", "violation",
                  "L", "A", "oracle_calls")


# ---------------------------------------------------------------------------
# step-size rules

@dataclass(frozen=True)
class Fixed2OverKPlus2:
    """gamma_k = 2 / (k + 2)."""


@dataclass(frozen=True)
class Harmonic1OverK:
    """gamma_k = 1 / (k + 1): plain averaging of the loadings."""


@dataclass(frozen=True)
class BrentExact:
    tolerance: float = 1e-8


@dataclass(frozen=True)
class ArmijoBacktracking:
    shrink: float = 0.5
    slope: float = 1e-4


@dataclass(frozen=True)
class AdaptiveFWBacktracking:
    initial_lipschitz: float | None = None
    increase: float = 2.0
    decrease: float = 0.5


StepRule = Union[Fixed2OverKPlus2, Harmonic1OverK, BrentExact,
                 ArmijoBacktracking, AdaptiveFWBacktracking]

STEP_RULES = {
    "fixed": Fixed2OverKPlus2,
    "harmonic": Harmonic1OverK,
    "brent": BrentExact,
    "armijo": ArmijoBacktracking,
    "adaptive": AdaptiveFWBacktracking,
}


@dataclass(frozen=True)
class StopRule:
    max_iter: int = 1000
    gap_tol: float = 0.0
    wall_time_s: float = math.inf


@dataclass
class AssignmentResult:
    flows: np.ndarray
    times: np.ndarray
    trace: SolveTrace
    model: CostModel


# ---------------------------------------------------------------------------
# Beckmann / SD objective pieces

class LinkCosts:
    """Per-link cost-model arrays bound to one network and model."""

    def __init__(self, network: Network, model: CostModel):
        self.network = network
        self.model = model
        if isinstance(model, BeckmannModel):
            self.rho, self.power = effective_bpr_params(network, model)
        else:
            self.rho = np.zeros(network.n_links)
            self.power = np.full(network.n_links, 4.0)
        # constant-time links: the conjugate pins t at t_free
        self.pinned = ~np.isfinite(network.cap) | (self.rho == 0.0)

    def times(self, flows: np.ndarray) -> np.ndarray:
        if isinstance(self.model, StableDynamicsModel):
            raise ValueError("stable dynamics has no flow-to-time function")
        return _costs.bpr_time(self.network.t_free, self.network.cap,
                               self.rho, self.power, flows)

    def potential(self, flows: np.ndarray) -> float:
        """Beckmann: sum of link integrals; SD: free-flow travel time total."""
        if isinstance(self.model, StableDynamicsModel):
            return float(self.network.t_free @ flows)
        return float(np.sum(_costs.bpr_integral(
            self.network.t_free, self.network.cap, self.rho, self.power, flows)))

    def conjugate_sum(self, times: np.ndarray) -> float:
        vals = _costs.bpr_conjugate(self.network.t_free[~self.pinned],
                                    self.network.cap[~self.pinned],
                                    self.rho[~self.pinned],
                                    self.power[~self.pinned],
                                    times[~self.pinned])
        return float(np.sum(vals))

    def h(self, times: np.ndarray) -> float:
        """Composite dual term: conjugate sum (Beckmann) or <t - t_free, cap> (SD)."""
        if isinstance(self.model, StableDynamicsModel):
            fin = ~self.pinned
            return float((times[fin] - self.network.t_free[fin]) @ self.network.cap[fin])
        return self.conjugate_sum(times)


def beckmann_potential(network: Network, model: BeckmannModel, flows: np.ndarray,
                       mode_flows: np.ndarray | None = None,
                       mode_costs: np.ndarray | None = None) -> float:
    """Potential sum_e integral of time plus optional per-mode constant costs."""
    if np.any(np.asarray(flows) < 0):
        raise ValueError("negative flow")
    val = LinkCosts(network, model).potential(np.asarray(flows, dtype=float))
    if mode_flows is not None:
        val += float(np.sum(mode_flows * mode_costs))
    return val


def beckmann_dual(network: Network, model: BeckmannModel, times: np.ndarray,
                  demand: np.ndarray, cost_matrix: np.ndarray) -> float:
    """Dual value sum_ij d_ij T_ij(t) - sum_e conjugate(t_e) for t >= t_free."""
    lc = LinkCosts(network, model)
    if np.any(times < network.t_free - 1e-12 * np.maximum(1.0, network.t_free)):
        raise ValueError("times below free-flow time")
    return float(np.sum(demand * cost_matrix)) - lc.conjugate_sum(times)


def sd_dual(network: Network, times: np.ndarray, demand: np.ndarray,
            cost_matrix: np.ndarray) -> float:
    lc = LinkCosts(network, StableDynamicsModel())
    return float(np.sum(demand * cost_matrix)) - lc.h(times)


def capacity_violation(network: Network, flows: np.ndarray) -> float:
    """||(f - cap)_+||_2 over real links (auxiliary turn links excluded)."""
    real = ~network.aux_mask & np.isfinite(network.cap)
    over = np.maximum(np.asarray(flows)[real] - network.cap[real], 0.0)
    return float(np.linalg.norm(over))


def duality_gap(model: CostModel, network: Network, flows: np.ndarray,
                times: np.ndarray, demand: np.ndarray,
                cost_matrix: np.ndarray) -> float:
    """Primal minus dual objective; nonnegative for Beckmann at t = time(f),
    signed for stable dynamics (recovered flows may be infeasible)."""
    lc = LinkCosts(network, model)
    primal = lc.potential(np.asarray(flows, dtype=float))
    if isinstance(model, StableDynamicsModel):
        dual = sd_dual(network, times, demand, cost_matrix)
    else:
        dual = beckmann_dual(network, model, times, demand, cost_matrix)
    return primal - dual


# ---------------------------------------------------------------------------
# line searches on the Frank-Wolfe segment

def _segment_potential(lc: LinkCosts, f: np.ndarray, d: np.ndarray):
    def psi(gamma: float) -> float:
        return lc.potential(f + gamma * d)
    return psi


def _fw_step(rule: StepRule, k: int, lc: LinkCosts, f: np.ndarray, s: np.ndarray,
             gap: float, state: dict) -> tuple[float, str | None]:
    """Step size in [0, 1] for iterate k; returns (gamma, warning-or-None)."""
    if isinstance(rule, Fixed2OverKPlus2):
        return 2.0 / (k + 2.0), None
    if isinstance(rule, Harmonic1OverK):
        return 1.0 / (k + 1.0), None
    d = s - f
    psi = _segment_potential(lc, f, d)
    psi0 = psi(0.0)
    if isinstance(rule, BrentExact):
        res = minimize_scalar(psi, bounds=(0.0, 1.0), method="bounded",
                              options={"xatol": rule.tolerance})
        gamma = float(res.x)
        if psi(gamma) > psi0:
            return 2.0 / (k + 2.0), "line-search failure; fell back to 2/(k+2)"
        return gamma, None
    slope0 = -gap  # <grad Psi(f), s - f> = -(FW gap)
    if isinstance(rule, ArmijoBacktracking):
        gamma = 1.0
        for _ in range(60):
            if psi(gamma) <= psi0 + rule.slope * gamma * slope0:
                return gamma, None
            gamma *= rule.shrink
        return 2.0 / (k + 2.0), "line-search failure; fell back to 2/(k+2)"
    if isinstance(rule, AdaptiveFWBacktracking):
        dd = float(d @ d)
        if dd == 0.0 or gap <= 0.0:
            return 0.0, None
        L = state.get("L")
        if L is None:
            L = rule.initial_lipschitz if rule.initial_lipschitz else gap / dd
        L *= rule.decrease
        for _ in range(80):
            gamma = min(gap / (L * dd), 1.0)
            if psi(gamma) <= psi0 - gamma * gap + 0.5 * gamma * gamma * L * dd:
                state["L"] = L
                return gamma, None
            L *= rule.increase
        state["L"] = L
        return 2.0 / (k + 2.0), "line-search failure; fell back to 2/(k+2)"
    raise TypeError(f"unknown step rule {rule!r}")


def frank_wolfe_solve(network: Network, model: BeckmannModel, demand: np.ndarray,
                      rule: StepRule = BrentExact(), stop: StopRule = StopRule(),
                      workers: int = 1,
                      flow_computer: FlowComputer | None = None) -> AssignmentResult:
    """Frank-Wolfe on the Beckmann potential with the given step rule.

    Iterates stay feasible (convex combinations of all-or-nothing
    loadings).  The trace logs the duality gap Psi(f) - Q(t) at t = time(f)
    each iteration; stopping is on relative gap <= stop.gap_tol or the
    iteration/wall-time budget.
    """
    lc = LinkCosts(network, model)
    own = flow_computer is None
    fc = flow_computer or FlowComputer(network, workers)
    watch = Stopwatch()
    trace = SolveTrace(columns=ASSIGN_COLUMNS,
                       meta={"solver": f"fw-{type(rule).__name__}"})
    state: dict = {}
    try:
        t = network.t_free.copy()
        fl, _, _ = fc.flows_and_cost(t[None], demand[None])
        f = fl[0]
        for k in range(stop.max_iter):
            t = lc.times(f)
            s_all, dcost, _ = fc.flows_and_cost(t[None], demand[None])
            s = s_all[0]
            primal = lc.potential(f)
            dual = dcost - lc.conjugate_sum(t)
            gap = primal - dual
            trace.append(k, watch.elapsed(), primal, dual, gap, 0.0,
                         math.nan, math.nan, fc.sweeps)
            rel = gap / max(abs(primal), 1e-300)
            if stop.gap_tol and rel <= stop.gap_tol:
                break
            if watch.elapsed() > stop.wall_time_s:
                trace.mark(k, "wall-time budget reached")
                break
            gamma, warn = _fw_step(rule, k, lc, f, s, gap, state)
            if warn:
                trace.mark(k, warn)
            f = (1.0 - gamma) * f + gamma * s
    finally:
        if own:
            fc.close()
    return AssignmentResult(flows=f, times=lc.times(f), trace=trace, model=model)


# ---------------------------------------------------------------------------
# prox steps for the dual (composite term h under the similar-triangles method)

def prox_step_sd(accumulated_linear: np.ndarray, A: float, t0: np.ndarray,
                 network: Network) -> np.ndarray:
    """Exact minimizer of 1/2||t-t0||^2 + <acc,t> + A<t - t_free, cap> on t >= t_free.

    Coordinate-wise max(t_free, t0 - acc - A*cap); for A > 0 infinite-capacity
    links pin at t_free.
    """
    if A == 0.0:
        return np.maximum(network.t_free, t0 - accumulated_linear)
    fin = np.isfinite(network.cap)
    shift = np.where(fin, A * np.where(fin, network.cap, 0.0), np.inf)
    return np.maximum(network.t_free, t0 - accumulated_linear - shift)


def prox_step_beckmann(accumulated_linear: np.ndarray, A: float, t0: np.ndarray,
                       network: Network, model: BeckmannModel,
                       _params: tuple | None = None) -> np.ndarray:
    """Minimize 1/2||t-t0||^2 + <acc,t> + A*sum conjugate(t_e) over t >= t_free.

    Separable; each coordinate solves s + A*cap*(s/(t_free*rho))**mu = b
    for s = t - t_free, b = t0 - acc - t_free, by bisection on [0, b]
    (the conjugate slope has infinite derivative at s = 0 when mu < 1, so
    Newton is not safe at the boundary).  Stationarity residual <= 1e-12
    in the interior, or the boundary with nonnegative residual.
    """
    if _params is None:
        rho, power = effective_bpr_params(network, model)
        pinned = ~np.isfinite(network.cap) | (rho == 0.0)
    else:
        rho, power, pinned = _params
    t_free = network.t_free
    b = t0 - accumulated_linear - t_free
    u = t_free.copy()
    active = (b > 1e-300) & ~pinned
    if not np.any(active):
        return np.maximum(u, np.where(pinned, t_free, t0 - accumulated_linear))
    if A == 0.0:
        return np.where(pinned, t_free,
                        np.maximum(t_free, t0 - accumulated_linear))
    mu = 1.0 / power[active]
    scale = (t_free[active] * rho[active])
    q = A * network.cap[active] / scale ** mu
    ba = b[active]
    lo = np.zeros_like(ba)
    hi = ba.copy()
    for _ in range(110):
        mid = 0.5 * (lo + hi)
        resid = mid + q * mid ** mu - ba
        take_hi = resid > 0
        hi = np.where(take_hi, mid, hi)
        lo = np.where(take_hi, lo, mid)
        if np.all(hi - lo <= 1e-18 * np.maximum(1.0, ba)):
            break
    s = 0.5 * (lo + hi)
    u[active] = t_free[active] + s
    inact = ~active & ~pinned
    u[inact] = np.maximum(t_free[inact], (t0 - accumulated_linear)[inact])
    return u


# ---------------------------------------------------------------------------
# USTM on the assignment dual

def default_L0(grad0: np.ndarray, eps: float) -> float:
    """Initial curvature guess 1e-6 ||grad(t0)||^2 / eps (<= M^2/eps since
    the oracle gradient norm never exceeds the Lipschitz bound M)."""
    return max(1e-6 * float(grad0 @ grad0) / eps, 1e-12)


def ustm_assign(network: Network, model: CostModel, demand: np.ndarray,
                eps: float, stop: StopRule = StopRule(), L0: float | None = None,
                workers: int = 1, restart: bool = False,
                flow_computer: FlowComputer | None = None) -> AssignmentResult:
    """Solve the assignment dual with the similar-triangles method.

    The oracle is exact here: Phi(t) = -sum_ij d_ij T_ij(t) from one
    all-or-nothing sweep, whose negated loading is the gradient.  Flows are
    recovered as the alpha-weighted average of the loadings.  With
    ``restart`` the method first runs at 10x eps and continues from the
    point reached.
    """
    lc = LinkCosts(network, model)
    own = flow_computer is None
    fc = flow_computer or FlowComputer(network, workers)
    watch = Stopwatch()
    trace = SolveTrace(columns=ASSIGN_COLUMNS, meta={"solver": "ustm"})
    if isinstance(model, BeckmannModel):
        params = effective_bpr_params(network, model)
        prox_params = (params[0], params[1], lc.pinned)

        def prox(acc, A, t0):
            return prox_step_beckmann(acc, A, t0, network, model, prox_params)
    else:
        def prox(acc, A, t0):
            return prox_step_sd(acc, A, t0, network)

    def oracle(t, _delta):
        flows, cost, _ = fc.flows_and_cost(t[None], demand[None])
        return -cost, -flows[0], None

    sd = isinstance(model, StableDynamicsModel)

    def on_accept(k, t, phi_t, primal_average, A, L, oracle_calls, **_kw):
        f_hat = primal_average
        primal = lc.potential(f_hat)
        dual = -phi_t - lc.h(t)
        gap = primal - dual
        viol = capacity_violation(network, f_hat) if sd else 0.0
        trace.append(k, watch.elapsed(), primal, dual, gap, viol, L, A, oracle_calls)
        if watch.elapsed() > stop.wall_time_s:
            trace.mark(k, "wall-time budget reached")
            return True
        if stop.gap_tol and not sd:
            return gap / max(abs(primal), 1e-300) <= stop.gap_tol
        return False

    try:
        t0 = network.t_free.copy()
        if L0 is None:
            _, g0, _ = oracle(t0, 0.0)[0], oracle(t0, 0.0)[1], None
        # one sweep for the default L0
        if L0 is None:
            _, grad0, _ = oracle(t0, 0.0)
            L0 = default_L0(grad0, eps)
        if restart:
            pre = ustm_solve(oracle, lc.h, prox, t0, L0, 10.0 * eps,
                             max(stop.max_iter // 3, 1), on_accept=None)
            t0 = pre.iterate.t
            trace.mark(0, "restart: continued from 10x-eps run")
        res = ustm_solve(oracle, lc.h, prox, t0, L0, eps, stop.max_iter,
                         on_accept=on_accept)
    finally:
        if own:
            fc.close()
    f_hat = res.primal_average
    times = res.iterate.t
    trace.meta["ustm_iterations"] = str(res.iterations)
    return AssignmentResult(flows=f_hat, times=times, trace=trace, model=model)

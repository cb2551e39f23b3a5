"""Link cost models: BPR volume-delay analytics and hard-capacity times.

Two cost models are supported.  Under the Beckmann (BPR) model the travel
time on a link is a polynomial function of its own flow,

    time(f) = t_free * (1 + rho * (f / cap)**(1/mu)),

and the dual machinery needs its antiderivative and convex conjugate, both
available in closed form.  Under the stable-dynamics model times are
Lagrange multipliers of hard capacity constraints (t >= t_free) and no
volume-delay function exists; only the linear composite term survives.

All functions are vectorized over links: scalar and ndarray arguments
broadcast the numpy way.  Units are hours and vehicles/hour throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class BeckmannModel:
    """BPR volume-delay model with default calibration rho=0.15, mu=0.25.

    Per-link (B, power) values parsed from network files override these
    defaults; see :func:`effective_bpr_params`.
    """

    rho: float = 0.15
    mu: float = 0.25

    def __post_init__(self) -> None:
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not 0 < self.mu <= 1:
            raise ValueError(f"mu must lie in (0, 1], got {self.mu}")


@dataclass(frozen=True)
class StableDynamicsModel:
    """Hard capacity constraints f <= cap; times are dual multipliers t >= t_free."""


CostModel = BeckmannModel | StableDynamicsModel


def _check_nonnegative(flow, what: str = "flow") -> None:
    if np.any(np.asarray(flow) < 0):
        raise ValueError(f"negative {what} not allowed")


def bpr_time(t_free, cap, rho, inv_mu, flow):
    """Travel time t_free * (1 + rho * (flow/cap)**inv_mu).

    ``inv_mu`` is the BPR exponent (the "power" column of network files,
    equal to 1/mu).  Nondecreasing and continuous in flow.  Links with
    infinite capacity or rho == 0 are constant-time: the result is t_free.
    """
    _check_nonnegative(flow)
    ratio = np.divide(flow, cap, out=np.zeros_like(np.asarray(flow, dtype=float)),
                      where=np.isfinite(cap))
    return t_free * (1.0 + rho * ratio ** inv_mu)


def bpr_integral(t_free, cap, rho, inv_mu, flow):
    """Antiderivative of :func:`bpr_time` from 0 to flow.

    Closed form t_free * f * (1 + rho*mu/(1+mu) * (f/cap)**(1/mu)) with
    mu = 1/inv_mu; matches adaptive quadrature of the time function.
    """
    _check_nonnegative(flow)
    mu = 1.0 / inv_mu
    ratio = np.divide(flow, cap, out=np.zeros_like(np.asarray(flow, dtype=float)),
                      where=np.isfinite(cap))
    return t_free * flow * (1.0 + rho * mu / (1.0 + mu) * ratio ** inv_mu)


def bpr_conjugate(t_free, cap, rho, inv_mu, time):
    """Convex conjugate of :func:`bpr_integral` evaluated at ``time`` >= t_free.

    cap * ((time - t_free)/(t_free*rho))**mu * (time - t_free)/(1+mu).
    Zero at time == t_free, convex and nondecreasing above it.  For
    constant-time links (infinite capacity or rho == 0) the conjugate is
    the indicator of {time == t_free}: zero there, +inf above.
    """
    t = np.asarray(time, dtype=float)
    t_free = np.asarray(t_free, dtype=float)
    if np.any(t < t_free - 1e-12 * np.maximum(1.0, np.abs(t_free))):
        raise ValueError("time below free-flow time is outside the conjugate domain")
    s = np.maximum(t - t_free, 0.0)
    mu = 1.0 / np.asarray(inv_mu, dtype=float)
    pinned = ~np.isfinite(cap) | (np.asarray(rho, dtype=float) == 0.0)
    safe_rho = np.where(pinned, 1.0, rho)
    safe_cap = np.where(pinned, 0.0, cap)
    val = safe_cap * (s / (t_free * safe_rho)) ** mu * s / (1.0 + mu)
    if np.any(pinned):
        val = np.where(pinned & (s > 0), np.inf, val)
    if val.ndim == 0:
        return float(val)
    return val


def bpr_time_derivative(t_free, cap, rho, inv_mu, flow):
    """d time / d flow, used by Newton steps in line searches."""
    _check_nonnegative(flow)
    ratio = np.divide(flow, cap, out=np.zeros_like(np.asarray(flow, dtype=float)),
                      where=np.isfinite(cap))
    with np.errstate(divide="ignore", invalid="ignore"):
        der = t_free * rho * inv_mu * ratio ** (inv_mu - 1.0) / cap
    return np.where(np.isfinite(cap), np.nan_to_num(der, nan=0.0, posinf=np.inf), 0.0)


def conjugate_slope(t_free, cap, rho, inv_mu, time):
    """Derivative of :func:`bpr_conjugate`: cap * ((t - t_free)/(t_free*rho))**mu.

    This inverts the BPR function: conjugate_slope(bpr_time(f)) == f.
    """
    s = np.maximum(np.asarray(time, dtype=float) - t_free, 0.0)
    mu = 1.0 / np.asarray(inv_mu, dtype=float)
    pinned = ~np.isfinite(cap) | (np.asarray(rho, dtype=float) == 0.0)
    safe_rho = np.where(pinned, 1.0, rho)
    safe_cap = np.where(pinned, 0.0, cap)
    return safe_cap * (s / (t_free * safe_rho)) ** mu

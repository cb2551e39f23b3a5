"""Universal method of similar triangles for composite dual problems.

Minimizes Phi(t) + h(t) over a simple domain (here t >= t_free), where Phi
is known only through an inexact first-order oracle and h enters through a
prox operator.  The method is adaptive: the local curvature estimate L is
halved at each outer step and doubled until an inexact descent test holds,
so no Lipschitz constant is supplied.  The test tolerates oracle error
delta_k = alpha_{k+1} eps / (4 A_{k+1}), which is exactly the inner
accuracy the oracle is asked for at each trial point.

Primal iterates are recovered from the gradient history: the weighted
average -(1/A_K) sum_k alpha_k grad(y^k) is a feasible flow aggregate when
the gradients are shortest-path loadings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

L_OVERFLOW = 1e30


class UstmError(RuntimeError):
    """Oracle returned garbage or the curvature estimate exploded."""


@dataclass
class DualIterate:
    """State after an accepted step: main point t, prox point u, probe y."""

    t: np.ndarray
    u: np.ndarray
    y: np.ndarray
    A: float
    L: float
    alpha: float
    accumulated_linear: np.ndarray


@dataclass
class UstmResult:
    iterate: DualIterate
    primal_average: np.ndarray
    iterations: int
    oracle_calls: int
    sequence: list[tuple[int, float, float, float, float]] = field(default_factory=list)
    # sequence rows: (k, L_k, alpha_k, A_k, delta_k)


def ustm_solve(
    oracle: Callable[[np.ndarray, float], tuple],
    h: Callable[[np.ndarray], float],
    prox: Callable[[np.ndarray, float, np.ndarray], np.ndarray],
    t0: np.ndarray,
    L0: float,
    eps: float,
    max_iter: int,
    on_accept: Callable[..., bool] | None = None,
) -> UstmResult:
    """Run the similar-triangles loop until ``max_iter`` or the callback stops it.

    ``oracle(t, delta) -> (value, grad, extras)`` evaluates the smooth part
    with additive accuracy delta (extras travel to ``on_accept`` untouched).
    ``prox(acc, A, t0)`` must return argmin_t 1/2||t - t0||^2 + <acc, t> +
    A*h(t) over the domain.  ``on_accept`` is called once per accepted outer
    step with keyword state and may return True to stop.
    """
    if L0 <= 0:
        raise ValueError("L0 must be positive")
    t = np.array(t0, dtype=float)
    u = t.copy()
    A = 0.0
    L = float(L0)
    acc = np.zeros_like(t)
    calls = 0
    seq: list[tuple[int, float, float, float, float]] = []
    result = UstmResult(iterate=DualIterate(t, u, t.copy(), A, L, 0.0, acc),
                        primal_average=np.zeros_like(t), iterations=0,
                        oracle_calls=0, sequence=seq)
    for k in range(max_iter):
        L = L / 2.0
        while True:
            alpha = 1.0 / (2.0 * L) + math.sqrt(1.0 / (4.0 * L * L) + A / L)
            A_new = A + alpha
            delta = alpha * eps / (4.0 * A_new)
            y = (alpha * u + A * t) / A_new
            phi_y, grad_y, extras_y = oracle(y, delta)
            calls += 1
            if not np.isfinite(phi_y) or not np.all(np.isfinite(grad_y)):
                raise UstmError(f"non-finite oracle output at iteration {k + 1}")
            acc_cand = acc + alpha * grad_y
            u_new = prox(acc_cand, A_new, t0)
            t_new = (alpha * u_new + A * t) / A_new
            phi_t, _, _ = oracle(t_new, delta)
            calls += 1
            if not np.isfinite(phi_t):
                raise UstmError(f"non-finite oracle value at iteration {k + 1}")
            diff = t_new - y
            rhs = (phi_y + float(grad_y @ diff)
                   + 0.5 * L * float(diff @ diff)
                   + alpha / (2.0 * A_new) * eps)
            if phi_t <= rhs:
                break
            L = 2.0 * L
            if L > L_OVERFLOW:
                raise UstmError("curvature estimate exceeded 1e30; oracle scaling is off")
        u, t, A, acc = u_new, t_new, A_new, acc_cand
        seq.append((k + 1, L, alpha, A, delta))
        result.iterate = DualIterate(t=t, u=u, y=y, A=A, L=L, alpha=alpha,
                                     accumulated_linear=acc)
        result.iterations = k + 1
        result.oracle_calls = calls
        result.primal_average = -acc / A
        if on_accept is not None:
            stop = on_accept(k=k + 1, t=t, y=y, u=u, A=A, L=L, alpha=alpha,
                             delta=delta, phi_t=phi_t, phi_y=phi_y,
                             grad_y=grad_y, extras_y=extras_y,
                             primal_average=-acc / A, oracle_calls=calls)
            if stop:
                break
    return result

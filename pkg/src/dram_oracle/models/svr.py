"""Epsilon-insensitive support-vector regression with an RBF kernel, solved by SMO.

The dual is solved over 2n variables ``alpha`` (upper tube side) and
``alpha*`` (lower side) with second-order working-set selection. Kernel rows
are computed on demand, so memory stays O(n). The returned coefficients are
``beta = alpha - alpha*`` and ``f(x) = sum_i beta_i K(x_i, x) + bias``.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .common import EmptyDatasetError, ModelError

TAU = 1e-12


class ConvergenceError(ModelError):
    """SMO stopped at ``max_iter``; ``gap`` is the primal-dual gap reached."""

    def __init__(self, message: str, gap: float, violation: float):
        super().__init__(message)
        self.gap = gap
        self.violation = violation


@njit(cache=True)
def _kernel_row(x, i, gamma, out):
    n, d = x.shape
    for j in range(n):
        acc = 0.0
        for c in range(d):
            diff = x[i, c] - x[j, c]
            acc += diff * diff
        out[j] = np.exp(-gamma * acc)


@njit(cache=True)
def _smo(x, z, c, eps, gamma, tol, max_iter):
    n = x.shape[0]
    l2 = 2 * n
    alpha = np.zeros(l2)
    y = np.ones(l2)
    p = np.empty(l2)
    for t in range(n):
        y[n + t] = -1.0
        p[t] = eps - z[t]
        p[n + t] = eps + z[t]
    g = p.copy()
    ki = np.empty(n)
    kj = np.empty(n)
    it = 0
    violation = np.inf
    while it < max_iter:
        gmax = -np.inf
        i = -1
        for t in range(l2):
            if y[t] > 0:
                if alpha[t] < c and -g[t] >= gmax:
                    gmax = -g[t]
                    i = t
            else:
                if alpha[t] > 0 and g[t] >= gmax:
                    gmax = g[t]
                    i = t
        if i < 0:
            violation = 0.0
            break
        _kernel_row(x, i % n, gamma, ki)
        gmax2 = -np.inf
        j = -1
        obj_min = np.inf
        for t in range(l2):
            qit = y[i] * y[t] * ki[t % n]
            if y[t] > 0:
                if alpha[t] > 0:
                    gd = gmax + g[t]
                    if g[t] >= gmax2:
                        gmax2 = g[t]
                    if gd > 0:
                        quad = 2.0 - 2.0 * y[i] * qit
                        if quad <= 0:
                            quad = TAU
                        od = -(gd * gd) / quad
                        if od <= obj_min:
                            j = t
                            obj_min = od
            else:
                if alpha[t] < c:
                    gd = gmax - g[t]
                    if -g[t] >= gmax2:
                        gmax2 = -g[t]
                    if gd > 0:
                        quad = 2.0 + 2.0 * y[i] * qit
                        if quad <= 0:
                            quad = TAU
                        od = -(gd * gd) / quad
                        if od <= obj_min:
                            j = t
                            obj_min = od
        violation = gmax + gmax2
        if violation < tol or j < 0:
            break
        it += 1
        _kernel_row(x, j % n, gamma, kj)
        qij = y[i] * y[j] * ki[j % n]
        ai_old = alpha[i]
        aj_old = alpha[j]
        if y[i] != y[j]:
            quad = 2.0 + 2.0 * qij
            if quad <= 0:
                quad = TAU
            delta = (-g[i] - g[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = c - diff
            else:
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = c + diff
        else:
            quad = 2.0 - 2.0 * qij
            if quad <= 0:
                quad = TAU
            delta = (g[i] - g[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > c:
                if alpha[i] > c:
                    alpha[i] = c
                    alpha[j] = total - c
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > c:
                if alpha[j] > c:
                    alpha[j] = c
                    alpha[i] = total - c
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total
        dai = alpha[i] - ai_old
        daj = alpha[j] - aj_old
        for t in range(l2):
            g[t] += y[t] * (y[i] * ki[t % n] * dai + y[j] * kj[t % n] * daj)

    # bias from free variables, else the midpoint of the feasible interval
    ub = np.inf
    lb = -np.inf
    n_free = 0
    sum_free = 0.0
    for t in range(l2):
        yg = y[t] * g[t]
        if alpha[t] >= c:
            if y[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif alpha[t] <= 0:
            if y[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            n_free += 1
            sum_free += yg
    rho = sum_free / n_free if n_free > 0 else (ub + lb) / 2.0

    beta = alpha[:n] - alpha[n:]
    # dual objective (minimisation form) and primal value for the gap
    dual = 0.0
    for t in range(l2):
        dual += alpha[t] * (g[t] + p[t])
    dual *= 0.5
    quad_term = 0.0
    loss = 0.0
    for t in range(n):
        kb = g[t] - p[t]
        quad_term += beta[t] * kb
        r = abs(z[t] - (kb - rho)) - eps
        if r > 0:
            loss += r
    primal = 0.5 * quad_term + c * loss
    return beta, -rho, it, violation, primal + dual, dual


def svr_dual_objective(kernel: np.ndarray, z: np.ndarray, beta: np.ndarray, eps: float) -> float:
    """0.5 b'Kb + eps |b|_1 - z'b, the quantity SMO minimises."""
    return float(0.5 * beta @ kernel @ beta + eps * np.abs(beta).sum() - z @ beta)


def rbf_kernel(a: np.ndarray, b: np.ndarray, gamma: float) -> np.ndarray:
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2)
    return np.exp(-gamma * d2)


def fit_svr(
    x: np.ndarray,
    y: np.ndarray,
    c: float = 10.0,
    epsilon: float = 0.01,
    gamma: float = 0.0,
    tol: float = 1e-3,
    max_iter: int = 0,
) -> dict:
    """Fit on rows ``x`` and targets ``y``; ``gamma = 0`` selects 1/d.

    Targets are centred before solving; the offset folds into the bias, which
    leaves the solution unchanged because the bias is unpenalised.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(x)
    if n == 0:
        raise EmptyDatasetError("cannot fit SVR on an empty dataset")
    if not c > 0 or epsilon < 0 or gamma < 0:
        raise ModelError("svr: need c > 0, epsilon >= 0, gamma > 0")
    g = gamma if gamma > 0 else 1.0 / max(1, x.shape[1])
    limit = max_iter if max_iter > 0 else max(10_000_000, 100 * n)
    offset = float(y.mean())
    beta, bias, it, violation, gap, dual = _smo(x, y - offset, float(c), float(epsilon), g, tol, limit)
    if violation >= tol:
        raise ConvergenceError(
            f"SMO did not reach KKT tolerance {tol} in {it} iterations "
            f"(violation {violation:.3g}, duality gap {gap:.3g})",
            gap=float(gap),
            violation=float(violation),
        )
    keep = beta != 0.0
    return {
        "support": x[keep].copy(),
        "coef": beta[keep].copy(),
        "bias": float(bias + offset),
        "gamma": float(g),
        "n_iter": int(it),
        "gap": float(gap),
        "dual": float(dual),
        "beta": beta,
    }


def svr_predict(model: dict, queries: np.ndarray) -> np.ndarray:
    q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if len(model["coef"]) == 0:
        return np.full(len(q), model["bias"])
    k = rbf_kernel(q, model["support"], model["gamma"])
    return k @ model["coef"] + model["bias"]

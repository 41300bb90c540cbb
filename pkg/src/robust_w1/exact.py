"""Exact 1-Wasserstein distance between uniform empirical measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment, linprog
from scipy.sparse import coo_matrix, vstack
from scipy.spatial.distance import cdist

from .critic import forward_batch, lipschitz_bound
from .data import Sample, ValidationError


def _points(p):
    if isinstance(p, Sample):
        return p.points
    a = np.asarray(p, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    return a


@dataclass(frozen=True)
class DiscreteW1Problem:
    xs: np.ndarray
    ys: np.ndarray
    cost: np.ndarray

    @classmethod
    def build(cls, xs, ys):
        xs, ys = _points(xs), _points(ys)
        if xs.shape[0] == 0 or ys.shape[0] == 0:
            raise ValidationError("exact W1 needs non-empty point sets")
        if xs.shape[1] != ys.shape[1]:
            raise ValidationError(f"dimension mismatch: {xs.shape[1]} vs {ys.shape[1]}")
        return cls(xs, ys, cdist(xs, ys))


def _transport_lp(cost):
    """Balanced transportation problem with masses 1/n and 1/m."""
    n, m = cost.shape
    rows = np.repeat(np.arange(n), m)
    cols = np.arange(n * m)
    a_src = coo_matrix((np.ones(n * m), (rows, cols)), shape=(n, n * m))
    rows = np.tile(np.arange(m), n)
    a_dst = coo_matrix((np.ones(n * m), (rows, cols)), shape=(m, n * m))
    a_eq = vstack([a_src, a_dst]).tocsr()
    # scale masses to n*m so every supply/demand is an integer
    b_eq = np.concatenate([np.full(n, float(m)), np.full(m, float(n))])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs-ds",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"transportation LP failed: {res.message}")
    return res.x.reshape(n, m) / (n * m)


def optimal_plan(xs, ys):
    """Optimal coupling ``pi`` (n x m, rows sum to 1/n, columns to 1/m)."""
    prob = DiscreteW1Problem.build(xs, ys)
    n, m = prob.cost.shape
    if n == m:
        r, c = linear_sum_assignment(prob.cost)
        plan = np.zeros((n, m))
        plan[r, c] = 1.0 / n
        return plan
    return _transport_lp(prob.cost)


def exact_w1(xs, ys):
    """Exact W1 between the uniform empirical measures on ``xs`` and ``ys``.

    Equal sizes are solved as an assignment problem, unequal sizes as a
    transportation linear program.
    """
    prob = DiscreteW1Problem.build(xs, ys)
    n, m = prob.cost.shape
    if n == m:
        r, c = linear_sum_assignment(prob.cost)
        return float(prob.cost[r, c].sum() / n)
    plan = _transport_lp(prob.cost)
    return float(np.sum(plan * prob.cost))


def empirical_lipschitz_ratio(f_vals, pts):
    """Largest ``|f(p) - f(q)| / ||p - q||`` over distinct pairs of ``pts``."""
    dist = cdist(pts, pts)
    diff = np.abs(f_vals[:, None] - f_vals[None, :])
    mask = dist > 0
    if not mask.any():
        return 0.0
    return float(np.max(diff[mask] / dist[mask]))


def exact_w1_dual_check(xs, ys, critic):
    """Normalised dual value of ``critic``; never exceeds ``exact_w1(xs, ys)``.

    The mean gap ``mean phi(X) - mean phi(Y)`` is divided by the larger of
    the critic's weight-based Lipschitz bound and its realised Lipschitz
    ratio over the joint sample. ``critic`` is a :class:`CriticNet` or any
    vectorised function.
    """
    xs, ys = _points(xs), _points(ys)
    f = critic if callable(critic) else (lambda p: forward_batch(critic, p))
    fx, fy = np.asarray(f(xs), float), np.asarray(f(ys), float)
    gap = float(fx.mean() - fy.mean())
    pts = np.concatenate([xs, ys])
    lip = empirical_lipschitz_ratio(np.concatenate([fx, fy]), pts)
    if hasattr(critic, "w1"):
        lip = max(lip, lipschitz_bound(critic))
    if lip == 0.0:
        if gap != 0.0:
            raise ValidationError("critic has zero Lipschitz constant but a non-zero mean gap")
        return 0.0
    return gap / lip

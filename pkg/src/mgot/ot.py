"""Entropic optimal transport: Sinkhorn, Gromov-Wasserstein and the fused
graph OT distance, plus a brute-force permutation oracle for small problems.

All functions are pure; arrays are copied into float64 before use.
"""

from dataclasses import dataclass, field, replace
import itertools
import math

import numpy as np
from scipy.special import logsumexp

from ._validation import (
    ConvergenceError,
    check_cost,
    check_marginal,
    check_positive,
    check_square,
    uniform,
)

# small beta underflows exp(-C/beta); a large cost span relative to beta makes
# the plain kernel iteration crawl. Both go through the annealed stabilized path.
_LOG_DOMAIN_BETA = 0.01
_LOG_DOMAIN_RATIO = 8.0


@dataclass(frozen=True)
class SinkhornConfig:
    entropy_weight: float = 0.1
    max_iterations: int = 1000
    tolerance: float = 1e-9

    def __post_init__(self):
        check_positive(self.entropy_weight, "entropy_weight")
        check_positive(self.tolerance, "tolerance")
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError("max_iterations must be a positive integer")


@dataclass(frozen=True)
class GotConfig:
    """Settings for the fused GOT solver.

    ``lambda_mix`` weights the node-to-node (Wasserstein) term against the
    structural (Gromov-Wasserstein) term. The alternation is non-convex, so
    besides the independent coupling it is restarted ``restarts`` times from
    seeded random couplings and the lowest objective is kept. The outer loop
    stops early once the plan moves by at most the Sinkhorn tolerance.
    """

    lambda_mix: float = 0.5
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    outer_iterations: int = 20
    restarts: int = 3

    def __post_init__(self):
        if not (0.0 <= self.lambda_mix <= 1.0):
            raise ValueError(f"lambda_mix must lie in [0, 1], got {self.lambda_mix!r}")
        if int(self.outer_iterations) != self.outer_iterations or self.outer_iterations < 1:
            raise ValueError("outer_iterations must be a positive integer")
        if int(self.restarts) != self.restarts or self.restarts < 0:
            raise ValueError("restarts must be a non-negative integer")


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling matrix with the marginals it was solved for.

    ``n_iter`` counts Sinkhorn scaling iterations (summed over outer rounds
    for the GW / GOT solvers); ``violation`` is the final max-norm marginal
    error.
    """

    values: np.ndarray
    source_marginal: np.ndarray
    target_marginal: np.ndarray
    n_iter: int = 0
    violation: float = 0.0

    @property
    def shape(self):
        return self.values.shape

    def marginal_violation(self):
        T = self.values
        return max(
            float(np.max(np.abs(T.sum(axis=1) - self.source_marginal))),
            float(np.max(np.abs(T.sum(axis=0) - self.target_marginal))),
        )

    def entropy(self):
        T = self.values[self.values > 0]
        return float(-np.sum(T * np.log(T)))


def _as_array(plan):
    return plan.values if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=np.float64)


def _sinkhorn_kernel(C, u, v, beta, max_iter, tol):
    K = np.exp(-C / beta)
    b = np.ones_like(v)
    err = np.inf
    for it in range(1, max_iter + 1):
        Kb = K @ b
        a = u / Kb
        b = v / (K.T @ a)
        err = float(np.max(np.abs(a * (K @ b) - u)))
        if err <= tol:
            break
    return a[:, None] * K * b[None, :], it, err


def _stabilized_pass(C, u, v, f, g, beta, max_iter, tol, absorb_at=1e30):
    """Kernel-form scaling on a kernel with absorbed dual potentials ``f, g``.

    Scalings are folded back into the potentials whenever they leave
    ``[1/absorb_at, absorb_at]``. Returns ``(T, f, g, iterations, error)``.
    """

    def kernel():
        return np.exp((f[:, None] + g[None, :] - C) / beta)

    K = kernel()
    a = np.ones_like(u)
    b = np.ones_like(v)
    err = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        b = v / (K.T @ a)
        Kb = K @ b
        err = float(np.max(np.abs(a * Kb - u)))
        if err <= tol:
            break
        a = u / Kb
        if (
            not (np.all(np.isfinite(a)) and np.all(np.isfinite(b)))
            or max(a.max(), b.max()) > absorb_at
            or min(a.min(), b.min()) < 1 / absorb_at
        ):
            if not (np.all(np.isfinite(a)) and np.all(a > 0) and np.all(b > 0)):
                raise ConvergenceError("sinkhorn scaling degenerated", err, it)
            f = f + beta * np.log(a)
            g = g + beta * np.log(b)
            K = kernel()
            a = np.ones_like(u)
            b = np.ones_like(v)
    f = f + beta * np.log(a)
    g = g + beta * np.log(b)
    return a[:, None] * K * b[None, :], f, g, it, err


def _semidual_rows(C, g, beta, u):
    Z = (g[None, :] - C) / beta
    lse = logsumexp(Z, axis=1)
    P = np.exp(Z - lse[:, None])
    return P, lse


def _newton_polish(C, u, v, g, beta, max_steps, tol):
    """Newton ascent on the semi-dual in ``g`` (rows satisfied exactly).

    Used when plain scaling stalls on ill-conditioned kernels, e.g. nearly
    block-diagonal plans at small ``beta``. Directions in which the dual is
    numerically flat (columns locked to a single row) are dropped by the
    pseudo-inverse.
    """
    def dual(g):
        _, lse = _semidual_rows(C, g, beta, u)
        return float(v @ g - beta * (u @ lse))

    steps = 0
    for steps in range(1, max_steps + 1):
        P, _ = _semidual_rows(C, g, beta, u)
        T = u[:, None] * P
        c = T.sum(axis=0)
        r = v - c
        if np.max(np.abs(r)) <= tol:
            break
        J = (np.diag(c) - T.T @ P) / beta
        delta = np.linalg.lstsq(J, r, rcond=1e-13)[0]
        base, slope, t = dual(g), float(r @ delta), 1.0
        while dual(g + t * delta) < base + 1e-4 * t * slope:
            t *= 0.5
            if t < 1e-10:
                break
        else:
            g = g + t * delta
            continue
        break
    P, _ = _semidual_rows(C, g, beta, u)
    T = u[:, None] * P
    return T, steps, float(np.max(np.abs(T.sum(axis=0) - v)))


def _sinkhorn_log(C, u, v, beta, max_iter, tol, scaling_budget=300, newton_steps=100):
    """Stabilized Sinkhorn with entropy annealing and a Newton fallback.

    Halves the entropy weight from the cost span down to ``beta``,
    warm-starting each stage from the previous dual potentials. If the final
    stage has not met ``tol`` after ``scaling_budget`` scaling rounds, the
    potentials are polished by Newton steps on the semi-dual.
    """
    span = float(np.ptp(C))
    betas = [beta]
    while betas[-1] * 2 < span:
        betas.append(betas[-1] * 2)
    betas.reverse()
    f = np.zeros_like(u)
    g = np.zeros_like(v)
    total = 0
    for eps in betas[:-1]:
        f = eps * (np.log(u) - logsumexp((g[None, :] - C) / eps, axis=1))
        _, f, g, it, _ = _stabilized_pass(C, u, v, f, g, eps, min(100, max_iter), 1e-4)
        total += it
    f = beta * (np.log(u) - logsumexp((g[None, :] - C) / beta, axis=1))
    remaining = max_iter - total
    # keep part of the iteration budget for the Newton fallback
    budget = max(1, min(scaling_budget, remaining - min(newton_steps, remaining // 2)))
    T, f, g, it, err = _stabilized_pass(C, u, v, f, g, beta, budget, tol)
    total += it
    if err > tol and total < max_iter:
        T_n, it, err_n = _newton_polish(C, u, v, g, beta, min(newton_steps, max_iter - total), tol)
        total += it
        if err_n < err:
            T, err = T_n, err_n
    return T, total, err


def sinkhorn(cost, u, v, cfg=None):
    """Solve entropic OT ``min <T, C> + beta * sum T log T`` over Pi(u, v).

    Parameters
    ----------
    cost : array-like, shape (n, m)
        Nonnegative cost matrix.
    u, v : array-like, shapes (n,) and (m,)
        Strictly positive marginals on the probability simplex.
    cfg : SinkhornConfig, optional

    Returns
    -------
    TransportPlan

    Raises
    ------
    ConvergenceError
        If the row-marginal violation is still above ``cfg.tolerance`` after
        ``cfg.max_iterations`` scaling rounds.
    """
    cfg = cfg or SinkhornConfig()
    C = check_cost(cost)
    n, m = C.shape
    u = check_marginal(u, n, "u")
    v = check_marginal(v, m, "v")
    beta = cfg.entropy_weight
    if beta <= _LOG_DOMAIN_BETA or np.ptp(C) / beta > _LOG_DOMAIN_RATIO:
        T, it, err = _sinkhorn_log(C, u, v, beta, cfg.max_iterations, cfg.tolerance)
    else:
        T, it, err = _sinkhorn_kernel(C, u, v, beta, cfg.max_iterations, cfg.tolerance)
    if not np.all(np.isfinite(T)):
        raise ConvergenceError("sinkhorn produced non-finite plan entries", err, it)
    plan = TransportPlan(T, u, v, n_iter=it)
    violation = plan.marginal_violation()
    if err > cfg.tolerance or violation > max(cfg.tolerance, 1e-12):
        raise ConvergenceError(
            f"sinkhorn did not converge in {it} iterations "
            f"(marginal violation {violation:.3e} > {cfg.tolerance:.1e})",
            violation,
            it,
        )
    return TransportPlan(T, u, v, n_iter=it, violation=violation)


def transport_cost(plan, cost):
    """Return ``sum_ij T_ij C_ij``."""
    T = _as_array(plan)
    C = np.asarray(cost, dtype=np.float64)
    if T.shape != C.shape:
        raise ValueError(f"plan shape {T.shape} does not match cost shape {C.shape}")
    return float(np.sum(T * C))


def gw_linearized_cost(intra_a, intra_b, plan):
    """Gromov-Wasserstein cost linearized at ``plan``.

    ``L[i, j] = sum_{i', j'} plan[i', j'] * |intra_a[i, i'] - intra_b[j, j']|``,
    evaluated by direct summation (one source node ``i'`` at a time).
    """
    A = check_square(intra_a, "intra_a")
    B = check_square(intra_b, "intra_b")
    P = _as_array(plan)
    if P.shape != (A.shape[0], B.shape[0]):
        raise ValueError(
            f"plan shape {P.shape} does not match graphs ({A.shape[0]}, {B.shape[0]})"
        )
    n, m = P.shape
    L = np.zeros((n, m))
    for k in range(n):
        if not P[k].any():
            continue
        # diff[i, j, j'] = |A[i, k] - B[j, j']|
        diff = np.abs(A[:, k, None, None] - B[None, :, :])
        L += diff @ P[k]
    return L


def _fused_objective(T, cross_cost, A, B, lambda_mix):
    wd = transport_cost(T, cross_cost) if lambda_mix > 0 else 0.0
    gw = transport_cost(T, gw_linearized_cost(A, B, T)) if lambda_mix < 1 else 0.0
    return lambda_mix * wd + (1.0 - lambda_mix) * gw, wd, gw


def got_objective(plan, cross_cost, intra_a, intra_b, lambda_mix):
    """Evaluate the fused GOT objective at a fixed plan.

    Returns
    -------
    (total, wd_term, gw_term) : tuple of float
        ``total = lambda * wd_term + (1 - lambda) * gw_term``.
    """
    return _fused_objective(_as_array(plan), cross_cost, intra_a, intra_b, lambda_mix)


def _random_coupling(u, v, seed):
    R = np.random.default_rng(seed).random((u.size, v.size))
    return sinkhorn(R, u, v, SinkhornConfig(0.1, 1000, 1e-12)).values


def _alternate_from(T, cross_cost, A, B, u, v, cfg, row_weights):
    lam = cfg.lambda_mix
    plan = None
    total_iter = 0
    for _ in range(cfg.outer_iterations):
        if lam == 1.0:
            lin = cross_cost
        else:
            S = T if row_weights is None else row_weights[:, None] * T
            L = gw_linearized_cost(A, B, S)
            lin = L if cross_cost is None else lam * cross_cost + (1.0 - lam) * L
        if row_weights is not None:
            lin = row_weights[:, None] * lin
        plan = sinkhorn(lin, u, v, cfg.sinkhorn)
        total_iter += plan.n_iter
        moved = np.max(np.abs(plan.values - T))
        T = plan.values
        if lam == 1.0 or moved <= cfg.sinkhorn.tolerance:
            # lam == 1: the cost does not depend on the plan
            break
    return TransportPlan(T, u, v, n_iter=total_iter, violation=plan.violation)


def _alternate(cross_cost, A, B, u, v, cfg, row_weights=None):
    """Alternate linearization of the structural term with a Sinkhorn solve.

    With ``row_weights`` (normalized mask weights) the objective is taken on
    the reweighted plan ``S = w[:, None] * T``: the structural term is
    linearized at ``S`` and the whole linear cost is scaled row-wise by ``w``.

    Starts from ``u v^T``, then from ``cfg.restarts`` random couplings
    (seeds 1, 2, ...); returns the plan with the lowest objective, earliest
    start on ties. ``n_iter`` counts Sinkhorn iterations over all starts.
    """
    lam = cfg.lambda_mix
    w = 1.0 if row_weights is None else row_weights[:, None]
    C = 0.0 if cross_cost is None else cross_cost

    def objective(T):
        total, _, _ = _fused_objective(w * T, C, A, B, lam)
        return total

    best = _alternate_from(np.outer(u, v), cross_cost, A, B, u, v, cfg, row_weights)
    if lam == 1.0:
        return best
    best_obj = objective(best.values)
    total_iter = best.n_iter
    for seed in range(1, cfg.restarts + 1):
        T0 = _random_coupling(u, v, seed)
        plan = _alternate_from(T0, cross_cost, A, B, u, v, cfg, row_weights)
        total_iter += plan.n_iter
        obj = objective(plan.values)
        if obj < best_obj:
            best, best_obj = plan, obj
    return TransportPlan(best.values, u, v, n_iter=total_iter, violation=best.violation)


def _check_graphs(intra_a, intra_b, n, m):
    A = check_square(intra_a, "intra_a")
    B = check_square(intra_b, "intra_b")
    if A.shape[0] != n or B.shape[0] != m:
        raise ValueError(
            f"graph sizes ({A.shape[0]}, {B.shape[0]}) do not match marginals ({n}, {m})"
        )
    return A, B


def gromov_wasserstein(intra_a, intra_b, u=None, v=None, cfg=None):
    """Entropic Gromov-Wasserstein distance between two weighted graphs.

    Alternates ``L <- gw_linearized_cost(A, B, T)``, ``T <- sinkhorn(L, u, v)``
    for at most ``cfg.outer_iterations`` rounds, from ``u v^T`` and from
    ``cfg.restarts`` seeded random couplings. ``cfg.lambda_mix`` is ignored.

    Returns
    -------
    plan : TransportPlan
    distance : float
        ``<T, L(T)>`` at the returned plan.
    """
    cfg = cfg or GotConfig()
    A = check_square(intra_a, "intra_a")
    B = check_square(intra_b, "intra_b")
    n, m = A.shape[0], B.shape[0]
    u = check_marginal(uniform(n) if u is None else u, n, "u")
    v = check_marginal(uniform(m) if v is None else v, m, "v")
    plan = _alternate(None, A, B, u, v, replace(cfg, lambda_mix=0.0))
    T = plan.values
    return plan, transport_cost(T, gw_linearized_cost(A, B, T))


def got_distance(cross_cost, intra_a, intra_b, u=None, v=None, cfg=None):
    """Fused graph OT distance mixing Wasserstein and Gromov-Wasserstein terms.

    Each outer round solves Sinkhorn on the linearized cost
    ``lambda * C + (1 - lambda) * L(T)``. At ``lambda == 1`` this is a single
    Sinkhorn solve on ``C``; at ``lambda == 0`` it is exactly
    :func:`gromov_wasserstein`.

    Returns
    -------
    plan : TransportPlan
    objective : float
        ``lambda * <T, C> + (1 - lambda) * <T, L(T)>`` at the returned plan.
    """
    cfg = cfg or GotConfig()
    C = check_cost(cross_cost, "cross_cost")
    n, m = C.shape
    A, B = _check_graphs(intra_a, intra_b, n, m)
    u = check_marginal(uniform(n) if u is None else u, n, "u")
    v = check_marginal(uniform(m) if v is None else v, m, "v")
    lam = cfg.lambda_mix
    if lam == 0.0:
        # bit-identical to the GW path
        C = None
    plan = _alternate(C, A, B, u, v, cfg)
    objective, _, _ = _fused_objective(plan.values, cross_cost, A, B, lam)
    return plan, objective


def exact_ot_oracle(cost):
    """Exact OT for a square cost with uniform marginals, by enumeration.

    By Birkhoff's theorem an optimum sits at a permutation matrix scaled by
    ``1/n``; every permutation is tried. Ties go to the first permutation in
    lexicographic order. Only for ``n <= 8``.
    """
    C = check_cost(cost)
    n = C.shape[0]
    if C.shape[1] != n:
        raise ValueError(f"cost must be square, got shape {C.shape}")
    if n > 8:
        raise ValueError(f"exact_ot_oracle enumerates n! plans; n={n} > 8")
    rows = np.arange(n)
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(n)):
        total = float(C[rows, perm].sum())
        if total < best:
            best, best_perm = total, perm
    T = np.zeros((n, n))
    T[rows, best_perm] = 1.0 / n
    u = uniform(n)
    return TransportPlan(T, u, u.copy()), best / n

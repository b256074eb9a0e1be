"""Masked graph optimal transport.

A per-patch weight ``m_i = sigmoid(w . x_i + b)`` reweights the transport
plan inside the alignment objective. Weights are normalized against the
source marginal, ``m~_i = m_i / sum_k u_k m_k``, so the reweighted plan
``S = m~[:, None] * T`` still has unit mass while ``T`` itself stays in
``Pi(u, v)``. A constant mask therefore gives back plain GOT exactly, and
patches with low weight contribute less to the alignment cost.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from ._validation import ConvergenceError, check_cost, check_marginal, uniform
from .graph import EmbeddingSet, build_graph, cross_cost_matrix
from .ot import GotConfig, _alternate, got_objective, gw_linearized_cost, sinkhorn

UNROLL_DEPTH = 50
FD_STEP = 1e-5
GRADIENT_MODES = ("unrolled", "finite_difference")


@dataclass(frozen=True, eq=False)
class MaskGenerator:
    """Affine map followed by a sigmoid, one weight per embedding dimension."""

    weight: np.ndarray
    bias: float = 0.0

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ValueError("mask generator parameters must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", float(self.bias))

    @classmethod
    def init(cls, dim, seed=0):
        rng = np.random.default_rng(seed)
        return cls(rng.uniform(-0.1, 0.1, size=dim), 0.0)

    @property
    def dim(self):
        return self.weight.size


@dataclass(frozen=True)
class MaskTrainConfig:
    learning_rate: float = 10.0
    epochs: int = 50
    seed: int = 0
    gradient_mode: str = "unrolled"

    def __post_init__(self):
        if not (np.isfinite(self.learning_rate) and self.learning_rate >= 0):
            raise ValueError("learning_rate must be a nonnegative finite number")
        if int(self.epochs) != self.epochs or self.epochs < 0:
            raise ValueError("epochs must be a nonnegative integer")
        if self.gradient_mode not in GRADIENT_MODES:
            raise ValueError(f"gradient_mode must be one of {GRADIENT_MODES}")


def _patch_matrix(patches):
    return patches.vectors if isinstance(patches, EmbeddingSet) else np.asarray(patches, float)


def compute_mask(gen, patches):
    X = _patch_matrix(patches)
    if X.ndim != 2 or X.shape[1] != gen.dim:
        raise ValueError(f"patch dimension {X.shape[-1]} does not match generator dimension {gen.dim}")
    return expit(X @ gen.weight + gen.bias)


def _check_mask(mask, n):
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != (n,):
        raise ValueError(f"mask has shape {m.shape}, expected ({n},)")
    bad = np.flatnonzero(~np.isfinite(m) | (m <= 0))
    if bad.size:
        raise ConvergenceError(
            f"mask entry {int(bad[0])} is {m[bad[0]]!r}; masked transport needs positive weights",
            index=int(bad[0]),
        )
    return m


def normalize_mask(mask, u):
    """Scale mask weights so that ``sum_i u_i * w_i == 1``."""
    m = np.asarray(mask, dtype=np.float64)
    return m / float(np.dot(u, m))


def masked_sinkhorn(cost, u, v, mask, cfg=None):
    """Sinkhorn on the mask-reweighted cost ``w_i * C_ij``.

    The returned plan still satisfies both marginals; it minimizes
    ``<S, C> + beta * H(T)`` where ``S = w[:, None] * T`` and ``w`` is the
    mask normalized against ``u``.
    """
    C = check_cost(cost)
    u = check_marginal(u, C.shape[0], "u")
    m = _check_mask(mask, C.shape[0])
    w = normalize_mask(m, u)
    return sinkhorn(w[:, None] * C, u, v, cfg)


def _problem_arrays(patches, labels, tau):
    C = cross_cost_matrix(patches, labels)
    A = build_graph(patches, tau).adjacency
    B = build_graph(labels, tau).adjacency
    return C, A, B


def masked_got(patches, labels, mask, cfg=None, tau=0.1, u=None, v=None):
    """Masked GOT for a given mask vector; returns ``(plan, objective)``."""
    cfg = cfg or GotConfig()
    C, A, B = _problem_arrays(patches, labels, tau)
    n, m = C.shape
    u = check_marginal(uniform(n) if u is None else u, n, "u")
    v = check_marginal(uniform(m) if v is None else v, m, "v")
    w = normalize_mask(_check_mask(mask, n), u)
    plan = _alternate(None if cfg.lambda_mix == 0 else C, A, B, u, v, cfg, row_weights=w)
    objective, _, _ = got_objective(w[:, None] * plan.values, C, A, B, cfg.lambda_mix)
    return plan, objective


def mgot_distance(patches, labels, gen, cfg=None, tau=0.1, u=None, v=None):
    """Masked GOT between patch and label embeddings.

    Returns
    -------
    plan : TransportPlan
        Coupling in ``Pi(u, v)``.
    mask : ndarray, shape (n,)
        Raw generator weights in (0, 1).
    objective : float
        ``lambda * <S, C> + (1 - lambda) * <S, L(S)>`` with ``S`` the
        reweighted plan.
    """
    mask = compute_mask(gen, patches)
    plan, objective = masked_got(patches, labels, mask, cfg, tau, u, v)
    return plan, mask, objective


def mgot_terms(plan, mask, patches, labels, lambda_mix, tau=0.1):
    """``(objective, wd_term, gw_term)`` of a masked plan."""
    C, A, B = _problem_arrays(patches, labels, tau)
    w = normalize_mask(mask, plan.source_marginal)
    return got_objective(w[:, None] * plan.values, C, A, B, lambda_mix)


class _MaskObjective:
    """Fixed-depth MGOT objective as a smooth function of generator params.

    One structural linearization at ``u v^T`` followed by exactly
    ``depth`` log-domain Sinkhorn iterations (no early stopping), so that
    the value is differentiable and finite differences probe the same
    function the reverse pass differentiates.
    """

    def __init__(self, patches, labels, cfg, tau, u=None, v=None):
        self.X = _patch_matrix(patches)
        self.C, self.A, self.B = _problem_arrays(patches, labels, tau)
        n, m = self.C.shape
        self.u = check_marginal(uniform(n) if u is None else u, n, "u")
        self.v = check_marginal(uniform(m) if v is None else v, m, "v")
        self.lam = cfg.lambda_mix
        self.beta = cfg.sinkhorn.entropy_weight
        self.depth = min(UNROLL_DEPTH, cfg.sinkhorn.max_iterations)

    def _L(self, P):
        if self.lam == 1.0:
            return np.zeros_like(P)
        return gw_linearized_cost(self.A, self.B, P)

    def value(self, weight, bias):
        return self._run(weight, bias, grad=False)[0]

    def value_and_grad(self, weight, bias):
        return self._run(weight, bias, grad=True)

    def _run(self, weight, bias, grad):
        X, C, u, v, lam, beta = self.X, self.C, self.u, self.v, self.lam, self.beta
        m = expit(X @ weight + bias)
        s = float(u @ m)
        mt = m / s
        T0 = np.outer(u, v)
        L0 = self._L(mt[:, None] * T0)
        base = lam * C + (1.0 - lam) * L0
        Clin = mt[:, None] * base

        log_u, log_v = np.log(u), np.log(v)
        f = np.zeros_like(u)
        g = np.zeros_like(v)
        fs, gs = [], [g]
        for _ in range(self.depth):
            f = beta * (log_u - logsumexp((g[None, :] - Clin) / beta, axis=1))
            g = beta * (log_v - logsumexp((f[:, None] - Clin) / beta, axis=0))
            fs.append(f)
            gs.append(g)
        T = np.exp((f[:, None] + g[None, :] - Clin) / beta)
        S = mt[:, None] * T
        L1 = self._L(S)
        value = lam * float(np.sum(S * C)) + (1.0 - lam) * float(np.sum(S * L1))
        if not grad:
            return value, None, None

        # reverse pass
        S_bar = lam * C + 2.0 * (1.0 - lam) * L1
        T_bar = mt[:, None] * S_bar
        mt_bar = np.sum(T * S_bar, axis=1)

        E = T_bar * T / beta
        f_bar = E.sum(axis=1)
        g_bar = E.sum(axis=0)
        C_bar = -E
        for k in range(self.depth - 1, -1, -1):
            f_k, g_k, g_prev = fs[k], gs[k + 1], gs[k]
            # g_k = beta log v - beta LSE_i((f_k - C) / beta)
            Q = np.exp((f_k[:, None] + g_k[None, :] - Clin) / beta) / v[None, :]
            f_bar = f_bar - Q @ g_bar
            C_bar += Q * g_bar[None, :]
            # f_k = beta log u - beta LSE_j((g_prev - C) / beta)
            P = np.exp((f_k[:, None] + g_prev[None, :] - Clin) / beta) / u[:, None]
            C_bar += P * f_bar[:, None]
            g_bar = -(P.T @ f_bar)
            f_bar = np.zeros_like(f_bar)

        mt_bar += np.sum(C_bar * base, axis=1)
        if lam < 1.0:
            L0_bar = (1.0 - lam) * mt[:, None] * C_bar
            # L is self-adjoint for symmetric graphs
            mt_bar += np.sum(self._L(L0_bar) * T0, axis=1)
        m_bar = mt_bar / s - u * float(mt_bar @ m) / s**2
        z_bar = m_bar * m * (1.0 - m)
        return value, X.T @ z_bar, float(z_bar.sum())

    def finite_difference(self, weight, bias, step=FD_STEP):
        weight = np.asarray(weight, dtype=np.float64)
        gw = np.empty_like(weight)
        for k in range(weight.size):
            e = np.zeros_like(weight)
            e[k] = step
            gw[k] = (self.value(weight + e, bias) - self.value(weight - e, bias)) / (2 * step)
        gb = (self.value(weight, bias + step) - self.value(weight, bias - step)) / (2 * step)
        return gw, gb


def mask_objective(gen, patches, labels, cfg=None, tau=0.1):
    """Fixed-depth training objective of the mask generator."""
    return _MaskObjective(patches, labels, cfg or GotConfig(), tau).value(gen.weight, gen.bias)


def mask_loss_gradient(gen, patches, labels, cfg=None, tau=0.1, mode="unrolled"):
    """Gradient of the training objective w.r.t. ``(weight, bias)``.

    ``mode="unrolled"`` back-propagates through the Sinkhorn iterations;
    ``mode="finite_difference"`` uses central differences with step 1e-5.
    """
    if mode not in GRADIENT_MODES:
        raise ValueError(f"mode must be one of {GRADIENT_MODES}")
    obj = _MaskObjective(patches, labels, cfg or GotConfig(), tau)
    if mode == "unrolled":
        _, gw, gb = obj.value_and_grad(gen.weight, gen.bias)
    else:
        gw, gb = obj.finite_difference(gen.weight, gen.bias)
    if not (np.all(np.isfinite(gw)) and np.isfinite(gb)):
        raise ConvergenceError("mask gradient is not finite")
    return gw, gb


def train_mask(gen, patches, labels, cfg=None, tcfg=None, tau=0.1):
    """Plain gradient descent on the generator parameters.

    ``gen=None`` initializes a generator from ``tcfg.seed``. Returns the
    trained generator and the objective after each epoch.
    """
    cfg = cfg or GotConfig()
    tcfg = tcfg or MaskTrainConfig()
    X = _patch_matrix(patches)
    if gen is None:
        gen = MaskGenerator.init(X.shape[1], tcfg.seed)
    obj = _MaskObjective(patches, labels, cfg, tau)

    def step_grad(w, b):
        if tcfg.gradient_mode == "unrolled":
            return obj.value_and_grad(w, b)
        return (obj.value(w, b), *obj.finite_difference(w, b))

    w, b = gen.weight.copy(), gen.bias
    trace = []
    if tcfg.epochs == 0:
        return gen, trace
    _, gw, gb = step_grad(w, b)
    for epoch in range(tcfg.epochs):
        w = w - tcfg.learning_rate * gw
        b = b - tcfg.learning_rate * gb
        value, gw, gb = step_grad(w, b)
        if not (np.isfinite(value) and np.all(np.isfinite(gw)) and np.isfinite(gb)):
            raise ConvergenceError(f"mask training diverged at epoch {epoch}", iterations=epoch)
        trace.append(value)
    return MaskGenerator(w, b), trace

"""scikit-learn style wrappers around the GOT / masked-GOT solvers.

``fit(X, Y)`` aligns the rows of ``X`` (patch embeddings) with the rows of
``Y`` (label embeddings). Both estimators support ``get_params`` /
``set_params`` / ``clone`` like any sklearn estimator.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .graph import build_graph, cross_cost_matrix
from .masked import (
    MaskGenerator,
    MaskTrainConfig,
    compute_mask,
    mgot_distance,
    mgot_terms,
    train_mask,
)
from .ot import GotConfig, SinkhornConfig, got_distance, got_objective


def _check_pair(X, Y):
    X = check_array(X, dtype=np.float64)
    Y = check_array(Y, dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"X has {X.shape[1]} features but Y has {Y.shape[1]}")
    return X, Y


class GraphOTAligner(BaseEstimator):
    """Fused graph optimal transport between two embedding sets.

    Parameters
    ----------
    lambda_mix : float, default=0.5
        Weight of the node-to-node cosine cost; ``1 - lambda_mix`` weights
        the structural (Gromov-Wasserstein) term.
    entropy_weight : float, default=0.1
    tau : float, default=0.1
        Cosine threshold for edges of the intra-set graphs.
    max_iter : int, default=1000
        Sinkhorn iterations per outer round.
    tol : float, default=1e-9
    outer_iter : int, default=20
    restarts : int, default=3
        Extra seeded random starts of the non-convex structural alternation.

    Attributes
    ----------
    plan_ : ndarray of shape (n_X, n_Y)
    objective_ : float
    wd_term_, gw_term_ : float
    n_iter_ : int
        Total Sinkhorn iterations.
    """

    def __init__(self, lambda_mix=0.5, entropy_weight=0.1, tau=0.1, max_iter=1000,
                 tol=1e-9, outer_iter=20, restarts=3):
        self.lambda_mix = lambda_mix
        self.entropy_weight = entropy_weight
        self.tau = tau
        self.max_iter = max_iter
        self.tol = tol
        self.outer_iter = outer_iter
        self.restarts = restarts

    def _got_config(self):
        return GotConfig(
            self.lambda_mix,
            SinkhornConfig(self.entropy_weight, self.max_iter, self.tol),
            self.outer_iter,
            self.restarts,
        )

    def fit(self, X, Y):
        X, Y = _check_pair(X, Y)
        C = cross_cost_matrix(X, Y)
        A = build_graph(X, self.tau).adjacency
        B = build_graph(Y, self.tau).adjacency
        plan, _ = got_distance(C, A, B, cfg=self._got_config())
        self.plan_ = plan.values
        self.objective_, self.wd_term_, self.gw_term_ = got_objective(
            plan, C, A, B, self.lambda_mix
        )
        self.n_iter_ = plan.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, Y):
        """Negated alignment objective of ``(X, Y)`` under these parameters.

        Refits a clone, so the fitted state of ``self`` is left untouched.
        """
        return -clone(self).fit(X, Y).objective_


class MaskedGraphOTAligner(TransformerMixin, GraphOTAligner):
    """Masked fused graph OT with a learned per-row sigmoid mask.

    ``fit`` trains the mask generator by gradient descent and then solves the
    masked alignment; ``transform`` returns the mask weight of each row.

    Parameters
    ----------
    learning_rate : float, default=10.0
    epochs : int, default=50
    gradient_mode : {"unrolled", "finite_difference"}, default="unrolled"
    random_state : int, default=0
        Seed of the generator initialization.

    Attributes
    ----------
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
    loss_curve_ : list of float
    mask_ : ndarray of shape (n_X,)
    """

    def __init__(self, lambda_mix=0.5, entropy_weight=0.1, tau=0.1, max_iter=1000,
                 tol=1e-9, outer_iter=20, restarts=3, learning_rate=10.0, epochs=50,
                 gradient_mode="unrolled", random_state=0):
        super().__init__(lambda_mix, entropy_weight, tau, max_iter, tol, outer_iter, restarts)
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.gradient_mode = gradient_mode
        self.random_state = random_state

    def fit(self, X, Y):
        X, Y = _check_pair(X, Y)
        cfg = self._got_config()
        tcfg = MaskTrainConfig(self.learning_rate, self.epochs, self.random_state, self.gradient_mode)
        gen, trace = train_mask(None, X, Y, cfg, tcfg, tau=self.tau)
        plan, mask, _ = mgot_distance(X, Y, gen, cfg, tau=self.tau)
        self.coef_ = gen.weight.copy()
        self.intercept_ = gen.bias
        self.loss_curve_ = trace
        self.mask_ = mask
        self.plan_ = plan.values
        self.objective_, self.wd_term_, self.gw_term_ = mgot_terms(
            plan, mask, X, Y, self.lambda_mix, self.tau
        )
        self.n_iter_ = plan.n_iter
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return compute_mask(MaskGenerator(self.coef_, self.intercept_), X)[:, None]

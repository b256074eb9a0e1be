"""Graph optimal transport with learnable patch masks, and group fairness metrics."""

from ._validation import ConvergenceError, DataError
from .estimators import GraphOTAligner, MaskedGraphOTAligner
from .fairness import (
    FairnessError,
    FairnessReport,
    PredictionRecord,
    dpm,
    eom,
    fairness_report,
    group_accuracies,
    pqd,
)
from .graph import EmbeddingSet, GraphRep, build_graph, cosine_similarity_matrix, cross_cost_matrix
from .losses import LossWeights, confusion_loss, cross_entropy, total_loss
from .masked import (
    MaskGenerator,
    MaskTrainConfig,
    compute_mask,
    mask_loss_gradient,
    masked_got,
    masked_sinkhorn,
    mgot_distance,
    train_mask,
)
from .ot import (
    GotConfig,
    SinkhornConfig,
    TransportPlan,
    exact_ot_oracle,
    got_distance,
    got_objective,
    gromov_wasserstein,
    gw_linearized_cost,
    sinkhorn,
    transport_cost,
)

__version__ = "0.1.0"

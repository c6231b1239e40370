"""Local-space gradient attribution toolkit.

A self-contained stack for explaining small classifiers: a tape-based
autodiff engine, model training and serialization, sign-step local
exploration attribution with classic baselines, and insertion/deletion
AUC evaluation.
"""

from . import kernels
from .attribution import (
    AttributionMap,
    CompletenessResidual,
    ExplorationTrace,
    LocalSpace,
    TraceStep,
    completeness_residual,
    decision_preservation,
    epsilon_vector,
    explore,
    load_attribution,
    local_attribution,
    make_local_space,
    save_attribution,
    save_attribution_csv,
    select_targets,
    targeted_step,
    untargeted_step,
)
from .autodiff import CrossEntropy, LogitValue, Tape, Tensor, softmax
from .baselines import integrated_gradients, random_attribution, saliency, smoothgrad
from .datasets import Dataset, load_dataset, make_dataset, write_idx
from .errors import ConfigError, DomainError, FormatError, LocalAttrError, ShapeError
from .heatmap import render_heatmap
from .metrics import (
    MetricCurve,
    auc,
    deletion_curve,
    insertion_curve,
    linear_model_oracle,
    rank_dimensions,
)
from .models import (
    Conv2d,
    Dense,
    Flatten,
    MaxPool2,
    ModelGraph,
    ReLU,
    TrainConfig,
    TrainResult,
    build_model,
    finite_diff_gradient,
    forward_eval,
    grad_input,
    insert_identity_layer,
    load_weights,
    permute_hidden_units,
    save_weights,
    softmax_cross_entropy,
    train_sgd,
)

__version__ = "0.1.0"

kernel_backend = kernels.get_backend

"""Online deterministic annealing for prototype-based learning.

A competitive-learning model whose prototypes live in the data space,
trained one observation at a time by annealing a distortion/entropy
trade-off; grows its own capacity through bifurcations, and extends to a
tree trained on wavelet multi-resolution representations.
"""

from ._backend import BACKEND
from .anneal import (
    AnnealParams,
    AnnealState,
    Codevector,
    OnlineLearner,
    converged_at_temperature,
    gibbs_association,
    init_state,
    lower_temperature,
    merge_effective,
    nearest_index,
    perturb,
    predict,
    predict_batch,
    prune_idle,
    run_oda,
    sa_step,
    stepsize,
)
from .bregman import (
    GENERALIZED_KL,
    SQUARED_EUCLIDEAN,
    DivergenceKind,
    divergence,
    weighted_centroid,
)
from .data import Dataset, SampleStream, gen_circles, gen_gaussians, load_csv, load_idx, stream
from .errors import DataError, DegenerateInputError, InternalError, UsageError
from .metrics import EvalReport, emit_history, eval_accuracy, eval_distortion, eval_entropy, evaluate
from .modelio import ModelBundle, load_model, save_model
from .tree import (
    OdaTree,
    TreeNode,
    TreeParams,
    route,
    run_tree,
    tree_assign_nodes,
    tree_predict,
    tree_predict_batch,
    tree_stats,
    update_online,
    vertical_split,
)
from .wavelet import (
    ResolutionPyramid,
    WaveletPyramid1D,
    WaveletPyramid2D,
    haar_dwt_1d,
    haar_dwt_2d,
    haar_idwt_1d,
    haar_idwt_2d,
    rectified_average,
    resolution_stack,
    resolution_stack_batch,
)

__version__ = "0.1.0"

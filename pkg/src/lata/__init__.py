"""Inter-model latent agreement toolkit.

Measures how well a classifier's latent neighborhoods agree with those of
foundation-model embedding spaces, folds the agreement into predictive
confidence through input-dependent temperature scaling, and evaluates the
resulting failure detection against standard confidence baselines.
"""

from .agreement import (
    AgreementVector,
    Importance,
    agreement_accuracy_curve,
    agreement_batch,
    agreement_score,
    bundle_agreement,
    cka_agreement,
    jaccard_agreement,
    ndcg,
    pairwise_model_correlation,
    spearman_agreement,
)
from .arraystore import Bundle, load_manifest, read_container, save_bundle, write_container
from .calibration import CalibrationModel, apply, confidence, fit, nll, softmax
from .detection import (
    DEFAULT_K_GRID,
    EvalReport,
    auroc,
    run_pipeline,
    score_energy,
    score_entropy,
    score_maxlogit,
    score_msp,
    score_trustscore,
    sweep_k,
    sweep_pool_size,
)
from .neighborhood import (
    NeighborSet,
    Permutation,
    Pool,
    knn_proxy_accuracy,
    make_pool,
    rank,
    rank_batch,
    top_k,
)
from .theory import (
    DistortionField,
    SyntheticRegression,
    check_prop1,
    check_prop2,
    gen_distortion,
    gen_regression,
)

__version__ = "0.1.0"

"""Block-scrambling (EtC) image encryption and kernel learning on encrypted images."""

from .cipher import (
    EtcKey,
    PixelMap,
    SignedPermutation,
    decrypt,
    dihedral_block,
    encrypt,
    induced_pixel_map,
    keygen,
    load_key,
    negpos_block,
    save_key,
    to_signed_permutation,
)
from .dataset_io import (
    LabeledDataset,
    SplitSpec,
    read_pgm,
    read_ppm,
    rgb_to_plane_concat,
    split_per_identity,
    synth_dataset,
    write_pgm,
    write_ppm,
)
from .evaluation import ExperimentConfig, ScoreSet, eer, emit_report, run_keycond1, run_keycond2, sweep
from .features import (
    Reducer,
    ZScoreStats,
    apply_reducer,
    apply_zscore,
    fit_reducer,
    fit_zscore,
    flatten,
    pull_back_indices,
)
from .svm import (
    KernelSpec,
    OvRModel,
    SvmModel,
    TrainConfig,
    decision_value,
    gram,
    kernel_eval,
    knn_predict,
    qp_oracle,
    train_binary_smo,
    train_one_vs_rest,
)

__version__ = "0.1.0"

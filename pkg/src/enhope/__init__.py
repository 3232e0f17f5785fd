"""enhope: exemplar-centered high-order parametric embedding.

Trains a shallow high-order embedding that collapses classes around a small
set of exemplars, then classifies with kNN against exemplars only in the
low-dimensional space.
"""

import os as _os

# must run before numpy loads its BLAS: ENHOPE_THREADS caps the thread pools
_threads = _os.environ.get("ENHOPE_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                 "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)
del _os, _threads

from .data import (CsvFormatError, Dataset, IdxFormatError, NormStats, Split,
                   load_csv, load_idx, normalize, save_csv, stratified_split)
from .embedding import (EmbeddingModel, HighOrderParams, LinearParams,
                        backward_input, backward_inputs, backward_params,
                        forward, init_high_order, init_linear, pack_params,
                        unpack_params)
from .exemplars import (ExemplarConfig, ExemplarSet, allocate_per_class,
                        build_exemplars, kmeans_per_class, sample_random)
from .knn import (BenchmarkReport, auto_k, benchmark, classify_with_model,
                  knn_classify)
from .modelfile import ModelBundle, ModelFileError, load_model, save_model
from .objective import (LossValue, PairwiseLossConfig, exemplar_loss,
                        minibatch_loss, pairwise_loss, target_probs)
from .optimizer import CgConfig, TrainReport, evaluate_validation, minimize_cg, train

__version__ = "0.1.0"

__all__ = [
    "BenchmarkReport", "CgConfig", "CsvFormatError", "Dataset",
    "EmbeddingModel", "ExemplarConfig", "ExemplarSet", "HighOrderParams",
    "IdxFormatError", "LinearParams", "LossValue", "ModelBundle",
    "ModelFileError", "NormStats", "PairwiseLossConfig", "Split",
    "TrainReport", "allocate_per_class", "auto_k", "backward_input",
    "backward_inputs", "backward_params", "benchmark", "build_exemplars",
    "classify_with_model", "evaluate_validation", "exemplar_loss", "forward",
    "init_high_order", "init_linear", "kmeans_per_class", "knn_classify",
    "load_csv", "load_idx", "load_model", "minibatch_loss", "minimize_cg",
    "normalize", "pack_params", "pairwise_loss", "sample_random", "save_csv",
    "save_model", "stratified_split", "target_probs", "train",
    "unpack_params",
]

"""Selectively conditioned forests.

Exact MAP structure learning and Bayesian model averaging over forests
whose nodes may also take parents from a preceding condition set, with
two-slice dynamic Bayesian networks and selective augmented naive Bayes
classifiers built on top.
"""

from .bma import (
    BmaPredictor,
    LogWeightMatrix,
    SingularWeightMatrixError,
    bma_log_predictive,
    build_weight_matrix,
    forest_partition,
)
from .classify import (
    AccuracyReport,
    BmaClassifier,
    ClassifierModel,
    SCFClassifier,
    bma_predict,
    crossval_accuracy,
    learn_classifier,
    penalty_sweep,
    predict,
    predict_log_proba,
)
from .data import (
    CategoricalDataset,
    DataError,
    SequenceDataset,
    Table,
    add_noise_features,
    drop_missing,
    kfold_split,
    load_csv,
    load_sequences_csv,
    random_scf_generator,
    synth_augmented_nb,
    synth_dbn_sequences,
    synth_weak_features,
    to_transitions,
)
from .dbn import DbnModel, DynamicSCFNetwork, compare_model_classes, eval_log_predictive, learn_dbn
from .discretize import MDLPDiscretizer, mdlp_cut_points
from .mdsf import RootedDigraph, max_directed_spanning_forest, max_directed_spanning_tree
from .scf import ParentSet, ScfStructure, learn_cmap_scf, learn_map_scf_pair
from .scoring import LocalScorer, ScoreConfig, count_stats, local_score_bdeu
from .serialize import load_model, save_model

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

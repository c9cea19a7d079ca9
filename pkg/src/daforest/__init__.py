"""Dense adaptive cascade forest: a boosted, densely connected deep forest."""

from .cascade import (DaForestClassifier, build_layer_input, coding_matrix,
                      layer_probability, samme_r_scores, update_weights)
from .data import (Dataset, FoldAssignment, load_csv, load_libsvm,
                   stratified_kfold, stratified_split)
from .forest import Forest, ForestKind, fit_forest, forest_predict_proba, per_tree_predict_proba
from .persistence import ArchiveError, load_model, save_model
from .search import SearchRange, SearchResult, default_search_range, search_n_estimators
from .stats import (AccuracyMatrix, friedman_test, iman_davenport,
                    wilcoxon_against_control, wilcoxon_signed_rank)
from .tree import DecisionTree, SplitPolicy, fit_tree, tree_predict_proba
from .validation import DataError

__version__ = "0.1.0"

__all__ = [
    "DaForestClassifier", "Dataset", "FoldAssignment", "Forest", "ForestKind",
    "DecisionTree", "SplitPolicy", "SearchRange", "SearchResult",
    "AccuracyMatrix", "ArchiveError", "DataError",
    "build_layer_input", "coding_matrix", "layer_probability",
    "samme_r_scores", "update_weights",
    "load_csv", "load_libsvm", "stratified_kfold", "stratified_split",
    "fit_tree", "tree_predict_proba", "fit_forest", "forest_predict_proba",
    "per_tree_predict_proba", "default_search_range", "search_n_estimators",
    "friedman_test", "iman_davenport", "wilcoxon_signed_rank",
    "wilcoxon_against_control", "load_model", "save_model",
    "__version__",
]

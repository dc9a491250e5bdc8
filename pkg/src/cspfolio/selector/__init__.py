"""Algorithm selection over CSP solvers and encoding/SAT-solver combinations."""
from .data import ApproachId, IncompleteMatrix, PerformanceRecord, RunMatrix, full_portfolio
from .hierarchy import DEFAULT_HIERARCHY, BranchChooser, FlatSelector, HierarchicalSelector, build_tree
from .learners import ClusterBest, KNNClassifier, KNNRegressor, RegressionTree, RidgeRegression, train_learner
from .persist import load_selector, save_selector, selector_from_dict, selector_to_dict
from .scoring import par10, selection_score, subset_filters, virtual_best
from .validation import CvResult, cross_validate, stratified_folds

__all__ = [
    "ApproachId", "IncompleteMatrix", "PerformanceRecord", "RunMatrix", "full_portfolio",
    "DEFAULT_HIERARCHY", "BranchChooser", "FlatSelector", "HierarchicalSelector", "build_tree",
    "ClusterBest", "KNNClassifier", "KNNRegressor", "RegressionTree", "RidgeRegression", "train_learner",
    "load_selector", "save_selector", "selector_from_dict", "selector_to_dict",
    "par10", "selection_score", "subset_filters", "virtual_best",
    "CvResult", "cross_validate", "stratified_folds",
]

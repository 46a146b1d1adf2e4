from .cv import CVReport, StratificationError, crossval, stratified_folds
from .forest import ForestModel, TreeNode, rf_predict, rf_train
from .gcn import (GcnModel, GraphBatch, gcn_forward, gcn_gradient_check, gcn_predict,
                  gcn_train, init_gcn, weighted_bce)
from .metrics import METRIC_NAMES, Metrics, balanced_class_weights, compute_metrics, roc_auc

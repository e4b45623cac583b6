"""Deep dependency networks and deep random fields for multi-label classification."""
from .archive import ArchiveError, load_model, save_model
from .data import Dataset, DatasetFormatError, load_dataset, save_dataset
from .dn import ConditionalDN, cross_entropy_grad, train_pipeline
from .estimators import BackboneClassifier, DDNClassifier, DRFClassifier
from .metrics import MetricReport, evaluate
from .trainer import DeepDependencyNetwork, cpll_grad, infer, infer_batch, train_joint

__version__ = "0.1.0"

__all__ = [
    "ArchiveError", "load_model", "save_model",
    "Dataset", "DatasetFormatError", "load_dataset", "save_dataset",
    "ConditionalDN", "cross_entropy_grad", "train_pipeline",
    "BackboneClassifier", "DDNClassifier", "DRFClassifier",
    "MetricReport", "evaluate",
    "DeepDependencyNetwork", "cpll_grad", "infer", "infer_batch", "train_joint",
]

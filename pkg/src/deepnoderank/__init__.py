"""Deep Node Ranking: network embedding and node classification from
personalized PageRank vectors."""

from .dnr import TrainConfig, TrainedDNR, classify_e2e, embed, train
from .estimators import DNRClassifier, DNREmbedder
from .evaluation import (EvalProtocol, EvalReport, OneVsRestLogisticRegression, Pipeline,
                         micro_macro_f1, predict_topk, run_protocol, train_logreg)
from .graph import (Graph, LabelMatrix, TransitionMatrix, induced_subgraph, load_edge_list, load_labels,
                    to_transition)
from .ppr import PersonalizedPageRank, PPRConfig, PPRVector, ppr, ppr_batch, shrink_probe

__version__ = "0.1.0"

__all__ = [
    "DNRClassifier", "DNREmbedder", "EvalProtocol", "EvalReport", "Graph", "LabelMatrix",
    "OneVsRestLogisticRegression", "PPRConfig", "PPRVector", "PersonalizedPageRank", "Pipeline",
    "TrainConfig", "TrainedDNR", "TransitionMatrix", "classify_e2e", "embed", "induced_subgraph",
    "load_edge_list", "load_labels", "micro_macro_f1", "ppr", "ppr_batch", "predict_topk", "run_protocol",
    "shrink_probe", "to_transition", "train", "train_logreg",
]

"""Bayes-approximate membership inference auditing for GNNs and i.i.d. models."""
from ._core import BACKEND
from .attacks import AttackConfig, ScoreVector, attack_base, attack_gbase, attack_lira, attack_rmia, base_score
from .graph import Graph, MaskedAdjacency, drop_node, l_hop_neighborhood, masked_adjacency
from .metrics import check_equivalence, dp_bound, roc_auc, tpr_at_fpr
from .models import ModelParams, TrainConfig, train
from .shadow import ShadowPool, SignalMatrix, signal_matrix, train_shadow_pool
from .synth import SbmSpec, gen_iid_dataset, gen_sbm_graph

__version__ = "0.1.0"

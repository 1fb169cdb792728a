"""Translation-based knowledge-graph embeddings with boundary-condition losses."""
from .algebra import EmbeddingTable, conjugate, init_table, load_checkpoint, norm, save_checkpoint
from .data import Triple, TripleStore, Vocabulary, filtered_candidates, ground_rules, load_rules, load_triples
from .evaluation import RankingReport, evaluate, rank_one
from .losses import LossSpec, loss_ab, loss_c, loss_margin, objective
from .scoring import ScoreModel
from .training import TrainConfig, Trainer, fit, init_model

__version__ = "0.1.0"

"""Joint image-caption embeddings trained with hinge triplet losses."""
from .analysis import miss_probability, min_batch_for, monte_carlo_miss
from .datagen import PairedFeatureSet, SyntheticSpec, generate, read_features, write_features
from .evaluator import EvalProtocol, RetrievalReport, evaluate, evaluate_folds, rank_of_positive
from .loss import LossConfig, LossKind, loss_gradients, mh_loss, sh_loss, weighted_loss
from .model import ProjectionModel, SimilarityKind, similarity, similarity_matrix
from .optimizer import AdamState, LrSchedule, adam_step, lr_at
from .sampler import SamplerConfig, StepSample, epoch_plan, hardest_in_pool
from .trainer import ModelConfig, Snapshot, TrainConfig, TrainingTrace, apply_curriculum, train

__version__ = "0.1.0"

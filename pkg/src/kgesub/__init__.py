"""Knowledge graph embedding training with inverse-frequency subsampling."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    Dataset,
    Direction,
    FrequencyTable,
    Query,
    Triple,
    TrainingExample,
    count_frequencies,
    directed_examples,
    load_dataset,
    load_saved_dataset,
    query_freq,
    save_dataset,
    triple_freq,
)
from .subsampling import (  # noqa: F401
    SubsamplingConfig,
    SubsamplingWeights,
    compute_weights,
    weight_summary,
)
from .models import EmbeddingStore, ModelConfig, ScoreGradient, build_model  # noqa: F401
from .sampler import NegativeBatch, NoiseConfig, draw_negatives, sans_weights  # noqa: F401
from .loss import LossConfig, batch_loss, example_loss, negative_term, positive_term  # noqa: F401
from .evaluation import RankingReport, evaluate, filtered_rank  # noqa: F401
from .trainer import TrainConfig, TrainResult, TrainingDiverged, resume, train  # noqa: F401
from .theory import (  # noqa: F401
    SyntheticDistribution,
    convergence_report,
    exact_expected_loss,
    sampled_loss,
    weight_recovery_check,
)

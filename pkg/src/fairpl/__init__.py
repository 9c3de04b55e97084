"""Group-fair Plackett-Luce learning-to-rank.

Trains stochastic ranking policies whose every sampled ranking satisfies
per-group representation bounds on the top-k, using a two-step fair
assignment sampler and a low-variance sampled gradient of the expected
relevance objective.
"""

from ._kernels import BACKEND as kernel_backend
from .core import (FairnessConstraints, GroupAssignment, Item, PositionDiscounts,
                   QueryInstance, RankingOutcome, check_ex_post_fair,
                   derive_constraints_from_delta, per_query_constraints,
                   validate_constraints)
from .data import (BiasSpec, DatasetManifest, inject_bias, parse_ranking_file,
                   serialize_ranking_file, split_train_test, synth_generate)
from .gradients import (GradientVector, PerSampleStats, algorithm1_gradient,
                        enumeration_gradient, finite_difference_oracle,
                        plain_plrank3_gradient, plrank3_group_gradient,
                        plrank3_stats, reinforce_gradient)
from .metrics import (expected_ndcg, fairness_violation_rate, ndcg_of_ranking,
                      per_rank_group_fraction)
from .mlp import (MlpParams, TrainConfig, backward_chain, forward_scores,
                  load_checkpoint, save_checkpoint, train)
from .plackett import (ScoreVector, enumerate_rankings, pl_log_prob, pl_sample,
                       softmax_denominators)
from .policy import (FairPolicy, exact_fair_relevance, fair_ranking_log_prob,
                     rejection_sample_baseline, sample_fair_ranking,
                     sample_plain_ranking)
from .rerank import gak19_detgreedy, gdl22_postprocess

__version__ = "0.1.0"

__all__ = [
    "BiasSpec", "DatasetManifest", "FairPolicy", "FairnessConstraints",
    "GradientVector", "GroupAssignment", "Item", "MlpParams",
    "PositionDiscounts", "QueryInstance", "RankingOutcome", "ScoreVector",
    "TrainConfig", "algorithm1_gradient", "backward_chain",
    "check_ex_post_fair", "derive_constraints_from_delta",
    "enumerate_rankings", "enumeration_gradient", "exact_fair_relevance",
    "expected_ndcg", "fair_ranking_log_prob", "fairness_violation_rate",
    "finite_difference_oracle", "forward_scores", "gak19_detgreedy",
    "gdl22_postprocess", "inject_bias", "kernel_backend", "load_checkpoint",
    "ndcg_of_ranking", "parse_ranking_file", "per_query_constraints",
    "per_rank_group_fraction", "PerSampleStats", "pl_log_prob", "pl_sample",
    "plain_plrank3_gradient", "plrank3_group_gradient", "plrank3_stats",
    "reinforce_gradient", "rejection_sample_baseline", "sample_fair_ranking",
    "sample_plain_ranking", "save_checkpoint", "serialize_ranking_file",
    "softmax_denominators", "split_train_test", "synth_generate", "train",
    "validate_constraints",
]

"""Entity resolution with probabilistic record representations.

Pipeline: attribute values become dense intermediate representations (LSA,
embedding averages, or imported vectors); a Gaussian autoencoder turns each
record into per-attribute (mu, sigma) latent distributions; candidate pairs
come from Euclidean LSH over the means reranked by the closed-form squared
2-Wasserstein distance; a Siamese classifier over the distance vectors makes
the match decision; and an active-labeling loop keeps human effort small.
"""

from .corpus import (
    PairSet,
    Record,
    Table,
    align_arity,
    attribute_sentences,
    load_pairs,
    load_table,
    save_pairs,
    save_table,
    tokenize_value,
)
from .ir import (
    EmbeddingTable,
    IRProvider,
    LsaModel,
    PrecomputedIRs,
    encode_record_irs,
    fit_lsa,
    ir_embedding_average,
    load_embeddings,
    load_precomputed_irs,
    table_irs,
)
from .vae import (
    GaussianRepr,
    VaeModel,
    VaeTrainConfig,
    kl_to_standard_normal,
    load_model,
    reparameterize,
    represent_record,
    represent_table,
    save_model,
    train_vae,
    vae_loss,
)
from .matcher import (
    MatchConfig,
    MatcherModel,
    contrastive_loss,
    load_matcher,
    match_forward,
    predict,
    save_matcher,
    train_matcher,
    w2_squared,
    wasserstein_vec,
)
from .neighbors import CandidatePair, LshIndex, build_index, candidate_pairs, neighbor_lists
from .active import (
    ALConfig,
    ALSession,
    KdeDensity,
    LabelPools,
    al_loop,
    binary_entropy,
    bootstrap,
    encode_table,
    fit_kde,
    positive_distance_distribution,
    select_samples,
)
from .metrics import ConfusionCounts, PrfResult, prf1, recall_at_k
from .synth import SyntheticBenchmark, make_benchmark

__version__ = "0.1.0"

"""Set-based retrieval evaluation for RAG pipelines.

Core pieces:
    pools       graded passage pools, retrieved lists, answer records
    metrics     rarity-aware weights and set metrics (normalized weighted
                gain, normalized recall, precision, harm, novelty variant)
    ceilings    pool-restricted oracle ceilings and headroom classification
    fusion      reciprocal rank fusion, grade-bucketed pruning, near-dup
                suppression
    ranker      confidence-aware listwise refinement with pairwise locks
    judges      simulated / transcript / remote judges for the ranker
    probes      five-candidate probe bundles, ablation transforms, noise
                injection
    margins     cosine margins and ablation-vs-base percent summaries
    rankstats   overlap@K, Kendall tau, bootstrap confidence intervals
    clq         cost model, latency percentiles, Pareto frontier, SLO
                selection, dynamic-K routing
    records     line-delimited JSON schemas and validation
    manifest    workspace manifests, digests, seed derivation
    pipeline    stage sequencing (merge -> prune -> refine -> score ->
                proc -> clq -> diagnose)
    report      table / csv / json rendering of a run's outputs
"""

__version__ = "0.1.0"

from rageval.pools import (  # noqa: F401
    AnswerRecord,
    CandidatePool,
    GradedPassage,
    GradedPool,
    RetrievedList,
)
from rageval.metrics import (  # noqa: F401
    RarityParams,
    WeightSchedule,
    compute_weights,
    harm_at_k,
    ideal_gain,
    macro_aggregate,
    n_recall_at_k,
    observed_gain,
    precision4plus_at_k,
    ra_nwg_at_k,
)

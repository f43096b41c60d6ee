"""Time-course sequence clustering with finite and infinite Gaussian HMMs.

The toolkit fits hidden Markov models to collections of equal-length
series (finite models by EM, an infinite-state model by collapsed Gibbs
sampling), converts fitted models into a hidden-trajectory-overlap
dissimilarity between series, clusters the result by average linkage, and
scores partitions with a battery of external and internal validation
indices. A command line drives the whole pipeline and renders the summary
figures.
"""

from .clustering import (
    Dendrogram,
    DissimilarityMatrix,
    MergeRecord,
    Partition,
    average_linkage,
    cut_tree,
)
from .dataset import (
    ExpressionDataset,
    SyntheticSpec,
    generate_mixture,
    generate_synthetic,
    load_dataset,
    load_matrix,
    normalize_t1,
    save_dataset,
    save_matrix,
)
from .finite_hmm import (
    FiniteHmmModel,
    StateMarginals,
    baum_welch,
    dissimilarity_matrix,
    forward_backward,
    init_model,
    log_similarity,
    state_marginals,
)
from .hdp_hmm import (
    HdpChainState,
    HdpHyperParams,
    PosteriorSample,
    PosteriorSampleSet,
    empirical_dissimilarity,
    empirical_transition_matrix,
    gibbs_sweep,
    init_chain,
    represented_state_histogram,
    run_chain,
    stick_breaking_draw,
)
from .pipeline import (
    PipelineError,
    RunConfig,
    eisen_dissimilarity,
    parse_config,
    run_pipeline,
)
from .validation import (
    IndexReport,
    PairCounts,
    compute_indices,
    crand_index,
    davies_bouldin,
    dunn_index,
    jaccard_index,
    pair_counts,
    purity,
    rand_index,
    sensitivity,
    silhouette,
    specificity,
)

__version__ = "0.1.0"

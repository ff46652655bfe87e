"""Linear-factorization measurement and geometric checks over concept grids."""

from .concept_space import (
    BinaryMajority,
    ConceptSpace,
    CrossAt,
    FixedSize,
    Fraction,
    FullGrid,
    TrainingSupport,
    cross_dataset,
    enumerate_tuples,
    intervene,
    make_space,
    marginal_counts,
    sample_support,
)
from .embedding_store import (
    DumpFormatError,
    EmbeddingSet,
    SpanProjector,
    WhitenTransform,
    fit_span_projector,
    project,
    read_dump,
    whiten_apply,
    whiten_fit,
    write_dump,
)
from .factor_model import (
    DesignMatrix,
    FactorSet,
    RankDeficientError,
    build_design_matrix,
    canonicalize,
    read_factors,
    reconstruct,
    reconstruct_rows,
    recover_by_averaging,
    recover_by_least_squares,
    write_factors,
)
from .metrics import (
    OrthReport,
    R2Result,
    compositional_accuracy,
    effective_rank,
    orthogonality,
    projected_whitened_r2,
)
from .probe_trainer import (
    ProbeBank,
    TrainConfig,
    gradient_check,
    loss_value,
    posterior,
    predictions,
    read_probes,
    score,
    score_rows,
    train_probes,
    write_probes,
)
from .synthetic_lab import (
    LabRun,
    MinDimTable,
    StabilityReport,
    generate_factorized,
    generate_lrh_grid,
    generate_separable_nonfactorized,
    min_dim_scan,
    stability_experiment,
    train_free_embeddings,
)
from .theory_oracles import (
    NecessityReport,
    NotSeparableError,
    OnOffSpec,
    SufficiencyReport,
    SvmSolution,
    brute_force_region_count,
    hard_margin_svm,
    make_onoff_construction,
    min_dim_construction,
    onoff_additive_reconstruction,
    onoff_matrix,
    onoff_rank,
    random_affine_arrangement,
    region_count_affine,
    region_count_central,
    verify_necessity,
    verify_sufficiency,
)

__version__ = "0.1.0"

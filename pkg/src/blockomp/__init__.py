"""Block orthogonal matching pursuit with exact Block-RIP certification."""
from .blocks import (
    BlockLayout,
    BlockSignal,
    BlockSupport,
    block,
    block_support,
    embed,
    mixed_l2inf_norm,
    mixed_l20_norm,
    restrict,
    submatrix_for_support,
)
from .numeric import (
    EigenExtremes,
    coherence,
    gram_extreme_eigenvalues,
    project_complement,
    solve_least_squares,
)
from .pursuit import PursuitConfig, PursuitState, PursuitTrace, Termination, block_omp, omp, pursuit_step, select_block
from .rip import (
    LemmaReport,
    RipCertificate,
    block_rip_constant_exact,
    check_identification,
    omp_threshold,
    restricted_rip_extremes_of_A,
    rip_constant_exact,
    theorem1_threshold,
    verify_corollary1,
    verify_lemma1,
    verify_lemma2,
    verify_lemma3,
    verify_lemma4,
)

__version__ = "0.1.0"

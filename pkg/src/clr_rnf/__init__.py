"""Structured filter pruning toolkit.

A pruned network structure is derived from a single cross-layer,
computation-aware ranking of individual weights; surviving filters are
then chosen per layer as the reciprocal nearest filters (the
intersection of every filter's k-nearest-neighbor recommendations), and
the model is rewritten into a structurally smaller network with verified
FLOPs/parameter reductions.
"""

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    PruneToolError,
    StructureError,
    UsageError,
)
from .graph import (
    ArchSpec,
    CountingRules,
    Edge,
    LayerSpec,
    compute_layer_flops,
    compute_params,
    coupling_groups,
    flops_by_name,
    load_arch,
    load_bundled_arch,
    save_arch,
    total_flops,
    total_params,
)
from .pruning import (
    PrunePlan,
    apply_plan,
    arch_with_structure,
    format_count,
    format_reduction,
    identity_plan,
    longtail_report,
    planned_flops,
    planned_params,
    reduction_report,
)
from .ranking import (
    ImportanceScores,
    SparsityMask,
    StructurePlan,
    bind_conv_weights,
    global_prune_mask,
    magnitude_importance,
    per_layer_rates,
    plan_structure,
    preserved_count,
    resolve_structure,
    weight_importance,
)
from .selection import (
    SelectionResult,
    closeness_rank,
    kmeans_select,
    knn_set,
    l1_select,
    random_select,
    reciprocal_intersection,
    rnf_select,
    select,
    similarity_matrix,
)
from .weights import WeightStore, flatten_filters, load_weights, save_weights

__version__ = "0.1.0"

"""Evidential multi-view fusion with conflict-aware aggregation.

Evidence vectors become Dirichlet opinions; opinions from several views
are combined by a conflict-modulated rule, by evidence averaging or by
the harmonic reference rule. Coarse three-class evidence is spread onto
five fine classes before fusion. A small synthetic two-view benchmark
with linear evidence heads exercises the training losses end to end.
"""

from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    EvifuseError,
    NumericalError,
    SimplexError,
)
from .fusion import (
    FusionStrategy,
    average_fuse,
    cmam_fuse_many,
    cmam_fuse_pair,
    conflict_degree,
    fuse_evidence_arrays,
    harmonic_fuse_many,
    harmonic_fuse_pair,
    order_sensitivity,
    predicted_class,
)
from .loss import annealing, encode_label, joint_loss, l_acc, l_kl, loss_gradient
from .mapping import MappingMatrix, MappingStrategy, build_mapping, data_driven_mapping, map_evidence, uniform_mapping
from .opinion import (
    DirichletParams,
    Evidence,
    Opinion,
    dirichlet_log_pdf,
    dirichlet_to_opinion,
    evidence_to_dirichlet,
    evidence_to_opinion,
    opinion_to_dirichlet,
    vacuous,
)
from .specfn import digamma, log_gamma, trigamma

__version__ = "0.1.0"

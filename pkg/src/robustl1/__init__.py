"""Robust linear estimation with sparse gross errors.

Estimators (least absolute deviations, reweighted and regularized variants,
sum of norms, geometric median), optimality/uniqueness certificates,
genericity bounds and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .datamodel import (  # noqa: E402
    ARXParams,
    Dataset,
    GenSpec,
    IndexPartition,
    LTIParams,
    MultiDataset,
    Truth,
    generate,
    generate_multi,
    partition_indices,
)
from .solvers import (  # noqa: E402
    Estimate,
    RegularizedSolution,
    SolverOptions,
    geometric_median,
    least_squares_oracle,
    regularized_closed_form,
    solve_l1,
    solve_regularized,
    solve_reweighted_l1,
    solve_sum_of_norms,
    solve_weighted_l1,
)
from .certificates import certify, check_optimal, check_unique, s3_value, t3_value  # noqa: E402
from .kernels import BACKEND as KERNEL_BACKEND  # noqa: E402

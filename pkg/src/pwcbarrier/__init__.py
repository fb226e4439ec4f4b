"""Piecewise-constant stochastic barrier certificates over grid partitions.

The package certifies probabilistic safety of discrete-time stochastic
systems: partition the safe set into grid cells, bound the transition
kernel by per-cell probability intervals, and synthesize a barrier that
is constant on each cell.  Three interchangeable solvers are provided
(an explicit dual linear program, counterexample-guided synthesis, and
projected subgradient descent) together with an independent certificate
checker and a Monte Carlo cross-check.
"""

from .ambiguity import (
    AmbiguitySet,
    EmptySet,
    WorstCaseBatch,
    batch_gaps,
    batch_worst_case,
    martingale_gap,
    sample_feasible,
    vertex_enumerate,
    worst_case_value,
)
from .benchmarks import BENCHMARK_NAMES, Benchmark, UnknownBenchmark, benchmark
from .bounds import (
    Affine,
    BoundsError,
    ClosedForm,
    InfeasibleRow,
    IntervalMap,
    InvariantViolation,
    MissingImage,
    TransitionBounds,
    affine_bounds,
    export_bounds,
    gaussian_box_prob,
    import_bounds,
    interval_map_bounds,
    transition_row,
)
from .geometry import (
    Box,
    DimensionMismatch,
    GeometryError,
    InitialIntersectsObstacle,
    InitialOutsideDomain,
    Partition,
    make_grid,
    region_of,
)
from .lp import (
    LinearProgram,
    LPError,
    LPFailure,
    LPSolution,
    NumericalFailure,
    check_feasible,
    solve_lp,
)
from .synth import (
    Certificate,
    DualSolution,
    GDConfig,
    IterationCapExceeded,
    SynthesisError,
    init_barrier,
    loss,
    safety_bound,
    smoothed_loss_and_grad,
    synth_cegs,
    synth_dual,
    synth_gd,
)
from .validate import (
    CheckReport,
    McEstimate,
    NotSimulable,
    check_certificate,
    simulate,
    wilson_interval,
)

__version__ = "0.1.0"

__all__ = [
    "Affine",
    "AmbiguitySet",
    "BENCHMARK_NAMES",
    "Benchmark",
    "BoundsError",
    "Box",
    "Certificate",
    "CheckReport",
    "ClosedForm",
    "DimensionMismatch",
    "DualSolution",
    "EmptySet",
    "GDConfig",
    "GeometryError",
    "InfeasibleRow",
    "InitialIntersectsObstacle",
    "InitialOutsideDomain",
    "IntervalMap",
    "InvariantViolation",
    "IterationCapExceeded",
    "LPError",
    "LPFailure",
    "LPSolution",
    "LinearProgram",
    "McEstimate",
    "MissingImage",
    "NotSimulable",
    "NumericalFailure",
    "Partition",
    "SynthesisError",
    "TransitionBounds",
    "UnknownBenchmark",
    "WorstCaseBatch",
    "affine_bounds",
    "batch_gaps",
    "batch_worst_case",
    "benchmark",
    "check_certificate",
    "check_feasible",
    "export_bounds",
    "gaussian_box_prob",
    "import_bounds",
    "init_barrier",
    "interval_map_bounds",
    "loss",
    "make_grid",
    "martingale_gap",
    "region_of",
    "safety_bound",
    "sample_feasible",
    "simulate",
    "smoothed_loss_and_grad",
    "solve_lp",
    "synth_cegs",
    "synth_dual",
    "synth_gd",
    "transition_row",
    "vertex_enumerate",
    "wilson_interval",
    "worst_case_value",
]

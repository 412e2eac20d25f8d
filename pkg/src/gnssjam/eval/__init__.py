from .metrics import Empty, LengthMismatch, accuracy, confusion_matrix, mae, weighted_f2
from .splits import DegenerateSplit, LeakageError, SplitSpec, check_no_leakage, make_split, split_indices
from .protocols import (
    MissingLabels,
    MissingScenario,
    ResultTable,
    Settings,
    cross_scenario_matrix,
    evaluate,
    run_protocol,
    snapshot_length_sweep,
)

"""Panel assembly, fixed-effects and difference-GMM estimation, table runners."""

from .dataset import (
    CONTROLS, FEATURES, FitResult, InsufficientDataError, PanelDataset, RegressionSpec,
    assemble_dataset, lag_name,
)
from .gmm import InstrumentCountWarning, WeakInstrumentWarning, ar_test, diff_gmm
from .static import absorb_effects, cluster_covariance, clustered_se, within_fe_ols
from .tables import (
    SubsampleSplit, TableReport, TableSettings, estimate, median_split, run_table, run_tables,
    table_csv, table_definitions, table_markdown,
)

__all__ = [
    "CONTROLS", "FEATURES", "FitResult", "InsufficientDataError", "InstrumentCountWarning", "PanelDataset",
    "RegressionSpec", "SubsampleSplit", "TableReport", "TableSettings", "WeakInstrumentWarning",
    "absorb_effects", "ar_test", "assemble_dataset", "cluster_covariance", "clustered_se", "diff_gmm",
    "estimate", "lag_name", "median_split", "run_table", "run_tables", "table_csv", "table_definitions",
    "table_markdown", "within_fe_ols",
]

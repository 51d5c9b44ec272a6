"""gvckit: value-added decomposition of bilateral exports, GVC indices, and
event-study analysis of monthly trade panels, with seeded synthetic data
generators and a deterministic CLI."""

from .decomp import (DecompGroups, GvcIndices, decompose, decompose_all,
                     gross_exports, indices, indices_series)
from .errors import (ConfigError, DataFormatError, DegenerateFitError, EstimationError,
                     GvckitError, InsufficientDataError, InvalidPairError,
                     NumericalError, UnknownCodeError)
from .events import (BUILTIN_WINDOWS, EffectEstimate, EffectMatrix, EventWindow,
                     RegressionFit, aggregate_sector_effect, dual_positive,
                     estimate_ols, run_event_study, scan_all)
from .mrio import (CoefMatrices, MrioTable, SynthSpec, ValidationReport, coefficients,
                   load_mrio, synth_mrio, validate_mrio, write_mrio)
from .panel import (DeviationSeries, Panel, PanelEffect, SectorMap, SynthPanelSpec,
                    TradeRecord, apply_sector_map, build_panel, default_sector_map,
                    deviation_series, load_trades, month_index, synth_panel)

__version__ = "0.1.0"

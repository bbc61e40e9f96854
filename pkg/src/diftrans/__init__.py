"""Thresholded optimal transport estimators for unobserved trade volumes."""

__version__ = "0.1.0"

from .baseline import DidResult, did_ols
from .equilibrium import (
    MarketConfig,
    MarketSolution,
    WtpCurve,
    bounds_table,
    comparative_statics,
    demand,
    gains_from_trade,
    invert_from_volume,
    solve_no_tc,
    supply,
)
from .errors import DiftransError
from .estimators import (
    BandwidthScan,
    CompositionEstimate,
    CompositionInputs,
    PlaceboConfig,
    bandwidth_scan,
    before_after,
    composition_correction,
    composition_fit,
    d_floor,
    diff_in_transports,
    displacement_floor,
    equal_displacement_curves,
    placebo_cost,
    select_bandwidth,
    select_dstar,
)
from .inference import SubsampleConfig, SubsampleResult, subsample_ci
from .pmf import PeriodFilter, PricePMF, SalesRecord, build_pmf, ingest_csv
from .transport import TransportPlan, ot_cost, solve_ot, solve_ot_regularized, strassen_certificate

__all__ = [
    "BandwidthScan",
    "CompositionEstimate",
    "CompositionInputs",
    "DidResult",
    "DiftransError",
    "MarketConfig",
    "MarketSolution",
    "PeriodFilter",
    "PlaceboConfig",
    "PricePMF",
    "SalesRecord",
    "SubsampleConfig",
    "SubsampleResult",
    "TransportPlan",
    "WtpCurve",
    "bandwidth_scan",
    "before_after",
    "bounds_table",
    "build_pmf",
    "comparative_statics",
    "composition_correction",
    "composition_fit",
    "d_floor",
    "demand",
    "did_ols",
    "diff_in_transports",
    "displacement_floor",
    "equal_displacement_curves",
    "gains_from_trade",
    "ingest_csv",
    "invert_from_volume",
    "ot_cost",
    "placebo_cost",
    "select_bandwidth",
    "select_dstar",
    "solve_no_tc",
    "solve_ot",
    "solve_ot_regularized",
    "strassen_certificate",
    "subsample_ci",
    "supply",
]

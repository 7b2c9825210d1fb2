"""Aggregated P-Q flexibility regions for DER fleets on unbalanced distribution feeders."""

from .devices import BessUnit, ControllableLoad, DerFleet, FixedLoad, PvUnit
from .drcc import FeederState, OperatingLimits, build_state, direction_set
from .netmodel import Bus, Line, NetworkModel, load_network, save_network
from .powerflow import GridModel, InjectionVector, linearize, solve_fixed_point
from .region import FlexPolygon, estimate_region, sweep_time_series, write_svg
from .uncertainty import Gmm, RiskConfig, fit_error_table, fit_gmm, gmm_moments, k_epsilon
from .validate import ViolationReport, monte_carlo_check

__version__ = "0.1.0"

__all__ = [
    "BessUnit", "Bus", "ControllableLoad", "DerFleet", "FeederState", "FixedLoad", "FlexPolygon",
    "Gmm", "GridModel", "InjectionVector", "Line", "NetworkModel", "OperatingLimits", "PvUnit",
    "RiskConfig", "ViolationReport", "build_state", "direction_set", "estimate_region",
    "fit_error_table", "fit_gmm", "gmm_moments", "k_epsilon", "linearize", "load_network",
    "monte_carlo_check", "save_network", "solve_fixed_point", "sweep_time_series", "write_svg",
]

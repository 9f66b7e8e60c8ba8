"""Robust waveform/filter design for MIMO radar with multipath.

Two uncertainty models for the path coefficients are supported: a ball
around a nominal vector (:func:`design_spherical`) and per-path amplitude
bounds with unknown phase (:func:`design_annular`).
"""
__version__ = "0.1.0"

from .annular import AnnularSet, DmdsdrConfig, design_annular, dmdsdr_loop, upper_bound
from .evaluation import antenna_pattern, sample_annular, sample_spherical, sinr
from .results import DesignResult, IterationTrace, SolverReport, to_db
from .scenario import (ArrayGeometry, ConfigError, PathSpec, ScenarioConfig, SignalModel,
                       reference_annular_scenario, reference_spherical_scenario)
from .spherical import DmsdrConfig, SphericalSet, design_spherical, inner_min_spherical, t_matrix

__all__ = [
    "AnnularSet", "DmdsdrConfig", "design_annular", "dmdsdr_loop", "upper_bound",
    "antenna_pattern", "sample_annular", "sample_spherical", "sinr",
    "DesignResult", "IterationTrace", "SolverReport", "to_db",
    "ArrayGeometry", "ConfigError", "PathSpec", "ScenarioConfig", "SignalModel",
    "reference_annular_scenario", "reference_spherical_scenario",
    "DmsdrConfig", "SphericalSet", "design_spherical", "inner_min_spherical", "t_matrix",
]

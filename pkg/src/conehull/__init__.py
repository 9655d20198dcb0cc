"""Cone-lattice geometry, boundary-pattern hulls, and index pairings.

The package is organized in six layers:

  cone_lattice   exact facet data, point enumeration, covolumes, counting
  fell           patterns, truncations, and the first-disagreement metric
  strata         the offset map and classification into boundary strata
  algebra        site windows, truncated operators, models, spectral calculus
  invariants     traces, Chern cocycles, pairings, bulk-edge comparison
  cli            config-driven runs writing reports, CSV tables, figures

Submodules are imported lazily: attribute access triggers the import, so
loading the package (or its CLI front end) stays cheap until numerical
work actually starts.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # cone_lattice
    "ConeSpec": "cone_lattice",
    "CountRow": "cone_lattice",
    "ImageLattice": "cone_lattice",
    "KernelLattice": "cone_lattice",
    "NearTieWarning": "cone_lattice",
    "Region": "cone_lattice",
    "ResourceLimitExceeded": "cone_lattice",
    "SlabWindow": "cone_lattice",
    "cone_membership": "cone_lattice",
    "count_scaling_study": "cone_lattice",
    "covolume_facets": "cone_lattice",
    "enumerate_region": "cone_lattice",
    "find_escape_vector": "cone_lattice",
    "image_lattice": "cone_lattice",
    "kernel_lattice": "cone_lattice",
    "membership_mask": "cone_lattice",
    "rational_unit": "cone_lattice",
    "unit_ball_volume": "cone_lattice",
    # fell
    "AnalyticPattern": "fell",
    "FellDistance": "fell",
    "FinitePattern": "fell",
    "ascii_grid": "fell",
    "ball_points": "fell",
    "fell_distance": "fell",
    "hull_point": "fell",
    "orbit_point": "fell",
    "sequence_limit": "fell",
    # strata
    "EscapedDirectionError": "strata",
    "StratumLabel": "strata",
    "classify": "strata",
    "filtration_level": "strata",
    "gamma": "strata",
    # algebra
    "ModelSpec": "algebra",
    "SiteWindow": "algebra",
    "SpectralSpec": "algebra",
    "TruncatedOperator": "algebra",
    "build_model": "algebra",
    "conditional_expectation": "algebra",
    "cone_window": "algebra",
    "diagonal_operator": "algebra",
    "identity_operator": "algebra",
    "position_derivation": "algebra",
    "spectral_function": "algebra",
    "torus_window": "algebra",
    "translation": "algebra",
    "two_band_symbol": "algebra",
    # invariants
    "GapClosureError": "invariants",
    "LocalizationError": "invariants",
    "NumericalFailure": "invariants",
    "PairingResult": "invariants",
    "TraceSpec": "invariants",
    "bulk_edge_check": "invariants",
    "bz_chern_oracle": "invariants",
    "chern_cocycle": "invariants",
    "pair_even": "invariants",
    "pair_odd": "invariants",
    "stratum_integral": "invariants",
    "trace_estimate": "invariants",
    # config
    "ExperimentConfig": "config",
    "validate_config": "config",
}

_RENAMES = {"validate_config": "validate"}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    target = _EXPORTS.get(name)
    if target is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    module = importlib.import_module(f".{target}", __name__)
    value = getattr(module, _RENAMES.get(name, name))
    globals()[name] = value
    return value


def __dir__():
    return __all__

"""Secure error-rate thresholds for prepare-and-measure QKD with spherical-code signals.

The package computes, for a family of qudit protocols built on oblivious
signal ensembles and repudiating measurements, the error-rate threshold below
which a secret key can be distilled.  The computation runs through a
symmetrized effective-channel description of the protocol: decoding
combinations are grouped into orbits of the protocol's automorphism group,
each orbit yields a two-qubit key state linear in the physical channel, and
the worst case over the physical (CPTP) channel family fixed by the
symmetrizer gives the threshold.  A Monte Carlo protocol simulator provides
an independent statistical check, and a small FastAPI service plus CLI expose
the results.
"""

__version__ = "0.1.0"

from .ensembles import list_protocols
from .keyrate import (
    bell_spectrum,
    build_context,
    decoded_error_rate,
    depol_error_rate,
    error_rate,
    key_state,
    optimize_phases,
    phase_relation,
    threshold_search,
)
from .mcsim import SimConfig, run_simulation

__all__ = [
    "__version__",
    "SimConfig",
    "bell_spectrum",
    "build_context",
    "decoded_error_rate",
    "depol_error_rate",
    "error_rate",
    "key_state",
    "list_protocols",
    "optimize_phases",
    "phase_relation",
    "run_simulation",
    "threshold_search",
]

"""Signal ensembles, measurements, and protocol construction.

Protocols are described by registry files (JSON with exact-expression
strings for the fiducial vector and generator matrices).  Signal states are
the orbit of the fiducial vector under breadth-first application of the
designated generators, deduplicated up to global phase, and carry uniform
prior 1/n encoded in their norms (``|xi_j> = |u_j>/sqrt(n)``).  Bob's POVM
is built from the ensemble according to the protocol's measurement kind:

* ``rescaled_signals`` — one outcome per signal, proportional to it
  (the two-basis qubit protocol);
* ``antipodal`` — one outcome per signal, orthogonal to it (qubit only);
* ``repudiating`` — one outcome per unordered signal pair, orthogonal to
  both states of the pair (equiangular qutrit codes).
"""

import json
import os
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
import sympy as sp

ATOL = 1e-10
REGISTRY_ENV_VAR = "QKD_REGISTRY_DIR"

_CONSTANTS = {
    "phi": sp.GoldenRatio,
    "eta": sp.exp(2 * sp.pi * sp.I / 7),
    "omega": sp.exp(2 * sp.pi * sp.I / 3),
}


def parse_expression(text):
    """Evaluate an exact-expression string (e.g. ``sqrt((3+sqrt(3))/6)``).

    The names ``phi`` (golden ratio), ``omega`` (primitive cube root of
    unity), and ``eta`` (primitive seventh root of unity) are predefined.
    """
    return complex(sp.N(sp.sympify(text, locals=dict(_CONSTANTS)), 30))


def parse_matrix(rows):
    return np.array([[parse_expression(e) for e in row] for row in rows], dtype=complex)


def canonical_phase(v, tol=1e-9):
    """Rotate the global phase so the first non-negligible component is real positive."""
    v = np.asarray(v, dtype=complex)
    for c in v:
        if abs(c) > tol:
            return v * (abs(c) / c)
    return v.copy()


def orbit_states(fiducial, generators, max_states=256, tol=1e-8):
    """Breadth-first orbit of a vector under a generator list, modulo global phase."""
    states = [canonical_phase(fiducial)]
    head = 0
    while head < len(states):
        v = states[head]
        head += 1
        for g in generators:
            w = canonical_phase(g @ v)
            if not any(np.linalg.norm(w - s) < tol for s in states):
                states.append(w)
                if len(states) > max_states:
                    raise ValueError("orbit exceeded max_states; generators look wrong")
    return states


@dataclass(frozen=True)
class SignalEnsemble:
    """Subnormalized signal vectors; prior of signal j is <xi_j|xi_j>."""

    states: np.ndarray  # n x d, rows are |xi_j>
    dim: int

    @property
    def n(self):
        return self.states.shape[0]

    @property
    def priors(self):
        return np.real(np.sum(np.abs(self.states) ** 2, axis=1))

    @property
    def unit_states(self):
        return self.states / np.sqrt(self.priors)[:, None]

    def validate(self, tol=ATOL):
        if abs(self.priors.sum() - 1.0) > tol:
            raise ValueError(f"signal priors sum to {self.priors.sum()}, not 1")
        ok, dev = check_oblivious(self, tol)
        if not ok:
            raise ValueError(f"ensemble is not oblivious (deviation {dev:.3e})")


@dataclass(frozen=True)
class Measurement:
    """Subnormalized POVM vectors; elements |eta_k><eta_k| sum to the identity."""

    elements: np.ndarray  # m x d, rows are |eta_k>
    dim: int
    labels: tuple = ()

    @property
    def m(self):
        return self.elements.shape[0]

    def validate(self, tol=ATOL):
        s = self.elements.T @ self.elements.conj()  # sum_k |eta_k><eta_k|
        dev = np.linalg.norm(s - np.eye(self.dim), 2)
        if dev > tol:
            raise ValueError(f"POVM completeness violated (deviation {dev:.3e})")


@dataclass(frozen=True)
class ProtocolSpec:
    name: str
    n: int
    d: int
    k: int
    m: int
    ensemble: SignalEnsemble
    measurement: Measurement
    decoding: str
    default_bound: str
    generators: tuple  # ((matrix, antiunitary_flag), ...) for the full automorphism group
    orbit_generators: tuple  # indices into `generators` used to build the signal orbit
    notes: str = ""

    @property
    def unitary_generators(self):
        return tuple(g for g, anti in self.generators if not anti)


def registry_dir():
    """Directory holding the protocol registry files (env-overridable)."""
    override = os.environ.get(REGISTRY_ENV_VAR)
    if override:
        return override
    return str(resources.files("qkdsec") / "registry")


def list_protocols():
    return sorted(p[:-5] for p in os.listdir(registry_dir()) if p.endswith(".json"))


def load_registry_entry(name):
    path = os.path.join(registry_dir(), f"{name}.json")
    if not os.path.exists(path):
        raise KeyError(f"unknown protocol {name!r}; registry has {list_protocols()}")
    with open(path) as f:
        return json.load(f)


def check_oblivious(ensemble, tol=ATOL):
    """Whether sum_j |xi_j><xi_j| equals 1/d; returns (bool, spectral deviation)."""
    s = ensemble.states.T @ ensemble.states.conj()
    dev = np.linalg.norm(s - np.eye(ensemble.dim) / ensemble.dim, 2)
    return bool(dev <= tol), float(dev)


def normalized_overlaps(ensemble):
    """Matrix of |<u_j|u_k>|^2 between unit-normalized signals."""
    u = ensemble.unit_states
    return np.abs(u.conj() @ u.T) ** 2


def equiangularity_deviation(ensemble):
    """Spread of off-diagonal normalized overlaps (0 for a spherical code)."""
    ov = normalized_overlaps(ensemble)
    off = ov[~np.eye(ensemble.n, dtype=bool)]
    return float(off.max() - off.min())


def joint_probabilities(ensemble, measurement):
    """p_jk = |<eta_k|xi_j>|^2."""
    if ensemble.dim != measurement.dim:
        raise ValueError("ensemble and measurement dimensions differ")
    amp = ensemble.states @ measurement.elements.conj().T
    return np.abs(amp) ** 2


def rescaled_signal_measurement(ensemble):
    """One outcome per signal, proportional to it: eta_k = sqrt(d/n) u_k."""
    u = ensemble.unit_states
    elems = np.sqrt(ensemble.dim / ensemble.n) * u
    meas = Measurement(elems, ensemble.dim, labels=tuple(range(ensemble.n)))
    meas.validate()
    return meas


def antipodal_measurement(ensemble):
    """One outcome per signal, orthogonal to it (qubit ensembles only)."""
    if ensemble.dim != 2:
        raise ValueError("antipodal measurement is defined for qubit ensembles")
    u = ensemble.unit_states
    anti = np.stack([canonical_phase([-np.conj(v[1]), np.conj(v[0])]) for v in u])
    elems = np.sqrt(ensemble.dim / ensemble.n) * anti
    meas = Measurement(elems, ensemble.dim, labels=tuple(range(ensemble.n)))
    meas.validate()
    return meas


def repudiating_measurement(ensemble, tol=ATOL):
    """One outcome per unordered signal pair {j,k}, orthogonal to both states.

    Requires an equiangular qutrit code; the common rescaling that makes the
    elements sum to the identity is computed numerically (and its existence
    checked), rather than assumed.
    """
    if ensemble.dim != 3:
        raise ValueError("repudiating measurement is defined for qutrit ensembles")
    if equiangularity_deviation(ensemble) > 1e-8:
        raise ValueError("repudiating measurement needs an equiangular ensemble")
    u = ensemble.unit_states
    dirs = []
    labels = []
    for a in range(ensemble.n):
        for b in range(a + 1, ensemble.n):
            w = np.conj(np.cross(u[a], u[b]))
            if np.linalg.norm(w) < 1e-8:
                raise ValueError(f"degenerate signal pair ({a},{b}): no repudiating direction")
            dirs.append(canonical_phase(w / np.linalg.norm(w)))
            labels.append((a, b))
    dirs = np.stack(dirs)
    s = dirs.T @ dirs.conj()
    scale = np.real(np.trace(s)) / ensemble.dim
    if np.linalg.norm(s - scale * np.eye(ensemble.dim), 2) > 1e-8:
        raise ValueError("pair directions are not isotropic; cannot scale to a POVM")
    meas = Measurement(dirs / np.sqrt(scale), ensemble.dim, labels=tuple(labels))
    meas.validate()
    return meas


_MEASUREMENT_BUILDERS = {
    "rescaled_signals": rescaled_signal_measurement,
    "antipodal": antipodal_measurement,
    "repudiating": repudiating_measurement,
}


def build_protocol(name):
    """Construct the full protocol description from its registry entry."""
    entry = load_registry_entry(name)
    fiducial = np.array([parse_expression(e) for e in entry["fiducial"]], dtype=complex)
    unitaries = [parse_matrix(g) for g in entry["generators"]]
    for g in unitaries:
        if np.linalg.norm(g.conj().T @ g - np.eye(g.shape[0])) > ATOL:
            raise ValueError(f"non-unitary generator in registry entry {name!r}")
    antis = [parse_matrix(g) for g in entry.get("antiunitary_generators", [])]
    generators = tuple([(g, False) for g in unitaries] + [(g, True) for g in antis])

    orbit_gens = [unitaries[i] for i in entry["orbit_generators"]]
    units = orbit_states(fiducial, orbit_gens)
    if len(units) != entry["n"]:
        raise ValueError(f"orbit of {name!r} has {len(units)} states, expected {entry['n']}")
    ensemble = SignalEnsemble(np.stack(units) / np.sqrt(entry["n"]), entry["d"])
    ensemble.validate()

    measurement = _MEASUREMENT_BUILDERS[entry["measurement"]](ensemble)
    phases = entry.get("measurement_phases")
    if phases is not None:
        if len(phases) != measurement.m:
            raise ValueError(f"measurement_phases of {name!r} has wrong length")
        factors = np.array([parse_expression(e) for e in phases])
        if np.any(np.abs(np.abs(factors) - 1.0) > ATOL):
            raise ValueError(f"measurement_phases of {name!r} must be unimodular")
        measurement = Measurement(
            factors[:, None] * measurement.elements,
            measurement.dim,
            labels=measurement.labels,
        )
        measurement.validate()
    return ProtocolSpec(
        name=entry["name"],
        n=entry["n"],
        d=entry["d"],
        k=entry["k"],
        m=entry["m"],
        ensemble=ensemble,
        measurement=measurement,
        decoding=entry["decoding"],
        default_bound=entry["default_bound"],
        generators=generators,
        orbit_generators=tuple(entry["orbit_generators"]),
        notes=entry.get("notes", ""),
    )

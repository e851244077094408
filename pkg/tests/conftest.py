"""Shared helpers and fixtures for the test suite."""

from types import SimpleNamespace

import numpy as np
import pytest

from qkdsec.decoding import build_scheme
from qkdsec.ensembles import build_protocol
from qkdsec.linops import dag
from qkdsec.symmetry import (
    ProjectiveUnitary,
    aut_t,
    ensemble_action,
    generate_group,
    measurement_action,
)


def random_matrix(rng, d):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def random_kraus_channel(rng, d, n_kraus=3):
    """A random trace-preserving Kraus family."""
    ops = [random_matrix(rng, d) for _ in range(n_kraus)]
    s = sum(dag(k) @ k for k in ops)
    w = np.linalg.inv(np.linalg.cholesky(s).conj().T)
    return [k @ w for k in ops]


def random_density(rng, d):
    m = random_matrix(rng, d)
    rho = m @ dag(m)
    return rho / np.trace(rho)


def build_stack(name):
    """Protocol plus its group, action tables, scheme, and T-automorphisms."""
    p = build_protocol(name)
    group = generate_group([ProjectiveUnitary(m, anti) for m, anti in p.generators])
    signal_action = ensemble_action(group, p.ensemble.states)
    outcome_action = measurement_action(group, signal_action, p.measurement)
    scheme = build_scheme(p)
    aut = aut_t(signal_action, outcome_action, scheme)
    return SimpleNamespace(
        protocol=p,
        group=group,
        signal_action=signal_action,
        outcome_action=outcome_action,
        scheme=scheme,
        aut=aut,
    )


@pytest.fixture(scope="session")
def stack():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = build_stack(name)
        return cache[name]

    return get

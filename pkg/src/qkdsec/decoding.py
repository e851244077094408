"""Decoding functions, the allowed-pair set T, and key states by averaging.

A decoding function is an r-tuple naming which input (signal index for
Alice, measurement-outcome index for Bob) becomes each key letter; inputs
absent from the tuple are discarded.  The allowed set T holds the function
pairs (s, t) that jointly produce a key letter.

Two scheme kinds are registered:

* ``matched_bases`` — the two-basis qubit protocol: four functions per
  party (the ordered basis pairs), T diagonal.
* ``determining_pairs`` — Alice announces an ordered signal pair; Bob's
  tuple pairs outcomes that determine the letter.  (s, t) is allowed when,
  for every letter l, Bob's outcome ``t(l)`` has nonzero overlap with signal
  ``s(l)`` and zero overlap with the announced alternative.  This uniform
  rule reproduces the antipodal qubit scheme (each outcome rules out one
  signal) and the repudiating qutrit schemes (each outcome rules out each
  signal it is orthogonal to, which for the nine-signal ensemble is three
  signals at a time).

The unnormalized key state is the average over T of the doubly sifted
channel output; its diagonal reproduces the classical letter statistics of
the announce-and-decode procedure, and its trace the success probability.
"""

from dataclasses import dataclass, field

import numpy as np

ZERO_OVERLAP_TOL = 1e-9


@dataclass(frozen=True)
class DecodingFunction:
    """r-tuple of input indices; an entry may be a frozenset of indices
    (set-valued decoding) mapped to the same key letter."""

    entries: tuple

    @property
    def r(self):
        return len(self.entries)

    def members(self, letter):
        e = self.entries[letter]
        return tuple(e) if isinstance(e, frozenset) else (e,)


def _flatten(entries):
    out = []
    for e in entries:
        out.extend(e if isinstance(e, frozenset) else (e,))
    return out


@dataclass
class DecodingScheme:
    alice_functions: list
    bob_functions: list
    t_pairs: list  # (s, t) index pairs
    r: int
    c_a: int = 0  # multiplicity of each signal in Alice's multiset
    c_b: int = 0  # multiplicity of each outcome in Bob's multiset
    nu: int = 1  # valid Bob functions per (announcement, decodable outcome)

    @property
    def alice_tuples(self):
        return [f.entries for f in self.alice_functions]

    @property
    def bob_tuples(self):
        return [f.entries for f in self.bob_functions]

    @property
    def n_a(self):
        return len(self.alice_functions)

    @property
    def n_b(self):
        return len(self.bob_functions)


def _coverage_counts(functions, n_inputs):
    counts = np.zeros(n_inputs, dtype=int)
    for f in functions:
        for j in _flatten(f.entries):
            counts[j] += 1
    return counts


def _matched_bases_scheme():
    tuples = [(0, 1), (1, 0), (2, 3), (3, 2)]
    funcs = [DecodingFunction(t) for t in tuples]
    return DecodingScheme(
        alice_functions=funcs,
        bob_functions=[DecodingFunction(t) for t in tuples],
        t_pairs=[(s, s) for s in range(4)],
        r=2,
        c_a=2,
        c_b=2,
        nu=1,
    )


def _determining_pairs_scheme(ensemble, measurement, tol=ZERO_OVERLAP_TOL):
    amp = measurement.elements.conj() @ ensemble.states.T  # [outcome, signal]
    zero = np.abs(amp) < tol
    n = ensemble.n
    alice_entries = [(i, j) for i in range(n) for j in range(n) if i != j]
    bob_set = {}
    bob_list = []
    t_pairs = []
    nu_values = set()
    for s, (i, j) in enumerate(alice_entries):
        d0 = np.nonzero(zero[:, j] & ~zero[:, i])[0]  # determines letter 0
        d1 = np.nonzero(zero[:, i] & ~zero[:, j])[0]  # determines letter 1
        if len(d0) == 0 or len(d1) == 0:
            raise ValueError(f"announcement {(i, j)} has no determining outcomes")
        nu_values.update((len(d0), len(d1)))
        for a in d0:
            for b in d1:
                bt = (int(a), int(b))
                t = bob_set.get(bt)
                if t is None:
                    t = len(bob_list)
                    bob_set[bt] = t
                    bob_list.append(bt)
                t_pairs.append((s, t))
    if len(nu_values) != 1:
        raise ValueError(f"non-uniform determining multiplicity: {sorted(nu_values)}")
    scheme = DecodingScheme(
        alice_functions=[DecodingFunction(t) for t in alice_entries],
        bob_functions=[DecodingFunction(t) for t in bob_list],
        t_pairs=t_pairs,
        r=2,
        nu=nu_values.pop(),
    )
    ca = _coverage_counts(scheme.alice_functions, n)
    cb = _coverage_counts(scheme.bob_functions, measurement.m)
    if len(set(ca)) != 1 or len(set(cb)) != 1:
        raise ValueError("decoding coverage is not uniform")
    scheme.c_a = int(ca[0])
    scheme.c_b = int(cb[0])
    return scheme


def build_scheme(protocol):
    """Decoding scheme of a registered protocol."""
    if protocol.decoding == "matched_bases":
        return _matched_bases_scheme()
    if protocol.decoding == "determining_pairs":
        return _determining_pairs_scheme(protocol.ensemble, protocol.measurement)
    raise ValueError(f"unknown decoding kind {protocol.decoding!r}")


@dataclass
class SchemeReport:
    passed: bool
    details: dict = field(default_factory=dict)


def validate_scheme(scheme, ensemble=None, measurement=None, tol=1e-10):
    """Uniform-coverage and sifting partial-isometry checks.

    Works on index-valued and set-valued tuples; the operator-sum checks
    need the ensemble/measurement and verify
    ``sum_{s,l} |xi[s(l)]><xi[s(l)]| = (c_a/d) 1`` and
    ``sum_{t,m} |eta[t(m)]><eta[t(m)]| = c_b 1``.
    """
    details = {}
    passed = True

    for side, functions in (("alice", scheme.alice_functions), ("bob", scheme.bob_functions)):
        flat = [j for f in functions for j in _flatten(f.entries)]
        n_inputs = max(flat) + 1 if flat else 0
        counts = np.bincount(np.array(flat, dtype=int), minlength=n_inputs)
        uniform = len(set(counts.tolist())) == 1
        details[f"{side}_coverage"] = counts.tolist()
        details[f"{side}_uniform"] = bool(uniform)
        passed = passed and uniform

    if ensemble is not None:
        d = ensemble.dim
        acc = np.zeros((d, d), dtype=complex)
        for f in scheme.alice_functions:
            for letter in range(scheme.r):
                for j in f.members(letter):
                    xi = ensemble.states[j]
                    acc += np.outer(xi, xi.conj())
        dev = np.linalg.norm(acc - scheme.c_a / d * np.eye(d), 2)
        details["alice_sifting_deviation"] = float(dev)
        passed = passed and dev <= tol
    if measurement is not None:
        d = measurement.dim
        acc = np.zeros((d, d), dtype=complex)
        for f in scheme.bob_functions:
            for letter in range(scheme.r):
                for k in f.members(letter):
                    eta = measurement.elements[k]
                    acc += np.outer(eta, eta.conj())
        dev = np.linalg.norm(acc - scheme.c_b * np.eye(d), 2)
        details["bob_sifting_deviation"] = float(dev)
        passed = passed and dev <= tol

    return SchemeReport(passed=bool(passed), details=details)


def fiducial_decoder(scheme, ensemble, measurement, party, x, phases=None):
    """The r x d fiducial sifting matrix of function ``x`` for one party.

    Alice's operator has rows ``e^{i theta(l)} <xi*[s(l)]|`` (the bra of the
    conjugated signal state); Bob's has rows ``e^{i phi(m)} <eta[t(m)]|``.
    Set-valued entries contribute the sum of their members' bras.
    """
    if party == "alice":
        fn = scheme.alice_functions[x]
        vectors = ensemble.states
        conjugate = False
    elif party == "bob":
        fn = scheme.bob_functions[x]
        vectors = measurement.elements
        conjugate = True
    else:
        raise ValueError(f"party must be 'alice' or 'bob', got {party!r}")
    if phases is None:
        phases = np.zeros(scheme.r)
    d = vectors.shape[1]
    out = np.zeros((scheme.r, d), dtype=complex)
    for letter in range(scheme.r):
        row = np.zeros(d, dtype=complex)
        for j in fn.members(letter):
            row += vectors[j].conj() if conjugate else vectors[j]
        out[letter] = np.exp(1j * phases[letter]) * row
    return out


def _channel_on_dyads(ensemble, channel):
    """B[a, c] = E(|xi_a><xi_c|) for all signal pairs, as an (n,n,d,d) array."""
    xi = ensemble.states
    n, d = xi.shape
    dyads = np.einsum("ai,cj->acij", xi, xi.conj())
    if channel is None:
        return dyads
    transfer = channel.transfer() if hasattr(channel, "transfer") else np.asarray(channel)
    # vec by column stacking: flatten each dyad transposed
    v = dyads.transpose(0, 1, 3, 2).reshape(n * n, d * d)
    w = v @ transfer.T
    return w.reshape(n, n, d, d).transpose(0, 1, 3, 2)


def decoded_overlaps(scheme, ensemble, measurement, channel=None):
    """A[a, c, k, l] = <eta_k| E(|xi_a><xi_c|) |eta_l>."""
    b = _channel_on_dyads(ensemble, channel)
    eta = measurement.elements
    return np.einsum("km,acmn,ln->ackl", eta.conj(), b, eta)


def key_state_by_averaging(
    scheme,
    ensemble,
    measurement,
    channel=None,
    theta=None,
    phi=None,
    t_indices=None,
    pair_theta=None,
    pair_phi=None,
):
    """Unnormalized key state from the (sub)sum over T.

    Components are ``(1/(c_a nu)) sum_(s,t) Delta(s,t) <eta[t(j)]| E(|xi[s(i)]>
    <xi[s(k)]|) |eta[t(l)]>`` with ``Delta`` built from the per-function decoder
    phases ``theta[s, l]`` and ``phi[t, m]`` (defaults zero).  With this
    prefactor the diagonal equals the joint probability of the key-letter
    pairs in the announce-and-decode procedure, and the trace the success
    probability.  ``t_indices`` restricts the sum (e.g. to one orbit of T);
    ``pair_theta``/``pair_phi`` (selected pairs x r) give each summand its
    own phases instead of the per-function tables.
    """
    r = scheme.r
    amp = decoded_overlaps(scheme, ensemble, measurement, channel)
    pairs = scheme.t_pairs if t_indices is None else [scheme.t_pairs[i] for i in t_indices]
    s_idx = np.array([s for s, _ in pairs])
    t_idx = np.array([t for _, t in pairs])
    a_entries = np.array([f.entries for f in scheme.alice_functions], dtype=int)
    b_entries = np.array([f.entries for f in scheme.bob_functions], dtype=int)
    if theta is None:
        theta = np.zeros((scheme.n_a, r))
    if phi is None:
        phi = np.zeros((scheme.n_b, r))
    sig = a_entries[s_idx]  # pairs x r
    out = b_entries[t_idx]
    th = theta[s_idx] if pair_theta is None else np.asarray(pair_theta)
    ph = phi[t_idx] if pair_phi is None else np.asarray(pair_phi)
    rho = np.zeros((r * r, r * r), dtype=complex)
    for i in range(r):
        for j in range(r):
            for k in range(r):
                for l in range(r):
                    delta = np.exp(1j * (th[:, i] - th[:, k] + ph[:, j] - ph[:, l]))
                    vals = amp[sig[:, i], sig[:, k], out[:, j], out[:, l]]
                    rho[i * r + j, k * r + l] = np.sum(delta * vals)
    return rho / (scheme.c_a * scheme.nu)


@dataclass
class ClassicalStats:
    success_probability: float
    letter_joint: np.ndarray  # r x r, joint distribution of (Alice, Bob) letters
    error_rate: float


def classical_statistics(scheme, ensemble, measurement, channel=None):
    """Letter statistics of the announce-and-decode procedure.

    Alice samples a signal, picks a compatible function uniformly and
    announces it; Bob decodes when his outcome determines a letter under
    some allowed function.  Probabilities come from the (channel-modified)
    joint distribution p_jk.
    """
    b = _channel_on_dyads(ensemble, channel)
    eta = measurement.elements
    p = np.real(np.einsum("km,jjmn,kn->jk", eta.conj(), b, eta))
    r = scheme.r
    joint = np.zeros((r, r))
    # D_b(s): outcomes giving letter b after announcement s, with multiplicity nu
    decodable = {}
    for s, t in scheme.t_pairs:
        fb = scheme.bob_functions[t]
        for b_letter in range(r):
            for k in fb.members(b_letter):
                key = (s, k)
                found = decodable.setdefault(key, [0] * r)
                found[b_letter] += 1
    for (s, k), by_letter in decodable.items():
        hits = [b_letter for b_letter in range(r) if by_letter[b_letter]]
        if len(hits) > 1:
            raise ValueError(f"outcome {k} ambiguous after announcement {s}")
        b_letter = hits[0]
        if by_letter[b_letter] != scheme.nu:
            raise ValueError("valid-function multiplicity is not uniform")
        fa = scheme.alice_functions[s]
        for a_letter in range(r):
            for j in fa.members(a_letter):
                joint[a_letter, b_letter] += p[j, k]
    joint /= scheme.c_a
    success = joint.sum()
    mismatch = success - np.trace(joint)
    return ClassicalStats(
        success_probability=float(success),
        letter_joint=joint,
        error_rate=float(mismatch / success) if success > 0 else float("nan"),
    )


def noiseless_key_state(scheme, ensemble, measurement):
    """Normalized key state and success probability for the identity channel."""
    rho = key_state_by_averaging(scheme, ensemble, measurement)
    p = np.real(np.trace(rho))
    if p < 1e-12:
        raise ValueError("degenerate scheme: zero success probability")
    return rho / p, float(p)

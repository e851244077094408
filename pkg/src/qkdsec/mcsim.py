"""Monte Carlo simulation of the prepare-measure-announce-decode protocol.

Each round Alice sends a random signal through the channel (sampled one
Kraus branch at a time), Bob measures the arriving state, Alice announces
a decoding function compatible with her signal chosen uniformly, and Bob
chooses -- uniformly among the allowed partner functions that decode his
outcome -- a matching function, or the round fails.  Counting the
recorded key letters validates the analytic error rates and success
probabilities.

Rounds are processed in fixed-size chunks, each driven by its own
substream spawned from the master seed, so a parallel implementation
partitioning the chunks would reproduce the serial results exactly.
"""

from dataclasses import dataclass, field

import numpy as np

from .channels import depolarizing_kraus
from .decoding import build_scheme
from .ensembles import build_protocol

_CHUNK = 1 << 16  # rounds per substream; fixed, or seeded results change


@dataclass
class SimConfig:
    """One simulation run: protocol, depolarizing weight, rounds, seed."""

    protocol: str
    p: float
    rounds: int
    seed: int
    shuffle: bool = False

    def validate(self, d):
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        cap = d * d / (d * d - 1.0)
        if not 0.0 <= self.p <= cap + 1e-12:
            raise ValueError(f"depolarizing weight {self.p} outside [0, {cap:.4f}]")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass
class SimStats:
    """Aggregate counts of a run plus the recorded key letters.

    ``letters`` holds one (alice, bob) letter row per sifted round, in
    record order (shuffled when the config asks for it); ``joint_counts``
    tallies (signal, outcome) pairs over all rounds, sifted or not.
    """

    sift_successes: int
    key_length: int
    mismatches: int
    empirical_error: float
    error_se: float
    empirical_success: float
    letters: np.ndarray
    joint_counts: np.ndarray
    rng_algorithm: str = "numpy-PCG64"

    def check(self):
        assert 0 <= self.mismatches <= self.key_length
        assert self.key_length == self.sift_successes == len(self.letters)


@dataclass
class _Tables:
    """Sampling tables: everything about a protocol the rounds need."""

    prior_cum: np.ndarray     # (n,) cumulative signal priors
    branch_cum: np.ndarray    # (n, n_q) cumulative Kraus-branch weights
    outcome_cum: np.ndarray   # (n, n_q, m) cumulative outcome probabilities
    alice_count: np.ndarray   # (n,) compatible Alice functions per signal
    alice_table: np.ndarray   # (n, max) their indices, padded
    la: np.ndarray            # (n_a, n) Alice letter of (function, signal), -1 = incompatible
    t_count: np.ndarray       # (n_a, m) valid Bob partners per (announced, outcome)
    t_table: np.ndarray       # (n_a, m, max) their indices, padded
    lb: np.ndarray            # (n_b, m) Bob letter of (function, outcome), -1 = discard
    n: int
    m: int


def build_tables(name, p):
    """Precompute the per-round sampling tables for one configuration."""
    protocol = build_protocol(name)
    scheme = build_scheme(protocol)
    ens, meas = protocol.ensemble, protocol.measurement
    n, d, m = ens.n, ens.dim, meas.m
    kraus = depolarizing_kraus(d, p)
    u = ens.unit_states

    evolved = np.stack([u @ k.T for k in kraus], axis=1)  # (n, n_q, d)
    w = np.sum(np.abs(evolved) ** 2, axis=2)
    if np.any(np.abs(w.sum(axis=1) - 1.0) > 1e-10):
        raise ValueError("Kraus branch weights do not sum to one")
    amp = evolved @ meas.elements.conj().T  # (n, n_q, m)
    out = np.abs(amp) ** 2
    live = w > 1e-15
    out[live] /= w[live][:, None]
    out[~live] = 1.0 / m  # never sampled; keep the cumulative rows valid

    n_a, n_b = len(scheme.alice_functions), len(scheme.bob_functions)
    la = np.full((n_a, n), -1, dtype=np.int64)
    for s, fn in enumerate(scheme.alice_functions):
        for letter in range(scheme.r):
            for j in fn.members(letter):
                la[s, j] = letter
    compat = [np.nonzero(la[:, j] >= 0)[0] for j in range(n)]
    alice_count = np.array([len(c) for c in compat])
    if alice_count.min() == 0:
        raise ValueError("a signal has no compatible decoding function")
    alice_table = np.zeros((n, alice_count.max()), dtype=np.int64)
    for j, c in enumerate(compat):
        alice_table[j, : len(c)] = c

    lb = np.full((n_b, m), -1, dtype=np.int64)
    for t, fn in enumerate(scheme.bob_functions):
        for letter in range(scheme.r):
            for k in fn.members(letter):
                lb[t, k] = letter
    partners = [[] for _ in range(n_a)]
    for s, t in scheme.t_pairs:
        partners[s].append(t)
    valid = [
        [[t for t in partners[s] if lb[t, k] >= 0] for k in range(m)]
        for s in range(n_a)
    ]
    t_count = np.array([[len(v) for v in row] for row in valid])
    t_table = np.zeros((n_a, m, max(1, t_count.max())), dtype=np.int64)
    for s in range(n_a):
        for k in range(m):
            t_table[s, k, : t_count[s, k]] = valid[s][k]

    return _Tables(
        prior_cum=np.cumsum(ens.priors),
        branch_cum=np.cumsum(w, axis=1),
        outcome_cum=np.cumsum(out, axis=2),
        alice_count=alice_count,
        alice_table=alice_table,
        la=la,
        t_count=t_count,
        t_table=t_table,
        lb=lb,
        n=n,
        m=m,
    )


def _run_chunk(tab, rng, size):
    """Simulate ``size`` rounds; returns (successes, alice, bob) arrays."""
    j = np.searchsorted(tab.prior_cum, rng.random(size), side="right")
    j = np.minimum(j, tab.n - 1)
    q = (rng.random(size)[:, None] > tab.branch_cum[j]).sum(axis=1)
    oc = tab.outcome_cum[j, q]
    k = (rng.random(size)[:, None] > oc).sum(axis=1)
    k = np.minimum(k, tab.m - 1)
    s = tab.alice_table[j, (rng.random(size) * tab.alice_count[j]).astype(np.int64)]
    cnt = tab.t_count[s, k]
    t = tab.t_table[s, k, (rng.random(size) * cnt).astype(np.int64)]
    ok = cnt > 0
    return ok, tab.la[s, j], tab.lb[t, k], j, k


def run_simulation(cfg):
    """Run the protocol for ``cfg.rounds`` rounds; deterministic in the seed."""
    protocol = build_protocol(cfg.protocol)
    cfg.validate(protocol.d)
    tab = build_tables(cfg.protocol, cfg.p)

    n_chunks = -(-cfg.rounds // _CHUNK)
    streams = np.random.SeedSequence(int(cfg.seed)).spawn(n_chunks + 1)
    sift = 0
    mism = 0
    letters = []
    joint = np.zeros((tab.n, tab.m), dtype=np.int64)
    for i in range(n_chunks):
        size = min(_CHUNK, cfg.rounds - i * _CHUNK)
        ok, a, b, j, k = _run_chunk(tab, np.random.default_rng(streams[i]), size)
        sift += int(ok.sum())
        mism += int((ok & (a != b)).sum())
        letters.append(np.column_stack([a[ok], b[ok]]).astype(np.int8))
        np.add.at(joint, (j, k), 1)
    letters = np.concatenate(letters, axis=0)
    if cfg.shuffle:
        perm = np.random.default_rng(streams[n_chunks]).permutation(len(letters))
        letters = letters[perm]

    err = mism / sift if sift else 0.0
    se = np.sqrt(err * (1 - err) / sift) if sift else 0.0
    stats = SimStats(
        sift_successes=sift,
        key_length=sift,
        mismatches=mism,
        empirical_error=float(err),
        error_se=float(se),
        empirical_success=sift / cfg.rounds,
        letters=letters,
        joint_counts=joint,
    )
    stats.check()
    return stats


@dataclass
class SpectrumCheck:
    """Empirical error rate against an analytic Bell spectrum.

    The error rate is the only quantity the parties observe directly, so
    the comparison is a z-score under the binomial null at the analytic
    rate (infinite when the analytic rate is an exact zero or one and the
    counts disagree).
    """

    analytic_error: float
    empirical_error: float
    standard_error: float
    z: float
    rounds: int
    key_length: int
    mismatches: int


def empirical_spectrum_check(cfg, analytic):
    """z-score of a simulation's error rate against an analytic spectrum."""
    from .keyrate import error_rate

    stats = run_simulation(cfg)
    ea = float(error_rate(analytic))
    var = ea * (1.0 - ea)
    if stats.key_length and var > 0:
        se = float(np.sqrt(var / stats.key_length))
        z = (stats.empirical_error - ea) / se
    else:
        se = 0.0
        z = 0.0 if stats.empirical_error == ea else float("inf")
    return SpectrumCheck(
        analytic_error=ea,
        empirical_error=stats.empirical_error,
        standard_error=se,
        z=float(z),
        rounds=cfg.rounds,
        key_length=stats.key_length,
        mismatches=stats.mismatches,
    )

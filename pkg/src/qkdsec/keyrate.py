"""Key states, Bell spectra, rate bounds, and error-rate thresholds.

A protocol's sifted rounds split into orbits of the decoding-pair symmetry.
Each orbit is summarized by a single fiducial pair state obtained by
conjugating the channel's Choi operator with the orbit's decoder matrices;
the full average over decoding pairs equals that fiducial state once the
channel is symmetrized.  Rate bounds (random hashing, or CSS codes with a
worst-case phase-to-bit error coefficient taken over the invariant channel
family) then turn the observed error rate into a security threshold.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize

from .channels import depolarizing_channel, fixed_space, simplex_vertices, symmetrizer
from .decoding import build_scheme, classical_statistics, fiducial_decoder
from .ensembles import build_protocol
from .linops import SuperOp
from .symmetry import (
    ProjectiveUnitary,
    aut_t,
    ensemble_action,
    generate_group,
    measurement_action,
)

RATE_TOL = 1e-9
_BALANCE_TOL = 1e-9


def binary_entropy(x):
    """h2(x) in bits, elementwise, with h2(0) = h2(1) = 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inner = (x > 0) & (x < 1)
    xi = x[inner]
    out[inner] = -xi * np.log2(xi) - (1 - xi) * np.log2(1 - xi)
    if np.any((x < -1e-12) | (x > 1 + 1e-12)):
        raise ValueError("binary entropy argument outside [0, 1]")
    return out if out.ndim else float(out)


@dataclass
class OrbitFiducial:
    """Fiducial decoder of one orbit of decoding pairs.

    ``theta``/``phi`` are the aligned decoder phases of the representative
    pair (Alice letter phases, Bob letter phases).  ``filter_gains`` is a
    Bob-side letter filter equalizing the noiseless key-state amplitudes;
    it is all ones when the orbit is already balanced.  ``realify`` marks
    orbits whose stabilizing symmetries include antiunitary elements, where
    the orbit average is the real part of the fiducial state.
    """

    orbit: int
    rep: int
    s0: int
    t0: int
    theta: np.ndarray
    phi: np.ndarray
    filter_gains: np.ndarray
    realify: bool
    size: int

    @property
    def filtered(self):
        return bool(np.any(np.abs(self.filter_gains - 1.0) > 1e-12))


@dataclass
class ProtocolContext:
    """Everything derived from a registered protocol, assembled once."""

    name: str
    protocol: object
    group: object
    signal_action: object
    outcome_action: object
    scheme: object
    aut: object
    symm: object
    family: object
    orbits: list
    vertices: list = field(default_factory=list)

    @property
    def dim(self):
        return self.protocol.d

    @property
    def n_orbits(self):
        return len(self.orbits)


_CONTEXTS = {}


def _pair_conjugation(ctx, of, theta=None, phi=None):
    """kron(S_A, S_B) for the orbit's fiducial decoders."""
    th = of.theta if theta is None else np.asarray(theta, dtype=float)
    ph = of.phi if phi is None else np.asarray(phi, dtype=float)
    p = ctx.protocol
    sa = fiducial_decoder(ctx.scheme, p.ensemble, p.measurement, "alice", of.s0, phases=th)
    sb = fiducial_decoder(ctx.scheme, p.ensemble, p.measurement, "bob", of.t0, phases=ph)
    return np.kron(sa, sb)


def _push_op(ctx, of, k, op):
    """Unnormalized processed pair state of a channel in Choi (op) form."""
    rho = k @ op @ k.conj().T / (ctx.scheme.c_a * ctx.scheme.nu)
    if of.realify:
        rho = 0.5 * (rho + rho.conj())
    if of.filtered:
        dvec = np.tile(of.filter_gains, ctx.scheme.r)  # acts on Bob's letter
        rho = dvec[:, None] * rho * dvec[None, :]
    return rho


def build_context(name):
    """Assembled symmetry/decoding/channel data of a protocol (cached)."""
    ctx = _CONTEXTS.get(name)
    if ctx is not None:
        return ctx
    protocol = build_protocol(name)
    group = generate_group(
        [ProjectiveUnitary(m, antiunitary=a) for m, a in protocol.generators]
    )
    sig = ensemble_action(group, protocol.ensemble.states)
    out = measurement_action(group, sig, protocol.measurement)
    scheme = build_scheme(protocol)
    aut = aut_t(sig, out, scheme)
    symm = symmetrizer(group, aut)
    family = fixed_space(symm)
    vertices = simplex_vertices(family)

    orbits = []
    for oid in range(aut.n_orbits):
        rep = aut.orbit_reps[oid]
        s0, t0 = aut.t_list[rep]
        members = aut.orbit_members(oid)
        realify = any(
            group.elements[aut.pairs[aut.rep_pairs[i]][0]].antiunitary
            for i in members
        )
        of = OrbitFiducial(
            orbit=oid,
            rep=rep,
            s0=s0,
            t0=t0,
            theta=np.zeros(scheme.r),
            phi=np.zeros(scheme.r),
            filter_gains=np.ones(scheme.r),
            realify=realify,
            size=len(members),
        )
        ctx_tmp = ProtocolContext(
            name, protocol, group, sig, out, scheme, aut, symm, family, []
        )
        # raw (no realification, no filter) noiseless pair state fixes the
        # aligning Bob phase and the letter amplitudes
        k = _pair_conjugation(ctx_tmp, of)
        z = k @ family.base_choi @ k.conj().T
        r = scheme.r
        chi = float(np.angle(z[0, r + 1]))
        of.phi = np.array([0.0, chi]) if r == 2 else np.zeros(r)
        amps = np.sqrt(np.real(np.diag(z)).clip(min=0.0).reshape(r, r).diagonal())
        if amps.min() <= 0:
            raise ValueError(f"orbit {oid} has a dark letter")
        if amps.max() / amps.min() - 1 > _BALANCE_TOL:
            of.filter_gains = amps.min() / amps
        orbits.append(of)

    ctx = ProtocolContext(
        name, protocol, group, sig, out, scheme, aut, symm, family, orbits, vertices
    )
    _CONTEXTS[name] = ctx
    return ctx


def _coerce(ctx_or_name):
    if isinstance(ctx_or_name, ProtocolContext):
        return ctx_or_name
    return build_context(ctx_or_name)


def _op_form(channel, d):
    if isinstance(channel, SuperOp):
        if channel.dim != d:
            raise ValueError("channel dimension mismatch")
        return channel.op_form
    return SuperOp.from_transfer(np.asarray(channel, dtype=complex)).op_form


@dataclass
class KeyState:
    """Normalized two-letter key state and its sifting probability.

    ``success_probability`` is the chance that a round belongs to this
    orbit and survives sifting (and the orbit's filter, if any).
    """

    rho: np.ndarray
    success_probability: float


def key_state(ctx_or_name, channel, orbit=0, theta=None, phi=None):
    """Fiducial key state of one orbit under a symmetric channel.

    The channel should be a member of the protocol's invariant family
    (a ``SuperOp``, or a transfer matrix); for such channels this equals
    the average over the orbit's decoding pairs.
    """
    ctx = _coerce(ctx_or_name)
    of = ctx.orbits[orbit]
    op = _op_form(channel, ctx.dim)
    k = _pair_conjugation(ctx, of, theta=theta, phi=phi)
    rho = _push_op(ctx, of, k, op)
    p_pair = float(np.real(np.trace(rho)))
    if p_pair < 1e-14:
        raise ValueError("sifting never succeeds on this orbit")
    return KeyState(rho=rho / p_pair, success_probability=p_pair * of.size)


@dataclass
class BellSpectrum:
    """Diagonal of a two-qubit state in a rephased Bell basis."""

    b: np.ndarray  # 2 x 2; first index bit-shift power, second phase power
    psi: np.ndarray


def _bell_vectors(psi):
    s = 1 / np.sqrt(2)
    e0, e1 = np.exp(1j * psi[0]), np.exp(1j * psi[1])
    return np.array(
        [
            [s, 0, 0, s],
            [s, 0, 0, -s],
            [0, s * e0, s * e1, 0],
            [0, s * e0, -s * e1, 0],
        ]
    )


def bell_spectrum(rho, psi=None):
    """Bell-basis diagonal ``b[j, k]`` of a 4 x 4 state.

    ``psi`` rephases the off-diagonal Bell pair: the shifted vectors are
    ``(e^{i psi_0}|01> +/- e^{i psi_1}|10>)/sqrt(2)``.  When omitted, the
    canonical rephasing is used: the |01>/|10> coherence is rotated onto
    the minus combination, so ``b[1,1] >= b[1,0]``.  The bit error rate
    does not depend on ``psi``.
    """
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise ValueError("bell_spectrum expects a two-qubit state")
    psi = canonical_bell_phases(rho) if psi is None else np.asarray(psi, dtype=float)
    v = _bell_vectors(psi)
    b = np.real(np.einsum("ai,ij,aj->a", v.conj(), rho, v)).reshape(2, 2)
    return BellSpectrum(b=b, psi=psi)


def canonical_bell_phases(rho):
    """Bell phases concentrating the off-diagonal coherence on ``b[1,1]``."""
    c = rho[1, 2]
    if abs(c) < 1e-15:
        return np.zeros(2)
    return np.array([0.0, np.pi - float(np.angle(c))])


def error_rate(spectrum):
    """Bit (key mismatch) error rate: weight of the bit-shifted Bells."""
    return float(spectrum.b[1, 0] + spectrum.b[1, 1])


def phase_error_rate(spectrum):
    return float(spectrum.b[0, 1] + spectrum.b[1, 1])


def hashing_rate(spectrum, tol=1e-8):
    """Random-hashing key rate 1 - H({b_jk}); may be negative."""
    b = spectrum.b.reshape(-1)
    if abs(b.sum() - 1.0) > tol:
        raise ValueError("Bell spectrum is not normalized")
    pos = b[b > 0]
    return float(1.0 + np.sum(pos * np.log2(pos)))


def css_rate(e_bit, e_phase):
    """CSS-code key rate 1 - h2(e_bit) - h2(e_phase); may be negative."""
    return float(1.0 - binary_entropy(e_bit) - binary_entropy(e_phase))


# ---------------------------------------------------------------------------
# worst-case phase-to-bit coefficient over the invariant family


def _orbit_vertex_data(ctx, of, theta=None, phi=None):
    """Per-vertex (e_bit weight, b01 weight, letter coherence, trace).

    Evaluates the orbit's unnormalized pair state at every vertex of the
    family simplex.  The pair-state map is linear, so these numbers carry
    the orbit's Bell data for every invariant channel.
    """
    k = _pair_conjugation(ctx, of, theta=theta, phi=phi)
    rhos = [_push_op(ctx, of, k, v) for v in ctx.vertices]
    ebit = np.array([np.real(r[1, 1] + r[2, 2]) for r in rhos])
    # <beta01| r |beta01> with beta01 = (1,0,0,-1)/sqrt(2)
    b01 = np.array(
        [
            0.5 * np.real(r[0, 0] + r[3, 3] - r[0, 3] - r[3, 0])
            for r in rhos
        ]
    )
    c12 = np.array([r[1, 2] for r in rhos])
    tr = np.array([np.real(np.trace(r)) for r in rhos])
    return ebit, b01, c12, tr


def worst_phase_ratio(ctx_or_name, orbit=0, theta=None, phi=None, polish=True):
    """Worst-case e_phase / e_bit of one orbit over the invariant family.

    The phase error rate is evaluated at the rephasing that minimizes it.
    Every invariant channel is a convex mixture of the family's vertex
    channels, and the identity vertex contributes no errors, so the ratio
    depends only on the mixture of the error-producing vertices.  Its
    maximum sits either at a vertex or -- since the rephased phase error
    is concave in the mixture -- at an interior critical point, which the
    constrained polish picks up.
    """
    ctx = _coerce(ctx_or_name)
    of = ctx.orbits[orbit]
    ebit, b01, c12, tr = _orbit_vertex_data(ctx, of, theta=theta, phi=phi)
    tol = 1e-9 * float(tr.max())
    divergent = (ebit <= tol) & ((b01 > tol) | (np.abs(c12) > tol))
    if np.any(divergent):
        raise ValueError(
            "orbit has phase errors without bit errors; the ratio is unbounded"
        )
    err = ebit > tol
    if not np.any(err):
        raise ValueError("invariant family produces no bit errors on this orbit")
    vals = (b01[err] + 0.5 * ebit[err] - np.abs(c12[err])) / ebit[err]
    best = float(vals.max())
    n = int(err.sum())
    if not polish or n == 1:
        return best

    ebe, b01e, ce = ebit[err], b01[err], c12[err]

    def neg_ratio(y):
        eb = float(y @ ebe)
        return -(float(y @ b01e) + 0.5 * eb - abs(y @ ce)) / eb

    cons = [{"type": "eq", "fun": lambda y: y.sum() - 1.0}]
    bounds = [(0.0, 1.0)] * n
    starts = [np.eye(n)[i] for i in range(n)] + [np.full(n, 1.0 / n)]
    for i in range(n):
        for j in range(i + 1, n):
            starts.append(0.5 * (np.eye(n)[i] + np.eye(n)[j]))
    for y0 in starts:
        res = minimize(
            neg_ratio,
            y0,
            method="SLSQP",
            bounds=bounds,
            constraints=cons,
            options={"maxiter": 200, "ftol": 1e-14},
        )
        if res.success:
            y = np.clip(res.x, 0.0, None)
            s = y.sum()
            if s > 1e-12 and float(y @ ebe) > 1e-12 * s:
                best = max(best, -neg_ratio(y / s))
    return best


@dataclass
class PhaseRelation:
    """Worst-case phase-to-bit error coefficient of a protocol.

    For one-parameter families ``relations`` additionally reports, per
    orbit, the exact slopes of the canonically rephased Bell coefficients
    with respect to the orbit's bit error rate (``b11`` carries the
    letter coherence, so ``b11 >= b10``); these are constant along the
    family, so ``b_jk = slope * e`` holds exactly.
    """

    coefficient: float
    per_orbit: np.ndarray
    worst_orbit: int
    relations: list = None


def phase_relation(ctx_or_name):
    """max e_phase / e_bit over the invariant family and all orbits."""
    ctx = _coerce(ctx_or_name)
    per = np.array(
        [worst_phase_ratio(ctx, orbit=o) for o in range(ctx.n_orbits)]
    )
    worst = int(np.argmax(per))
    relations = None
    if ctx.family.n_free == 1:
        relations = []
        for o in range(ctx.n_orbits):
            ebit, b01, c12, _ = _orbit_vertex_data(ctx, ctx.orbits[o])
            i = int(np.argmax(ebit))
            s = abs(c12[i]) / ebit[i]
            relations.append(
                {
                    "b01": float(b01[i] / ebit[i]),
                    "b10": float(0.5 - s),
                    "b11": float(0.5 + s),
                }
            )
    return PhaseRelation(
        coefficient=float(per[worst]),
        per_orbit=per,
        worst_orbit=worst,
        relations=relations,
    )


# ---------------------------------------------------------------------------
# thresholds


def depol_error_rate(ctx_or_name, p):
    """Sifting-level letter error rate under depolarizing noise of weight p.

    This is the mismatch rate of the bare prepare-and-measure rounds (what
    the Monte Carlo simulator reproduces); it ignores the orbit
    letter-balancing filters.
    """
    ctx = _coerce(ctx_or_name)
    pr = ctx.protocol
    ch = depolarizing_channel(ctx.dim, p)
    return classical_statistics(ctx.scheme, pr.ensemble, pr.measurement, ch).error_rate


def decoded_error_rate(ctx_or_name, p):
    """Bit error rate of the decoded key under depolarizing noise.

    Success-weighted over orbits, including each orbit's letter-balancing
    filter; for protocols with balanced letters this coincides with
    :func:`depol_error_rate`, otherwise the filter reweights the kept
    rounds and the two rates differ.
    """
    ctx = _coerce(ctx_or_name)
    ch = depolarizing_channel(ctx.dim, p)
    num = den = 0.0
    for o in range(ctx.n_orbits):
        ks = key_state(ctx, ch, orbit=o)
        num += ks.success_probability * error_rate(bell_spectrum(ks.rho))
        den += ks.success_probability
    return num / den


def _depol_upper(d):
    return d * d / (d * d - 1.0)


def _min_hashing_rate(ctx, p):
    ch = depolarizing_channel(ctx.dim, p)
    rates = []
    for o in range(ctx.n_orbits):
        ks = key_state(ctx, ch, orbit=o)
        rates.append(hashing_rate(bell_spectrum(ks.rho)))
    return min(rates)


def _vertex_tables(ctx):
    """Per-orbit unnormalized vertex data plus global sift/error masses."""
    tabs = [_orbit_vertex_data(ctx, ctx.orbits[o]) for o in range(ctx.n_orbits)]
    werr = sum(of.size * t[0] for of, t in zip(ctx.orbits, tabs))
    wsift = sum(of.size * t[3] for of, t in zip(ctx.orbits, tabs))
    return tabs, werr, wsift


def _member_entropy(u, tab):
    ebit, b01, c12, tr = tab
    t = float(u @ tr)
    e = float(u @ ebit) / t
    x = float(u @ b01) / t
    s = abs(complex(u @ c12)) / t
    spec = np.clip(np.array([1.0 - e - x, x, 0.5 * e - s, 0.5 * e + s]), 0.0, 1.0)
    nz = spec[spec > 1e-300]
    return -float(nz @ np.log2(nz))


def _worst_hashing_rate(ctx, eps):
    """Smallest hashing rate over family members observed at error rate eps.

    Used when the invariant family has more than one parameter, so the
    observed rate does not pin down the member: the spectrum entropy is
    maximized over vertex mixtures under the linear observed-rate
    constraint, separately per orbit.
    """
    tabs, werr, wsift = _vertex_tables(ctx)
    nv = len(werr)
    a = werr - eps * wsift
    cons = [
        {"type": "eq", "fun": lambda u: u.sum() - 1.0},
        {"type": "eq", "fun": lambda u: float(u @ a)},
    ]
    bounds = [(0.0, 1.0)] * nv
    starts = [np.full(nv, 1.0 / nv)]
    for j in range(1, nv):
        denom = a[0] - a[j]
        if abs(denom) > 1e-15:
            w = a[0] / denom
            if 0.0 <= w <= 1.0:
                u0 = np.zeros(nv)
                u0[0], u0[j] = 1.0 - w, w
                starts.append(u0)
    best = -np.inf
    for tab in tabs:
        for u0 in starts:
            res = minimize(
                lambda u: -_member_entropy(u, tab),
                u0,
                method="SLSQP",
                bounds=bounds,
                constraints=cons,
                options={"maxiter": 300, "ftol": 1e-12},
            )
            if not res.success:
                continue
            u = np.clip(res.x, 0.0, None)
            u /= u.sum()
            if abs(float(u @ a)) > 1e-9 * float(u @ wsift):
                continue
            best = max(best, _member_entropy(u, tab))
    if not np.isfinite(best):
        raise ArithmeticError("no family member attains the requested error rate")
    return 1.0 - best


@dataclass
class ThresholdResult:
    protocol: str
    bound_used: str
    epsilon_star: float
    p_star: float
    fidelity_star: float
    phases: dict
    details: dict = field(default_factory=dict)


def _entanglement_fidelity(ctx, p):
    op = depolarizing_channel(ctx.dim, p).op_form
    d = ctx.dim
    phi = np.eye(d).reshape(-1) / np.sqrt(d)
    return float(np.real(phi.conj() @ op @ phi) / d)


def _phase_report(ctx):
    return {
        "theta": [of.theta.tolist() for of in ctx.orbits],
        "phi": [of.phi.tolist() for of in ctx.orbits],
        "bell_psi": "minimizing the phase error rate",
    }


def threshold_search(ctx_or_name, bound=None):
    """Secure error-rate threshold of a protocol under one rate bound.

    ``hashing`` solves 1 - H(spectrum) = 0 over the invariant family,
    taking the worst orbit; for one-parameter families the member at a
    given error rate is unique, otherwise the spectrum entropy is
    maximized over the family at the observed rate.  ``css`` solves
    1 - h2(e) - h2(c e) = 0 with the worst-case coefficient c from
    :func:`phase_relation`.  Error rates are those of the decoded key
    (filters included); ``p_star`` is the depolarizing weight whose
    decoded key sits at the threshold, and ``fidelity_star`` the
    entanglement fidelity of that channel.
    """
    ctx = _coerce(ctx_or_name)
    if bound is None:
        bound = ctx.protocol.default_bound
    details = {"orbits": ctx.n_orbits}
    p_hi = 0.999 * _depol_upper(ctx.dim)

    if bound == "hashing" and ctx.family.n_free == 1:
        f = lambda p: _min_hashing_rate(ctx, p)
        if f(1e-9) <= 0:
            raise ValueError("hashing rate is not positive at zero noise")
        p_star = float(brentq(f, 1e-9, p_hi, xtol=1e-14))
        eps_star = float(decoded_error_rate(ctx, p_star))
        details["rate_residual"] = abs(f(p_star))
        details["bell_slopes"] = phase_relation(ctx).relations
    elif bound == "hashing":
        f = lambda e: _worst_hashing_rate(ctx, e)
        _, werr, wsift = _vertex_tables(ctx)
        e_hi = 0.999 * max(werr[j] / wsift[j] for j in range(1, len(werr)))
        grid = np.linspace(1e-4, e_hi, 25)
        lo = grid[0]
        if f(lo) <= 0:
            raise ValueError("hashing rate is not positive at zero noise")
        eps_star = None
        for e in grid[1:]:
            if f(e) <= 0:
                eps_star = float(brentq(f, lo, e, xtol=1e-13))
                break
            lo = e
        if eps_star is None:
            raise ValueError("hashing rate has no zero on the search interval")
        details["rate_residual"] = abs(f(eps_star))
        p_star = float(
            brentq(
                lambda p: decoded_error_rate(ctx, p) - eps_star, 1e-12, p_hi, xtol=1e-14
            )
        )
    elif bound == "css":
        rel = phase_relation(ctx)
        c = rel.coefficient
        details["coefficient"] = c
        details["per_orbit_coefficients"] = rel.per_orbit.tolist()
        hi = min(0.5, 0.5 / c) - 1e-12
        g = lambda e: css_rate(e, min(c * e, 0.5))
        eps_star = float(brentq(g, 1e-12, hi, xtol=1e-15))
        details["rate_residual"] = abs(g(eps_star))
        p_star = float(
            brentq(
                lambda p: decoded_error_rate(ctx, p) - eps_star, 1e-12, p_hi, xtol=1e-14
            )
        )
    else:
        raise ValueError(f"unknown bound {bound!r}")

    if details["rate_residual"] > RATE_TOL:
        raise ArithmeticError("threshold search did not converge")
    fid = _entanglement_fidelity(ctx, p_star)
    d = ctx.dim
    details["fidelity_candidates"] = {
        "entanglement": fid,
        "average": (d * fid + 1) / (d + 1),
    }
    return ThresholdResult(
        protocol=ctx.name,
        bound_used=bound,
        epsilon_star=eps_star,
        p_star=p_star,
        fidelity_star=fid,
        phases=_phase_report(ctx),
        details=details,
    )


# ---------------------------------------------------------------------------
# decoder-phase optimization


@dataclass
class PhaseOptimum:
    objective: str
    value: float
    per_orbit_phases: list  # (theta_1, phi_1) per orbit, letter-0 phases fixed at 0
    per_orbit_values: np.ndarray


def _orbit_coefficient_at(ctx, orbit, angles, polish=False):
    th = np.array([0.0, angles[0]])
    ph = np.array([0.0, angles[1]])
    try:
        return worst_phase_ratio(ctx, orbit=orbit, theta=th, phi=ph, polish=polish)
    except ValueError:
        return np.inf


def optimize_phases(ctx_or_name, objective="ratio", seed=0):
    """Optimize the two free decoder phases of each orbit.

    Exhaustive grid over multiples of pi/12, then coordinate descent with
    step halving down to 1e-6 rad.  ``ratio`` minimizes the orbit's
    worst-case phase-to-bit coefficient; ``threshold`` reports the CSS
    threshold of the resulting worst coefficient.  Deterministic; ``seed``
    is accepted for interface uniformity.
    """
    if objective not in ("ratio", "threshold"):
        raise ValueError(f"unknown objective {objective!r}")
    ctx = _coerce(ctx_or_name)
    del seed
    grid = np.arange(24) * (np.pi / 12)
    phases, values = [], []
    for o in range(ctx.n_orbits):
        best_val, best_ang = np.inf, (0.0, 0.0)
        for a in grid:
            for b in grid:
                v = _orbit_coefficient_at(ctx, o, (a, b))
                if v < best_val - 1e-8:
                    best_val, best_ang = v, (a, b)
        ang = np.array(best_ang)
        step = np.pi / 12
        while step > 1e-6:
            moved = False
            for axis in range(2):
                for sgn in (+1, -1):
                    trial = ang.copy()
                    trial[axis] += sgn * step
                    v = _orbit_coefficient_at(ctx, o, trial)
                    if v < best_val - 1e-8:
                        best_val, ang, moved = v, trial, True
            if not moved:
                step *= 0.5
        phases.append((float(ang[0]), float(ang[1])))
        values.append(_orbit_coefficient_at(ctx, o, ang, polish=True))
    values = np.array(values)
    worst = float(values.max())
    if objective == "threshold":
        hi = min(0.5, 0.5 / worst) - 1e-12
        value = float(
            brentq(lambda e: css_rate(e, min(worst * e, 0.5)), 1e-12, hi, xtol=1e-15)
        )
    else:
        value = worst
    return PhaseOptimum(
        objective=objective,
        value=value,
        per_orbit_phases=phases,
        per_orbit_values=values,
    )

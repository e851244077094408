"""Finite projective (anti)unitary groups and their action on protocols.

Group elements are unitary matrices taken modulo global phase, optionally
composed with complex conjugation in the standard basis (antiunitary
elements).  Composition follows ``(A, a) (B, b) = (A conj^a(B), a xor b)``
where the flag records conjugation and the right factor acts first.

The module provides breadth-first group closure, the permutation/phase
action of a group on signal and measurement vectors, and the subgroup of
``G x H`` whose induced action on decoding-function pairs preserves the
allowed set T, together with T's orbit decomposition under that subgroup.
"""

from dataclasses import dataclass

import numpy as np

from .ensembles import canonical_phase

ATOL = 1e-10
DEDUP_TOL = 1e-8


class ProjectiveUnitary:
    """A unitary modulo global phase, optionally followed by conjugation."""

    __slots__ = ("matrix", "antiunitary", "canonical", "key")

    def __init__(self, matrix, antiunitary=False):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"group element must be square, got {m.shape}")
        if np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0])) > ATOL:
            raise ValueError("group element matrix is not unitary")
        self.matrix = m
        self.antiunitary = bool(antiunitary)
        self.canonical = canonical_phase(m.ravel()).reshape(m.shape)
        rounded = np.round(self.canonical, 6) + 0.0  # +0.0 normalizes -0.0
        self.key = (self.antiunitary, rounded.tobytes())

    @property
    def dim(self):
        return self.matrix.shape[0]

    def compose(self, other):
        """``self`` after ``other`` (other acts first)."""
        b = other.matrix.conj() if self.antiunitary else other.matrix
        return ProjectiveUnitary(self.matrix @ b, self.antiunitary ^ other.antiunitary)

    def inverse(self):
        inv = self.matrix.conj().T
        if self.antiunitary:
            inv = inv.conj()
        return ProjectiveUnitary(inv, self.antiunitary)

    def apply(self, v):
        return self.matrix @ (np.conj(v) if self.antiunitary else v)

    def same_as(self, other, tol=DEDUP_TOL):
        return self.antiunitary == other.antiunitary and bool(
            np.linalg.norm(self.canonical - other.canonical) < tol
        )


class FiniteMatrixGroup:
    """Closed list of projective (anti)unitaries with index lookup."""

    def __init__(self, elements, generator_indices=()):
        self.elements = list(elements)
        self.generator_indices = tuple(generator_indices)
        self._index = {}
        for i, e in enumerate(self.elements):
            self._index.setdefault(e.key, i)
        self._mult_cache = {}

    @property
    def order(self):
        return len(self.elements)

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def find(self, element):
        i = self._index.get(element.key)
        if i is not None and self.elements[i].same_as(element):
            return i
        # fall back to a linear scan in case rounding split the bucket
        for j, e in enumerate(self.elements):
            if e.same_as(element):
                return j
        raise KeyError("element not in group")

    def compose_index(self, i, j):
        """Index of elements[i] ∘ elements[j] (j acts first)."""
        hit = self._mult_cache.get((i, j))
        if hit is None:
            hit = self.find(self.elements[i].compose(self.elements[j]))
            self._mult_cache[(i, j)] = hit
        return hit

    def inverse_index(self, i):
        return self.find(self.elements[i].inverse())


def generate_group(generators, max_order=10000):
    """Breadth-first closure of a generator list modulo global phase.

    The identity is element 0; antiunitary generators are supported.
    """
    if not generators:
        raise ValueError("no generators given")
    gens = [g if isinstance(g, ProjectiveUnitary) else ProjectiveUnitary(*g) for g in generators]
    d = gens[0].dim
    elements = [ProjectiveUnitary(np.eye(d))]
    buckets = {elements[0].key: [0]}
    head = 0
    while head < len(elements):
        e = elements[head]
        head += 1
        for g in gens:
            p = g.compose(e)
            hits = buckets.get(p.key, ())
            if any(elements[i].same_as(p) for i in hits):
                continue
            if any(q.same_as(p) for q in elements):  # rounding-boundary fallback
                continue
            elements.append(p)
            buckets.setdefault(p.key, []).append(len(elements) - 1)
            if len(elements) > max_order:
                raise ValueError(f"group closure exceeded max_order={max_order}")
    group = FiniteMatrixGroup(elements)
    group.generator_indices = tuple(group.find(g) for g in gens)
    return group


@dataclass
class EnsembleAction:
    """Permutation/phase tables: element i maps vector j to
    ``exp(1j*phases[i,j]) * vectors[perms[i,j]]``."""

    group: FiniteMatrixGroup
    vectors: np.ndarray
    perms: np.ndarray
    phases: np.ndarray

    def check(self, tol=ATOL):
        for i, e in enumerate(self.group.elements):
            for j, v in enumerate(self.vectors):
                w = e.apply(v)
                target = np.exp(1j * self.phases[i, j]) * self.vectors[self.perms[i, j]]
                if np.linalg.norm(w - target) > tol:
                    raise ValueError(f"action table wrong at element {i}, vector {j}")


def _match_phase(w, target, tol):
    """Phase a with w = e^{ia} target, or None."""
    a = np.vdot(target, w) / np.vdot(target, target)
    if abs(abs(a) - 1) > 1e-6:
        return None
    a /= abs(a)
    if np.linalg.norm(w - a * target) > tol:
        return None
    return float(np.angle(a))


def ensemble_action(group, vectors, tol=1e-8):
    """Action of a group on a list of pairwise non-proportional vectors."""
    vectors = np.asarray(vectors, dtype=complex)
    n = len(vectors)
    perms = np.zeros((group.order, n), dtype=int)
    phases = np.zeros((group.order, n))
    for i, e in enumerate(group.elements):
        for j in range(n):
            w = e.apply(vectors[j])
            for k in range(n):
                a = _match_phase(w, vectors[k], tol)
                if a is not None:
                    perms[i, j] = k
                    phases[i, j] = a
                    break
            else:
                raise ValueError(f"group element {i} does not map vector {j} into the set")
        if len(set(perms[i])) != n:
            raise ValueError(f"element {i} action is not a permutation")
    return EnsembleAction(group, vectors, perms, phases)


def induced_measurement_action(group, signal_action, measurement, tol=1e-8):
    """Action on pair-labeled measurement vectors, induced by the signal
    permutation on the labels.

    Needed when distinct outcomes share the same direction (the nine-signal
    code triples each direction), which makes raw vector matching ambiguous.
    """
    labels = list(measurement.labels)
    label_index = {tuple(lab): k for k, lab in enumerate(labels)}
    vecs = measurement.elements
    m = len(labels)
    perms = np.zeros((group.order, m), dtype=int)
    phases = np.zeros((group.order, m))
    for i, e in enumerate(group.elements):
        sperm = signal_action.perms[i]
        for k, (a, b) in enumerate(labels):
            target = tuple(sorted((int(sperm[a]), int(sperm[b]))))
            kk = label_index[target]
            ph = _match_phase(e.apply(vecs[k]), vecs[kk], tol)
            if ph is None:
                raise ValueError(
                    f"element {i} does not map outcome {labels[k]} onto outcome {target}"
                )
            perms[i, k] = kk
            phases[i, k] = ph
    return EnsembleAction(group, vecs, perms, phases)


def measurement_action(group, signal_action, measurement, tol=1e-8):
    """Action of the group on a protocol's measurement vectors."""
    if measurement.labels and isinstance(measurement.labels[0], (tuple, list)):
        return induced_measurement_action(group, signal_action, measurement, tol)
    return ensemble_action(group, measurement.elements, tol)


def _function_permutation(perm, functions, index):
    """Image of each r-tuple under an index permutation; None if any image
    leaves the function set."""
    out = np.empty(len(functions), dtype=int)
    for s, fn in enumerate(functions):
        image = tuple(int(perm[j]) for j in fn)
        t = index.get(image)
        if t is None:
            return None
        out[s] = t
    return out


@dataclass
class AutTStructure:
    """The subgroup of G x H preserving T, and T's orbits under it."""

    pairs: list  # (g_index, h_index)
    alice_maps: np.ndarray  # pairs x n_a, induced permutation of Alice's functions
    bob_maps: np.ndarray  # pairs x n_b
    t_list: list  # T as (s, t) pairs, in the scheme's own order
    orbit_of: np.ndarray  # T index -> orbit id
    orbit_reps: list  # orbit id -> T index of the first member encountered
    rep_pairs: np.ndarray  # T index -> pair index mapping the orbit rep onto it
    stabilizer_sizes: list

    @property
    def n_pairs(self):
        return len(self.pairs)

    @property
    def n_orbits(self):
        return len(self.orbit_reps)

    def orbit_members(self, orbit_id):
        return np.nonzero(self.orbit_of == orbit_id)[0]


def aut_t(g_action, h_action, scheme):
    """All pairs (g, h) whose induced tuple action preserves T, plus orbits.

    ``scheme`` provides ``alice_tuples``, ``bob_tuples`` (lists of index
    r-tuples) and ``t_pairs`` (list of (s, t) index pairs).
    """
    alice_tuples = [tuple(fn) for fn in scheme.alice_tuples]
    bob_tuples = [tuple(fn) for fn in scheme.bob_tuples]
    a_index = {fn: s for s, fn in enumerate(alice_tuples)}
    b_index = {fn: t for t, fn in enumerate(bob_tuples)}
    t_list = list(scheme.t_pairs)
    n_t = len(t_list)
    s_arr = np.array([s for s, _ in t_list])
    t_arr = np.array([t for _, t in t_list])
    t_id = np.full((len(alice_tuples), len(bob_tuples)), -1, dtype=int)
    t_id[s_arr, t_arr] = np.arange(n_t)

    g_maps = [
        _function_permutation(g_action.perms[i], alice_tuples, a_index)
        for i in range(g_action.group.order)
    ]
    h_maps = [
        _function_permutation(h_action.perms[i], bob_tuples, b_index)
        for i in range(h_action.group.order)
    ]

    s0, t0 = t_list[0]
    pairs = []
    alice_maps = []
    bob_maps = []
    for gi, gm in enumerate(g_maps):
        if gm is None:
            continue
        for hi, hm in enumerate(h_maps):
            if hm is None:
                continue
            if t_id[gm[s0], hm[t0]] < 0:  # cheap single-element prefilter
                continue
            if (t_id[gm[s_arr], hm[t_arr]] >= 0).all():
                pairs.append((gi, hi))
                alice_maps.append(gm)
                bob_maps.append(hm)
    alice_maps = np.array(alice_maps)
    bob_maps = np.array(bob_maps)
    pair_index = {pq: i for i, pq in enumerate(pairs)}
    g_group = g_action.group
    h_group = h_action.group

    def compose_pairs(p, q):
        """Pair index of pairs[p] ∘ pairs[q] (q acts first)."""
        gi = g_group.compose_index(pairs[p][0], pairs[q][0])
        hi = h_group.compose_index(pairs[p][1], pairs[q][1])
        return pair_index[(gi, hi)]

    # orbit decomposition with a group-pair witness per member
    orbit_of = np.full(n_t, -1, dtype=int)
    rep_pairs = np.zeros(n_t, dtype=int)
    orbit_reps = []
    stabilizer_sizes = []
    identity_pair = pair_index[(0, 0)]

    for start in range(n_t):
        if orbit_of[start] != -1:
            continue
        oid = len(orbit_reps)
        orbit_reps.append(start)
        orbit_of[start] = oid
        rep_pairs[start] = identity_pair
        queue = [start]
        size = 1
        while queue:
            cur = queue.pop()
            s, t = t_list[cur]
            images = t_id[alice_maps[:, s], bob_maps[:, t]]
            fresh, first_pair = np.unique(images, return_index=True)
            for img, p in zip(fresh, first_pair):
                if orbit_of[img] == -1:
                    orbit_of[img] = oid
                    rep_pairs[img] = compose_pairs(int(p), int(rep_pairs[cur]))
                    queue.append(int(img))
                    size += 1
        if len(pairs) % size != 0:
            raise ValueError("orbit size does not divide group order; action is inconsistent")
        stabilizer_sizes.append(len(pairs) // size)

    return AutTStructure(
        pairs=pairs,
        alice_maps=alice_maps,
        bob_maps=bob_maps,
        t_list=t_list,
        orbit_of=orbit_of,
        orbit_reps=orbit_reps,
        rep_pairs=rep_pairs,
        stabilizer_sizes=stabilizer_sizes,
    )


def is_transitive(aut):
    return aut.n_orbits == 1


def stabilizer_pairs(aut, orbit_id):
    """Pair indices fixing the orbit's representative element."""
    rep = aut.orbit_reps[orbit_id]
    s, t = aut.t_list[rep]
    out = []
    for p in range(aut.n_pairs):
        if (aut.alice_maps[p][s], aut.bob_maps[p][t]) == (s, t):
            out.append(p)
    return out

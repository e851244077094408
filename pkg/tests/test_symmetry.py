"""Tests for projective group closure, action tables, and T-orbits."""

import numpy as np
import pytest
from types import SimpleNamespace

from qkdsec.symmetry import (
    ProjectiveUnitary,
    aut_t,
    ensemble_action,
    generate_group,
    is_transitive,
    stabilizer_pairs,
)

# name -> (group order, antiunitary count, |T|, orbit sizes, stabilizer sizes)
STRUCTURE = {
    "bb84": (8, 0, 4, [4], [2]),
    "4-2-2-1": (12, 0, 12, [12], [1]),
    "4-3-2-2": (24, 0, 48, [24, 24], [1, 1]),
    "6-3-2-2": (60, 0, 480, [60] * 8, [1] * 8),
    "7-3-2-2": (42, 21, 1050, [42] * 25, [1] * 25),
    "9-3-2-2": (216, 0, 5832, [216] * 27, [1] * 27),
}

X = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_projective_identification():
    rng = np.random.default_rng(7)
    u = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))[0]
    a = ProjectiveUnitary(u)
    b = ProjectiveUnitary(np.exp(1.37j) * u)
    assert a.same_as(b)
    assert a.key == b.key


def test_rejects_non_unitary():
    with pytest.raises(ValueError):
        ProjectiveUnitary(np.array([[1.0, 0.0], [1.0, 1.0]]))


def test_antiunitary_apply_conjugates():
    v = np.array([1.0 + 2.0j, -3.0j])
    k = ProjectiveUnitary(np.eye(2), antiunitary=True)
    assert np.allclose(k.apply(v), v.conj())
    # composing two antiunitaries gives a unitary element
    assert not k.compose(k).antiunitary


def test_compose_respects_order():
    rng = np.random.default_rng(3)
    a = ProjectiveUnitary(np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0])
    b = ProjectiveUnitary(np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))[0])
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    assert np.allclose(a.compose(b).apply(v), a.apply(b.apply(v)))


def test_inverse():
    rng = np.random.default_rng(5)
    u = np.linalg.qr(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))[0]
    for anti in (False, True):
        e = ProjectiveUnitary(u, antiunitary=anti)
        prod = e.compose(e.inverse())
        assert prod.same_as(ProjectiveUnitary(np.eye(3)))


def test_generate_group_unbounded_raises():
    rot = np.array(
        [[np.cos(0.7), -np.sin(0.7)], [np.sin(0.7), np.cos(0.7)]], dtype=complex
    )
    with pytest.raises(ValueError, match="max_order"):
        generate_group([ProjectiveUnitary(rot)], max_order=64)


@pytest.mark.parametrize("name", sorted(STRUCTURE))
def test_group_orders(stack, name):
    order, n_anti, _, _, _ = STRUCTURE[name]
    group = stack(name).group
    assert group.order == order
    assert sum(e.antiunitary for e in group.elements) == n_anti
    # identity first
    assert group.elements[0].same_as(ProjectiveUnitary(np.eye(group.elements[0].dim)))


@pytest.mark.parametrize("name", ["bb84", "4-2-2-1", "7-3-2-2", "9-3-2-2"])
def test_group_closure_and_inverses(stack, name):
    group = stack(name).group
    rng = np.random.default_rng(11)
    idx = rng.integers(0, group.order, size=(25, 2))
    for i, j in idx:
        k = group.compose_index(int(i), int(j))
        expected = group.elements[i].compose(group.elements[j])
        assert group.elements[k].same_as(expected)
    for i in rng.integers(0, group.order, size=10):
        k = group.inverse_index(int(i))
        assert group.compose_index(int(i), k) == 0


@pytest.mark.parametrize("name", sorted(STRUCTURE))
def test_action_tables_verify(stack, name):
    st = stack(name)
    st.signal_action.check()
    st.outcome_action.check()


@pytest.mark.parametrize("name", ["4-2-2-1", "6-3-2-2", "9-3-2-2"])
def test_action_is_homomorphism(stack, name):
    """perm(g1 g2) = perm(g1) o perm(g2) with g2 acting first."""
    st = stack(name)
    group, action = st.group, st.signal_action
    rng = np.random.default_rng(13)
    for i, j in rng.integers(0, group.order, size=(20, 2)):
        k = group.compose_index(int(i), int(j))
        assert np.array_equal(action.perms[k], action.perms[i][action.perms[j]])


def test_identity_acts_trivially(stack):
    st = stack("6-3-2-2")
    n = st.protocol.n
    assert np.array_equal(st.signal_action.perms[0], np.arange(n))
    assert np.allclose(st.signal_action.phases[0], 0.0)


def test_signal_action_transitive(stack):
    for name in ("4-2-2-1", "6-3-2-2", "9-3-2-2"):
        perms = stack(name).signal_action.perms
        assert all(len(set(perms[:, j])) == perms.shape[1] for j in range(perms.shape[1]))
        reached = set(perms[:, 0].tolist())
        assert reached == set(range(perms.shape[1]))


def test_tetrahedron_pi_rotation_is_double_transposition(stack):
    st = stack("4-2-2-1")
    i = st.group.find(ProjectiveUnitary(X))
    perm = st.signal_action.perms[i]
    assert np.array_equal(perm[perm], np.arange(4))
    assert not np.any(perm == np.arange(4))


@pytest.mark.parametrize("name", sorted(STRUCTURE))
def test_aut_t_structure(stack, name):
    _, _, n_t, orbit_sizes, stab_sizes = STRUCTURE[name]
    aut = stack(name).aut
    assert len(aut.t_list) == n_t
    assert aut.n_orbits == len(orbit_sizes)
    sizes = sorted(len(aut.orbit_members(o)) for o in range(aut.n_orbits))
    assert sizes == sorted(orbit_sizes)
    assert aut.stabilizer_sizes == stab_sizes
    # orbit-stabilizer identity
    for o in range(aut.n_orbits):
        assert len(aut.orbit_members(o)) * aut.stabilizer_sizes[o] == aut.n_pairs


@pytest.mark.parametrize("name", sorted(STRUCTURE))
def test_aut_t_pair_count_equals_group_order(stack, name):
    st = stack(name)
    assert st.aut.n_pairs == STRUCTURE[name][0]


@pytest.mark.parametrize("name", ["7-3-2-2"])
def test_aut_t_pairs_have_matching_conjugation_flags(stack, name):
    st = stack(name)
    for gi, hi in st.aut.pairs:
        assert st.group.elements[gi].antiunitary == st.group.elements[hi].antiunitary


@pytest.mark.parametrize("name", ["bb84", "4-3-2-2", "6-3-2-2"])
def test_rep_pair_witnesses(stack, name):
    """rep_pairs[i] maps the orbit representative onto member i."""
    aut = stack(name).aut
    for i, (s, t) in enumerate(aut.t_list):
        p = aut.rep_pairs[i]
        s0, t0 = aut.t_list[aut.orbit_reps[aut.orbit_of[i]]]
        assert (aut.alice_maps[p][s0], aut.bob_maps[p][t0]) == (s, t)


def test_aut_t_closure_under_composition(stack):
    aut = stack("4-3-2-2").aut
    group = stack("4-3-2-2").group
    pair_set = set(aut.pairs)
    rng = np.random.default_rng(17)
    for a, b in rng.integers(0, aut.n_pairs, size=(15, 2)):
        g = group.compose_index(aut.pairs[a][0], aut.pairs[b][0])
        h = group.compose_index(aut.pairs[a][1], aut.pairs[b][1])
        assert (g, h) in pair_set


def test_bb84_stabilizer(stack):
    aut = stack("bb84").aut
    assert is_transitive(aut)
    stab = stabilizer_pairs(aut, 0)
    assert len(stab) == 2
    s0, t0 = aut.t_list[aut.orbit_reps[0]]
    for p in stab:
        assert aut.alice_maps[p][s0] == s0 and aut.bob_maps[p][t0] == t0


def test_trivial_group_gives_singleton_orbits(stack):
    st = stack("bb84")
    trivial = generate_group([ProjectiveUnitary(np.eye(2))])
    sa = ensemble_action(trivial, st.protocol.ensemble.states)
    ma = ensemble_action(trivial, st.protocol.measurement.elements)
    aut = aut_t(sa, ma, st.scheme)
    assert aut.n_pairs == 1
    assert aut.n_orbits == len(aut.t_list)


def test_single_pair_t_is_transitive():
    trivial = generate_group([ProjectiveUnitary(np.eye(2))])
    vecs = np.eye(2, dtype=complex)
    action = ensemble_action(trivial, vecs)
    scheme = SimpleNamespace(
        alice_tuples=[(0, 1)], bob_tuples=[(0, 1)], t_pairs=[(0, 0)]
    )
    aut = aut_t(action, action, scheme)
    assert is_transitive(aut)
    assert aut.stabilizer_sizes == [1]

"""Channels, the group-average symmetrizer, and its fixed space.

The symmetrizer R acts on transfer matrices of superoperators.  For a pair
of unitaries (U, V) the term is M -> (V* ⊗ V)† M (U* ⊗ U); conjugation
flags replace M by conj(M), which on Hermiticity-preserving maps equals
S M S with S the swap of the two tensor slots.  R is represented as a
d⁴ x d⁴ matrix acting on column-stacked transfer matrices; it is Hermitian
and satisfies R² = N R, so R/N is the projector onto the invariant maps.

The fixed space is parametrized on the real vector space of Hermitian
Choi-type operators; ``fixed_space`` returns an affine chart of the
trace-preserving invariant maps around a particular solution, and
``ChannelFamily.member`` evaluates a chart point as a SuperOp.
"""

from dataclasses import dataclass

import numpy as np

from .linops import SuperOp, sharp, vec_map

ATOL = 1e-9


def depolarizing_kraus(d, p):
    """Kraus operators of rho -> (1-p) rho + p tr(rho) 1/d.

    Built from the discrete Weyl (shift/clock) family; p may run up to
    d²/(d²-1), the complete-positivity limit.
    """
    if p < 0 or p > d * d / (d * d - 1) + 1e-12:
        raise ValueError(f"depolarizing strength {p} outside [0, d^2/(d^2-1)]")
    omega = np.exp(2j * np.pi / d)
    shift = np.roll(np.eye(d), 1, axis=0)
    clock = np.diag(omega ** np.arange(d))
    ops = []
    for a in range(d):
        for b in range(d):
            w = (1 - p + p / d**2) if a == b == 0 else p / d**2
            if w < 0:
                w = 0.0
            ops.append(np.sqrt(w) * np.linalg.matrix_power(shift, a) @ np.linalg.matrix_power(clock, b))
    return ops


def depolarizing_channel(d, p):
    return SuperOp.from_kraus(depolarizing_kraus(d, p))


def depolarizing_transfer(d, p):
    v = vec_map(np.eye(d))
    return (1 - p) * np.eye(d * d) + p * np.outer(v, v.conj())


def _swap_matrix(d):
    s = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            s[i * d + j, j * d + i] = 1.0
    return s


@dataclass
class Symmetrizer:
    """Group-average projector data for one protocol's Aut(T) pairs."""

    matrix: np.ndarray  # d^4 x d^4, acts on vec(transfer)
    n_terms: int
    dim: int

    def check(self, tol=ATOL):
        """Hermiticity and R² = N R."""
        r = self.matrix
        herm = np.linalg.norm(r - r.conj().T)
        idem = np.linalg.norm(r @ r - self.n_terms * r)
        scale = max(1.0, np.linalg.norm(r))
        return {"hermiticity": float(herm / scale), "idempotency": float(idem / (self.n_terms * scale))}

    def apply_transfer(self, transfer):
        d2 = self.dim**2
        v = np.asarray(transfer, dtype=complex).T.reshape(d2 * d2)  # column stacking
        w = self.matrix @ v / self.n_terms
        return w.reshape(d2, d2).T

    def symmetrize(self, channel):
        transfer = channel.transfer() if hasattr(channel, "transfer") else np.asarray(channel)
        return SuperOp.from_transfer(self.apply_transfer(transfer))


def symmetrizer(group, aut):
    """The averaging operator over the T-preserving pairs (g, h).

    Terms with conjugation flags are the linear extension of the antiunitary
    action from the Hermiticity-preserving subspace, where conj(M) = S M S.
    Mixed pairs (only one side conjugating) would make the composite map
    antilinear and are rejected.
    """
    d = group.elements[0].dim
    d2 = d * d
    swap = _swap_matrix(d)
    total = np.zeros((d2 * d2, d2 * d2), dtype=complex)
    for gi, hi in aut.pairs:
        g = group.elements[gi]
        h = group.elements[hi]
        if g.antiunitary != h.antiunitary:
            raise ValueError("T-preserving pair mixes unitary and antiunitary sides")
        u, v = g.matrix, h.matrix
        if g.antiunitary:
            left = np.kron(v.conj().T, v.T) @ swap
            right = swap @ np.kron(u, u.conj())
        else:
            left = np.kron(v.T, v.conj().T)
            right = np.kron(u.conj(), u)
        # M -> left @ M @ right, on column-stacked M: kron(right^T, left)
        total += np.kron(right.T, left)
    return Symmetrizer(matrix=total, n_terms=len(aut.pairs), dim=d)


def hermitian_basis(d):
    """Real orthonormal basis of d x d Hermitian matrices (trace inner product)."""
    out = []
    for i in range(d):
        m = np.zeros((d, d), dtype=complex)
        m[i, i] = 1.0
        out.append(m)
    for i in range(d):
        for j in range(i + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = m[j, i] = 1 / np.sqrt(2)
            out.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[i, j] = -1j / np.sqrt(2)
            m[j, i] = 1j / np.sqrt(2)
            out.append(m)
    return out


@dataclass
class ChannelFamily:
    """Affine chart of the trace-preserving maps invariant under R.

    Members are ``base + sum_i x_i directions[i]`` in Choi form (trace-d
    normalization); complete positivity of a member is positivity of that
    matrix.
    """

    base_choi: np.ndarray
    directions: list  # traceless-partial-trace Choi directions
    dim: int

    @property
    def n_free(self):
        return len(self.directions)

    def choi(self, x):
        c = self.base_choi.copy()
        for xi, dirn in zip(np.atleast_1d(x), self.directions):
            c = c + xi * dirn
        return c

    def member(self, x):
        return SuperOp(op_form=self.choi(x), dim=self.dim)

    def min_eigenvalue(self, x):
        return float(np.linalg.eigvalsh(self.choi(x))[0])

    def is_physical(self, x, tol=1e-9):
        return self.min_eigenvalue(x) >= -tol


def fixed_space(symm, tol=1e-8):
    """Invariant superoperators of R/N as an affine family of TP maps.

    Works in the real coordinates of a Hermitian Choi basis, where R/N is a
    real symmetric projector; eigenvectors at eigenvalue 1 span the
    invariant Hermiticity-preserving maps.  The trace-preserving slice is
    solved exactly within that span.
    """
    d = symm.dim
    d2 = d * d
    basis = hermitian_basis(d2)
    n = len(basis)
    rep = np.zeros((n, n))
    for k, b in enumerate(basis):
        image_transfer = symm.apply_transfer(sharp(b))
        image_choi = sharp(image_transfer)
        for l, c in enumerate(basis):
            rep[l, k] = np.real(np.trace(c.conj().T @ image_choi))
    if np.linalg.norm(rep - rep.T) > 1e-7:
        raise ValueError("symmetrizer is not symmetric on the Hermitian chart")
    vals, vecs = np.linalg.eigh((rep + rep.T) / 2)
    keep = vals > 1 - tol
    if np.any((vals > 0.5) & ~keep):
        raise ValueError("eigenvalue cluster near 1 is not separated")
    inv = vecs[:, keep]  # n x f
    f = inv.shape[1]

    # trace-preservation: partial trace of the Choi operator equals 1_d
    def ptrace_rows(coeffs):
        choi = sum(c * b for c, b in zip(coeffs, basis))
        blocks = choi.reshape(d, d, d, d)
        return np.einsum("ikjk->ij", blocks)

    tp_map = np.zeros((d * d, f), dtype=complex)
    for a in range(f):
        tp_map[:, a] = ptrace_rows(inv[:, a]).reshape(-1)
    target = np.eye(d).reshape(-1)
    sol, *_ = np.linalg.lstsq(tp_map, target, rcond=None)
    sol = np.real(sol)
    if np.linalg.norm(tp_map @ sol - target) > 1e-8:
        raise ValueError("no trace-preserving member in the invariant space")
    null = _null_space(np.vstack([np.real(tp_map), np.imag(tp_map)]))

    def to_choi(coeffs):
        return sum(c * b for c, b in zip(coeffs, basis))

    base = to_choi(inv @ sol)
    dirs = [to_choi(inv @ null[:, j]) for j in range(null.shape[1])]

    # anchor the chart at the identity channel when it lies in the family,
    # so the noiseless point is x = 0
    identity_choi = sharp(np.eye(d * d))
    delta = (identity_choi - base).reshape(-1)
    a = np.array([dirn.reshape(-1) for dirn in dirs]).T
    if a.size:
        x0, *_ = np.linalg.lstsq(
            np.vstack([a.real, a.imag]),
            np.concatenate([delta.real, delta.imag]),
            rcond=None,
        )
        shifted = base + sum(c * dirn for c, dirn in zip(x0, dirs))
    else:
        shifted = base
    if np.linalg.norm(shifted - identity_choi) < 1e-8:
        base = identity_choi
    return ChannelFamily(base_choi=base, directions=dirs, dim=d)


def simplex_vertices(family, tol=1e-7):
    """Extreme points of the invariant-family's completely positive region.

    For the protocols at hand the invariant Choi operators decompose into
    mutually orthogonal positive blocks (one per invariant subspace of the
    symmetrizer's pair action), so the physical region is a simplex: every
    invariant channel is a unique convex mixture of the returned vertex
    channels.  The identity channel is always the first vertex.  Raises if
    the family fails to have this structure.
    """
    d = family.dim
    mixes = [np.array([0.37, 0.211, 0.143, 0.587, 0.331])[: family.n_free],
             np.array([0.83, -0.411, 0.691, -0.283, 0.197])[: family.n_free]]
    for x in mixes:
        gen = family.choi(x)
        vals, vecs = np.linalg.eigh(gen)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        blocks, cur = [], [0]
        for i in range(1, len(vals)):
            if vals[i] - vals[i - 1] > tol:
                blocks.append(cur)
                cur = []
            cur.append(i)
        blocks.append(cur)
        if len(blocks) == family.n_free + 1:
            break
    else:
        raise ValueError("invariant family is not an eigenvalue simplex")
    verts = []
    for blk in blocks:
        p = vecs[:, blk] @ vecs[:, blk].conj().T
        c = p * (d / np.real(np.trace(p)))
        ta = np.einsum("ijkj->ik", c.reshape(d, d, d, d))
        if np.linalg.norm(ta - np.eye(d)) > 1e-8:
            raise ValueError("simplex vertex is not trace preserving")
        verts.append(c)
    # identity first; every family member must decompose over the vertices
    idx = int(np.argmin([np.linalg.norm(v - family.base_choi) for v in verts]))
    if np.linalg.norm(verts[idx] - family.base_choi) > 1e-8:
        raise ValueError("identity channel is not a vertex of the family")
    verts[0], verts[idx] = verts[idx], verts[0]
    a = np.array([(v - verts[0]).reshape(-1) for v in verts[1:]]).T
    for dirn in family.directions:
        b = dirn.reshape(-1)
        coef, *_ = np.linalg.lstsq(
            np.vstack([a.real, a.imag]), np.concatenate([b.real, b.imag]), rcond=None
        )
        if np.linalg.norm(a @ coef - b) > 1e-7:
            raise ValueError("family direction escapes the vertex span")
    return verts


def _null_space(a, tol=1e-9):
    _, s, vh = np.linalg.svd(a, full_matrices=True)
    rank = int(np.sum(s > tol * max(a.shape) * (s[0] if len(s) else 1)))
    return vh[rank:].conj().T


def cptp_report(channel, tol=ATOL):
    """Trace-preservation deviation and minimum Choi eigenvalue."""
    op = channel.op_form if hasattr(channel, "op_form") else np.asarray(channel)
    d = int(round(np.sqrt(op.shape[0])))
    tp_dev = np.linalg.norm(np.einsum("ijkj->ik", op.reshape(d, d, d, d)) - np.eye(d))
    min_eig = float(np.linalg.eigvalsh((op + op.conj().T) / 2)[0])
    return {
        "tp_deviation": float(tp_dev),
        "min_choi_eigenvalue": min_eig,
        "cptp": bool(tp_dev <= tol and min_eig >= -tol),
    }

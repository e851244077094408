"""Superoperator calculus on qudit operators.

Conventions used throughout the package:

* ``|Phi>`` is the canonical maximally entangled ket ``(1/sqrt(d)) sum_i |i>|i>``.
* ``vec_map(B)`` flattens a ``d x d`` matrix to the length-``d**2`` vector
  ``(1 (x) B)|Phi>``; component ``i*d + j`` equals ``B[j, i] / sqrt(d)``
  (column stacking with a ``1/sqrt(d)`` normalization), so
  ``<vec(A), vec(B)> = Tr[A^dag B] / d``.
* A linear map ``rho -> A rho C`` acts on vec'd matrices as ``C.T (x) A``
  (``sandwich_rep``); general maps ``sum_p E_p rho E_p^dag`` act as
  ``sum_p conj(E_p) (x) E_p`` (the transfer matrix).
* ``sharp`` swaps the first and last tensor indices of a ``d**2 x d**2``
  matrix, ``sharp(M)[ij, kl] = M[lj, ki]``.  It is an involution and maps a
  transfer matrix to the OP form ``OP(E) = sum_{ik} |i><k| (x) E(|i><k|)``,
  which is the (trace-``d``) Choi matrix: positivity of OP is complete
  positivity of the map, and its partial trace over the second tensor factor
  equals the identity exactly when the map is trace preserving.

A :class:`SuperOp` stores the OP form together with the dimension and offers
Kraus extraction, application to states, and the CP/TP checks.
"""

from dataclasses import dataclass, field

import numpy as np

ATOL = 1e-10


def dag(m):
    """Conjugate transpose."""
    return np.conj(np.asarray(m)).T


def _square_dim(m, what="operator"):
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {m.shape}")
    return m.shape[0]


def _superop_dim(m):
    n = _square_dim(m, "superoperator matrix")
    d = int(round(np.sqrt(n)))
    if d * d != n:
        raise ValueError(f"superoperator matrix side {n} is not a perfect square")
    return d


def maximally_entangled_ket(d):
    """``(1/sqrt(d)) sum_i |i>|i>`` as a length-d**2 vector."""
    phi = np.zeros(d * d, dtype=complex)
    phi[:: d + 1] = 1.0 / np.sqrt(d)
    return phi


def vec_map(b):
    """Flatten a square matrix to ``(1 (x) B)|Phi>``.

    Component ``i*d + j`` of the result is ``B[j, i] / sqrt(d)``.
    """
    b = np.asarray(b, dtype=complex)
    d = _square_dim(b)
    return b.flatten("F") / np.sqrt(d)


def unvec(v):
    """Inverse of :func:`vec_map`."""
    v = np.asarray(v, dtype=complex)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got shape {v.shape}")
    d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValueError(f"vector length {v.size} is not a perfect square")
    return np.sqrt(d) * v.reshape(d, d, order="F")


def sandwich_rep(a, c):
    """Matrix ``C.T (x) A`` acting as ``vec(B) -> vec(A B C)``."""
    a = np.asarray(a, dtype=complex)
    c = np.asarray(c, dtype=complex)
    da = _square_dim(a)
    dc = _square_dim(c)
    if da != dc:
        raise ValueError(f"sandwich factors disagree in dimension: {da} vs {dc}")
    return np.kron(c.T, a)


def sharp(m):
    """Swap first and last tensor indices: ``sharp(M)[ij, kl] = M[lj, ki]``.

    Involutive; interconverts the transfer-matrix and OP (Choi) forms of a
    superoperator.
    """
    m = np.asarray(m, dtype=complex)
    d = _superop_dim(m)
    return m.reshape([d] * 4).swapaxes(0, 3).reshape(d * d, d * d)


def transfer_from_kraus(kraus):
    """Transfer matrix ``sum_p conj(E_p) (x) E_p`` of a Kraus family."""
    kraus = [np.asarray(k, dtype=complex) for k in kraus]
    if not kraus:
        raise ValueError("empty Kraus family")
    d = _square_dim(kraus[0], "Kraus operator")
    m = np.zeros((d * d, d * d), dtype=complex)
    for k in kraus:
        if _square_dim(k, "Kraus operator") != d:
            raise ValueError("Kraus operators disagree in dimension")
        m += np.kron(np.conj(k), k)
    return m


def op_from_kraus(kraus):
    """OP (Choi) form of a Kraus family."""
    return sharp(transfer_from_kraus(kraus))


@dataclass(frozen=True)
class SuperOp:
    """A superoperator on d x d matrices, stored in OP (Choi) form."""

    op_form: np.ndarray
    dim: int = field(default=0)

    def __post_init__(self):
        m = np.asarray(self.op_form, dtype=complex)
        d = _superop_dim(m)
        if self.dim and self.dim != d:
            raise ValueError(f"dim {self.dim} inconsistent with matrix side {m.shape[0]}")
        object.__setattr__(self, "op_form", m)
        object.__setattr__(self, "dim", d)

    @classmethod
    def from_kraus(cls, kraus):
        return cls(op_from_kraus(kraus))

    @classmethod
    def from_transfer(cls, m):
        return cls(sharp(m))

    @classmethod
    def from_sandwich(cls, a, c):
        """The rank-one map ``rho -> A rho C``."""
        return cls(sharp(sandwich_rep(a, c)))

    def transfer(self):
        """Transfer-matrix form, acting on vec'd operators."""
        return sharp(self.op_form)

    def apply(self, rho):
        """Apply the map to a d x d matrix via the OP/VEC calculus."""
        rho = np.asarray(rho, dtype=complex)
        if _square_dim(rho, "state") != self.dim:
            raise ValueError(f"state dimension {rho.shape[0]} != superop dimension {self.dim}")
        return unvec(self.transfer() @ vec_map(rho))

    def kraus(self, tol=ATOL):
        """Kraus operators from the eigendecomposition of the OP form.

        Requires the OP form to be Hermitian (the map Hermiticity preserving);
        eigenvalues below ``-tol`` (a non-CP map) raise.
        """
        m = self.op_form
        if np.linalg.norm(m - dag(m)) > max(tol, 1e-8):
            raise ValueError("OP form is not Hermitian; no Kraus decomposition")
        vals, vecs = np.linalg.eigh(m)
        if vals.min() < -max(tol, 1e-8):
            raise ValueError(f"OP form has negative eigenvalue {vals.min():.3e}; map is not CP")
        ops = []
        for lam, w in zip(vals, vecs.T):
            if lam > tol:
                ops.append(np.sqrt(lam) * w.reshape(self.dim, self.dim).T)
        return ops

    def is_trace_preserving(self, tol=ATOL):
        d = self.dim
        red = np.einsum("ijkj->ik", self.op_form.reshape([d] * 4))
        return bool(np.linalg.norm(red - np.eye(d)) <= tol)

    def is_completely_positive(self, tol=ATOL):
        m = self.op_form
        if np.linalg.norm(m - dag(m)) > tol:
            return False
        return bool(np.linalg.eigvalsh(m).min() >= -tol)

    def then(self, other):
        """Composite map: self first, then other."""
        if self.dim != other.dim:
            raise ValueError("cannot compose superoperators of different dimension")
        return SuperOp.from_transfer(other.transfer() @ self.transfer())


def apply_superop(e, rho):
    """Apply a :class:`SuperOp` (or OP-form matrix) to a d x d matrix."""
    if not isinstance(e, SuperOp):
        e = SuperOp(e)
    return e.apply(rho)

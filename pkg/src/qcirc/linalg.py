"""Dense complex linear algebra on qubit registers.

All operators and states are numpy complex128 arrays. Register 0 is the
most significant bit of the computational-basis index, so the basis state
|a0 a1 ... a_{n-1}> has index sum(a_k * 2**(n-1-k)).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DEFAULT_TOL = 1e-9

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)


class LinalgError(ValueError):
    pass


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise LinalgError(f"expected a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise LinalgError("matrix has non-finite entries")
    return m


def tensor(a, b) -> np.ndarray:
    """Kronecker product a (x) b."""
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def dagger(a) -> np.ndarray:
    return as_matrix(a).conj().T


def mat_mul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise LinalgError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def trace(a) -> complex:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise LinalgError(f"trace of non-square matrix {a.shape}")
    return complex(np.trace(a))


def mat_close(a, b, tol: float = DEFAULT_TOL) -> bool:
    a, b = as_matrix(a), as_matrix(b)
    return a.shape == b.shape and bool(np.max(np.abs(a - b)) <= tol)


def is_unitary(a, tol: float = DEFAULT_TOL) -> bool:
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    return mat_close(a.conj().T @ a, np.eye(a.shape[0]), tol)


def is_hermitian(a, tol: float = DEFAULT_TOL) -> bool:
    a = as_matrix(a)
    return a.shape[0] == a.shape[1] and mat_close(a, a.conj().T, tol)


def is_psd(a, tol: float = DEFAULT_TOL) -> bool:
    """Positive semidefiniteness of the Hermitian part, eigenvalue floor -tol."""
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        return False
    herm = (a + a.conj().T) / 2
    return bool(np.min(np.linalg.eigvalsh(herm)) >= -tol)


def bits_of(index: int, n: int) -> tuple[int, ...]:
    return tuple((index >> (n - 1 - k)) & 1 for k in range(n))


def index_of(bits: Sequence[int]) -> int:
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def basis_ket(index: int, n: int) -> np.ndarray:
    v = np.zeros(2**n, dtype=complex)
    v[index] = 1.0
    return v


def ket_to_density(psi) -> np.ndarray:
    v = np.asarray(psi, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Possibly un-normalized density operator on n qubits.

    Hermitian and PSD within tolerance, trace strictly positive; trace 1 is
    not required.
    """

    n_qubits: int
    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        dim = 2**self.n_qubits
        if m.shape != (dim, dim):
            raise LinalgError(f"expected {dim}x{dim} matrix, got {m.shape}")
        if not is_hermitian(m, DEFAULT_TOL):
            raise LinalgError("density operator is not Hermitian")
        if not is_psd(m, DEFAULT_TOL):
            raise LinalgError("density operator is not positive semidefinite")
        if trace(m).real <= DEFAULT_TOL:
            raise LinalgError("density operator has (near-)zero trace")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_ket(cls, psi) -> "DensityOperator":
        rho = ket_to_density(psi)
        n = int(round(np.log2(rho.shape[0])))
        if 2**n != rho.shape[0]:
            raise LinalgError("ket length is not a power of two")
        return cls(n, rho)

    def normalized(self) -> np.ndarray:
        return self.matrix / trace(self.matrix).real


def partial_trace_matrix(mat: np.ndarray, n: int, keep: Iterable[int]) -> np.ndarray:
    keep = sorted(set(keep))
    if not keep:
        raise LinalgError("keep set must be nonempty")
    if any(r < 0 or r >= n for r in keep):
        raise LinalgError(f"register index out of range in {keep}")
    mat = as_matrix(mat)
    if mat.shape != (2**n, 2**n):
        raise LinalgError(f"expected {2**n}x{2**n} matrix, got {mat.shape}")
    traced = [r for r in range(n) if r not in keep]
    k = len(keep)
    t = mat.reshape((2,) * (2 * n))
    order = keep + traced
    t = np.transpose(t, [*order, *[n + a for a in order]])
    t = t.reshape(2**k, 2 ** (n - k), 2**k, 2 ** (n - k))
    return np.einsum("ajbj->ab", t)


def partial_trace(rho: DensityOperator, keep: Iterable[int]) -> DensityOperator:
    """Trace out every register not in `keep`; kept registers stay in
    ascending-index order. Preserves the trace."""
    keep = sorted(set(keep))
    out = partial_trace_matrix(rho.matrix, rho.n_qubits, keep)
    return DensityOperator(len(keep), out)


def embed(op: np.ndarray, registers: Sequence[int], n: int) -> np.ndarray:
    """Lift a 2^k x 2^k operator acting on the listed registers (in the listed
    order) to the full 2^n x 2^n space, identity on the other registers."""
    op = as_matrix(op)
    regs = list(registers)
    k = len(regs)
    if len(set(regs)) != k:
        raise LinalgError(f"duplicate register in {regs}")
    if any(r < 0 or r >= n for r in regs):
        raise LinalgError(f"register index out of range in {regs}")
    if op.shape != (2**k, 2**k):
        raise LinalgError(f"operator shape {op.shape} does not match arity {k}")
    if k == n and regs == list(range(n)):
        return op.copy()
    others = [r for r in range(n) if r not in regs]
    perm = regs + others  # position p of the kron layout holds register perm[p]
    full = np.kron(op, np.eye(2 ** (n - k), dtype=complex))
    idx = np.empty(2**n, dtype=np.intp)
    for i in range(2**n):
        bits = bits_of(i, n)
        idx[i] = index_of([bits[perm[p]] for p in range(n)])
    return full[np.ix_(idx, idx)]

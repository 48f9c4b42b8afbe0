"""Dense quantum states, local operator kernels and distance measures.

Conventions used throughout the package:

* qubit 0 is the most significant bit of a computational-basis index, so
  ``|q0 q1 ... q_{n-1}>`` and bitstrings are written with qubit 0 leftmost;
* a density matrix on ``n`` qubits is a ``2**n x 2**n`` complex array. The
  tensor kernels below view it as a rank-``2n`` tensor whose first ``n`` axes
  are row qubits and last ``n`` axes are column qubits.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_CLAMP = 1e-10
NORM_TOL = 1e-12


class StateError(ValueError):
    """Raised when an array does not describe a valid quantum state."""


def _num_qubits(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise StateError(f"dimension {dim} is not a power of two")
    return n


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex, copy=True)
    a.flags.writeable = False
    return a


class PureState:
    """Normalized state vector on ``n_qubits`` qubits."""

    __slots__ = ("amplitudes", "n_qubits")

    def __init__(self, amplitudes, check: bool = True):
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        n = _num_qubits(amps.size)
        if check and abs(np.vdot(amps, amps).real - 1.0) > NORM_TOL:
            raise StateError("state vector is not normalized")
        self.amplitudes = _frozen(amps)
        self.n_qubits = n

    @classmethod
    def basis(cls, bits: str) -> "PureState":
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[int(bits, 2) if bits else 0] = 1.0
        return cls(amps)

    def to_density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), check=False)

    def __repr__(self) -> str:
        return f"PureState(n_qubits={self.n_qubits})"


class DensityMatrix:
    """Immutable density operator.

    Construction validates Hermiticity, unit trace and positivity within the
    module tolerances unless ``check=False`` is passed (internal fast paths
    that are already known to produce valid states use it).
    """

    __slots__ = ("mat", "n_qubits")

    def __init__(self, mat, check: bool = True):
        m = np.asarray(mat, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise StateError(f"density matrix must be square, got shape {m.shape}")
        self.n_qubits = _num_qubits(m.shape[0])
        self.mat = _frozen(m)
        if check:
            validate_density(self.mat)

    @classmethod
    def basis(cls, bits: str) -> "DensityMatrix":
        return PureState.basis(bits).to_density()

    @classmethod
    def from_vector(cls, psi) -> "DensityMatrix":
        return PureState(psi).to_density()

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 1 << n_qubits
        return cls(np.eye(d) / d, check=False)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def probabilities(self) -> np.ndarray:
        """Computational-basis outcome probabilities (clipped at zero)."""
        p = np.clip(np.real(np.diag(self.mat)), 0.0, None)
        return p / p.sum()

    def allclose(self, other: "DensityMatrix", atol: float = 1e-10) -> bool:
        return self.mat.shape == other.mat.shape and np.allclose(self.mat, other.mat, atol=atol)

    def __repr__(self) -> str:
        return f"DensityMatrix(n_qubits={self.n_qubits})"


def validate_density(m: np.ndarray) -> None:
    if np.max(np.abs(m - m.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise StateError("density matrix is not Hermitian")
    if abs(np.trace(m) - 1.0) > TRACE_TOL:
        raise StateError(f"density matrix trace {np.trace(m).real:.3e} != 1")
    if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -PSD_CLAMP:
        raise StateError("density matrix has negative eigenvalues")


# ---------------------------------------------------------------------------
# linear algebra helpers


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def kron_all(mats: Iterable[np.ndarray]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def is_unitary(u: np.ndarray, tol: float = 1e-8) -> bool:
    u = np.asarray(u)
    return u.ndim == 2 and u.shape[0] == u.shape[1] and (
        np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])) <= tol
    )


def hermitian_eig(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition ``h = V diag(w) V^dagger`` of a Hermitian matrix."""
    return np.linalg.eigh((h + dagger(h)) / 2)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    w, v = hermitian_eig(a)
    if w.min() < -PSD_CLAMP:
        raise StateError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.conj().T


def expm_hermitian(h: np.ndarray, scale: complex = 1.0) -> np.ndarray:
    """``exp(scale * h)`` for Hermitian ``h`` through its eigenbasis."""
    w, v = hermitian_eig(h)
    return (v * np.exp(scale * w)) @ v.conj().T


def expm(a: np.ndarray) -> np.ndarray:
    """General matrix exponential (scaling-and-squaring Pade)."""
    return scipy.linalg.expm(np.asarray(a, dtype=complex))


def trace_norm(a: np.ndarray) -> float:
    a = np.asarray(a)
    if np.allclose(a, a.conj().T, atol=1e-12):
        return float(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2)).sum())
    return float(np.linalg.svd(a, compute_uv=False).sum())


# ---------------------------------------------------------------------------
# local tensor kernels on raw density arrays


def apply_unitary(rho: np.ndarray, u: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Return ``U rho U^dagger`` with ``u`` acting on ``qubits`` (in that order)."""
    k = len(qubits)
    if k == n and list(qubits) == list(range(n)):
        return u @ rho @ u.conj().T
    t = rho.reshape((2,) * (2 * n))
    ut = u.reshape((2,) * (2 * k))
    rows = list(qubits)
    cols = [q + n for q in qubits]
    t = np.tensordot(ut, t, axes=(list(range(k, 2 * k)), rows))
    t = np.moveaxis(t, list(range(k)), rows)
    t = np.tensordot(t, ut.conj(), axes=(cols, list(range(k, 2 * k))))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), cols)
    return t.reshape(rho.shape)


def apply_superop(rho: np.ndarray, sop: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Apply a local superoperator in row-major ``vec`` convention.

    ``sop`` has shape ``(D*D, D*D)`` with ``D = 2**len(qubits)`` and maps
    ``vec(sigma)[r*D + c] = sigma[r, c]`` of the local block.
    """
    k = len(qubits)
    dk = 1 << k
    axes = list(qubits) + [q + n for q in qubits]
    t = rho.reshape((2,) * (2 * n))
    t = np.moveaxis(t, axes, list(range(2 * k)))
    shape = t.shape
    t = (sop @ t.reshape(dk * dk, -1)).reshape(shape)
    t = np.moveaxis(t, list(range(2 * k)), axes)
    return t.reshape(rho.shape)


def kraus_to_superop(kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Row-major superoperator ``sum_k K (x) K^*`` of a Kraus set."""
    return sum(np.kron(k, k.conj()) for k in kraus)


def apply_kraus(rho: np.ndarray, kraus: Sequence[np.ndarray], qubits: Sequence[int], n: int) -> np.ndarray:
    if len(qubits) == n and list(qubits) == list(range(n)):
        return sum(k @ rho @ k.conj().T for k in kraus)
    return apply_superop(rho, kraus_to_superop(kraus), qubits, n)


def embed_operator(op: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Full ``2**n`` matrix of a local operator acting on ``qubits``."""
    k = len(qubits)
    if k == n and list(qubits) == list(range(n)):
        return np.asarray(op, dtype=complex)
    d = 1 << n
    full = np.eye(d, dtype=complex).reshape((2,) * (2 * n))
    ot = np.asarray(op, dtype=complex).reshape((2,) * (2 * k))
    full = np.tensordot(ot, full, axes=(list(range(k, 2 * k)), list(qubits)))
    full = np.moveaxis(full, list(range(k)), list(qubits))
    return full.reshape(d, d)


# ---------------------------------------------------------------------------
# state operations


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """``a (x) b``; qubit 0 of ``a`` becomes qubit 0 of the result."""
    return DensityMatrix(np.kron(a.mat, b.mat), check=False)


def partial_trace(rho: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    return DensityMatrix(reduce_array(rho.mat, keep, rho.n_qubits), check=False)


def reduce_array(m: np.ndarray, keep: Iterable[int], n: int) -> np.ndarray:
    keep = sorted(set(keep))
    for q in keep:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n} qubits")
    if keep == list(range(n)):
        return np.array(m, dtype=complex)
    t = m.reshape((2,) * (2 * n))
    traced = [q for q in range(n) if q not in keep]
    # contract traced row/column pairs one at a time, highest index first so
    # remaining axis positions stay valid
    cur_n = n
    for q in sorted(traced, reverse=True):
        t = np.trace(t, axis1=q, axis2=q + cur_n)
        cur_n -= 1
    dk = 1 << len(keep)
    return t.reshape(dk, dk)


def _check_dims(rho: DensityMatrix, sigma: DensityMatrix) -> None:
    if rho.mat.shape != sigma.mat.shape:
        raise ValueError(f"dimension mismatch: {rho.mat.shape} vs {sigma.mat.shape}")


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    _check_dims(rho, sigma)
    s = psd_sqrt(rho.mat)
    inner = s @ sigma.mat @ s
    w = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    if w.min() < -PSD_CLAMP:
        raise StateError("fidelity kernel is not positive semidefinite")
    f = float(np.sqrt(np.clip(w, 0.0, None)).sum() ** 2)
    return min(max(f, 0.0), 1.0)


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    _check_dims(rho, sigma)
    return 0.5 * trace_norm(rho.mat - sigma.mat)


def purity(rho: DensityMatrix) -> float:
    m = rho.mat
    return float(np.real(np.vdot(m.conj().T, m)))


def bloch_vector(rho: DensityMatrix) -> np.ndarray:
    """Bloch vector ``(r_x, r_y, r_z)`` of a single-qubit state."""
    if rho.n_qubits != 1:
        raise ValueError("Bloch vector is defined for one qubit")
    m = rho.mat
    return np.array([2 * m[0, 1].real, -2 * m[0, 1].imag, (m[0, 0] - m[1, 1]).real])


def random_density(n_qubits: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    """Random mixed state from a Ginibre ensemble."""
    d = 1 << n_qubits
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_pure(n_qubits: int, rng: np.random.Generator) -> PureState:
    d = 1 << n_qubits
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return PureState(v / np.linalg.norm(v))

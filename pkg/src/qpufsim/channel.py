"""Kraus channels, standard single-qubit noise, Choi matrices and readout error."""

from __future__ import annotations

from functools import cached_property
from typing import Sequence

import numpy as np

from .qstate import (
    PSD_CLAMP,
    DensityMatrix,
    apply_superop,
    is_unitary,
    kraus_to_superop,
    kron_all,
    reduce_array,
    trace_norm,
)

COMPLETENESS_TOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


class ChannelError(ValueError):
    pass


class KrausChannel:
    """CPTP map ``rho -> sum_k E_k rho E_k^dagger``."""

    def __init__(self, kraus_ops: Sequence[np.ndarray], check: bool = True, tol: float = COMPLETENESS_TOL):
        ops = tuple(np.array(k, dtype=complex) for k in kraus_ops)
        if not ops:
            raise ChannelError("a channel needs at least one Kraus operator")
        shape = ops[0].shape
        if any(k.shape != shape for k in ops) or len(shape) != 2:
            raise ChannelError("Kraus operators must share one 2-D shape")
        for k in ops:
            k.flags.writeable = False
        self.kraus_ops = ops
        self.dim_out, self.dim_in = shape
        if check:
            defect = self.completeness_defect()
            if defect > tol:
                raise ChannelError(f"Kraus set is not trace preserving (defect {defect:.3e})")

    def completeness_defect(self) -> float:
        s = sum(k.conj().T @ k for k in self.kraus_ops)
        return float(np.linalg.norm(s - np.eye(self.dim_in)))

    @property
    def n_qubits(self) -> int:
        return self.dim_in.bit_length() - 1

    @cached_property
    def superop(self) -> np.ndarray:
        return kraus_to_superop(self.kraus_ops)

    def __call__(self, rho: DensityMatrix) -> DensityMatrix:
        return apply(self, rho)

    def __len__(self) -> int:
        return len(self.kraus_ops)

    def __repr__(self) -> str:
        return f"KrausChannel(dim={self.dim_in}, n_kraus={len(self.kraus_ops)})"


def _check_prob(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ChannelError(f"{name} must lie in [0, 1], got {p}")
    return p


def identity_channel(dim: int = 2) -> KrausChannel:
    return KrausChannel([np.eye(dim)])


def unitary_channel(u: np.ndarray) -> KrausChannel:
    if not is_unitary(u):
        raise ChannelError("matrix is not unitary")
    return KrausChannel([u])


def amplitude_damping(p: float) -> KrausChannel:
    p = _check_prob("damping probability", p)
    k0 = np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex)
    return KrausChannel([k0, k1])


def phase_damping(q: float) -> KrausChannel:
    q = _check_prob("dephasing probability", q)
    return KrausChannel([np.sqrt(1 - q) * I2, np.sqrt(q) * Z])


def depolarizing(p: float) -> KrausChannel:
    p = _check_prob("depolarizing probability", p)
    s = np.sqrt(p / 3)
    return KrausChannel([np.sqrt(1 - p) * I2, s * X, s * Y, s * Z])


def noise_stack(amp: float, phase: float, depol: float) -> KrausChannel:
    """Single-qubit ``AD o PD o Depol``: depolarizing acts first, damping last."""
    return compose(amplitude_damping(amp), compose(phase_damping(phase), depolarizing(depol)))


def compose(outer: KrausChannel, inner: KrausChannel) -> KrausChannel:
    """Channel ``outer o inner`` (``inner`` acts first)."""
    if outer.dim_in != inner.dim_out:
        raise ChannelError(f"cannot compose: {outer.dim_in} != {inner.dim_out}")
    ops = [a @ b for a in outer.kraus_ops for b in inner.kraus_ops]
    return KrausChannel(ops, tol=1e-9)


def embed(local: KrausChannel, qubit: int, n: int) -> KrausChannel:
    if local.dim_in != 2 or local.dim_out != 2:
        raise ChannelError("embed expects a single-qubit channel")
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")
    left = np.eye(1 << qubit)
    right = np.eye(1 << (n - qubit - 1))
    return KrausChannel([kron_all([left, k, right]) for k in local.kraus_ops])


def apply(channel: KrausChannel, rho: DensityMatrix) -> DensityMatrix:
    if channel.dim_in != rho.dim:
        raise ChannelError(f"channel expects dimension {channel.dim_in}, state has {rho.dim}")
    out = sum(k @ rho.mat @ k.conj().T for k in channel.kraus_ops)
    return DensityMatrix(out, check=False)


def apply_local(channel: KrausChannel, rho: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Apply a ``k``-qubit channel to ``qubits`` of an ``n``-qubit density array."""
    return apply_superop(rho, channel.superop, qubits, n)


# ---------------------------------------------------------------------------
# Choi representation


class ChoiMatrix:
    """Choi matrix with the output factor first: ``J = sum_ij L(|i><j|) (x) |i><j|``."""

    __slots__ = ("dim", "J")

    def __init__(self, J: np.ndarray, check: bool = True, tol: float = 1e-9):
        J = np.array(J, dtype=complex)
        d = int(round(np.sqrt(J.shape[0])))
        if J.shape != (d * d, d * d):
            raise ChannelError(f"Choi matrix has bad shape {J.shape}")
        self.dim = d
        self.J = J
        if check:
            if np.linalg.eigvalsh((J + J.conj().T) / 2).min() < -max(PSD_CLAMP, tol):
                raise ChannelError("Choi matrix is not positive semidefinite")
            if np.linalg.norm(self.trace_out() - np.eye(d)) > tol:
                raise ChannelError("Choi matrix is not trace preserving")

    def trace_out(self) -> np.ndarray:
        """Partial trace over the output factor (leaves the input block)."""
        d = self.dim
        return np.einsum("aiaj->ij", self.J.reshape(d, d, d, d))

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """Channel action ``Tr_in[J (I (x) rho^T)]``."""
        d = self.dim
        return np.einsum("aibj,ij->ab", self.J.reshape(d, d, d, d), np.asarray(rho))

    def superop(self) -> np.ndarray:
        """Row-major superoperator: ``S[(a,b),(i,j)] = J[(a,i),(b,j)]``."""
        d = self.dim
        return self.J.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)

    @classmethod
    def from_superop(cls, s: np.ndarray, check: bool = True) -> "ChoiMatrix":
        d = int(round(np.sqrt(s.shape[0])))
        J = s.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
        return cls(J, check=check)


def choi(channel: KrausChannel) -> ChoiMatrix:
    if channel.dim_in != channel.dim_out:
        raise ChannelError("Choi matrix here is defined for square channels")
    d = channel.dim_in
    omega = np.eye(d).reshape(-1)
    J = np.zeros((d * d, d * d), dtype=complex)
    for k in channel.kraus_ops:
        v = np.kron(k, np.eye(d)) @ omega
        J += np.outer(v, v.conj())
    return ChoiMatrix(J)


def choi_distance_proxy(a: ChoiMatrix, b: ChoiMatrix) -> float:
    """``||J_a - J_b||_1 / (2 d)``; a lower bound on half the diamond distance."""
    if a.dim != b.dim:
        raise ChannelError("Choi dimension mismatch")
    return trace_norm(a.J - b.J) / (2 * a.dim)


def unitary_distinguishability(u: np.ndarray, v: np.ndarray) -> float:
    """Closed-form distance ``2 sqrt(1 - |Tr(U^dag V)|^2 / d^2)`` of two unitaries."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != v.shape:
        raise ChannelError("unitaries must share a dimension")
    for m in (u, v):
        if not is_unitary(m, tol=1e-8):
            raise ChannelError("input is not unitary")
    d = u.shape[0]
    overlap = abs(np.trace(u.conj().T @ v)) ** 2 / d**2
    return 2.0 * float(np.sqrt(max(0.0, 1.0 - overlap)))


def reduced_output(channel: KrausChannel, rho: DensityMatrix, keep) -> DensityMatrix:
    out = apply(channel, rho)
    return DensityMatrix(reduce_array(out.mat, keep, out.n_qubits), check=False)


# ---------------------------------------------------------------------------
# classical readout error


class ReadoutMatrix:
    """Column-stochastic confusion matrix ``R[b, b'] = P(observe b | true b')``."""

    __slots__ = ("n_bits", "R")

    def __init__(self, R: np.ndarray):
        R = np.array(R, dtype=float)
        n = R.shape[0].bit_length() - 1
        if R.shape != (1 << n, 1 << n):
            raise ChannelError(f"readout matrix has bad shape {R.shape}")
        if R.min() < 0 or R.max() > 1:
            raise ChannelError("readout entries must lie in [0, 1]")
        if np.max(np.abs(R.sum(axis=0) - 1.0)) > 1e-12:
            raise ChannelError("readout matrix columns must sum to 1")
        R.flags.writeable = False
        self.n_bits = n
        self.R = R

    @classmethod
    def identity(cls, n_bits: int) -> "ReadoutMatrix":
        return cls(np.eye(1 << n_bits))

    @classmethod
    def symmetric(cls, errors: Sequence[float]) -> "ReadoutMatrix":
        """Independent per-bit flips; bit 0 is the most significant factor."""
        mats = []
        for e in errors:
            e = _check_prob("readout error", e)
            mats.append(np.array([[1 - e, e], [e, 1 - e]]))
        return cls(np.real(kron_all(mats)))


def apply_readout(R: ReadoutMatrix, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (R.R.shape[1],):
        raise ChannelError(f"probability vector of size {p.size} does not match readout size {R.R.shape[1]}")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ChannelError("probability vector must sum to 1")
    return R.R @ p

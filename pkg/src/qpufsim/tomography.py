"""State and process tomography at small n, parameter counting and sample-complexity estimates."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import channel as ch
from .qstate import DensityMatrix, apply_unitary, kron_all
from .seeding import hash64

MAX_STATE_QUBITS = 3
MAX_PROCESS_QUBITS = 2
PROJECTION_ITERS = 200
PROJECTION_TOL = 1e-9

# basis-change unitaries mapping each Pauli eigenbasis onto Z
_SDG = np.diag([1, -1j])
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_ROTATE = {"X": _H, "Y": _H @ _SDG, "Z": np.eye(2, dtype=complex)}
_INPUTS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "+i": np.array([1, 1j], dtype=complex) / np.sqrt(2),
}

StateSource = Union[DensityMatrix, Callable[[], DensityMatrix]]
ChannelLike = Union[ch.KrausChannel, Callable[[DensityMatrix], DensityMatrix]]


class TomographyError(ValueError):
    pass


def parameter_count(kind: str, n_qubits: int) -> int:
    """Real parameters of an ``n``-qubit unitary (``d^2-1``) or CPTP map (``d^4-d^2``)."""
    if n_qubits < 1:
        raise TomographyError("n_qubits must be at least 1")
    d = 1 << n_qubits
    if kind == "unitary":
        return d * d - 1
    if kind == "cptp":
        return d**4 - d * d
    raise TomographyError(f"kind must be 'unitary' or 'cptp', got {kind!r}")


def sample_complexity(P: int, epsilon: float, C: float = 1.0) -> int:
    """Experiments needed for accuracy ``epsilon``: ``ceil(C P / epsilon^2)``."""
    if epsilon <= 0 or C <= 0:
        raise TomographyError("epsilon and C must be positive")
    # round before ceil so that e.g. 12/0.1**2 = 1200.0000000000002 gives 1200
    return int(math.ceil(round(C * P / epsilon**2, 9)))


# ---------------------------------------------------------------------------
# state tomography


def _settings(n: int):
    return ["".join(s) for s in itertools.product("XYZ", repeat=n)]


def _setting_probs(rho: DensityMatrix, setting: str) -> np.ndarray:
    n = rho.n_qubits
    m = np.array(rho.mat)
    for q, b in enumerate(setting):
        if b != "Z":
            m = apply_unitary(m, _ROTATE[b], [q], n)
    p = np.clip(np.real(np.diag(m)), 0.0, None)
    return p / p.sum()


def _parity_signs(n: int, support: list[int]) -> np.ndarray:
    idx = np.arange(1 << n)
    sign = np.ones(1 << n)
    for q in support:
        sign *= 1 - 2 * ((idx >> (n - 1 - q)) & 1)
    return sign


def project_density(m: np.ndarray) -> np.ndarray:
    """Frobenius-nearest density matrix: eigenvalues projected onto the probability simplex."""
    m = (m + m.conj().T) / 2
    w, v = np.linalg.eigh(m)
    # projection of w onto {x >= 0, sum x = 1}
    u = np.sort(w)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.nonzero(u - css / np.arange(1, len(u) + 1) > 0)[0][-1]
    shift = css[k] / (k + 1)
    w = np.clip(w - shift, 0.0, None)
    return (v * w) @ v.conj().T


def state_tomography(prepare: StateSource, shots: int | None, seed: int = 0) -> DensityMatrix:
    """Pauli-basis linear inversion followed by projection onto valid states.

    ``shots=None`` reads exact outcome probabilities (infinite statistics).
    """
    rho = prepare() if callable(prepare) else prepare
    n = rho.n_qubits
    if n > MAX_STATE_QUBITS:
        raise TomographyError(f"state tomography limited to {MAX_STATE_QUBITS} qubits")
    if shots is not None and shots < 1:
        raise TomographyError("shots must be positive or None")
    rng = np.random.default_rng(hash64(int(seed), "state-tomo"))
    freqs = {}
    for s in _settings(n):
        p = _setting_probs(rho, s)
        freqs[s] = p if shots is None else rng.multinomial(shots, p) / shots
    d = 1 << n
    est = np.zeros((d, d), dtype=complex)
    for paulis in itertools.product("IXYZ", repeat=n):
        support = [q for q, a in enumerate(paulis) if a != "I"]
        signs = _parity_signs(n, support)
        # average over every setting compatible with this Pauli string
        compatible = [s for s in freqs if all(s[q] == paulis[q] for q in support)]
        expval = np.mean([freqs[s] @ signs for s in compatible])
        est += expval * kron_all([ch.PAULIS[a] for a in paulis])
    est /= d
    if shots is None:
        return DensityMatrix((est + est.conj().T) / 2, check=False)
    return DensityMatrix(project_density(est), check=False)


# ---------------------------------------------------------------------------
# process tomography


def input_states(n: int) -> list[tuple[str, DensityMatrix]]:
    out = []
    for labels in itertools.product(_INPUTS, repeat=n):
        psi = kron_all([_INPUTS[a].reshape(-1, 1) for a in labels]).reshape(-1)
        out.append(("".join(f"[{a}]" for a in labels), DensityMatrix.from_vector(psi)))
    return out


def _as_callable(channel: ChannelLike) -> Callable[[DensityMatrix], DensityMatrix]:
    if isinstance(channel, ch.KrausChannel):
        return lambda rho: ch.apply(channel, rho)
    return channel


def _project_tp(J: np.ndarray, d: int) -> np.ndarray:
    tr_out = np.einsum("aiaj->ij", J.reshape(d, d, d, d))
    return J - np.kron(np.eye(d) / d, tr_out - np.eye(d))


def _project_psd(J: np.ndarray) -> np.ndarray:
    J = (J + J.conj().T) / 2
    w, v = np.linalg.eigh(J)
    return (v * np.clip(w, 0.0, None)) @ v.conj().T


def project_cptp(J: np.ndarray, d: int, iters: int = PROJECTION_ITERS, tol: float = PROJECTION_TOL) -> np.ndarray:
    """Alternate PSD and trace-preservation projections until the iterate stops moving."""
    J = _project_tp((J + J.conj().T) / 2, d)
    for _ in range(iters):
        nxt = _project_tp(_project_psd(J), d)
        moved = np.linalg.norm(nxt - J)
        J = nxt
        if moved < tol:
            break
    return J


def process_tomography(channel: ChannelLike, n_qubits: int, shots: int | None, seed: int = 0) -> ch.ChoiMatrix:
    """Reconstruct the Choi matrix of a black-box channel on ``n_qubits``.

    Inputs are all products of ``|0>, |1>, |+>, |+i>``; each output is
    state-tomographed, the superoperator is solved by linear inversion and the
    result is projected onto CPTP maps.
    """
    if n_qubits > MAX_PROCESS_QUBITS:
        raise TomographyError(f"process tomography limited to {MAX_PROCESS_QUBITS} qubits")
    apply = _as_callable(channel)
    d = 1 << n_qubits
    A, B = [], []
    for k, (_, rho) in enumerate(input_states(n_qubits)):
        out = apply(rho)
        est = state_tomography(out, shots, seed=hash64(int(seed), "proc", k))
        A.append(rho.mat.reshape(-1))
        B.append(est.mat.reshape(-1))
    A = np.array(A).T
    B = np.array(B).T
    S = B @ np.linalg.inv(A)
    J = ch.ChoiMatrix.from_superop(S, check=False).J
    J = project_cptp(J, d)
    return ch.ChoiMatrix(J, check=False)


@dataclass
class TomographyJob:
    """A process-tomography run: black-box ``target`` on ``n_qubits``, Pauli measurements."""

    target: ChannelLike
    n_qubits: int
    shots: int | None = None
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.n_qubits <= MAX_PROCESS_QUBITS:
            raise TomographyError(f"process tomography limited to {MAX_PROCESS_QUBITS} qubits")
        if self.shots is not None and self.shots < 1:
            raise TomographyError("shots must be positive or None")

    @property
    def inputs(self) -> list[tuple[str, DensityMatrix]]:
        return input_states(self.n_qubits)

    @property
    def settings(self) -> list[str]:
        return _settings(self.n_qubits)

    @property
    def total_shots(self) -> int | None:
        if self.shots is None:
            return None
        return self.shots * len(self.inputs) * len(self.settings)

    def run(self) -> ch.ChoiMatrix:
        return process_tomography(self.target, self.n_qubits, self.shots, self.seed)


def choi_error(a: ch.ChoiMatrix, b: ch.ChoiMatrix) -> float:
    return float(np.linalg.norm(a.J - b.J))


# ---------------------------------------------------------------------------
# single-qubit structure


def pauli_transfer_matrix(choi: ch.ChoiMatrix) -> np.ndarray:
    d = choi.dim
    n = d.bit_length() - 1
    labels = ["".join(p) for p in itertools.product("IXYZ", repeat=n)]
    mats = [kron_all([ch.PAULIS[a] for a in lab]) for lab in labels]
    R = np.array([[np.real(np.trace(si @ choi.apply(sj))) / d for sj in mats] for si in mats])
    return R


def affine_bloch_form(choi: ch.ChoiMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Single-qubit map as ``r -> M r + t``."""
    if choi.dim != 2:
        raise TomographyError("affine Bloch form is defined for single-qubit channels")
    R = pauli_transfer_matrix(choi)
    return R[1:, 1:], R[1:, 0]


def fit_unitary(choi: ch.ChoiMatrix) -> np.ndarray:
    """Closest unitary: dominant Choi eigenvector, reshaped and polar-decomposed."""
    d = choi.dim
    w, v = np.linalg.eigh((choi.J + choi.J.conj().T) / 2)
    K = v[:, -1].reshape(d, d)
    u, _, vh = np.linalg.svd(K)
    return u @ vh

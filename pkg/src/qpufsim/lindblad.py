"""Lindblad generators, product-formula evolution, exact oracle and quantum trajectories.

Rates are folded into the jump operators when they are built (``L = sqrt(g) A``),
so a generator is just a Hamiltonian plus a list of jump operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import channel as ch
from .qstate import (
    DensityMatrix,
    PureState,
    apply_superop,
    embed_operator,
    expm,
    expm_hermitian,
    hermitian_eig,
)
from .seeding import rng as seeded_rng

DENSE_DIM_LIMIT = 64
MAX_JUMP_PROB = 0.1
EPS_TARGET = 1e-6


class LindbladError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class JumpOperator:
    """Jump operator stored on its support; ``op`` gives the full-system matrix."""

    local: np.ndarray
    support: tuple[int, ...]
    n_qubits: int
    rate: float = 1.0
    label: str = ""

    def __post_init__(self):
        local = np.array(self.local, dtype=complex)
        k = len(self.support)
        if local.shape != (1 << k, 1 << k):
            raise LindbladError(f"local operator shape {local.shape} does not match support {self.support}")
        if any(not 0 <= q < self.n_qubits for q in self.support) or len(set(self.support)) != k:
            raise IndexError(f"bad support {self.support} for {self.n_qubits} qubits")
        if not (math.isfinite(self.rate) and self.rate >= 0):
            raise LindbladError("rate must be finite and non-negative")
        local.flags.writeable = False
        object.__setattr__(self, "local", local)
        object.__setattr__(self, "support", tuple(self.support))

    @property
    def op(self) -> np.ndarray:
        return embed_operator(self.local, self.support, self.n_qubits)

    @property
    def is_diagonal(self) -> bool:
        return not np.any(self.local - np.diag(np.diag(self.local)))


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    H: np.ndarray
    jumps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        H = np.array(self.H, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise LindbladError("Hamiltonian must be square")
        if np.linalg.norm(H - H.conj().T) > 1e-10:
            raise LindbladError("Hamiltonian is not Hermitian")
        H.flags.writeable = False
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "jumps", tuple(self.jumps))
        n = self.n_qubits
        for j in self.jumps:
            if j.n_qubits != n:
                raise LindbladError("jump operator width does not match the Hamiltonian")

    @property
    def n_qubits(self) -> int:
        return self.H.shape[0].bit_length() - 1

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    @classmethod
    def dissipative(cls, n_qubits: int, jumps: Sequence[JumpOperator]) -> "LindbladGenerator":
        return cls(np.zeros((1 << n_qubits, 1 << n_qubits)), tuple(jumps))


@dataclass(frozen=True)
class TrotterPlan:
    order: int
    t: float
    r: int

    def __post_init__(self):
        if self.order not in (1, 2):
            raise LindbladError("order must be 1 (Lie-Trotter) or 2 (Strang)")
        if self.t < 0 or self.r < 1:
            raise LindbladError("need t >= 0 and r >= 1")

    @classmethod
    def default(cls, t: float, order: int = 2, eps: float = EPS_TARGET) -> "TrotterPlan":
        return cls(order, t, default_steps(t, eps))


def default_steps(t: float, eps: float = EPS_TARGET) -> int:
    """Step-count heuristic ``r = ceil(max(20, t**1.5 / sqrt(eps)))``."""
    return int(math.ceil(max(20.0, t**1.5 / math.sqrt(eps))))


# ---------------------------------------------------------------------------
# jump constructors


def _check_qubit(qubit: int, n: int) -> None:
    if not 0 <= qubit < n:
        raise IndexError(f"qubit {qubit} out of range for {n} qubits")


def _check_rate(g: float) -> float:
    g = float(g)
    if not (math.isfinite(g) and g >= 0):
        raise LindbladError(f"rate must be finite and non-negative, got {g}")
    return g


_LOWER = np.array([[0, 1], [0, 0]], dtype=complex)


def jump_amplitude_damping(qubit: int, n: int, gamma: float) -> JumpOperator:
    _check_qubit(qubit, n)
    g = _check_rate(gamma)
    return JumpOperator(np.sqrt(g) * _LOWER, (qubit,), n, g, f"AD{qubit}")


def jump_dephasing(qubit: int, n: int, gamma: float) -> JumpOperator:
    _check_qubit(qubit, n)
    g = _check_rate(gamma)
    return JumpOperator(np.sqrt(g) * ch.Z, (qubit,), n, g, f"PD{qubit}")


def jump_depolarizing_set(qubit: int, n: int, kappa: float) -> list[JumpOperator]:
    _check_qubit(qubit, n)
    k = _check_rate(kappa)
    return [JumpOperator(np.sqrt(k) * ch.PAULIS[p], (qubit,), n, k, f"DP{p}{qubit}") for p in "XYZ"]


def _pauli(a) -> np.ndarray:
    return ch.PAULIS[a.upper()] if isinstance(a, str) else np.asarray(a, dtype=complex)


def jump_collective(pauli, coeffs: Sequence[float] | None, n: int, gamma: float) -> JumpOperator:
    """``sqrt(G) sum_i c_i A_i``; default ``c_i = 1/sqrt(n)``."""
    g = _check_rate(gamma)
    c = np.full(n, 1 / np.sqrt(n)) if coeffs is None else np.asarray(coeffs, dtype=float)
    if c.shape != (n,):
        raise LindbladError(f"expected {n} coefficients, got {c.shape}")
    a = _pauli(pauli)
    total = sum(ci * embed_operator(a, (i,), n) for i, ci in enumerate(c))
    return JumpOperator(np.sqrt(g) * total, tuple(range(n)), n, g, "collective")


def jump_pairwise(pauli, pairs: Sequence[tuple[int, int]], n: int, gamma: float, coeffs: Sequence[float] | None = None) -> JumpOperator:
    """``sqrt(G) sum_(i<j) c_ij B_i B_j``; default ``c_ij = 1/sqrt(len(pairs))``."""
    g = _check_rate(gamma)
    pairs = [tuple(p) for p in pairs]
    if not pairs:
        raise LindbladError("need at least one pair")
    for i, j in pairs:
        if not (0 <= i < j < n):
            raise LindbladError(f"bad pair ({i}, {j}) for {n} qubits")
    c = np.full(len(pairs), 1 / np.sqrt(len(pairs))) if coeffs is None else np.asarray(coeffs, dtype=float)
    if c.shape != (len(pairs),):
        raise LindbladError("one coefficient per pair required")
    support = tuple(sorted({q for p in pairs for q in p}))
    b = _pauli(pauli)
    bb = np.kron(b, b)
    idx = {q: k for k, q in enumerate(support)}
    total = sum(cij * embed_operator(bb, (idx[i], idx[j]), len(support)) for (i, j), cij in zip(pairs, c))
    return JumpOperator(np.sqrt(g) * total, support, n, g, "pairwise")


# ---------------------------------------------------------------------------
# generator algebra


def effective_hamiltonian(gen: LindbladGenerator) -> np.ndarray:
    """``H - (i/2) sum L^dagger L``."""
    heff = np.array(gen.H, dtype=complex)
    for j in gen.jumps:
        L = j.op
        heff = heff - 0.5j * (L.conj().T @ L)
    return heff


def _liouvillian(H: np.ndarray, Ls: Sequence[np.ndarray]) -> np.ndarray:
    d = H.shape[0]
    eye = np.eye(d)
    out = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    for L in Ls:
        LdL = L.conj().T @ L
        out += np.kron(L, L.conj()) - 0.5 * np.kron(LdL, eye) - 0.5 * np.kron(eye, LdL.T)
    return out


def liouvillian_dense(gen: LindbladGenerator) -> np.ndarray:
    """Row-major vectorized generator: ``vec(d rho/dt) = L vec(rho)``."""
    if gen.dim > DENSE_DIM_LIMIT:
        raise LindbladError(f"dense Liouvillian limited to dimension {DENSE_DIM_LIMIT}, got {gen.dim}")
    return _liouvillian(gen.H, [j.op for j in gen.jumps])


def evolve_dense(gen: LindbladGenerator, rho0: DensityMatrix, t: float) -> DensityMatrix:
    """Exact ``exp(t L) rho0``; reference oracle for the approximate methods."""
    d = gen.dim
    out = expm(t * liouvillian_dense(gen)) @ rho0.mat.reshape(-1)
    out = out.reshape(d, d)
    return DensityMatrix((out + out.conj().T) / 2, check=False)


def hamiltonian_propagator(H: np.ndarray, t: float) -> np.ndarray:
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1] or np.linalg.norm(H - H.conj().T) > 1e-10:
        raise LindbladError("Hamiltonian must be Hermitian")
    return expm_hermitian(H, -1j * t)


def small_step_kraus_raw(gen: LindbladGenerator, dt: float) -> list[np.ndarray]:
    """First-order Kraus set before renormalization (trace defect ``O(dt^2)``)."""
    if dt <= 0:
        raise LindbladError("dt must be positive")
    d = gen.dim
    k0 = np.eye(d) - 1j * dt * effective_hamiltonian(gen)
    return [k0] + [np.sqrt(dt) * j.op for j in gen.jumps]


def small_step_kraus(gen: LindbladGenerator, dt: float) -> ch.KrausChannel:
    """Small-step map made exactly trace preserving.

    Every operator is right-multiplied by ``S^{-1/2}`` with ``S = sum K^dagger K``
    so the completeness relation holds to rounding error.
    """
    ops = small_step_kraus_raw(gen, dt)
    s = sum(k.conj().T @ k for k in ops)
    w, v = hermitian_eig(s)
    inv_sqrt = (v / np.sqrt(w)) @ v.conj().T
    return ch.KrausChannel([k @ inv_sqrt for k in ops])


# ---------------------------------------------------------------------------
# product formulas


class _Factor:
    """One exactly-exponentiated piece of a split generator."""

    def __init__(self, n: int, hams: list[tuple[np.ndarray, tuple[int, ...]]], jumps: list[JumpOperator]):
        self.n = n
        self._cache: dict[float, object] = {}
        d = 1 << n
        local = [(h, s) for h, s in hams] + [(j.local, j.support) for j in jumps]
        support = sorted({q for _, s in local for q in s})
        diagonal = all(not np.any(m - np.diag(np.diag(m))) for m, _ in local)
        if diagonal:
            self.kind = "diag"
            hd = np.zeros(d, dtype=complex)
            for h, s in hams:
                hd += np.diag(embed_operator(h, s, n))
            M = -1j * (hd[:, None] - hd[None, :])
            for j in jumps:
                ld = np.diag(embed_operator(j.local, j.support, n))
                a2 = np.abs(ld) ** 2
                M += np.outer(ld, ld.conj()) - 0.5 * (a2[:, None] + a2[None, :])
            self.gen = M
        elif len(support) <= 3:
            self.kind = "local"
            self.support = tuple(support)
            k = len(support)
            idx = {q: i for i, q in enumerate(support)}

            def on_support(m, s):
                return embed_operator(m, tuple(idx[q] for q in s), k)

            Hloc = sum((on_support(h, s) for h, s in hams), np.zeros((1 << k, 1 << k), dtype=complex))
            self.gen = _liouvillian(Hloc, [on_support(j.local, j.support) for j in jumps])
        elif not jumps:
            self.kind = "unitary"
            H = sum(embed_operator(h, s, n) for h, s in hams)
            self.eig = hermitian_eig(H)
        elif d <= DENSE_DIM_LIMIT:
            self.kind = "dense"
            H = sum((embed_operator(h, s, n) for h, s in hams), np.zeros((d, d), dtype=complex))
            self.gen = _liouvillian(H, [j.op for j in jumps])
        else:
            raise LindbladError("factor is neither local, diagonal nor small enough for a dense exponential")

    def _prop(self, dt: float):
        p = self._cache.get(dt)
        if p is None:
            if self.kind == "diag":
                p = np.exp(dt * self.gen)
            elif self.kind == "unitary":
                w, v = self.eig
                p = (v * np.exp(-1j * dt * w)) @ v.conj().T
            else:
                p = expm(dt * self.gen)
            self._cache[dt] = p
        return p

    def apply(self, rho: np.ndarray, dt: float) -> np.ndarray:
        p = self._prop(dt)
        if self.kind == "diag":
            return rho * p
        if self.kind == "unitary":
            return p @ rho @ p.conj().T
        if self.kind == "local":
            return apply_superop(rho, p, self.support, self.n)
        d = rho.shape[0]
        return (p @ rho.reshape(-1)).reshape(d, d)


def group_jumps(gen: LindbladGenerator, grouping="per_jump") -> list[list[int]]:
    """Partition jump indices into split factors.

    ``"per_jump"`` gives one factor per jump; ``"per_qubit"`` merges every
    single-qubit jump acting on the same qubit; an explicit list of index
    lists is validated and returned unchanged.
    """
    m = len(gen.jumps)
    if grouping == "per_jump":
        return [[i] for i in range(m)]
    if grouping == "per_qubit":
        groups: dict = {}
        for i, j in enumerate(gen.jumps):
            key = j.support if len(j.support) == 1 else ("multi", i)
            groups.setdefault(key, []).append(i)
        return list(groups.values())
    groups = [list(g) for g in grouping]
    flat = sorted(i for g in groups for i in g)
    if flat != list(range(m)):
        raise LindbladError("grouping must partition the jump indices")
    return groups


class TrotterStepper:
    """Precomputed split of a generator; reusable across initial states."""

    def __init__(self, gen: LindbladGenerator, plan: TrotterPlan, grouping="per_jump"):
        self.gen = gen
        self.plan = plan
        n = gen.n_qubits
        self.factors: list[_Factor] = []
        if np.any(gen.H):
            self.factors.append(_Factor(n, [(gen.H, tuple(range(n)))], []))
        for g in group_jumps(gen, grouping):
            self.factors.append(_Factor(n, [], [gen.jumps[i] for i in g]))
        self.schedule = self._schedule()

    def _schedule(self) -> list[tuple[int, float]]:
        k = len(self.factors)
        if k == 0 or self.plan.t == 0:
            return []
        dt = self.plan.t / self.plan.r
        if self.plan.order == 1:
            one = [(i, dt) for i in range(k)]
        else:
            one = [(i, dt / 2) for i in range(k - 1)] + [(k - 1, dt)] + [(i, dt / 2) for i in reversed(range(k - 1))]
        seq = one * self.plan.r
        merged: list[list] = []
        for i, tau in seq:
            if merged and merged[-1][0] == i:
                merged[-1][1] += tau
            else:
                merged.append([i, tau])
        # snap durations so equal steps share one cached propagator
        return [(i, round(tau, 15)) for i, tau in merged]

    def apply(self, rho: np.ndarray) -> np.ndarray:
        for i, tau in self.schedule:
            rho = self.factors[i].apply(rho, tau)
        return (rho + rho.conj().T) / 2


def evolve_trotter(gen: LindbladGenerator, rho0: DensityMatrix, plan: TrotterPlan, grouping="per_jump") -> DensityMatrix:
    """Product-formula evolution; each factor is an exact CPTP exponential."""
    if rho0.n_qubits != gen.n_qubits:
        raise LindbladError("state and generator widths differ")
    return DensityMatrix(TrotterStepper(gen, plan, grouping).apply(np.array(rho0.mat)), check=False)


# ---------------------------------------------------------------------------
# quantum trajectories


@dataclass
class TrajectoryResult:
    rho: DensityMatrix
    stderr: np.ndarray
    n_traj: int


def evolve_trajectories(
    gen: LindbladGenerator,
    psi0: PureState,
    t: float,
    n_steps: int,
    n_traj: int,
    seed: int,
) -> TrajectoryResult:
    """Monte Carlo wave-function unraveling.

    Each step propagates with ``exp(-i H_eff dt)``; the lost norm is the jump
    probability, and the jump channel is chosen in proportion to
    ``||L_j psi||^2``. Trajectory ``k`` uses its own stream seeded from
    ``(seed, k)``, so results do not depend on batch order.
    """
    if n_steps < 1 or n_traj < 1:
        raise LindbladError("need n_steps >= 1 and n_traj >= 1")
    if psi0.amplitudes.shape[0] != gen.dim:
        raise LindbladError("state and generator widths differ")
    dt = t / n_steps
    u_eff = expm(-1j * dt * effective_hamiltonian(gen))
    Ls = [j.op for j in gen.jumps]
    draws = np.stack([seeded_rng(int(seed), "traj", k).random((n_steps, 2)) for k in range(n_traj)])
    psi = np.tile(np.asarray(psi0.amplitudes, dtype=complex), (n_traj, 1))
    for step in range(n_steps):
        nxt = psi @ u_eff.T
        norm2 = np.real(np.einsum("ij,ij->i", nxt.conj(), nxt))
        p_jump = np.clip(1.0 - norm2, 0.0, None)
        p_jump[p_jump < 1e-15] = 0.0
        if p_jump.max() > MAX_JUMP_PROB:
            raise LindbladError(
                f"step too coarse: jump probability {p_jump.max():.3f} exceeds {MAX_JUMP_PROB}; increase n_steps"
            )
        jumped = draws[:, step, 0] < p_jump
        out = nxt / np.sqrt(norm2)[:, None]
        if jumped.any() and Ls:
            cand = np.stack([psi[jumped] @ L.T for L in Ls])  # (m, k, d)
            w = np.real(np.einsum("mkd,mkd->mk", cand.conj(), cand))
            cum = np.cumsum(w, axis=0)
            pick = (draws[jumped, step, 1] * cum[-1] >= cum).sum(axis=0)
            pick = np.minimum(pick, len(Ls) - 1)
            rows = np.arange(cand.shape[1])
            chosen = cand[pick, rows]
            out[jumped] = chosen / np.linalg.norm(chosen, axis=1)[:, None]
        psi = out
    outer = psi[:, :, None] * psi.conj()[:, None, :]
    mean = outer.mean(axis=0)
    stderr = np.sqrt(np.mean(np.abs(outer - mean) ** 2, axis=0) / max(n_traj - 1, 1))
    return TrajectoryResult(DensityMatrix((mean + mean.conj().T) / 2, check=False), stderr, n_traj)

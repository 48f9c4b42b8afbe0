"""Circuit IR, density-matrix executor with branch bookkeeping, routing and text I/O.

Text format (one op per line, ``#`` starts a comment)::

    QUBITS 3
    RY q0 1.5708
    CX q0 q1
    MEASURE q2 -> c0
    COND c0==1: H q1; RZ q0 0.25
    NOISE AD 0.02 q1
    READOUT q0 q1 -> c1 c2

``MEASURE`` is a mid-circuit measurement: the executor branches on it and
records the outcome in the ledger. ``READOUT`` is the terminal measurement;
at most one is allowed and it must be the last op. ``NOISE`` kinds are
``AD``, ``PD`` and ``DEPOL`` (single-qubit, parameter in [0, 1]).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from . import channel as ch
from .qstate import DensityMatrix, apply_superop, apply_unitary

BRANCH_CUTOFF = 1e-14

_SQ2 = 1 / np.sqrt(2)
_FIXED = {
    "H": np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]], dtype=complex),
    "X": ch.X,
    "Y": ch.Y,
    "Z": ch.Z,
    "S": np.diag([1, 1j]).astype(complex),
    "CX": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
    "SWAP": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}
_ROTATIONS = {"RX": ch.X, "RY": ch.Y, "RZ": ch.Z}
TWO_QUBIT = {"CX", "CZ", "SWAP"}
GATE_KINDS = set(_FIXED) | set(_ROTATIONS)


class CircuitError(ValueError):
    pass


def rotation(axis: str, theta: float) -> np.ndarray:
    """``exp(-i theta P / 2)`` for ``P`` in X, Y, Z."""
    p = _ROTATIONS["R" + axis.upper()] if len(axis) == 1 else _ROTATIONS[axis.upper()]
    return np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * p


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple[int, ...]
    theta: float | None = None

    def __post_init__(self):
        kind = self.kind.upper()
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate {self.kind!r}")
        want = 2 if kind in TWO_QUBIT else 1
        if len(self.targets) != want:
            raise CircuitError(f"{kind} takes {want} qubit(s), got {self.targets}")
        if len(set(self.targets)) != len(self.targets):
            raise CircuitError(f"{kind} targets must be distinct")
        if (kind in _ROTATIONS) != (self.theta is not None):
            raise CircuitError(f"{kind}: angle {'required' if kind in _ROTATIONS else 'not allowed'}")
        if self.theta is not None:
            object.__setattr__(self, "theta", float(self.theta))

    def matrix(self) -> np.ndarray:
        if self.kind in _ROTATIONS:
            return rotation(self.kind, self.theta)
        return _FIXED[self.kind]


@dataclass(frozen=True)
class Measure:
    """Mid-circuit projective measurement in the computational basis."""

    qubits: tuple[int, ...]
    cbits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        object.__setattr__(self, "cbits", tuple(self.cbits))
        if not self.qubits or len(self.qubits) != len(self.cbits):
            raise CircuitError("measure needs one classical slot per qubit")


@dataclass(frozen=True)
class Readout(Measure):
    """Terminal measurement; produces the output histogram."""


@dataclass(frozen=True)
class Conditional:
    cbit: int
    value: int
    gates: tuple[Gate, ...]

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.value not in (0, 1):
            raise CircuitError("conditional value must be 0 or 1")


@dataclass(frozen=True)
class ChannelOp:
    channel: ch.KrausChannel
    qubits: tuple[int, ...]
    label: tuple[str, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if self.channel.dim_in != 1 << len(self.qubits):
            raise CircuitError("channel dimension does not match its qubits")


Op = Union[Gate, Measure, Readout, Conditional, ChannelOp]

_NOISE = {"AD": ch.amplitude_damping, "PD": ch.phase_damping, "DEPOL": ch.depolarizing}


def noise(kind: str, param: float, qubit: int) -> ChannelOp:
    kind = kind.upper()
    if kind not in _NOISE:
        raise CircuitError(f"unknown noise kind {kind!r}")
    return ChannelOp(_NOISE[kind](param), (qubit,), label=(kind, float(param)))


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    ops: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(self.ops))
        self.validate()

    @property
    def n_cbits(self) -> int:
        slots = [c for op in self.ops if isinstance(op, Measure) for c in op.cbits]
        slots += [op.cbit for op in self.ops if isinstance(op, Conditional)]
        return max(slots) + 1 if slots else 0

    @property
    def readout(self) -> Readout | None:
        return self.ops[-1] if self.ops and isinstance(self.ops[-1], Readout) else None

    def validate(self) -> None:
        n = self.n_qubits
        written: set[int] = set()

        def check_qubits(qs):
            for q in qs:
                if not 0 <= q < n:
                    raise CircuitError(f"qubit index {q} outside circuit width {n}")

        for i, op in enumerate(self.ops):
            if isinstance(op, Gate):
                check_qubits(op.targets)
            elif isinstance(op, ChannelOp):
                check_qubits(op.qubits)
            elif isinstance(op, Measure):
                check_qubits(op.qubits)
                if len(set(op.qubits)) != len(op.qubits):
                    raise CircuitError("measured qubits must be distinct")
                if isinstance(op, Readout) and i != len(self.ops) - 1:
                    raise CircuitError("READOUT must be the last operation")
                if any(c < 0 for c in op.cbits):
                    raise CircuitError("negative classical slot")
                written.update(op.cbits)
            elif isinstance(op, Conditional):
                if op.cbit not in written:
                    raise CircuitError(f"conditional reads slot c{op.cbit} before it is written")
                for g in op.gates:
                    check_qubits(g.targets)
            else:
                raise CircuitError(f"unsupported op {op!r}")

    def gates(self) -> list[Gate]:
        return [op for op in self.ops if isinstance(op, Gate)]

    def count(self, kind: str) -> int:
        kind = kind.upper()
        n = sum(1 for g in self.gates() if g.kind == kind)
        n += sum(1 for op in self.ops if isinstance(op, Conditional) for g in op.gates if g.kind == kind)
        return n


# ---------------------------------------------------------------------------
# noise hooks


class NoisePolicy:
    """Per-gate noise hooks used by the executor. The base class is noiseless."""

    def after_gate(self, gate: Gate) -> list[tuple[ch.KrausChannel, tuple[int, ...]]]:
        return []

    def before_measure(self, qubits: Sequence[int]) -> list[tuple[ch.KrausChannel, tuple[int, ...]]]:
        return []

    def readout(self, qubits: Sequence[int]) -> ch.ReadoutMatrix | None:
        return None


# ---------------------------------------------------------------------------
# execution


def apply_gate(rho: DensityMatrix, g: Gate) -> DensityMatrix:
    n = rho.n_qubits
    for q in g.targets:
        if not 0 <= q < n:
            raise IndexError(f"qubit {q} out of range for {n} qubits")
    return DensityMatrix(apply_unitary(rho.mat, g.matrix(), g.targets, n), check=False)


def _bit_masks(n: int, qubits: Sequence[int]) -> list[tuple[str, np.ndarray]]:
    idx = np.arange(1 << n)
    bits = [(idx >> (n - 1 - q)) & 1 for q in qubits]
    out = []
    for v in range(1 << len(qubits)):
        key = format(v, f"0{len(qubits)}b")
        mask = np.ones(1 << n, dtype=bool)
        for b, col in zip(key, bits):
            mask &= col == int(b)
        out.append((key, mask))
    return out


def measure(rho: DensityMatrix, qubits: Iterable[int]) -> list[tuple[str, float, DensityMatrix]]:
    """Projective measurement: ``(bits, probability, post-state)`` per outcome."""
    qubits = list(qubits)
    if not qubits:
        raise CircuitError("measure needs at least one qubit")
    out = []
    for key, mask in _bit_masks(rho.n_qubits, qubits):
        sub = rho.mat * np.outer(mask, mask)
        p = float(np.real(np.trace(sub)))
        if p < BRANCH_CUTOFF:
            continue
        out.append((key, p, DensityMatrix(sub / p, check=False)))
    return out


def marginal_probabilities(rho: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    p = np.clip(np.real(np.diag(rho)), 0.0, None).reshape((2,) * n) if n else np.real(np.diag(rho))
    others = tuple(q for q in range(n) if q not in qubits)
    p = p.sum(axis=others) if others else p
    kept = sorted(qubits)
    p = np.transpose(p, [kept.index(q) for q in qubits]) if len(qubits) > 1 else p
    return np.asarray(p).reshape(-1)


@dataclass
class ExactResult:
    """Outcome of branch-summed execution.

    ``state`` is the probability-weighted mixture over mid-circuit branches
    (before any terminal readout); ``ledger`` lists ``(outcomes, probability)``
    per branch in ascending outcome order; ``distribution`` is the terminal
    readout distribution keyed by bitstring (readout order), ``joint`` keys
    the full classical register.
    """

    state: DensityMatrix
    ledger: list[tuple[str, float]]
    distribution: dict[str, float]
    joint: dict[str, float]
    branch_terminal: list[np.ndarray]
    branch_registers: list[tuple]


def _apply_channels(rho, chans, n):
    for chan, qs in chans:
        rho = apply_superop(rho, chan.superop, qs, n)
    return rho


def _apply_gate_raw(rho, g, n, policy):
    rho = apply_unitary(rho, g.matrix(), g.targets, n)
    if policy is not None:
        rho = _apply_channels(rho, policy.after_gate(g), n)
    return rho


def apply_gates_array(rho: np.ndarray, gates: Sequence[Gate], n: int, noise: NoisePolicy | None = None) -> np.ndarray:
    """Apply ``gates`` (with optional per-gate noise) to a raw density array."""
    for g in gates:
        rho = _apply_gate_raw(rho, g, n, noise)
    return rho


def run_exact(circuit: Circuit, rho0: DensityMatrix, noise: NoisePolicy | None = None) -> ExactResult:
    """Deterministic execution enumerating every mid-circuit measurement branch."""
    n = circuit.n_qubits
    if rho0.n_qubits != n:
        raise CircuitError(f"initial state has {rho0.n_qubits} qubits, circuit has {n}")
    ncb = circuit.n_cbits
    # each branch: (outcome string, register tuple, unnormalized density array)
    branches = [("", (None,) * ncb, np.array(rho0.mat))]
    readout: Readout | None = None
    for op in circuit.ops:
        if isinstance(op, Gate):
            branches = [(o, r, _apply_gate_raw(m, op, n, noise)) for o, r, m in branches]
        elif isinstance(op, ChannelOp):
            branches = [(o, r, apply_superop(m, op.channel.superop, op.qubits, n)) for o, r, m in branches]
        elif isinstance(op, Readout):
            readout = op
        elif isinstance(op, Measure):
            masks = _bit_masks(n, op.qubits)
            new = []
            for o, reg, m in branches:
                if noise is not None:
                    m = _apply_channels(m, noise.before_measure(op.qubits), n)
                for key, mask in masks:
                    sub = m * np.outer(mask, mask)
                    p = float(np.real(np.trace(sub)))
                    if p < BRANCH_CUTOFF:
                        continue
                    reg2 = list(reg)
                    for c, b in zip(op.cbits, key):
                        reg2[c] = int(b)
                    new.append((o + key, tuple(reg2), sub))
            branches = new
        elif isinstance(op, Conditional):
            out = []
            for o, reg, m in branches:
                if reg[op.cbit] == op.value:
                    for g in op.gates:
                        m = _apply_gate_raw(m, g, n, noise)
                out.append((o, reg, m))
            branches = out
        else:  # pragma: no cover - validate() rejects anything else
            raise CircuitError(f"unsupported op {op!r}")

    state = sum(m for _, _, m in branches)
    ledger = [(o, float(np.real(np.trace(m)))) for o, _, m in branches]
    distribution: dict[str, float] = {}
    joint: dict[str, float] = {}
    terminals = []
    if readout is not None:
        rq = list(readout.qubits)
        R = noise.readout(rq) if noise is not None else None
        k = len(rq)
        keys = [format(v, f"0{k}b") for v in range(1 << k)]
        for o, reg, m in branches:
            if noise is not None:
                m = _apply_channels(m, noise.before_measure(rq), n)
            p_b = float(np.real(np.trace(m)))
            probs = marginal_probabilities(m, rq, n) / p_b
            if R is not None:
                probs = R.R @ probs
            probs = np.clip(probs, 0.0, None)
            probs = probs / probs.sum()
            terminals.append(probs)
            for key, pk in zip(keys, probs):
                w = float(p_b * pk)
                distribution[key] = distribution.get(key, 0.0) + w
                reg2 = list(reg)
                for c, b in zip(readout.cbits, key):
                    reg2[c] = int(b)
                jk = "".join("0" if v is None else str(v) for v in reg2)
                joint[jk] = joint.get(jk, 0.0) + w
    else:
        for o, reg, m in branches:
            jk = "".join("0" if v is None else str(v) for v in reg)
            joint[jk] = joint.get(jk, 0.0) + float(np.real(np.trace(m)))
    return ExactResult(
        state=DensityMatrix(state, check=False),
        ledger=ledger,
        distribution=dict(sorted(distribution.items())),
        joint=dict(sorted(joint.items())),
        branch_terminal=terminals,
        branch_registers=[r for _, r, _ in branches],
    )


def sample_exact(result: ExactResult, readout: Readout, shots: int, rng: np.random.Generator, register: bool = False) -> dict[str, int]:
    """Draw ``shots`` terminal outcomes: a branch per shot, then an outcome."""
    probs = np.array([p for _, p in result.ledger])
    probs = probs / probs.sum()
    per_branch = rng.multinomial(shots, probs)
    k = len(readout.qubits)
    hist: dict[str, int] = {}
    for count, term, reg in zip(per_branch, result.branch_terminal, result.branch_registers):
        if count == 0:
            continue
        outcome_counts = rng.multinomial(count, term)
        for v in np.nonzero(outcome_counts)[0]:
            key = format(int(v), f"0{k}b")
            if register:
                reg2 = list(reg)
                for c, b in zip(readout.cbits, key):
                    reg2[c] = int(b)
                key = "".join("0" if x is None else str(x) for x in reg2)
            hist[key] = hist.get(key, 0) + int(outcome_counts[v])
    return dict(sorted(hist.items()))


def run_sampled(
    circuit: Circuit,
    rho0: DensityMatrix,
    shots: int,
    seed: int,
    noise: NoisePolicy | None = None,
    register: bool = False,
) -> dict[str, int]:
    """Histogram of terminal readouts over ``shots`` repetitions.

    Each shot picks its mid-circuit branch from the exact branch
    probabilities and then its readout from that branch's distribution.
    With ``register=True`` keys span the whole classical register.
    """
    if shots < 1:
        raise CircuitError("shots must be positive")
    readout = circuit.readout
    if readout is None:
        raise CircuitError("circuit has no terminal READOUT")
    result = run_exact(circuit, rho0, noise)
    return sample_exact(result, readout, shots, np.random.default_rng(seed), register=register)


def run_shots(
    circuit: Circuit,
    rho0: DensityMatrix,
    shots: int,
    seed: int,
    noise: NoisePolicy | None = None,
) -> dict[str, int]:
    """Shot-by-shot execution with collapse at every mid-circuit measurement.

    Shots that share a measurement record are simulated together; at each
    ``Measure`` the group's count is split by a multinomial draw and every
    outcome continues from its renormalized post-measurement state. Unlike
    ``run_sampled`` no branch ledger is built in advance.
    """
    if shots < 1:
        raise CircuitError("shots must be positive")
    readout = circuit.readout
    if readout is None:
        raise CircuitError("circuit has no terminal READOUT")
    n = circuit.n_qubits
    if rho0.n_qubits != n:
        raise CircuitError(f"initial state has {rho0.n_qubits} qubits, circuit has {n}")
    rng = np.random.default_rng(seed)
    groups = [((None,) * circuit.n_cbits, np.array(rho0.mat), shots)]
    for op in circuit.ops:
        if isinstance(op, Gate):
            groups = [(reg, _apply_gate_raw(m, op, n, noise), c) for reg, m, c in groups]
        elif isinstance(op, ChannelOp):
            groups = [(reg, apply_superop(m, op.channel.superop, op.qubits, n), c) for reg, m, c in groups]
        elif isinstance(op, Readout):
            continue
        elif isinstance(op, Measure):
            new = []
            for reg, m, c in groups:
                if noise is not None:
                    m = _apply_channels(m, noise.before_measure(op.qubits), n)
                p = marginal_probabilities(m, op.qubits, n)
                split = rng.multinomial(c, p / p.sum())
                masks = _bit_masks(n, op.qubits)
                for (key, mask), cnt in zip(masks, split):
                    if cnt == 0:
                        continue
                    sub = m * np.outer(mask, mask)
                    reg2 = list(reg)
                    for cb, b in zip(op.cbits, key):
                        reg2[cb] = int(b)
                    new.append((tuple(reg2), sub / np.real(np.trace(sub)), int(cnt)))
            groups = new
        elif isinstance(op, Conditional):
            out = []
            for reg, m, c in groups:
                if reg[op.cbit] == op.value:
                    for g in op.gates:
                        m = _apply_gate_raw(m, g, n, noise)
                out.append((reg, m, c))
            groups = out
    rq = list(readout.qubits)
    R = noise.readout(rq) if noise is not None else None
    k = len(rq)
    hist: dict[str, int] = {}
    for _, m, c in groups:
        if noise is not None:
            m = _apply_channels(m, noise.before_measure(rq), n)
        p = marginal_probabilities(m, rq, n)
        if R is not None:
            p = R.R @ p
        counts = rng.multinomial(c, p / p.sum())
        for v in np.nonzero(counts)[0]:
            key = format(int(v), f"0{k}b")
            hist[key] = hist.get(key, 0) + int(counts[v])
    return dict(sorted(hist.items()))


# ---------------------------------------------------------------------------
# topologies and routing


@dataclass(frozen=True)
class Topology:
    n_physical: int
    edges: frozenset

    def __post_init__(self):
        edges = frozenset(tuple(sorted((int(a), int(b)))) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        for a, b in edges:
            if a == b:
                raise CircuitError("topology has a self-loop")
            if not (0 <= a < self.n_physical and 0 <= b < self.n_physical):
                raise CircuitError("edge endpoint outside topology")
        if self.n_physical > 1 and len(self._component(0)) != self.n_physical:
            raise CircuitError("topology is not connected")

    def neighbors(self, q: int) -> list[int]:
        return sorted({b for a, b in self.edges if a == q} | {a for a, b in self.edges if b == q})

    def adjacent(self, a: int, b: int) -> bool:
        return tuple(sorted((a, b))) in self.edges

    def degree(self, q: int) -> int:
        return len(self.neighbors(q))

    def _component(self, start: int) -> list[int]:
        seen = [start]
        queue = deque([start])
        while queue:
            q = queue.popleft()
            for nb in self.neighbors(q):
                if nb not in seen:
                    seen.append(nb)
                    queue.append(nb)
        return seen

    def shortest_path(self, a: int, b: int) -> list[int]:
        prev = {a: None}
        queue = deque([a])
        while queue:
            q = queue.popleft()
            if q == b:
                break
            for nb in self.neighbors(q):
                if nb not in prev:
                    prev[nb] = q
                    queue.append(nb)
        if b not in prev:
            raise CircuitError(f"no path between physical qubits {a} and {b}")
        path = [b]
        while prev[path[-1]] is not None:
            path.append(prev[path[-1]])
        return path[::-1]

    def connected_subset(self, k: int, start: int = 0) -> list[int]:
        """First ``k`` qubits reached by breadth-first search from ``start``."""
        if k > self.n_physical:
            raise CircuitError(f"topology has only {self.n_physical} qubits, need {k}")
        return self._component(start)[:k]

    def induced(self, nodes: Sequence[int]) -> "Topology":
        """Sub-topology on ``nodes`` relabelled ``0..len(nodes)-1``."""
        index = {q: i for i, q in enumerate(nodes)}
        edges = [(index[a], index[b]) for a, b in self.edges if a in index and b in index]
        return Topology(len(nodes), frozenset(edges))


def path_topology(n: int) -> Topology:
    return Topology(n, frozenset((i, i + 1) for i in range(n - 1)))


def star_topology(n: int, center: int = 0) -> Topology:
    return Topology(n, frozenset((center, i) for i in range(n) if i != center))


def ladder_topology() -> Topology:
    """15-qubit ladder: rows 0..6 and 7..13, rungs (i, i+7), qubit 14 on node 13."""
    edges = [(i, i + 1) for i in range(6)] + [(i, i + 1) for i in range(7, 13)]
    edges += [(i, i + 7) for i in range(7)] + [(13, 14)]
    return Topology(15, frozenset(edges))


def _swap_as_cx(a: int, b: int) -> list[Gate]:
    return [Gate("CX", (a, b)), Gate("CX", (b, a)), Gate("CX", (a, b))]


def route(circuit: Circuit, topology: Topology, layout: dict[int, int] | None = None) -> Circuit:
    """Greedy SWAP insertion along shortest paths.

    Classical slots keep their logical meaning, so the routed circuit's
    outcome distribution equals the original one for noiseless execution.
    """
    n = circuit.n_qubits
    if n > topology.n_physical:
        raise CircuitError(f"circuit needs {n} qubits, topology has {topology.n_physical}")
    phys = dict(layout) if layout is not None else {q: q for q in range(n)}
    if sorted(phys) != list(range(n)) or len(set(phys.values())) != n:
        raise CircuitError("layout must map every logical qubit to a distinct physical qubit")
    where = {p: l for l, p in phys.items()}
    out: list = []

    def bring_adjacent(a: int, b: int) -> None:
        pa, pb = phys[a], phys[b]
        if topology.adjacent(pa, pb):
            return
        path = topology.shortest_path(pa, pb)
        for u, v in zip(path[:-2], path[1:-1]):
            out.extend(_swap_as_cx(u, v))
            lu, lv = where.get(u), where.get(v)
            where[u], where[v] = lv, lu
            if lu is not None:
                phys[lu] = v
            if lv is not None:
                phys[lv] = u

    def mapped(g: Gate) -> Gate:
        return Gate(g.kind, tuple(phys[t] for t in g.targets), g.theta)

    for op in circuit.ops:
        if isinstance(op, Gate):
            if len(op.targets) == 2:
                bring_adjacent(*op.targets)
            out.append(mapped(op))
        elif isinstance(op, Conditional):
            for g in op.gates:
                if len(g.targets) == 2:
                    bring_adjacent(*g.targets)
            out.append(Conditional(op.cbit, op.value, tuple(mapped(g) for g in op.gates)))
        elif isinstance(op, Measure):
            out.append(type(op)(tuple(phys[q] for q in op.qubits), op.cbits))
        elif isinstance(op, ChannelOp):
            if len(op.qubits) == 2:
                bring_adjacent(*op.qubits)
            out.append(ChannelOp(op.channel, tuple(phys[q] for q in op.qubits), op.label))
    return Circuit(topology.n_physical, tuple(out))


# ---------------------------------------------------------------------------
# text serialization


def _fmt_gate(g: Gate) -> str:
    qs = " ".join(f"q{t}" for t in g.targets)
    return f"{g.kind} {qs}" + (f" {g.theta!r}" if g.theta is not None else "")


def dumps(circuit: Circuit) -> str:
    lines = [f"QUBITS {circuit.n_qubits}"]
    for op in circuit.ops:
        if isinstance(op, Gate):
            lines.append(_fmt_gate(op))
        elif isinstance(op, Measure):
            word = "READOUT" if isinstance(op, Readout) else "MEASURE"
            lines.append(
                f"{word} {' '.join(f'q{q}' for q in op.qubits)} -> {' '.join(f'c{c}' for c in op.cbits)}"
            )
        elif isinstance(op, Conditional):
            lines.append(f"COND c{op.cbit}=={op.value}: " + "; ".join(_fmt_gate(g) for g in op.gates))
        elif isinstance(op, ChannelOp):
            if op.label is None or len(op.qubits) != 1:
                raise CircuitError("only labelled single-qubit NOISE ops can be serialized")
            lines.append(f"NOISE {op.label[0]} {op.label[1]!r} q{op.qubits[0]}")
    return "\n".join(lines) + "\n"


def _qubit(tok: str) -> int:
    if not tok.startswith("q"):
        raise CircuitError(f"expected qubit token, got {tok!r}")
    return int(tok[1:])


def _cbit(tok: str) -> int:
    if not tok.startswith("c"):
        raise CircuitError(f"expected classical slot token, got {tok!r}")
    return int(tok[1:])


def _parse_gate(text: str) -> Gate:
    toks = text.split()
    kind = toks[0].upper()
    if kind in _ROTATIONS:
        return Gate(kind, (_qubit(toks[1]),), float(toks[2]))
    return Gate(kind, tuple(_qubit(t) for t in toks[1:]))


def loads(text: str) -> Circuit:
    n = None
    ops: list = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = line.split()[0].upper()
        try:
            if head == "QUBITS":
                n = int(line.split()[1])
            elif head in ("MEASURE", "READOUT"):
                lhs, rhs = line[len(head):].split("->")
                cls = Readout if head == "READOUT" else Measure
                ops.append(cls(tuple(_qubit(t) for t in lhs.split()), tuple(_cbit(t) for t in rhs.split())))
            elif head == "COND":
                pred, body = line[4:].split(":", 1)
                slot, value = pred.split("==")
                gates = tuple(_parse_gate(part) for part in body.split(";") if part.strip())
                ops.append(Conditional(_cbit(slot.strip()), int(value), gates))
            elif head == "NOISE":
                _, kind, param, q = line.split()
                ops.append(noise(kind, float(param), _qubit(q)))
            else:
                ops.append(_parse_gate(line))
        except (IndexError, ValueError) as exc:
            raise CircuitError(f"line {lineno}: cannot parse {raw!r}: {exc}") from exc
    if n is None:
        raise CircuitError("missing QUBITS header")
    return Circuit(n, tuple(ops))

"""The three non-unitary PUF architectures: instance generation, circuits and evaluation.

Architectures
-------------
``D``  gate-level dissipative circuit whose noise strength depends on the challenge.
``MF`` the same layer stack with mid-circuit measurements and classical feedback.
``L``  open-system evolution: unitary blocks interleaved with Lindblad windows.

Qubit ``i`` holds challenge bit ``i`` (leftmost bit is qubit 0). Every
architecture starts from ``|0...0>`` and flips the qubits whose bit is 1.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import channel as ch
from . import circuit as cc
from . import lindblad as lb
from .profile import BackendProfile, ProfileNoise
from .qstate import DensityMatrix, bloch_vector, embed_operator, partial_trace, purity
from .seeding import instance_seed
from .seeding import rng as seeded_rng

ARCHS = ("D", "MF", "L")
RATE_LO, RATE_HI = 0.001, 0.05
SMALL_ANGLE = 0.1
DEFAULT_M = 2
DEFAULT_F = 1
DEFAULT_TAU = 1.0
DEFAULT_TROTTER_ORDER = 2
DEFAULT_TROTTER_R = 8


class QpufError(ValueError):
    pass


# ---------------------------------------------------------------------------
# instances


@dataclass(frozen=True, eq=False)
class QpufInstance:
    arch: str
    n_qubits: int
    seed: int
    params: dict = field(repr=False)
    m: int = DEFAULT_M
    f: int = DEFAULT_F
    tau: float = DEFAULT_TAU

    @property
    def device_id(self) -> str:
        return f"{self.arch}{self.n_qubits}-{self.seed:016x}"

    @property
    def params_digest(self) -> str:
        canon = {k: np.asarray(v).round(15).tolist() if not isinstance(v, str) else v for k, v in sorted(self.params.items())}
        blob = json.dumps([self.arch, self.n_qubits, self.m, self.f, self.tau, canon], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_dict(self) -> dict:
        """Public export; secret parameters are represented only by their digest."""
        return {
            "arch": self.arch,
            "n_qubits": self.n_qubits,
            "device_id": self.device_id,
            "seed": self.seed,
            "m": self.m,
            "f": self.f,
            "params_digest": self.params_digest,
        }

    def rates(self) -> np.ndarray:
        """Every sampled noise rate, flattened (for range checks)."""
        keys = [k for k in self.params if k.startswith("rate_")]
        return np.concatenate([np.ravel(self.params[k]) for k in sorted(keys)])


def _uniform_rates(r: np.random.Generator, *shape) -> np.ndarray:
    return r.uniform(RATE_LO, RATE_HI, size=shape)


def _gate_params(r: np.random.Generator, n: int) -> dict:
    return {
        "l1_order": np.array([r.permutation(3) for _ in range(n)]),
        "l1_angles": r.uniform(0, 2 * np.pi, size=(n, 3)),
        "l3_theta": r.uniform(0, 2 * np.pi, size=n),
        "l5_angles": r.uniform(-SMALL_ANGLE, SMALL_ANGLE, size=(n, 3)),
        "rate_amp": _uniform_rates(r, n),
        "rate_phase": _uniform_rates(r, n),
        "rate_depol": _uniform_rates(r, n),
    }


def build_params(arch: str, n: int, seed: int, m: int = DEFAULT_M, f: int = DEFAULT_F) -> dict:
    r = seeded_rng(int(seed), "params", arch, n)
    if arch == "D":
        return _gate_params(r, n)
    if arch == "MF":
        p = _gate_params(r, n)
        rounds = max(f, 1)
        p["fb_one"] = r.integers(0, 2, size=rounds)  # 0 -> H, 1 -> Rz(theta)
        p["fb_zero"] = r.integers(0, 3, size=rounds)  # 0 -> S, 1 -> small Rx, 2 -> small Ry
        p["fb_theta"] = r.uniform(0, 2 * np.pi, size=(rounds, n))
        p["fb_small"] = r.uniform(-SMALL_ANGLE, SMALL_ANGLE, size=(rounds, n))
        return p
    if arch == "L":
        return {
            "block_rot": r.uniform(-SMALL_ANGLE, SMALL_ANGLE, size=(m, n)),
            "rate_h": _uniform_rates(r, m, n),
            "rate_amp": _uniform_rates(r, m, n),
            "rate_phase": _uniform_rates(r, m, n),
            "rate_depol": _uniform_rates(r, m, n),
            "rate_collective": _uniform_rates(r, m),
            "rate_pair": _uniform_rates(r, m),
            "final_angles": r.uniform(0, 2 * np.pi, size=(n, 3)),
        }
    raise QpufError(f"unknown architecture {arch!r}; expected one of {ARCHS}")


def qgen(arch: str, n_qubits: int, master_seed: int, device_index: int, m: int = DEFAULT_M, f: int = DEFAULT_F, tau: float = DEFAULT_TAU) -> QpufInstance:
    """Generate instance ``device_index`` of a family seeded by ``master_seed``."""
    if n_qubits < 2:
        raise QpufError("instances need at least 2 qubits")
    if arch not in ARCHS:
        raise QpufError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
    if m < 1 or f < 0:
        raise QpufError("need m >= 1 and f >= 0")
    seed = instance_seed(master_seed, device_index)
    return QpufInstance(arch, n_qubits, seed, build_params(arch, n_qubits, seed, m, f), m, f, tau)


def jittered(instance: QpufInstance, rng: np.random.Generator, spread: float = 0.1) -> QpufInstance:
    """Copy with every noise rate scaled by an independent factor in ``[1-spread, 1+spread]``."""
    params = dict(instance.params)
    for k in sorted(params):
        if k.startswith("rate_"):
            v = np.asarray(params[k], dtype=float)
            params[k] = v * rng.uniform(1 - spread, 1 + spread, size=v.shape)
    return replace(instance, params=params)


def check_challenge(challenge: str, n: int | None = None) -> str:
    if not challenge or any(c not in "01" for c in challenge):
        raise QpufError(f"challenge must be a nonempty bitstring, got {challenge!r}")
    if n is not None and len(challenge) != n:
        raise QpufError(f"challenge has {len(challenge)} bits, instance has {n} qubits")
    return challenge


# ---------------------------------------------------------------------------
# D-QPUF


def dqpuf_noise_coeffs(challenge: str) -> tuple[float, float, float]:
    """Challenge-dependent ``(gamma_amp, gamma_phase, p_depol)``."""
    check_challenge(challenge)
    ones = challenge.count("1")
    zeros = challenge.count("0")
    return 0.01 + 0.005 * ones, 0.02 + 0.003 * zeros, 0.01 + 0.002 * (len(challenge) % 5)


_AXES = ("RX", "RY", "RZ")


def _encode(challenge: str) -> list[cc.Gate]:
    return [cc.Gate("X", (i,)) for i, b in enumerate(challenge) if b == "1"]


def _layer1(p: dict, n: int) -> list[cc.Gate]:
    out = []
    for q in range(n):
        for a in p["l1_order"][q]:
            out.append(cc.Gate(_AXES[a], (q,), p["l1_angles"][q][a]))
    return out


def _layer2(n: int) -> list[cc.Gate]:
    return [cc.Gate("CX", (q, q + 1)) for q in range(0, n - 1, 2)]


def _layer3(p: dict, n: int) -> list[cc.Gate]:
    out = []
    for q in range(n):
        r = q % 4
        if r == 1:
            out.append(cc.Gate("H", (q,)))
        elif r == 3:
            out.append(cc.Gate("S", (q,)))
        elif r == 0:
            out.append(cc.Gate("RZ", (q,), p["l3_theta"][q]))
        else:
            out.append(cc.Gate("RY", (q,), p["l3_theta"][q]))
    return out


def layer4(challenge: str) -> list[cc.Gate]:
    """Even number of ones: CX chain ``0->1->...``; odd: CX star out of qubit 0."""
    n = len(challenge)
    if challenge.count("1") % 2 == 0:
        return [cc.Gate("CX", (q, q + 1)) for q in range(n - 1)]
    return [cc.Gate("CX", (0, q)) for q in range(1, n)]


def _layer5(p: dict, n: int) -> list[cc.Gate]:
    return [cc.Gate(_AXES[a], (q,), p["l5_angles"][q][a]) for q in range(n) for a in range(3)]


RATE_MID = 0.5 * (RATE_LO + RATE_HI)


def qubit_noise_params(instance: QpufInstance, challenge: str, qubit: int) -> tuple[float, float, float]:
    """Per-qubit ``(amp, phase, depol)``: challenge coefficients times the qubit's secret factor.

    The factor is the sampled rate divided by the midpoint of the sampling
    interval, so it averages to 1 over devices.
    """
    p = instance.params
    amp, phase, depol = dqpuf_noise_coeffs(challenge)
    return (
        min(1.0, amp * p["rate_amp"][qubit] / RATE_MID),
        min(1.0, phase * p["rate_phase"][qubit] / RATE_MID),
        min(1.0, depol * p["rate_depol"][qubit] / RATE_MID),
    )


def _noise_layer(instance: QpufInstance, challenge: str, scale: float) -> list[cc.ChannelOp]:
    out = []
    for q in range(instance.n_qubits):
        amp, phase, depol = qubit_noise_params(instance, challenge, q)
        # depolarizing first, then dephasing, then damping
        out.append(cc.noise("DEPOL", scale * depol, q))
        out.append(cc.noise("PD", scale * phase, q))
        out.append(cc.noise("AD", scale * amp, q))
    return out


def _require(instance: QpufInstance, arch: str) -> None:
    if instance.arch != arch:
        raise QpufError(f"expected a {arch} instance, got {instance.arch}")


def _readout(n: int, offset: int = 0) -> cc.Readout:
    return cc.Readout(tuple(range(n)), tuple(range(offset, offset + n)))


def _layers_d(instance: QpufInstance, challenge: str):
    p = instance.params
    n = instance.n_qubits
    return [
        _layer1(p, n),
        _layer2(n),
        _layer3(p, n),
        layer4(challenge),
        _layer5(p, n),
    ]


def dqpuf_build(instance: QpufInstance, challenge: str, noise_scale: float = 1.0, encode: bool = True) -> cc.Circuit:
    """Five-layer dissipative circuit; ``noise_scale=0`` removes every noise channel.

    With ``encode=False`` the challenge-flipping X gates are omitted, which
    leaves the channel that acts on an arbitrary input state.
    """
    _require(instance, "D")
    n = instance.n_qubits
    check_challenge(challenge, n)
    ops: list = list(_encode(challenge)) if encode else []
    for layer in _layers_d(instance, challenge):
        ops += layer
        if noise_scale:
            ops += _noise_layer(instance, challenge, noise_scale)
    ops.append(_readout(n))
    return cc.Circuit(n, tuple(ops))


def dqpuf_single_qubit_channel(instance: QpufInstance, qubit: int = 0, challenge: str | None = None) -> ch.KrausChannel:
    """One qubit's share of the D-QPUF map: layer-1 rotations interleaved with its noise stacks.

    This is the single-qubit channel used for small-scale learnability studies.
    """
    _require(instance, "D")
    p = instance.params
    challenge = challenge if challenge is not None else "0" * instance.n_qubits
    stack = ch.noise_stack(*qubit_noise_params(instance, challenge, qubit))
    u = np.eye(2, dtype=complex)
    for a in p["l1_order"][qubit]:
        u = cc.rotation(_AXES[a], p["l1_angles"][qubit][a]) @ u
    return ch.compose(stack, ch.unitary_channel(u))


# ---------------------------------------------------------------------------
# MF-QPUF


def measured_qubit(n: int, k: int) -> int:
    """Qubit measured in feedback round ``k`` (1-based)."""
    return (n // 2 + (k - 1)) % n


def _feedback_targets(n: int, measured: int, parity: int) -> list[int]:
    targets = [q for q in range(n) if q != measured and q % 2 == parity]
    return targets or [q for q in range(n) if q != measured]


def _feedback_gates(instance: QpufInstance, k: int, outcome: int, targets: list[int]) -> list[cc.Gate]:
    p = instance.params
    i = k - 1
    if outcome == 1:
        if p["fb_one"][i] == 0:
            return [cc.Gate("H", (q,)) for q in targets]
        return [cc.Gate("RZ", (q,), p["fb_theta"][i][q]) for q in targets]
    rule = p["fb_zero"][i]
    if rule == 0:
        return [cc.Gate("S", (q,)) for q in targets]
    axis = "RX" if rule == 1 else "RY"
    return [cc.Gate(axis, (q,), p["fb_small"][i][q]) for q in targets]


def mfqpuf_build(
    instance: QpufInstance,
    challenge: str,
    identity_feedback: bool = False,
    encode: bool = True,
    dissipative: bool = False,
) -> cc.Circuit:
    """D-style layers with ``f`` measure-and-feedback rounds between layers 2 and 3.

    Round ``k`` stores its outcome in classical slot ``k-1``; the terminal
    readout uses slots ``f..f+n-1``. ``identity_feedback=True`` keeps the
    measurements but drops the conditioned gates. The measurements are the
    only source of mixing unless ``dissipative=True`` also inserts the
    challenge-dependent noise layers; with that flag and ``f=0`` the result
    equals ``dqpuf_build``.
    """
    _require(instance, "MF")
    n = instance.n_qubits
    check_challenge(challenge, n)
    layers = _layers_d(instance, challenge)
    noise_ops = _noise_layer(instance, challenge, 1.0) if dissipative else []
    ops: list = list(_encode(challenge)) if encode else []
    for layer in layers[:2]:
        ops += layer + noise_ops
    for k in range(1, instance.f + 1):
        q = measured_qubit(n, k)
        ops.append(cc.Measure((q,), (k - 1,)))
        if not identity_feedback:
            for outcome, parity in ((1, 1), (0, 0)):
                gates = _feedback_gates(instance, k, outcome, _feedback_targets(n, q, parity))
                ops.append(cc.Conditional(k - 1, outcome, tuple(gates)))
    for layer in layers[2:]:
        ops += layer + noise_ops
    ops.append(_readout(n, instance.f))
    return cc.Circuit(n, tuple(ops))


# ---------------------------------------------------------------------------
# L-QPUF


def lindblad_window(instance: QpufInstance, k: int) -> lb.LindbladGenerator:
    """Generator of window ``k``: weak transverse field plus the instance's jump set."""
    _require(instance, "L")
    p = instance.params
    n = instance.n_qubits
    H = np.zeros((1 << n, 1 << n), dtype=complex)
    for q in range(n):
        H += p["rate_h"][k][q] * embed_operator(ch.X, (q,), n)
    jumps = []
    for q in range(n):
        jumps.append(lb.jump_amplitude_damping(q, n, p["rate_amp"][k][q]))
        jumps.append(lb.jump_dephasing(q, n, p["rate_phase"][k][q]))
        jumps += lb.jump_depolarizing_set(q, n, p["rate_depol"][k][q])
    jumps.append(lb.jump_collective("Z", None, n, p["rate_collective"][k]))
    jumps.append(lb.jump_pairwise("Z", [(q, q + 1) for q in range(n - 1)], n, p["rate_pair"][k]))
    return lb.LindbladGenerator(H, tuple(jumps))


def _lqpuf_stages(instance: QpufInstance, challenge: str, encode: bool = True) -> list:
    p = instance.params
    n = instance.n_qubits
    chain = [cc.Gate("CX", (q, q + 1)) for q in range(n - 1)]
    prep = _encode(challenge) if encode else []
    stages: list = [("gates", prep + [cc.Gate("H", (q,)) for q in range(n)] + chain)]
    for k in range(instance.m):
        rot = [cc.Gate("RY", (q,), p["block_rot"][k][q]) for q in range(n)]
        stages.append(("gates", rot + chain))
        stages.append(("window", k))
    final = [cc.Gate(_AXES[a], (q,), p["final_angles"][q][a]) for q in range(n) for a in (2, 1, 0)]
    stages.append(("gates", final))
    return stages


_STEPPERS: dict = {}


def _stepper(instance: QpufInstance, k: int, order: int, r: int, dense: bool):
    key = (instance.device_id, instance.params_digest, k, order, r, dense)
    st = _STEPPERS.get(key)
    if st is None:
        gen = lindblad_window(instance, k)
        if dense:
            prop = lb.expm(instance.tau * lb.liouvillian_dense(gen))
            st = lambda rho: (prop @ rho.reshape(-1)).reshape(rho.shape)  # noqa: E731
        else:
            st = lb.TrotterStepper(gen, lb.TrotterPlan(order, instance.tau, r), grouping="per_qubit").apply
        if len(_STEPPERS) > 256:
            _STEPPERS.clear()
        _STEPPERS[key] = st
    return st


def lqpuf_eval(
    instance: QpufInstance,
    challenge: str,
    order: int = DEFAULT_TROTTER_ORDER,
    r: int = DEFAULT_TROTTER_R,
    noise: cc.NoisePolicy | None = None,
    method: str = "trotter",
    rho0: DensityMatrix | None = None,
) -> DensityMatrix:
    """Pre-measurement state of the layered open-system map.

    ``method="dense"`` evaluates each window with the exact Liouvillian
    exponential (small ``n`` only) and serves as a reference. Passing
    ``rho0`` replaces the challenge-encoded input state with ``rho0``.
    """
    _require(instance, "L")
    n = instance.n_qubits
    check_challenge(challenge, n)
    if method not in ("trotter", "dense"):
        raise QpufError(f"unknown method {method!r}")
    if rho0 is not None and rho0.n_qubits != n:
        raise QpufError("input state width does not match the instance")
    rho = np.array((rho0 if rho0 is not None else DensityMatrix.basis("0" * n)).mat)
    for kind, payload in _lqpuf_stages(instance, challenge, encode=rho0 is None):
        if kind == "gates":
            rho = cc.apply_gates_array(rho, payload, n, noise)
        else:
            rho = _stepper(instance, payload, order, r, method == "dense")(rho)
    return DensityMatrix(rho, check=False)


def implied_channel(instance: QpufInstance, challenge: str):
    """The map ``rho_in -> rho_out`` that the instance applies for ``challenge``.

    Challenge-dependent structure (noise strength, entangling pattern) is kept;
    only the X-gate encoding of the challenge is replaced by the input state.
    """
    n = instance.n_qubits
    check_challenge(challenge, n)
    if instance.arch == "L":
        return lambda rho: lqpuf_eval(instance, challenge, rho0=rho)
    build = dqpuf_build if instance.arch == "D" else mfqpuf_build
    circ = build(instance, challenge, encode=False)
    body = cc.Circuit(n, circ.ops[:-1])
    return lambda rho: cc.run_exact(body, rho).state


def extract_rotation_encoding(rho: DensityMatrix) -> list[tuple[float, float]]:
    """Per-qubit ``(theta_y, theta_z)`` of the reduced Bloch vector direction."""
    out = []
    for q in range(rho.n_qubits):
        rx, ry, rz = bloch_vector(partial_trace(rho, [q]))
        norm = math.sqrt(rx * rx + ry * ry + rz * rz)
        theta_y = 0.0 if norm < 1e-12 else math.acos(min(1.0, max(-1.0, rz / norm)))
        theta_z = 0.0 if norm < 1e-12 else math.atan2(ry, rx)
        out.append((theta_y, theta_z))
    return out


# ---------------------------------------------------------------------------
# evaluation


@dataclass(frozen=True)
class Response:
    bits: str
    histogram: dict
    shots: int


@dataclass
class Evaluation:
    """Exact outcome distribution of one (instance, challenge) and its pre-readout state."""

    state: DensityMatrix
    probs: np.ndarray  # indexed by terminal bitstring, qubit 0 most significant
    n_branches: int = 1


def majority_vote(histogram: dict, n: int) -> str:
    """Per-position majority; an exact tie resolves to 0."""
    shots = sum(histogram.values())
    ones = np.zeros(n, dtype=np.int64)
    for key, cnt in histogram.items():
        ones += cnt * np.array([c == "1" for c in key], dtype=np.int64)
    return "".join("1" if 2 * o > shots else "0" for o in ones)


def _backend(instance: QpufInstance, profile: BackendProfile | None):
    if profile is None:
        return None, None
    n = instance.n_qubits
    if n > profile.n_qubits:
        raise QpufError(f"profile {profile.name} has {profile.n_qubits} qubits, need {n}")
    sub = profile.subset(profile.topology.connected_subset(n))
    return sub, ProfileNoise(sub)


def evaluate(instance: QpufInstance, challenge: str, profile: BackendProfile | None = None, trotter: tuple[int, int] | None = None) -> Evaluation:
    """Exact (shot-free) evaluation, optionally under a backend noise profile."""
    n = instance.n_qubits
    check_challenge(challenge, n)
    sub, policy = _backend(instance, profile)
    if instance.arch in ("D", "MF"):
        circ = dqpuf_build(instance, challenge) if instance.arch == "D" else mfqpuf_build(instance, challenge)
        if sub is not None:
            circ = cc.route(circ, sub.topology)
        res = cc.run_exact(circ, DensityMatrix.basis("0" * n), policy)
        keys = [format(v, f"0{n}b") for v in range(1 << n)]
        probs = np.array([res.distribution.get(k, 0.0) for k in keys])
        return Evaluation(res.state, probs, len(res.ledger))
    order, r = trotter or (DEFAULT_TROTTER_ORDER, DEFAULT_TROTTER_R)
    rho = lqpuf_eval(instance, challenge, order, r, noise=policy)
    m = np.array(rho.mat)
    if policy is not None:
        for chan, qs in policy.before_measure(range(n)):
            m = ch.apply_local(chan, m, qs, n)
    probs = np.clip(np.real(np.diag(m)), 0.0, None)
    if policy is not None:
        probs = policy.readout(range(n)).R @ probs
    return Evaluation(rho, probs / probs.sum())


def sample_response(ev: Evaluation, n: int, shots: int, seed: int) -> Response:
    if shots < 1:
        raise QpufError("shots must be positive")
    counts = np.random.default_rng(seed).multinomial(shots, ev.probs)
    hist = {format(int(v), f"0{n}b"): int(counts[v]) for v in np.nonzero(counts)[0]}
    return Response(majority_vote(hist, n), hist, shots)


def qeval(
    instance: QpufInstance,
    challenge: str,
    shots: int,
    seed: int,
    profile: BackendProfile | None = None,
    trotter: tuple[int, int] | None = None,
) -> Response:
    """Challenge -> response: exact evaluation, ``shots`` samples, majority vote."""
    ev = evaluate(instance, challenge, profile, trotter)
    return sample_response(ev, instance.n_qubits, shots, seed)


def output_purity(instance: QpufInstance, challenge: str) -> float:
    return purity(evaluate(instance, challenge).state)


def histogram_digest(hist: dict) -> str:
    blob = ",".join(f"{k}:{v}" for k, v in sorted(hist.items()))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]

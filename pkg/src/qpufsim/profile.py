"""Synthetic backend noise profiles built from published calibration statistics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import channel as ch
from .circuit import Gate, NoisePolicy, Topology, ladder_topology, path_topology, star_topology
from .seeding import rng as seeded_rng

# name: (n_qubits, topology factory, {param: (mean, sd, min, max)}); times in us, readout in %
CALIBRATION = {
    "athens": (5, lambda: path_topology(5), {
        "t1": (75.78, 8.03, 57.47, 103.87),
        "t2": (90.46, 12.68, 50.98, 125.23),
        "readout": (2.45, 2.93, 1.27, 24.06),
    }),
    "santiago": (5, lambda: star_topology(5, 0), {
        "t1": (133.14, 13.63, 83.59, 163.19),
        "t2": (123.33, 17.01, 55.7, 165.09),
        "readout": (1.95, 0.77, 0.98, 5.59),
    }),
    "melbourne": (15, ladder_topology, {
        "t1": (55.02, 2.04, 47.78, 60.45),
        "t2": (59.87, 4.73, 44.39, 70.79),
        "readout": (7.02, 1.09, 4.1, 10.16),
    }),
}
# published pure-dephasing column, used as a cross-check only
PUBLISHED_TPHI = {"athens": 224.39, "santiago": 229.73, "melbourne": 131.32}

PROFILE_SEED = 20240917
T1Q_US, T2Q_US, TRO_US = 0.05, 0.3, 1.0


class ProfileError(ValueError):
    pass


def pure_dephasing_time(t1: float, t2: float) -> float:
    """``1/T_phi = 1/T2 - 1/(2 T1)``; ``inf`` when there is no pure dephasing."""
    if t1 <= 0 or t2 <= 0:
        raise ProfileError("T1 and T2 must be positive")
    rate = 1.0 / t2 - 1.0 / (2.0 * t1)
    if rate <= 1e-12:
        return math.inf
    return 1.0 / rate


@dataclass(frozen=True)
class BackendProfile:
    name: str
    topology: Topology
    t1: tuple
    t2: tuple
    readout_error: tuple
    t1q: float = T1Q_US
    t2q: float = T2Q_US
    tro: float = TRO_US

    def __post_init__(self):
        n = self.topology.n_physical
        for field_ in ("t1", "t2", "readout_error"):
            vals = tuple(float(v) for v in getattr(self, field_))
            if len(vals) != n:
                raise ProfileError(f"{field_} needs {n} values")
            object.__setattr__(self, field_, vals)
        for a, b, e in zip(self.t1, self.t2, self.readout_error):
            if a <= 0 or b <= 0:
                raise ProfileError("T1 and T2 must be positive")
            if b > 2 * a + 1e-9:
                raise ProfileError(f"T2={b} exceeds 2*T1={2 * a}")
            if not 0 <= e <= 0.5:
                raise ProfileError("readout error must lie in [0, 0.5]")
        if min(self.t1q, self.t2q, self.tro) < 0:
            raise ProfileError("durations must be non-negative")

    @property
    def n_qubits(self) -> int:
        return self.topology.n_physical

    def t_phi(self, qubit: int) -> float:
        return pure_dephasing_time(self.t1[qubit], self.t2[qubit])

    def subset(self, nodes: Sequence[int]) -> "BackendProfile":
        """Profile restricted to ``nodes``, relabelled ``0..len(nodes)-1``."""
        pick = lambda vals: tuple(vals[q] for q in nodes)  # noqa: E731
        return BackendProfile(
            self.name, self.topology.induced(nodes), pick(self.t1), pick(self.t2),
            pick(self.readout_error), self.t1q, self.t2q, self.tro,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_qubits": self.n_qubits,
            "edges": sorted([list(e) for e in self.topology.edges]),
            "qubits": [
                {"t1_us": a, "t2_us": b, "readout_error": e}
                for a, b, e in zip(self.t1, self.t2, self.readout_error)
            ],
            "durations": {"t1q_us": self.t1q, "t2q_us": self.t2q, "tro_us": self.tro},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackendProfile":
        try:
            topo = Topology(int(d["n_qubits"]), frozenset(tuple(e) for e in d["edges"]))
            qs = d["qubits"]
            dur = d.get("durations", {})
            return cls(
                d["name"], topo,
                tuple(q["t1_us"] for q in qs), tuple(q["t2_us"] for q in qs),
                tuple(q["readout_error"] for q in qs),
                dur.get("t1q_us", T1Q_US), dur.get("t2q_us", T2Q_US), dur.get("tro_us", TRO_US),
            )
        except (KeyError, TypeError) as exc:
            raise ProfileError(f"malformed profile: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _truncated_normal(rng: np.random.Generator, mean, sd, lo, hi) -> float:
    for _ in range(10000):
        x = rng.normal(mean, sd)
        if lo <= x <= hi:
            return float(x)
    raise ProfileError("truncated normal rejection sampling did not converge")


def synthesize(name: str, seed: int = PROFILE_SEED) -> BackendProfile:
    if name not in CALIBRATION:
        raise ProfileError(f"unknown profile {name!r}; choose from {sorted(CALIBRATION)}")
    n, topo, stats = CALIBRATION[name]
    rng = seeded_rng(int(seed), "profile", name)
    t1, t2, ro = [], [], []
    for _ in range(n):
        a = _truncated_normal(rng, *stats["t1"])
        b = _truncated_normal(rng, *stats["t2"])
        while b > 2 * a:  # keep T2 <= 2 T1
            b = _truncated_normal(rng, *stats["t2"])
        t1.append(a)
        t2.append(b)
        ro.append(_truncated_normal(rng, *stats["readout"]) / 100.0)
    return BackendProfile(name, topo(), tuple(t1), tuple(t2), tuple(ro))


_BUILTIN: dict[str, BackendProfile] = {}


def builtin_profiles() -> dict[str, BackendProfile]:
    if not _BUILTIN:
        for name in CALIBRATION:
            _BUILTIN[name] = synthesize(name)
    return dict(_BUILTIN)


def get_profile(name: str) -> BackendProfile:
    profiles = builtin_profiles()
    if name not in profiles:
        raise ProfileError(f"unknown profile {name!r}; choose from {sorted(profiles)}")
    return profiles[name]


def gate_noise(profile: BackendProfile, qubit: int, duration: float) -> ch.KrausChannel:
    """Thermal-relaxation-free decay over ``duration``: ``AD o PD``."""
    if not 0 <= qubit < profile.n_qubits:
        raise IndexError(f"qubit {qubit} out of range for profile {profile.name}")
    if duration < 0:
        raise ProfileError("duration must be non-negative")
    p_ad = 1.0 - math.exp(-duration / profile.t1[qubit])
    tphi = profile.t_phi(qubit)
    q = 0.0 if math.isinf(tphi) else 0.5 * (1.0 - math.exp(-duration / tphi))
    return ch.compose(ch.amplitude_damping(p_ad), ch.phase_damping(q))


def readout_noise(profile: BackendProfile, qubits: Sequence[int] | None = None) -> ch.ReadoutMatrix:
    qubits = range(profile.n_qubits) if qubits is None else qubits
    return ch.ReadoutMatrix.symmetric([profile.readout_error[q] for q in qubits])


class ProfileNoise(NoisePolicy):
    """Executor noise hooks driven by a backend profile (qubit indices are the profile's)."""

    def __init__(self, profile: BackendProfile):
        self.profile = profile
        self._cache: dict = {}

    def _chan(self, q: int, duration: float) -> ch.KrausChannel:
        key = (q, duration)
        if key not in self._cache:
            self._cache[key] = gate_noise(self.profile, q, duration)
        return self._cache[key]

    def after_gate(self, gate: Gate):
        dur = self.profile.t2q if len(gate.targets) == 2 else self.profile.t1q
        return [(self._chan(q, dur), (q,)) for q in gate.targets]

    def before_measure(self, qubits):
        return [(self._chan(q, self.profile.tro), (q,)) for q in qubits]

    def readout(self, qubits):
        return readout_noise(self.profile, qubits)

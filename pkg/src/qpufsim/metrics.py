"""Quantum and classical PUF quality metrics and report serialization."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .qstate import DensityMatrix, trace_distance, trace_norm

CSV_HEADER = ["arch", "n_qubits", "metric", "value", "instances", "challenges", "shots", "repeats", "seed"]


class MetricsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# quantum metrics (density matrices)


def uniformity_quantum(outputs: Sequence[DensityMatrix]) -> float:
    """Mean ``||rho - I/d||_1`` (unhalved trace norm); 0 is ideal."""
    if not outputs:
        raise MetricsError("need at least one output state")
    d = outputs[0].dim
    if any(o.dim != d for o in outputs):
        raise MetricsError("outputs must share one dimension")
    mixed = np.eye(d) / d
    return float(np.mean([trace_norm(o.mat - mixed) for o in outputs]))


def uniqueness_quantum(outputs_i: Sequence[DensityMatrix], outputs_j: Sequence[DensityMatrix]) -> float:
    """Mean ``||rho_i - rho_j||_1`` over aligned challenges; 2 is ideal."""
    if len(outputs_i) != len(outputs_j) or not outputs_i:
        raise MetricsError("device output lists must be nonempty and aligned")
    vals = []
    for a, b in zip(outputs_i, outputs_j):
        if a.dim != b.dim:
            raise MetricsError("dimension mismatch")
        vals.append(trace_norm(a.mat - b.mat))
    return float(np.mean(vals))


def reliability_quantum(rounds: Sequence[Sequence[DensityMatrix]]) -> float:
    """``1 - mean D`` over all pairs of rounds, challenge by challenge."""
    if len(rounds) < 2:
        raise MetricsError("reliability needs at least two rounds")
    m = len(rounds[0])
    if any(len(r) != m for r in rounds) or m == 0:
        raise MetricsError("rounds must be nonempty and aligned")
    ds = [trace_distance(a[c], b[c]) for a, b in combinations(rounds, 2) for c in range(m)]
    return float(1.0 - np.mean(ds))


# ---------------------------------------------------------------------------
# classical metrics (bitstring responses)


def _bits(responses) -> np.ndarray:
    rows = [r.bits if hasattr(r, "bits") else r for r in responses]
    if not rows:
        raise MetricsError("no responses")
    if len({len(r) for r in rows}) != 1:
        raise MetricsError("responses must share one length")
    return np.array([[c == "1" for c in r] for r in rows], dtype=bool)


def uniformity_classical(responses) -> float:
    """Percentage of 1-bits across every response bit."""
    b = _bits(responses)
    ones, total = int(b.sum()), b.size
    # compute the minority side and complement it, so flipped responses sum to 100 exactly
    minority = 100.0 * min(ones, total - ones) / total
    return minority if 2 * ones <= total else 100.0 - minority


def uniqueness_classical(device_responses) -> float:
    """Mean pairwise normalized Hamming distance between devices, in percent."""
    if len(device_responses) < 2:
        raise MetricsError("uniqueness needs at least two devices")
    mats = [_bits(r) for r in device_responses]
    if len({m.shape for m in mats}) != 1:
        raise MetricsError("device response lists must be aligned")
    # pairs in fixed order; mean of per-pair means equals the grand mean since shapes agree
    stack = np.stack(mats).astype(np.int64)  # (devices, challenges, bits)
    k = stack.shape[0]
    ones = stack.sum(axis=0)  # per (challenge, bit) count of 1s among devices
    disagreeing_pairs = ones * (k - ones)
    return float(100.0 * disagreeing_pairs.mean() / (k * (k - 1) / 2))


def reliability_classical(golden, rounds) -> float:
    """Mean per-bit agreement with the golden responses, in percent."""
    g = _bits(golden)
    if not rounds:
        raise MetricsError("need at least one repeat round")
    agree = []
    for r in rounds:
        b = _bits(r)
        if b.shape != g.shape:
            raise MetricsError("round is not aligned with golden responses")
        agree.append((b == g).mean())
    return float(100.0 * np.mean(agree))


# ---------------------------------------------------------------------------
# reports


@dataclass
class MetricsReport:
    arch: str
    n_qubits: int
    uniformity_pct: float
    uniqueness_pct: float
    reliability_pct: float
    uniformity_q: float | None = None
    uniqueness_q: float | None = None
    reliability_q: float | None = None
    instances: int = 0
    challenges: int = 0
    shots: int = 0
    repeats: int = 0
    seed: int = 0
    profile: str = "ideal"
    config_digest: str = ""
    extra: dict = field(default_factory=dict)

    METRICS = ("uniformity_pct", "uniqueness_pct", "reliability_pct", "uniformity_q", "uniqueness_q", "reliability_q")

    def rows(self) -> list[list]:
        out = []
        for m in self.METRICS:
            v = getattr(self, m)
            if v is None:
                continue
            out.append([self.arch, self.n_qubits, m, f"{v:.10g}", self.instances, self.challenges, self.shots, self.repeats, self.seed])
        return out

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(**d)


def reports_to_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerows(r.rows())
    return buf.getvalue()


def reports_to_json(reports: Sequence[MetricsReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"


def reports_from_json(text: str) -> list[MetricsReport]:
    return [MetricsReport.from_dict(d) for d in json.loads(text)]

"""Experiment orchestration: configuration, seeding, CRP archives, reports and plot data."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as M
from . import qpuf as Q
from .profile import CALIBRATION, BackendProfile, builtin_profiles, get_profile
from .seeding import challenge_seed, rng, shot_seed

SCHEMA_VERSION = 1
MAX_DENSITY_QUBITS = 8
CRP_HEADER = ["device_id", "challenge", "response", "shots", "histogram_digest", "seed", "round"]


class ConfigError(ValueError):
    pass


class GuardError(RuntimeError):
    pass


@dataclass
class ExperimentConfig:
    arch: list = field(default_factory=lambda: ["L"])
    n_qubits: list = field(default_factory=lambda: [2, 4, 6, 8])
    n_instances: int = 50
    n_challenges: int = 100
    shots: int = 10000
    repeats: int = 5
    master_seed: int = 0
    profile: str = "ideal"
    m: int = Q.DEFAULT_M
    f: int = Q.DEFAULT_F
    rate_jitter: bool = False
    trotter_order: int = Q.DEFAULT_TROTTER_ORDER
    trotter_r: int = Q.DEFAULT_TROTTER_R
    quantum_metrics: bool = True
    out_dir: str = "results"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if isinstance(self.arch, str):
            self.arch = [self.arch]
        if isinstance(self.n_qubits, int):
            self.n_qubits = [self.n_qubits]
        self.arch = [str(a) for a in self.arch]
        self.n_qubits = [int(n) for n in self.n_qubits]
        self.validate()

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version}")
        for a in self.arch:
            if a not in Q.ARCHS:
                raise ConfigError(f"unknown architecture {a!r}")
        if not self.arch or not self.n_qubits:
            raise ConfigError("arch and n_qubits must be nonempty")
        for name in ("n_instances", "n_challenges", "shots", "repeats", "m", "trotter_r"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.f < 0:
            raise ConfigError("f must be non-negative")
        if self.trotter_order not in (1, 2):
            raise ConfigError("trotter_order must be 1 or 2")
        if any(n < 2 for n in self.n_qubits):
            raise ConfigError("n_qubits entries must be at least 2")
        if self.profile != "ideal" and self.profile not in CALIBRATION:
            raise ConfigError(f"unknown profile {self.profile!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
        try:
            return cls.from_dict(json.loads(text))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigError(f"invalid config {path}: {exc}") from exc

    def digest(self) -> str:
        d = self.to_dict()
        d.pop("out_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def check_guard(n_qubits) -> None:
    big = [n for n in n_qubits if n > MAX_DENSITY_QUBITS]
    if big:
        raise GuardError(
            f"n={max(big)} exceeds the {MAX_DENSITY_QUBITS}-qubit limit of density-matrix simulation "
            f"(memory grows as 4^n)"
        )


def sample_challenges(master_seed: int, n: int, count: int) -> list[str]:
    """Challenges shared by every instance; without replacement when the space allows."""
    r = rng(challenge_seed(master_seed), n)
    space = 1 << n
    idx = r.choice(space, size=count, replace=count > space)
    return [format(int(i), f"0{n}b") for i in idx]


@dataclass
class CrpRecord:
    device_id: str
    challenge: str
    response: str
    shots: int
    histogram_digest: str
    seed: int
    round: int

    def row(self) -> list:
        return [self.device_id, self.challenge, self.response, self.shots, self.histogram_digest, self.seed, self.round]


def crps_to_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CRP_HEADER)
    w.writerows(r.row() for r in records)
    return buf.getvalue()


def crps_from_csv(text: str) -> list[CrpRecord]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CRP_HEADER:
        raise ConfigError("CRP archive has an unexpected header")
    return [
        CrpRecord(r["device_id"], r["challenge"], r["response"], int(r["shots"]), r["histogram_digest"], int(r["seed"]), int(r["round"]))
        for r in reader
    ]


def classical_metrics(records) -> dict:
    """Uniformity, uniqueness and reliability from CRP records of one (arch, n) group."""
    # challenges may repeat (sampled with replacement), so responses are kept in archive order
    devices: dict[str, dict[int, list[str]]] = {}
    for r in records:
        devices.setdefault(r.device_id, {}).setdefault(r.round, []).append(r.response)
    order = list(devices)
    golden = [devices[d][0] for d in order]
    rounds = sorted({k for d in order for k in devices[d] if k > 0})
    out = {"uniformity_pct": M.uniformity_classical([b for g in golden for b in g])}
    out["uniqueness_pct"] = M.uniqueness_classical(golden) if len(order) > 1 else float("nan")
    if rounds:
        rel = [
            M.reliability_classical(golden[i], [devices[d][k] for k in rounds])
            for i, d in enumerate(order)
        ]
        out["reliability_pct"] = float(np.mean(rel))
    else:
        out["reliability_pct"] = float("nan")
    return out


def _group_key(device_id: str) -> tuple[str, int]:
    head = device_id.split("-", 1)[0]
    arch = head.rstrip("0123456789")
    return arch, int(head[len(arch):])


def metrics_from_crps(records) -> dict:
    groups: dict = {}
    for r in records:
        groups.setdefault(_group_key(r.device_id), []).append(r)
    return {f"{a}:{n}": classical_metrics(rs) for (a, n), rs in groups.items()}


def _profile(config: ExperimentConfig) -> BackendProfile | None:
    return None if config.profile == "ideal" else get_profile(config.profile)


def run_group(config: ExperimentConfig, arch: str, n: int, progress=None):
    """One (arch, n) cell of an experiment: returns its report and CRP records."""
    prof = _profile(config)
    challenges = sample_challenges(config.master_seed, n, config.n_challenges)
    trotter = (config.trotter_order, config.trotter_r)
    records: list[CrpRecord] = []
    uq_unif: list[float] = []
    uq_uniq: list[float] = []
    uq_rel: list[float] = []
    prev_states = None
    for idx in range(config.n_instances):
        inst = Q.qgen(arch, n, config.master_seed, idx, m=config.m, f=config.f)
        states = []
        for c in challenges:
            ev = Q.evaluate(inst, c, prof, trotter)
            states.append(ev.state)
            round_states = [ev.state]
            for k in range(config.repeats + 1):
                seed = shot_seed(inst.seed, c, k)
                ev_k = ev
                if k > 0 and config.rate_jitter:
                    ev_k = Q.evaluate(Q.jittered(inst, rng(seed, "jitter")), c, prof, trotter)
                    round_states.append(ev_k.state)
                resp = Q.sample_response(ev_k, n, config.shots, seed)
                records.append(CrpRecord(inst.device_id, c, resp.bits, resp.shots, Q.histogram_digest(resp.histogram), seed, k))
            if config.quantum_metrics:
                uq_unif.append(M.uniformity_quantum([ev.state]))
                if config.rate_jitter:
                    uq_rel.append(M.reliability_quantum([[s] for s in round_states]))
        if config.quantum_metrics and prev_states is not None:
            uq_uniq.append(M.uniqueness_quantum(prev_states, states))
        prev_states = states
        if progress:
            progress(arch, n, idx)
    cm = classical_metrics(records)
    report = M.MetricsReport(
        arch=arch,
        n_qubits=n,
        uniformity_pct=cm["uniformity_pct"],
        uniqueness_pct=cm["uniqueness_pct"],
        reliability_pct=cm["reliability_pct"],
        uniformity_q=float(np.mean(uq_unif)) if uq_unif else None,
        uniqueness_q=float(np.mean(uq_uniq)) if uq_uniq else None,
        reliability_q=(float(np.mean(uq_rel)) if uq_rel else 1.0) if config.quantum_metrics else None,
        instances=config.n_instances,
        challenges=config.n_challenges,
        shots=config.shots,
        repeats=config.repeats,
        seed=config.master_seed,
        profile=config.profile,
        config_digest=config.digest(),
    )
    return report, records


def run_experiment(config: ExperimentConfig, write: bool = True, progress=None):
    """Every (arch, n) cell of ``config``; optionally persisted under ``config.out_dir``."""
    check_guard(config.n_qubits)
    prof = _profile(config)
    if prof is not None:
        for n in config.n_qubits:
            if n > prof.n_qubits:
                raise ConfigError(f"profile {prof.name} has only {prof.n_qubits} qubits, n={n} requested")
    reports, records = [], []
    for arch in config.arch:
        for n in config.n_qubits:
            rep, rec = run_group(config, arch, n, progress)
            reports.append(rep)
            records.extend(rec)
    if write:
        save_archive(config, reports, records)
    return reports, records


def save_archive(config: ExperimentConfig, reports, records) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(config.to_json())
    (out / "crps.csv").write_text(crps_to_csv(records))
    (out / "reports.json").write_text(M.reports_to_json(reports))
    (out / "reports.csv").write_text(M.reports_to_csv(reports))
    return out


def load_reports(archive) -> list[M.MetricsReport]:
    path = Path(archive) / "reports.json"
    if not path.exists():
        raise ConfigError(f"no reports.json in {archive}")
    return M.reports_from_json(path.read_text())


def emit_plot_data(archive, out_dir) -> list[Path]:
    """Per-metric series (x = n_qubits) and histograms of the built-in profile parameters."""
    reports = load_reports(archive)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for metric in M.MetricsReport.METRICS:
        rows = [
            (f"{r.arch}/{r.profile}", r.n_qubits, getattr(r, metric))
            for r in reports
            if getattr(r, metric) is not None
        ]
        if not rows:
            continue
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["group", "n_qubits", "value"])
        for g, n, v in sorted(rows, key=lambda t: (t[0], t[1])):
            w.writerow([g, n, f"{v:.10g}"])
        path = out / f"series_{metric}.csv"
        path.write_text(buf.getvalue())
        written.append(path)
    written += write_profile_histograms(out)
    return written


def write_profile_histograms(out_dir, bins: int = 10) -> list[Path]:
    out = Path(out_dir)
    written = []
    for name, prof in builtin_profiles().items():
        stats = CALIBRATION[name][2]
        values = {"t1": prof.t1, "t2": prof.t2, "readout": [100 * e for e in prof.readout_error]}
        for param, vals in values.items():
            lo, hi = stats[param][2], stats[param][3]
            counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "count"])
            for a, b, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([f"{a:.6g}", f"{b:.6g}", int(c)])
            path = out / f"hist_{name}_{param}.csv"
            path.write_text(buf.getvalue())
            written.append(path)
    return written


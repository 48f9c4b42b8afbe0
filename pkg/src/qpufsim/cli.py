"""Command-line entry point.

Exit codes: 0 success, 1 usage or input error, 2 resource-guard violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness as H
from . import metrics as M
from . import qpuf as Q
from . import tomography as T
from .channel import ChannelError, ChoiMatrix
from .circuit import CircuitError
from .profile import ProfileError, builtin_profiles, get_profile


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _global(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (all randomness flows from it)")
    p.add_argument("--profile", default="ideal", help="'ideal' or a built-in backend profile")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--config", default=None, help="JSON experiment config")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qpufsim", description="Quantum PUF simulator")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", help="create an instance and export its public record")
    _global(p)
    p.add_argument("--arch", choices=Q.ARCHS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("-m", type=int, default=Q.DEFAULT_M)
    p.add_argument("-f", type=int, default=Q.DEFAULT_F)

    p = sub.add_parser("eval", help="evaluate a single challenge")
    _global(p)
    p.add_argument("--arch", choices=Q.ARCHS, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--challenge", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--shots", type=int, default=10000)
    p.add_argument("-m", type=int, default=Q.DEFAULT_M)
    p.add_argument("-f", type=int, default=Q.DEFAULT_F)

    p = sub.add_parser("experiment", help="full multi-instance experiment")
    _global(p)
    p.add_argument("--arch", nargs="+", choices=Q.ARCHS)
    p.add_argument("--n", type=int, nargs="+")
    p.add_argument("--instances", type=int)
    p.add_argument("--challenges", type=int)
    p.add_argument("--shots", type=int)
    p.add_argument("--repeats", type=int)
    p.add_argument("--jitter", action="store_true", help="jitter noise rates on repeat rounds")

    p = sub.add_parser("metrics", help="recompute classical metrics from a CRP archive")
    _global(p)
    p.add_argument("archive")

    p = sub.add_parser("tomography", help="process tomography of an instance's single-qubit channel")
    _global(p)
    p.add_argument("--arch", choices=["D"], default="D")
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--qubit", type=int, default=0)
    p.add_argument("--shots", type=int, default=None, help="shots per setting (omit for exact statistics)")

    p = sub.add_parser("profiles", help="list or export built-in backend profiles")
    _global(p)
    p.add_argument("name", nargs="?")

    p = sub.add_parser("plotdata", help="write plot-ready CSV series from an archive")
    _global(p)
    p.add_argument("archive")
    return parser


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _profile(name: str):
    return None if name == "ideal" else get_profile(name)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def cmd_gen(a) -> None:
    inst = Q.qgen(a.arch, a.n, a.seed, a.index, m=a.m, f=a.f)
    _emit(_dumps(inst.to_dict()), a.out)


def cmd_eval(a) -> None:
    H.check_guard([a.n])
    inst = Q.qgen(a.arch, a.n, a.seed, a.index, m=a.m, f=a.f)
    Q.check_challenge(a.challenge, a.n)
    seed = H.shot_seed(inst.seed, a.challenge, 0)
    resp = Q.qeval(inst, a.challenge, a.shots, seed, _profile(a.profile))
    rec = {
        "device_id": inst.device_id,
        "challenge": a.challenge,
        "response": resp.bits,
        "shots": resp.shots,
        "histogram": dict(sorted(resp.histogram.items())),
        "seed": seed,
    }
    _emit(_dumps(rec), a.out)


def _experiment_config(a) -> H.ExperimentConfig:
    base = H.ExperimentConfig.load(a.config).to_dict() if a.config else H.ExperimentConfig().to_dict()
    overrides = {
        "arch": a.arch, "n_qubits": a.n, "n_instances": a.instances, "n_challenges": a.challenges,
        "shots": a.shots, "repeats": a.repeats, "out_dir": a.out,
    }
    for k, v in overrides.items():
        if v is not None:
            base[k] = v
    if a.jitter:
        base["rate_jitter"] = True
    if not a.config or a.seed:
        base["master_seed"] = a.seed
    if not a.config or a.profile != "ideal":
        base["profile"] = a.profile
    return H.ExperimentConfig.from_dict(base)


def cmd_experiment(a) -> None:
    cfg = _experiment_config(a)
    reports, _ = H.run_experiment(cfg, write=True)
    sys.stdout.write(M.reports_to_csv(reports))


def cmd_metrics(a) -> None:
    path = Path(a.archive)
    crp = path / "crps.csv" if path.is_dir() else path
    if not crp.exists():
        raise UsageError(f"no CRP archive at {a.archive}")
    res = H.metrics_from_crps(H.crps_from_csv(crp.read_text()))
    _emit(_dumps(res), a.out)


def cmd_tomography(a) -> None:
    inst = Q.qgen(a.arch, a.n, a.seed, a.index)
    chan = Q.dqpuf_single_qubit_channel(inst, a.qubit)
    job = T.TomographyJob(chan, 1, a.shots, a.seed)
    est = job.run()
    truth = ChoiMatrix.from_superop(chan.superop)
    Mb, t = T.affine_bloch_form(est)
    rec = {
        "device_id": inst.device_id,
        "qubit": a.qubit,
        "shots_per_setting": a.shots,
        "total_shots": job.total_shots,
        "choi_error": round(T.choi_error(est, truth), 12),
        "bloch_M": np.round(Mb, 10).tolist(),
        "bloch_t": np.round(t, 10).tolist(),
        "params_unitary": T.parameter_count("unitary", 1),
        "params_cptp": T.parameter_count("cptp", 1),
    }
    _emit(_dumps(rec), a.out)


def cmd_profiles(a) -> None:
    if a.name:
        _emit(get_profile(a.name).to_json() + "\n", a.out)
        return
    lines = []
    for name, prof in builtin_profiles().items():
        lines.append(
            f"{name}\t{prof.n_qubits} qubits\tT1 {np.mean(prof.t1):.2f} us\tT2 {np.mean(prof.t2):.2f} us\t"
            f"readout {100 * np.mean(prof.readout_error):.2f} %"
        )
    _emit("\n".join(lines) + "\n", a.out)


def cmd_plotdata(a) -> None:
    out = a.out or str(Path(a.archive) / "plots")
    for p in H.emit_plot_data(a.archive, out):
        sys.stdout.write(f"{p}\n")


COMMANDS = {
    "gen": cmd_gen, "eval": cmd_eval, "experiment": cmd_experiment, "metrics": cmd_metrics,
    "tomography": cmd_tomography, "profiles": cmd_profiles, "plotdata": cmd_plotdata,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args)
    except H.GuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, H.ConfigError, Q.QpufError, ProfileError, CircuitError, ChannelError, T.TomographyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    return 0


if __name__ == "__main__":
    sys.exit(main())

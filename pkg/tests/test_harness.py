import json

import pytest

from qpufsim import harness as H
from qpufsim import metrics as M


def small(tmp_path, **kw):
    base = dict(arch=["D", "MF", "L"], n_qubits=[2, 3], n_instances=3, n_challenges=4,
                shots=200, repeats=2, out_dir=str(tmp_path / "run"))
    base.update(kw)
    return H.ExperimentConfig(**base)


def test_config_defaults():
    c = H.ExperimentConfig()
    assert (c.n_instances, c.n_challenges, c.shots, c.repeats) == (50, 100, 10000, 5)
    assert c.m == 2 and c.f == 1 and not c.rate_jitter
    assert c.schema_version == H.SCHEMA_VERSION


@pytest.mark.parametrize(
    "bad",
    [{"n_instances": 0}, {"shots": 0}, {"arch": ["Z"]}, {"profile": "nairobi"}, {"trotter_order": 3},
     {"n_qubits": [1]}, {"schema_version": 99}, {"f": -1}],
)
def test_config_validation(bad):
    with pytest.raises(H.ConfigError):
        H.ExperimentConfig(**bad)


def test_config_roundtrip(tmp_path):
    c = small(tmp_path)
    p = tmp_path / "cfg.json"
    p.write_text(c.to_json())
    assert H.ExperimentConfig.load(p) == c
    with pytest.raises(H.ConfigError):
        H.ExperimentConfig.load(tmp_path / "missing.json")
    with pytest.raises(H.ConfigError):
        H.ExperimentConfig.from_dict({"bogus": 1})
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(H.ConfigError):
        H.ExperimentConfig.load(tmp_path / "broken.json")


def test_digest_ignores_out_dir(tmp_path):
    a = small(tmp_path)
    b = small(tmp_path, out_dir="elsewhere")
    assert a.digest() == b.digest()
    assert a.digest() != small(tmp_path, master_seed=1).digest()


def test_guard():
    H.check_guard([2, 8])
    with pytest.raises(H.GuardError):
        H.check_guard([4, 9])
    with pytest.raises(H.GuardError):
        H.run_experiment(H.ExperimentConfig(n_qubits=[12]), write=False)


def test_challenge_sampling():
    cs = H.sample_challenges(0, 3, 8)
    assert sorted(cs) == [format(i, "03b") for i in range(8)]
    assert H.sample_challenges(0, 3, 8) == cs
    many = H.sample_challenges(0, 2, 10)
    assert len(many) == 10 and set(many) <= {"00", "01", "10", "11"}
    few = H.sample_challenges(1, 6, 20)
    assert len(set(few)) == 20


def test_run_is_deterministic(tmp_path):
    c1 = small(tmp_path, out_dir=str(tmp_path / "a"))
    c2 = small(tmp_path, out_dir=str(tmp_path / "b"))
    H.run_experiment(c1)
    H.run_experiment(c2)
    for name in ("crps.csv", "reports.csv", "reports.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_archive_contents(tmp_path):
    cfg = small(tmp_path)
    reports, records = H.run_experiment(cfg)
    assert len(reports) == 6
    assert len(records) == 6 * 3 * 4 * (2 + 1)
    out = tmp_path / "run"
    assert json.loads((out / "config.json").read_text())["n_instances"] == 3
    back = H.crps_from_csv((out / "crps.csv").read_text())
    assert back == records
    assert H.load_reports(out) == reports
    for r in reports:
        assert 0 <= r.uniformity_pct <= 100 and 0 <= r.uniqueness_pct <= 100
        assert 0 <= r.reliability_pct <= 100
        assert r.uniformity_q >= 0 and 0 <= r.uniqueness_q <= 2 and r.reliability_q == 1.0


def test_metrics_from_archive_match_memory(tmp_path):
    reports, records = H.run_experiment(small(tmp_path), write=True)
    recomputed = H.metrics_from_crps(H.crps_from_csv((tmp_path / "run" / "crps.csv").read_text()))
    for r in reports:
        got = recomputed[f"{r.arch}:{r.n_qubits}"]
        assert got["uniformity_pct"] == r.uniformity_pct
        assert got["uniqueness_pct"] == r.uniqueness_pct
        assert got["reliability_pct"] == r.reliability_pct


def test_repeated_challenges_are_kept(tmp_path):
    # 6 challenges over a 4-element space must still yield 6 responses per round
    cfg = small(tmp_path, arch=["D"], n_qubits=[2], n_challenges=6)
    _, records = H.run_experiment(cfg, write=False)
    golden = [r for r in records if r.round == 0]
    assert len(golden) == 3 * 6


def test_exhaustive_crp_archive_size(tmp_path):
    n = 4
    cfg = small(tmp_path, arch=["D"], n_qubits=[n], n_instances=1, n_challenges=2**n, repeats=1)
    _, records = H.run_experiment(cfg, write=False)
    golden = [r for r in records if r.round == 0]
    assert len(golden) == 2**n
    assert {r.challenge for r in golden} == {format(i, f"0{n}b") for i in range(2**n)}
    assert all(len(r.response) == n for r in golden)


def test_jitter_changes_repeat_rounds(tmp_path):
    cfg = small(tmp_path, arch=["D"], n_qubits=[2], rate_jitter=True)
    reports, _ = H.run_experiment(cfg, write=False)
    assert reports[0].reliability_q < 1.0


def test_profile_size_check(tmp_path):
    with pytest.raises(H.ConfigError):
        H.run_experiment(small(tmp_path, n_qubits=[6], profile="santiago"), write=False)


def test_plot_data_single_report(tmp_path):
    rep = M.MetricsReport("D", 2, 49.0, 50.0, 97.0)
    arch = tmp_path / "arch"
    arch.mkdir()
    (arch / "reports.json").write_text(M.reports_to_json([rep]))
    H.emit_plot_data(arch, tmp_path / "plots")
    lines = (tmp_path / "plots" / "series_uniformity_pct.csv").read_text().splitlines()
    assert lines == ["group,n_qubits,value", "D/ideal,2,49"]
    assert not (tmp_path / "plots" / "series_uniformity_q.csv").exists()


def test_plot_data_twelve_points(tmp_path):
    reps = [M.MetricsReport(a, n, 50.0, 50.0, 95.0) for a in ("D", "MF", "L") for n in (2, 4, 6, 8)]
    arch = tmp_path / "arch"
    arch.mkdir()
    (arch / "reports.json").write_text(M.reports_to_json(reps))
    H.emit_plot_data(arch, tmp_path / "plots")
    for metric in ("uniformity_pct", "uniqueness_pct", "reliability_pct"):
        lines = (tmp_path / "plots" / f"series_{metric}.csv").read_text().splitlines()
        assert len(lines) == 1 + 12


def test_plot_histograms_cover_calibration_range(tmp_path):
    from qpufsim.profile import CALIBRATION

    H.write_profile_histograms(tmp_path)
    for name, (_, _, stats) in CALIBRATION.items():
        for param in ("t1", "t2", "readout"):
            rows = (tmp_path / f"hist_{name}_{param}.csv").read_text().splitlines()[1:]
            lo = float(rows[0].split(",")[0])
            hi = float(rows[-1].split(",")[1])
            assert lo == pytest.approx(stats[param][2]) and hi == pytest.approx(stats[param][3])
            n = CALIBRATION[name][0]
            assert sum(int(r.split(",")[2]) for r in rows) == n


def test_plot_data_missing_archive(tmp_path):
    with pytest.raises(H.ConfigError):
        H.emit_plot_data(tmp_path / "nope", tmp_path / "plots")

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpufsim import channel as ch
from qpufsim import circuit as cc
from qpufsim.circuit import Circuit, Conditional, Gate, Measure, Readout
from qpufsim.qstate import DensityMatrix, purity, random_density, random_pure
from strategies import angles, seeds

PLUS = DensityMatrix.from_vector(np.array([1, 1]) / np.sqrt(2))
BELL = DensityMatrix.from_vector(np.array([1, 0, 0, 1]) / np.sqrt(2))


def tv(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0) - q.get(k, 0)) for k in keys)


@pytest.mark.parametrize("kind", sorted(cc.GATE_KINDS))
def test_gate_matrices_unitary(kind):
    theta = 0.37 if kind in ("RX", "RY", "RZ") else None
    targets = (0, 1) if kind in cc.TWO_QUBIT else (0,)
    u = Gate(kind, targets, theta).matrix()
    np.testing.assert_allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-12)


def test_rotation_convention():
    theta = 0.8
    np.testing.assert_allclose(cc.rotation("RZ", theta), np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)]))
    np.testing.assert_allclose(Gate("S", (0,)).matrix(), np.diag([1, 1j]))


def test_gate_validation():
    with pytest.raises(cc.CircuitError):
        Gate("CX", (0,))
    with pytest.raises(cc.CircuitError):
        Gate("RX", (0,))
    with pytest.raises(cc.CircuitError):
        Gate("H", (0,), 0.1)
    with pytest.raises(cc.CircuitError):
        Gate("FOO", (0,))
    with pytest.raises(cc.CircuitError):
        Gate("CX", (1, 1))


def test_apply_gate_examples():
    assert cc.apply_gate(DensityMatrix.basis("0"), Gate("H", (0,))).allclose(PLUS)
    assert cc.apply_gate(DensityMatrix.basis("10"), Gate("CX", (0, 1))).allclose(DensityMatrix.basis("11"))
    assert cc.apply_gate(DensityMatrix.basis("0"), Gate("RZ", (0,), 1.1)).allclose(DensityMatrix.basis("0"))
    with pytest.raises(IndexError):
        cc.apply_gate(DensityMatrix.basis("0"), Gate("X", (3,)))


def test_measure_examples():
    out = cc.measure(PLUS, [0])
    assert [(b, round(p, 12)) for b, p, _ in out] == [("0", 0.5), ("1", 0.5)]
    assert out[0][2].allclose(DensityMatrix.basis("0"))
    assert out[1][2].allclose(DensityMatrix.basis("1"))
    out = cc.measure(DensityMatrix.basis("0"), [0])
    assert len(out) == 1 and out[0][0] == "0" and out[0][1] == pytest.approx(1)
    out = cc.measure(BELL, [0])
    assert [b for b, _, _ in out] == ["0", "1"]
    assert out[0][2].allclose(DensityMatrix.basis("00"))
    assert out[1][2].allclose(DensityMatrix.basis("11"))


@given(seeds, st.sampled_from([[0], [1], [0, 2], [2, 1, 0]]))
def test_measure_probabilities_sum_to_one(seed, qubits):
    rho = random_density(3, np.random.default_rng(seed))
    out = cc.measure(rho, qubits)
    assert sum(p for _, p, _ in out) == pytest.approx(1, abs=1e-10)
    for _, _, post in out:
        assert np.trace(post.mat).real == pytest.approx(1, abs=1e-10)


def test_run_exact_no_measurements():
    c = Circuit(2, [Gate("H", (0,)), Gate("CX", (0, 1))])
    res = cc.run_exact(c, DensityMatrix.basis("00"))
    assert res.ledger == [("", pytest.approx(1.0))]
    assert res.state.allclose(BELL)


def test_identity_feedback_dephases_plus():
    c = Circuit(1, [Gate("H", (0,)), Measure((0,), (0,))])
    res = cc.run_exact(c, DensityMatrix.basis("0"))
    assert res.state.allclose(DensityMatrix.maximally_mixed(1), atol=1e-15)


def test_branch_count_two_rounds():
    c = Circuit(
        2,
        [
            Gate("H", (0,)),
            Measure((0,), (0,)),
            Conditional(0, 1, (Gate("H", (1,)),)),
            Gate("H", (0,)),
            Measure((0,), (1,)),
            Readout((0, 1), (2, 3)),
        ],
    )
    res = cc.run_exact(c, DensityMatrix.basis("00"))
    assert [o for o, _ in res.ledger] == ["00", "01", "10", "11"]
    assert sum(p for _, p in res.ledger) == pytest.approx(1)
    assert sum(res.distribution.values()) == pytest.approx(1)


def test_conditional_applies_only_on_match():
    c = Circuit(2, [Gate("X", (0,)), Measure((0,), (0,)), Conditional(0, 1, (Gate("X", (1,)),)), Readout((0, 1), (1, 2))])
    res = cc.run_exact(c, DensityMatrix.basis("00"))
    assert res.distribution["11"] == pytest.approx(1.0)
    c0 = Circuit(2, [Measure((0,), (0,)), Conditional(0, 1, (Gate("X", (1,)),)), Readout((0, 1), (1, 2))])
    assert cc.run_exact(c0, DensityMatrix.basis("00")).distribution["00"] == pytest.approx(1.0)


def test_circuit_validation():
    with pytest.raises(cc.CircuitError):
        Circuit(1, [Conditional(0, 1, (Gate("X", (0,)),))])
    with pytest.raises(cc.CircuitError):
        Circuit(1, [Gate("X", (1,))])
    with pytest.raises(cc.CircuitError):
        Circuit(1, [Readout((0,), (0,)), Gate("X", (0,))])


def test_run_sampled_examples():
    c = Circuit(1, [Readout((0,), (0,))])
    assert cc.run_sampled(c, DensityMatrix.basis("0"), 1000, seed=3) == {"0": 1000}
    c = Circuit(1, [Gate("H", (0,)), Readout((0,), (0,))])
    hist = cc.run_sampled(c, DensityMatrix.basis("0"), 10000, seed=4)
    assert abs(hist["0"] - 5000) <= 150
    assert hist == cc.run_sampled(c, DensityMatrix.basis("0"), 10000, seed=4)
    with pytest.raises(cc.CircuitError):
        cc.run_sampled(Circuit(1, [Gate("H", (0,))]), DensityMatrix.basis("0"), 10, seed=0)


@st.composite
def small_circuits(draw):
    n = draw(st.integers(1, 3))
    ops = []
    slots = 0
    for _ in range(draw(st.integers(1, 8))):
        choice = draw(st.sampled_from(["rot", "cx", "noise", "measure", "cond"]))
        q = draw(st.integers(0, n - 1))
        if choice == "rot":
            ops.append(Gate(draw(st.sampled_from(["RX", "RY", "RZ"])), (q,), draw(angles)))
        elif choice == "cx" and n > 1:
            r = draw(st.integers(0, n - 1).filter(lambda x: x != q))
            ops.append(Gate("CX", (q, r)))
        elif choice == "noise":
            ops.append(cc.noise("AD", draw(st.floats(0, 1)), q))
        elif choice == "measure" and slots < 2:
            ops.append(Measure((q,), (slots,)))
            slots += 1
        elif choice == "cond" and slots:
            ops.append(Conditional(slots - 1, draw(st.integers(0, 1)), (Gate("H", (q,)),)))
    ops.append(Readout(tuple(range(n)), tuple(range(slots, slots + n))))
    return Circuit(n, ops)


@given(small_circuits(), seeds)
def test_exact_matches_sampled(circ, seed):
    rho0 = DensityMatrix.basis("0" * circ.n_qubits)
    exact = cc.run_exact(circ, rho0).distribution
    hist = cc.run_sampled(circ, rho0, 100_000, seed)
    assert tv(exact, {k: v / 100_000 for k, v in hist.items()}) <= 0.02


@given(st.lists(st.tuples(st.sampled_from(["RX", "RY", "RZ", "H", "CX"]), st.integers(0, 2), angles), max_size=12), seeds)
def test_unitary_circuits_preserve_purity(spec, seed):
    ops = []
    for kind, q, th in spec:
        if kind == "CX":
            ops.append(Gate("CX", (q, (q + 1) % 3)))
        elif kind == "H":
            ops.append(Gate("H", (q,)))
        else:
            ops.append(Gate(kind, (q,), th))
    rho0 = random_pure(3, np.random.default_rng(seed)).to_density()
    res = cc.run_exact(Circuit(3, ops), rho0)
    assert purity(res.state) == pytest.approx(1, abs=1e-9)


def test_noise_policy_hooks():
    class Flip(cc.NoisePolicy):
        def readout(self, qubits):
            return ch.ReadoutMatrix.symmetric([0.1] * len(qubits))

    c = Circuit(1, [Readout((0,), (0,))])
    res = cc.run_exact(c, DensityMatrix.basis("0"), Flip())
    assert res.distribution["1"] == pytest.approx(0.1)


def test_topologies():
    star = cc.star_topology(5, 0)
    assert star.degree(0) == 4
    ladder = cc.ladder_topology()
    assert ladder.n_physical == 15 and ladder.adjacent(13, 14) and ladder.adjacent(0, 7)
    with pytest.raises(cc.CircuitError):
        cc.Topology(3, frozenset({(0, 1)}))
    with pytest.raises(cc.CircuitError):
        cc.Topology(2, frozenset({(0, 0), (0, 1)}))
    assert cc.path_topology(5).shortest_path(0, 3) == [0, 1, 2, 3]


def test_route_respecting_circuit_unchanged():
    c = Circuit(3, [Gate("CX", (0, 1)), Gate("CX", (1, 2))])
    routed = cc.route(c, cc.path_topology(3))
    assert routed.ops == c.ops


def test_route_path_example():
    c = Circuit(3, [Gate("CX", (0, 2))])
    routed = cc.route(c, cc.path_topology(3))
    assert [g.targets for g in routed.gates()] == [(0, 1), (1, 0), (0, 1), (1, 2)]


def test_route_star_example():
    c = Circuit(5, [Gate("CX", (1, 4))])
    routed = cc.route(c, cc.star_topology(5, 0))
    assert routed.count("CX") == 4
    assert [g.targets for g in routed.gates()] == [(1, 0), (0, 1), (1, 0), (0, 4)]
    for g in routed.gates():
        assert cc.star_topology(5, 0).adjacent(*g.targets)


@given(small_circuits(), st.sampled_from(["path", "star"]))
def test_routing_preserves_distribution(circ, shape):
    n = circ.n_qubits
    topo = cc.path_topology(4) if shape == "path" else cc.star_topology(4, 0)
    routed = cc.route(circ, topo)
    for g in routed.gates():
        if len(g.targets) == 2:
            assert topo.adjacent(*g.targets)
    a = cc.run_exact(circ, DensityMatrix.basis("0" * n)).distribution
    b = cc.run_exact(routed, DensityMatrix.basis("0000")).distribution
    for k in set(a) | set(b):
        assert a.get(k, 0) == pytest.approx(b.get(k, 0), abs=1e-10)


def test_text_roundtrip():
    text = """QUBITS 3
# comment
RY q0 1.5708
CX q0 q1
MEASURE q2 -> c0
COND c0==1: H q1; RZ q0 0.25
NOISE AD 0.02 q1
READOUT q0 q1 -> c1 c2
"""
    c = cc.loads(text)
    assert c.n_qubits == 3 and len(c.ops) == 6
    again = cc.loads(cc.dumps(c))
    assert cc.dumps(again) == cc.dumps(c)
    rho0 = DensityMatrix.basis("000")
    assert cc.run_exact(again, rho0).distribution == cc.run_exact(c, rho0).distribution


@pytest.mark.parametrize(
    "text",
    ["", "CX q0 q1", "QUBITS 2\nFOO q0", "QUBITS 2\nCX q0", "QUBITS 1\nCOND c0==1: X q0", "QUBITS 1\nNOISE XX 0.1 q0"],
)
def test_loads_rejects(text):
    with pytest.raises(cc.CircuitError):
        cc.loads(text)


@given(small_circuits(), seeds)
def test_exact_matches_shot_by_shot(circ, seed):
    rho0 = DensityMatrix.basis("0" * circ.n_qubits)
    exact = cc.run_exact(circ, rho0).distribution
    hist = cc.run_shots(circ, rho0, 100_000, seed)
    assert sum(hist.values()) == 100_000
    assert tv(exact, {k: v / 100_000 for k, v in hist.items()}) <= 0.02


def test_run_shots_collapse():
    # measuring |+> then CX copies the outcome, so only 00 and 11 survive
    circ = Circuit(2, [Gate("H", (0,)), Measure((0,), (0,)), Conditional(0, 1, (Gate("X", (1,)),)), Readout((0, 1), (1, 2))])
    hist = cc.run_shots(circ, DensityMatrix.basis("00"), 2000, 4)
    assert set(hist) == {"00", "11"}
    assert abs(hist["00"] - 1000) < 3 * np.sqrt(500)
    with pytest.raises(cc.CircuitError):
        cc.run_shots(Circuit(1, [Gate("H", (0,))]), DensityMatrix.basis("0"), 10, 0)

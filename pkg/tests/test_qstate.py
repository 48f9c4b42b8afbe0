import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm as scipy_expm

from qpufsim.qstate import (
    DensityMatrix,
    PureState,
    StateError,
    apply_superop,
    apply_unitary,
    bloch_vector,
    embed_operator,
    expm,
    expm_hermitian,
    fidelity,
    hermitian_eig,
    kraus_to_superop,
    partial_trace,
    purity,
    random_density,
    tensor,
    trace_distance,
    trace_norm,
)

from strategies import densities, seeds

ZERO = DensityMatrix.basis("0")
ONE = DensityMatrix.basis("1")
MIXED = DensityMatrix.maximally_mixed(1)
BELL = DensityMatrix.from_vector(np.array([1, 0, 0, 1]) / np.sqrt(2))


def test_tensor_basis_product():
    assert tensor(ZERO, ZERO).allclose(DensityMatrix.basis("00"))


def test_tensor_with_trivial_factor():
    rho = random_density(1, np.random.default_rng(0))
    scalar = DensityMatrix(np.eye(1))
    assert scalar.n_qubits == 0
    assert tensor(rho, scalar).allclose(rho)


def test_tensor_mixed():
    assert tensor(MIXED, MIXED).allclose(DensityMatrix.maximally_mixed(2))


def test_tensor_qubit_order():
    # qubit 0 of the left factor is the most significant bit
    rho = tensor(ONE, ZERO)
    assert rho.mat[0b10, 0b10] == 1


def test_partial_trace_examples():
    assert partial_trace(DensityMatrix.basis("00"), [0]).allclose(ZERO)
    assert partial_trace(BELL, [0]).allclose(MIXED)
    assert partial_trace(BELL, [1]).allclose(MIXED)
    rho = random_density(2, np.random.default_rng(3))
    assert partial_trace(rho, [0, 1]).allclose(rho)


def test_partial_trace_bad_index():
    with pytest.raises(IndexError):
        partial_trace(BELL, [2])


@given(densities(1), densities(2))
def test_tensor_then_trace_recovers(a, b):
    joint = tensor(a, b)
    np.testing.assert_allclose(partial_trace(joint, [0]).mat, a.mat, atol=1e-12)
    np.testing.assert_allclose(partial_trace(joint, [1, 2]).mat, b.mat, atol=1e-12)
    assert abs(np.trace(partial_trace(joint, [2]).mat) - 1) < 1e-12


def test_fidelity_examples():
    rho = random_density(2, np.random.default_rng(5))
    assert fidelity(rho, rho) == pytest.approx(1, abs=1e-9)
    assert fidelity(ZERO, ONE) == pytest.approx(0, abs=1e-12)
    assert fidelity(ZERO, MIXED) == pytest.approx(0.5, abs=1e-12)


def test_trace_distance_examples():
    assert trace_distance(ZERO, ZERO) == 0
    assert trace_distance(ZERO, ONE) == pytest.approx(1)
    assert trace_distance(ZERO, MIXED) == pytest.approx(0.5)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        fidelity(ZERO, BELL)
    with pytest.raises(ValueError):
        trace_distance(ZERO, BELL)


def test_purity_examples():
    assert purity(BELL) == pytest.approx(1)
    assert purity(MIXED) == pytest.approx(0.5)
    assert purity(DensityMatrix.maximally_mixed(2)) == pytest.approx(0.25)


@given(densities(2), densities(2))
def test_fidelity_trace_distance_bound(rho, sigma):
    F = fidelity(rho, sigma)
    assert 0 <= F <= 1
    assert 1 - F <= trace_distance(rho, sigma) + 1e-9
    assert fidelity(sigma, rho) == pytest.approx(F, abs=1e-9)


@given(densities(1), densities(1), densities(1))
def test_trace_distance_is_metric(a, b, c):
    assert trace_distance(a, b) == trace_distance(b, a)
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-9


def test_validation_rejects_bad_states():
    with pytest.raises(StateError):
        DensityMatrix(np.array([[0.5, 0.1], [0.0, 0.5]]))
    with pytest.raises(StateError):
        DensityMatrix(np.eye(2))
    with pytest.raises(StateError):
        DensityMatrix(np.diag([1.5, -0.5]))
    with pytest.raises(StateError):
        PureState([1, 1])
    # tiny negative eigenvalues are tolerated
    DensityMatrix(np.diag([1 + 5e-11, -5e-11]))


def test_density_is_immutable():
    with pytest.raises(ValueError):
        ZERO.mat[0, 0] = 0


@pytest.mark.parametrize("d", [2, 16, 256])
def test_hermitian_eig_reconstructs(d):
    r = np.random.default_rng(d)
    a = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
    h = a + a.conj().T
    w, v = hermitian_eig(h)
    assert np.linalg.norm((v * w) @ v.conj().T - h) < 1e-9


def test_expm_against_taylor_oracle():
    # independent oracle: truncated Taylor series of a small-norm matrix
    r = np.random.default_rng(7)
    a = 0.1 * (r.normal(size=(8, 8)) + 1j * r.normal(size=(8, 8)))
    series, term = np.eye(8, dtype=complex), np.eye(8, dtype=complex)
    for k in range(1, 30):
        term = term @ a / k
        series = series + term
    assert np.linalg.norm(expm(a) - series) / np.linalg.norm(series) < 1e-10


def test_expm_hermitian_matches_general():
    r = np.random.default_rng(8)
    a = r.normal(size=(4, 4)) + 1j * r.normal(size=(4, 4))
    h = a + a.conj().T
    np.testing.assert_allclose(expm_hermitian(h, -0.3j), scipy_expm(-0.3j * h), atol=1e-10)


def test_trace_norm():
    assert trace_norm(np.diag([0.5, -0.5])) == pytest.approx(1)


@given(seeds, st.sampled_from([[0], [1], [2], [0, 2], [2, 0], [1, 2]]))
def test_local_application_matches_embedding(seed, qubits):
    r = np.random.default_rng(seed)
    n = 3
    k = len(qubits)
    rho = random_density(n, r).mat
    a = r.normal(size=(1 << k, 1 << k)) + 1j * r.normal(size=(1 << k, 1 << k))
    u, _ = np.linalg.qr(a)
    full = embed_operator(u, qubits, n)
    np.testing.assert_allclose(apply_unitary(rho, u, qubits, n), full @ rho @ full.conj().T, atol=1e-12)
    sop = kraus_to_superop([u])
    np.testing.assert_allclose(apply_superop(rho, sop, qubits, n), full @ rho @ full.conj().T, atol=1e-12)


def test_embed_operator_order():
    x = np.array([[0, 1], [1, 0]])
    np.testing.assert_array_equal(embed_operator(x, [0], 2), np.kron(x, np.eye(2)))
    np.testing.assert_array_equal(embed_operator(x, [1], 2), np.kron(np.eye(2), x))


def test_bloch_vector_plus():
    plus = DensityMatrix.from_vector(np.array([1, 1]) / np.sqrt(2))
    np.testing.assert_allclose(bloch_vector(plus), [1, 0, 0], atol=1e-12)
    yplus = DensityMatrix.from_vector(np.array([1, 1j]) / np.sqrt(2))
    np.testing.assert_allclose(bloch_vector(yplus), [0, 1, 0], atol=1e-12)

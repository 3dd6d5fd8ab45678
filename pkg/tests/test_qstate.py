import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermowit.exceptions import DimensionError, DomainError, ValidationError
from thermowit.qstate import (
    DensityMatrix,
    Hamiltonian,
    average_energy,
    conditional_entropy,
    dephase,
    free_energy,
    gibbs_limit,
    gibbs_state,
    hermitian_spectrum,
    load_hamiltonian,
    load_state,
    log_partition,
    mutual_information,
    partial_trace,
    random_density_matrix,
    random_pure_state,
    random_separable_state,
    random_unitary,
    rel_entropy_of_coherence,
    relative_entropy,
    save_matrix,
    tensor_product,
    trace_distance,
    von_neumann_entropy,
)
from thermowit.witnesses import isotropic_state, lambda_crt

LOG2 = math.log(2)
H01 = Hamiltonian.diagonal([0.0, 1.0])
PLUS = DensityMatrix.pure(np.array([1, 1]) / math.sqrt(2))
BELL = DensityMatrix.pure(np.array([1, 0, 0, 1]) / math.sqrt(2), (2, 2))

seeds = st.integers(min_value=0, max_value=2**31 - 1)
dims = st.integers(min_value=1, max_value=5)


# --- types -------------------------------------------------------------------


class TestDensityMatrix:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValidationError, match="Hermitian"):
            DensityMatrix([[0.5, 0.1], [0.0, 0.5]])

    def test_rejects_bad_trace(self):
        with pytest.raises(ValidationError, match="trace"):
            DensityMatrix(np.eye(2))

    def test_rejects_negative_eigenvalue(self):
        with pytest.raises(ValidationError):
            DensityMatrix(np.diag([1.1, -0.1]))

    def test_clamps_float_noise(self):
        rho = DensityMatrix(np.diag([1.0 + 5e-10, -5e-10]))
        assert rho.eigenvalues.min() == 0.0

    def test_dims_must_match(self):
        with pytest.raises(DimensionError):
            DensityMatrix(np.eye(4) / 4, (2, 3))

    def test_matrix_is_read_only(self):
        rho = DensityMatrix(np.eye(2) / 2)
        with pytest.raises(ValueError):
            rho.matrix[0, 0] = 1.0


def test_hamiltonian_spectrum_sorted_and_diagonalizing():
    rng = np.random.default_rng(3)
    g = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    h = Hamiltonian(g + g.conj().T)
    assert np.all(np.diff(h.eigenvalues) >= 0)
    v = h.eigenbasis
    d = v.conj().T @ h.matrix @ v
    assert np.max(np.abs(d - np.diag(np.diag(d)))) <= 1e-9
    assert np.max(np.abs(h.spectrum.reconstruct() - h.matrix)) <= 1e-8


def test_spectrum_is_deterministic():
    a = np.array([[1.0, 0.3j], [-0.3j, 2.0]])
    s1, s2 = hermitian_spectrum(a), hermitian_spectrum(a.copy())
    assert np.array_equal(s1.eigenvectors, s2.eigenvectors)


def test_multiplicity():
    h = Hamiltonian.diagonal([0, 0, 1, 2, 2, 2])
    assert h.multiplicity("ground") == 2
    assert h.multiplicity("top") == 3


# --- composition ---------------------------------------------------------------


def test_tensor_product_examples():
    mixed = DensityMatrix(np.eye(2) / 2)
    assert np.allclose(tensor_product(mixed, mixed).matrix, np.eye(4) / 4)
    out = tensor_product(DensityMatrix(np.diag([1.0, 0.0])), DensityMatrix(np.diag([0.7, 0.3])))
    assert np.allclose(out.matrix, np.diag([0.7, 0.3, 0, 0]))
    assert out.dims == (2, 2)
    assert tensor_product(np.ones((2, 2)), np.ones((3, 3))).shape == (6, 6)


@given(seed=seeds, da=dims, db=dims)
@settings(max_examples=40, deadline=None)
def test_partial_trace_inverts_tensor_product(seed, da, db):
    a = random_density_matrix(da, seed)
    b = random_density_matrix(db, seed + 1)
    ab = tensor_product(a, b)
    assert np.max(np.abs(partial_trace(ab, [0]).matrix - a.matrix)) <= 1e-12
    assert np.max(np.abs(partial_trace(ab, [1]).matrix - b.matrix)) <= 1e-12


def test_partial_trace_keeps_order_of_three_parties():
    parts = [random_density_matrix(d, s) for d, s in ((2, 1), (3, 2), (2, 3))]
    joint = tensor_product(*parts)
    kept = partial_trace(joint, [0, 2])
    assert np.allclose(kept.matrix, tensor_product(parts[0], parts[2]).matrix, atol=1e-12)
    with pytest.raises(DimensionError):
        partial_trace(joint, [3])


# --- Gibbs states -------------------------------------------------------------------


def test_gibbs_state_zero_temperature_limits():
    h = Hamiltonian.diagonal([0.0, 1.0, 1.0])
    assert np.allclose(gibbs_limit(h, +1).matrix, np.diag([1, 0, 0]))
    assert np.allclose(gibbs_limit(h, -1).matrix, np.diag([0, 0.5, 0.5]))


def test_gibbs_state_extreme_inverse_temperature_is_finite():
    rho = gibbs_state(H01, 5e3)
    assert np.allclose(rho.matrix, np.diag([1.0, 0.0]))
    rho = gibbs_state(H01, -5e3)
    assert np.allclose(rho.matrix, np.diag([0.0, 1.0]))


@pytest.mark.parametrize("beta", [0.3, 1.0, 3.0])
def test_gibbs_free_energy_identity(beta):
    h = Hamiltonian.diagonal([0.0, 1.0, 2.0])
    g = gibbs_state(h, beta)
    assert free_energy(g, h, beta) == pytest.approx(-log_partition(h, beta) / beta, abs=1e-12)


# --- entropic functionals ------------------------------------------------------------


def test_entropy_examples():
    assert von_neumann_entropy(np.eye(4) / 4) == pytest.approx(math.log(4), abs=1e-12)
    assert von_neumann_entropy(PLUS) == pytest.approx(0.0, abs=1e-12)


def test_relative_entropy_examples():
    rho = random_density_matrix(3, 5)
    assert relative_entropy(rho, rho) == pytest.approx(0.0, abs=1e-10)
    zero = DensityMatrix(np.diag([1.0, 0.0]))
    assert relative_entropy(zero, np.eye(2) / 2) == pytest.approx(LOG2, abs=1e-12)
    assert relative_entropy(np.eye(2) / 2, zero) == math.inf


def test_conditional_entropy_examples():
    assert conditional_entropy(BELL, [0], [1]) == pytest.approx(-LOG2, abs=1e-12)
    mixed = DensityMatrix(np.eye(4) / 4, (2, 2))
    assert conditional_entropy(mixed, [0], [1]) == pytest.approx(LOG2, abs=1e-12)
    rho = isotropic_state(2, lambda_crt(2))
    assert abs(conditional_entropy(rho, [0], [1])) <= 1e-6
    with pytest.raises(DimensionError):
        conditional_entropy(BELL, [0], [0])


def test_mutual_information_examples():
    prod = tensor_product(random_density_matrix(2, 1), random_density_matrix(3, 2))
    assert mutual_information(prod, [0], [1]) == pytest.approx(0.0, abs=1e-10)
    assert mutual_information(BELL, [0], [1]) == pytest.approx(2 * LOG2, abs=1e-12)
    assert mutual_information(isotropic_state(2, 1.0), [0], [1]) == pytest.approx(0.0, abs=1e-12)


def test_average_energy_examples():
    assert average_energy(gibbs_state(H01, 0.0), H01) == pytest.approx(0.5)
    assert average_energy(np.diag([1.0, 0.0]), H01) == 0.0
    h = Hamiltonian.diagonal(np.add.outer(np.arange(3.0), np.arange(3.0)).ravel(), (3, 3))
    assert average_energy(isotropic_state(3, 0.4), h) == pytest.approx(2.0, abs=1e-12)


def test_average_energy_dimension_mismatch():
    with pytest.raises(DimensionError):
        average_energy(np.eye(3) / 3, H01)


def test_free_energy_examples():
    assert free_energy(np.diag([0.0, 1.0]), Hamiltonian.diagonal([0, 2.5]), 0.7) == pytest.approx(2.5)
    assert free_energy(np.eye(2) / 2, H01, 1.0) == pytest.approx(0.5 - LOG2, abs=1e-12)
    with pytest.raises(DomainError):
        free_energy(np.eye(2) / 2, H01, 0.0)


def test_dephase_examples():
    rho = DensityMatrix(np.diag([0.2, 0.8]))
    assert np.allclose(dephase(rho, H01).matrix, rho.matrix)
    assert np.allclose(dephase(PLUS, H01).matrix, np.eye(2) / 2)


def test_dephase_uses_hamiltonian_eigenbasis():
    h = Hamiltonian(np.array([[0.0, 1.0], [1.0, 0.0]]))
    plus = DensityMatrix.pure(np.array([1.0, 1.0]) / math.sqrt(2))
    assert np.allclose(dephase(plus, h).matrix, plus.matrix, atol=1e-12)


def test_coherence_examples():
    assert rel_entropy_of_coherence(np.diag([0.3, 0.7]), H01) == pytest.approx(0.0, abs=1e-12)
    assert rel_entropy_of_coherence(PLUS, H01) == pytest.approx(LOG2, abs=1e-12)


def test_trace_distance_examples():
    zero, one = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    assert trace_distance(zero, zero) == 0.0
    assert trace_distance(zero, one) == pytest.approx(2.0)
    assert trace_distance(np.diag([0.7, 0.3]), np.eye(2) / 2) == pytest.approx(0.4)
    with pytest.raises(DimensionError):
        trace_distance(zero, np.eye(3) / 3)


# --- properties ----------------------------------------------------------------------


@given(seed=seeds, d=st.integers(min_value=2, max_value=6))
@settings(max_examples=40, deadline=None)
def test_entropy_unitary_invariance(seed, d):
    rho = random_density_matrix(d, seed)
    u = random_unitary(d, seed + 7)
    rotated = DensityMatrix(u @ rho.matrix @ u.conj().T)
    assert von_neumann_entropy(rotated) == pytest.approx(von_neumann_entropy(rho), abs=1e-9)


@given(seed=seeds, da=st.integers(2, 3), db=st.integers(2, 3))
@settings(max_examples=40, deadline=None)
def test_subadditivity(seed, da, db):
    rho = random_density_matrix(da * db, seed)
    rho = DensityMatrix(rho.matrix, (da, db))
    s_a = von_neumann_entropy(partial_trace(rho, [0]))
    s_b = von_neumann_entropy(partial_trace(rho, [1]))
    assert von_neumann_entropy(rho) <= s_a + s_b + 1e-9
    assert mutual_information(rho, [0], [1]) >= -1e-9


@given(seed=seeds, d=st.integers(2, 5), beta=st.floats(0.05, 20.0), rank=st.integers(1, 5))
@settings(max_examples=60, deadline=None)
def test_gibbs_minimizes_free_energy(seed, d, beta, rank):
    h = Hamiltonian.diagonal(np.sort(np.random.default_rng(seed).uniform(0, 3, d)))
    rho = random_density_matrix(d, seed, rank=min(rank, d))
    assert free_energy(rho, h, beta) >= free_energy(gibbs_state(h, beta), h, beta) - 1e-9


@given(seed=seeds, d=st.integers(2, 5), beta=st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_nonequilibrium_free_energy_identity(seed, d, beta):
    h = Hamiltonian.diagonal(np.random.default_rng(seed).uniform(0, 2, d))
    rho = random_density_matrix(d, seed)
    lhs = relative_entropy(rho, gibbs_state(h, beta)) / beta - log_partition(h, beta) / beta
    assert lhs == pytest.approx(free_energy(rho, h, beta), abs=1e-9)


@given(seed=seeds, d=st.integers(2, 5), beta=st.floats(0.1, 10.0))
@settings(max_examples=40, deadline=None)
def test_coherence_is_free_energy_gap(seed, d, beta):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = Hamiltonian(g + g.conj().T)
    rho = random_density_matrix(d, seed + 1)
    gap = beta * (free_energy(rho, h, beta) - free_energy(dephase(rho, h), h, beta))
    a = rel_entropy_of_coherence(rho, h)
    assert a >= -1e-9
    assert gap == pytest.approx(a, abs=1e-9)


@given(seed=seeds, k=st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_separable_sampler_has_nonnegative_conditional_entropy(seed, k):
    rho = random_separable_state((2, 3), k, seed)
    assert conditional_entropy(rho, [0], [1]) >= -1e-9
    assert conditional_entropy(rho, [1], [0]) >= -1e-9


def test_single_product_component_has_no_correlations():
    rho = random_separable_state((2, 2), 1, 11)
    assert mutual_information(rho, [0], [1]) == pytest.approx(0.0, abs=1e-10)


def test_samplers_are_deterministic():
    assert np.array_equal(random_density_matrix(4, 9).matrix, random_density_matrix(4, 9).matrix)
    assert np.array_equal(random_pure_state(3, 9).matrix, random_pure_state(3, 9).matrix)
    a = random_separable_state((2, 2), 3, 9)
    assert np.array_equal(a.matrix, random_separable_state((2, 2), 3, 9).matrix)


# --- file format ------------------------------------------------------------------------


def test_json_round_trip(tmp_path):
    rho = DensityMatrix(random_density_matrix(4, 2).matrix, (2, 2))
    path = tmp_path / "rho.json"
    save_matrix(rho, path)
    back = load_state(path)
    assert back.dims == (2, 2)
    assert np.array_equal(back.matrix, rho.matrix)
    save_matrix(H01, tmp_path / "h.json")
    assert np.array_equal(load_hamiltonian(tmp_path / "h.json").eigenvalues, [0.0, 1.0])


@pytest.mark.parametrize(
    "payload",
    [
        "{not json",
        json.dumps({"dims": [2], "re": [1, 0, 0]}),
        json.dumps({"dims": [2], "re": [1, 0, 0, 0], "im": [0, 0, 0]}),
        json.dumps({"dims": ["x"], "re": [1, 0, 0, 0], "im": [0, 0, 0, 0]}),
        json.dumps({"dims": [3], "re": [1, 0, 0, 0], "im": [0, 0, 0, 0]}),
        json.dumps({"dims": [2], "re": [1, 0, 0, 1], "im": [0, 0, 0, 0]}),
    ],
)
def test_malformed_state_files(tmp_path, payload):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    with pytest.raises(ValidationError):
        load_state(path)

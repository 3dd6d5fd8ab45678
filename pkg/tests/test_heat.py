import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from thermowit.exceptions import DomainError, InfeasibleError
from thermowit.heat import (
    ScalarProblem,
    asymptotic_comparison,
    beta_c_asymptotic,
    f_function,
    find_beta_roots,
    gibbs_free_energy,
    gibbs_thermo,
    heat_bounds,
    heat_bounds_oracle,
    ho_constraint_objective,
    ladder_hamiltonian,
    roots_for_free_energy,
)
from thermowit.qstate import (
    DensityMatrix,
    Hamiltonian,
    average_energy,
    gibbs_state,
    log_partition,
    random_density_matrix,
    von_neumann_entropy,
)

LOG2 = math.log(2)
H01 = Hamiltonian.diagonal([0.0, 1.0])
GROUND = DensityMatrix(np.diag([1.0, 0.0]))
EXCITED = DensityMatrix(np.diag([0.0, 1.0]))

# Frozen with a 40-digit mpmath root solve of F_beta(gamma(x)) = y, independent of this package.
MIXED_QUBIT_BETA_H = 2.4955305617290091
MIXED_QUBIT_Q_H = 0.42382790117942367
GROUND_QUBIT_BETA_C = -0.61209928028443585
GROUND_QUBIT_Q_C = -0.64841952744070018

seeds = st.integers(min_value=0, max_value=2**31 - 1)


def printed_f(x, y, h, beta):
    """f as printed: y - (1 - x/beta) tr[H gamma(x)] + log Z(x) / beta."""
    g = gibbs_state(h, x)
    return y - (1 - x / beta) * average_energy(g, h) + log_partition(h, x) / beta


# --- f(x, y) --------------------------------------------------------------------


class TestFFunction:
    def test_zero_at_gibbs(self):
        beta = 0.8
        y = gibbs_free_energy(H01, beta, beta)
        assert f_function(beta, y, H01, beta) == pytest.approx(0.0, abs=1e-15)

    def test_infinite_temperature_value(self):
        assert f_function(0.0, 0.0, H01, 1.0) == pytest.approx(LOG2 - 0.5, abs=1e-15)

    @given(x=st.floats(-30, 30), y1=st.floats(-5, 5), y2=st.floats(-5, 5))
    @settings(max_examples=50, deadline=None)
    def test_linear_in_y(self, x, y1, y2):
        diff = f_function(x, y1, H01, 1.3) - f_function(x, y2, H01, 1.3)
        assert diff == pytest.approx(y1 - y2, abs=1e-12)

    @pytest.mark.parametrize("x", [-7.0, -0.5, 0.0, 0.3, 2.0, 12.0])
    def test_matches_printed_form(self, x):
        h = Hamiltonian.diagonal([0.0, 0.4, 1.1, 2.5])
        assert f_function(x, 0.2, h, 0.9) == pytest.approx(printed_f(x, 0.2, h, 0.9), abs=1e-12)

    def test_rejects_bad_beta(self):
        with pytest.raises(DomainError):
            f_function(0.0, 0.0, H01, -1.0)


@given(x=st.floats(-40, 40), beta=st.floats(0.1, 10))
@settings(max_examples=60, deadline=None)
def test_f_is_maximal_at_beta(x, beta):
    h = Hamiltonian.diagonal([0.0, 0.7, 1.0])
    y = 0.3
    assert f_function(beta, y, h, beta) >= f_function(x, y, h, beta) - 1e-12


# --- roots ------------------------------------------------------------------------


def test_roots_degenerate_at_gibbs():
    beta = 1.7
    roots = find_beta_roots(ScalarProblem.from_state(gibbs_state(H01, beta), H01, beta))
    assert roots.degenerate
    assert roots.beta_c == roots.beta_h == beta


def test_roots_maximally_mixed_qubit():
    roots = find_beta_roots(ScalarProblem(0.5, LOG2, 1.0, H01))
    assert abs(roots.beta_c) <= 1e-11
    assert roots.beta_h == pytest.approx(MIXED_QUBIT_BETA_H, abs=1e-10)


def test_roots_excited_qubit_are_both_absent():
    roots = find_beta_roots(ScalarProblem(1.0, 0.0, 1.0, H01))
    assert roots.beta_h is None and not roots.right_root
    assert roots.beta_c == -math.inf and not roots.left_root


def test_infeasible_free_energy():
    with pytest.raises(InfeasibleError):
        roots_for_free_energy(H01, 1.0, gibbs_free_energy(H01, 1.0, 1.0) - 1e-6)


def test_roots_bracket_beta():
    h = Hamiltonian.diagonal([0.0, 0.3, 1.0, 1.5])
    for seed in range(20):
        rho = random_density_matrix(4, seed)
        roots = find_beta_roots(ScalarProblem.from_state(rho, h, 0.9))
        if roots.right_root:
            assert roots.beta_c <= 0.9 <= roots.beta_h


def test_nested_free_energies_widen_roots():
    h = Hamiltonian.diagonal([0.0, 0.5, 1.0])
    beta = 1.0
    f_min = gibbs_free_energy(h, beta, beta)
    prev = (beta, beta)
    for y in f_min + np.array([1e-6, 1e-3, 0.05, 0.2]):
        r = roots_for_free_energy(h, beta, y)
        assert r.beta_c <= prev[0] and r.beta_h >= prev[1]
        prev = (r.beta_c, r.beta_h)


# --- heat bounds ------------------------------------------------------------------------


class TestHeatBoundsExamples:
    def test_gibbs_state_has_no_heat(self):
        b = heat_bounds(gibbs_state(H01, 2.0), H01, 2.0)
        assert b.degenerate and b.q_c == 0.0 and b.q_h == 0.0

    def test_excited_qubit(self):
        b = heat_bounds(EXCITED, H01, 1.0)
        assert b.h_capped
        assert b.q_h == 1.0
        assert b.q_c == 0.0

    def test_ground_qubit(self):
        b = heat_bounds(GROUND, H01, 1.0)
        assert b.beta_c == pytest.approx(GROUND_QUBIT_BETA_C, abs=1e-10)
        assert b.q_c == pytest.approx(GROUND_QUBIT_Q_C, abs=1e-10)
        assert b.q_h == 0.0

    def test_mixed_qubit(self):
        b = heat_bounds(np.eye(2) / 2, H01, 1.0)
        assert b.q_c == pytest.approx(0.0, abs=1e-11)
        assert b.q_h == pytest.approx(MIXED_QUBIT_Q_H, abs=1e-10)
        assert not b.h_capped


def test_cap_uses_ground_energy_offset():
    h = Hamiltonian.diagonal([2.0, 3.0])
    b = heat_bounds(EXCITED, h, 1.0)
    assert b.h_capped and b.q_h == pytest.approx(1.0)


def test_degenerate_top_level_sentinel():
    # top level doubly degenerate: gamma(-inf) has entropy log 2
    h = Hamiltonian.diagonal([0.0, 1.0, 1.0])
    rho = DensityMatrix(np.diag([0.0, 0.5, 0.5]))
    b = heat_bounds(rho, h, 1.0)
    assert not b.left_root
    assert b.q_c == pytest.approx(0.0, abs=1e-12)


@given(seed=seeds, d=st.integers(2, 4), beta=st.floats(0.2, 5.0))
@settings(max_examples=60, deadline=None)
def test_heat_bounds_invariants(seed, d, beta):
    levels = np.sort(np.random.default_rng(seed).uniform(0, 2, d))
    h = Hamiltonian.diagonal(levels - levels[0])
    rho = random_density_matrix(d, seed, rank=1 + seed % d)
    b = heat_bounds(rho, h, beta)
    assert b.q_c <= 0.0 <= b.q_h
    assert b.q_h <= average_energy(rho, h) + 1e-9
    if b.right_root:
        assert b.beta_c <= beta <= b.beta_h
    for x, q in ((b.beta_c, b.q_c), (b.beta_h, b.q_h)):
        if x is not None and math.isfinite(x) and not b.h_capped:
            assert b.energy - gibbs_thermo(h, x)[0] == pytest.approx(q, abs=1e-8)


@given(seed=seeds, c=st.floats(0.2, 5.0))
@settings(max_examples=40, deadline=None)
def test_scaling_covariance(seed, c):
    h = Hamiltonian.diagonal([0.0, 0.6, 1.4])
    rho = random_density_matrix(3, seed)
    b1 = heat_bounds(rho, h, 1.1)
    b2 = heat_bounds(rho, Hamiltonian.diagonal(c * h.eigenvalues), 1.1 / c)
    assert b2.q_c == pytest.approx(c * b1.q_c, abs=1e-9)
    assert b2.q_h == pytest.approx(c * b1.q_h, abs=1e-9)


@given(seed=seeds, phases=st.lists(st.floats(-math.pi, math.pi), min_size=3, max_size=3))
@settings(max_examples=40, deadline=None)
def test_invariance_under_energy_diagonal_unitaries(seed, phases):
    h = Hamiltonian.diagonal([0.0, 0.6, 1.4])
    rho = random_density_matrix(3, seed)
    u = np.diag(np.exp(1j * np.array(phases)))
    b1 = heat_bounds(rho, h, 0.7)
    b2 = heat_bounds(u @ rho.matrix @ u.conj().T, h, 0.7)
    assert b2.q_c == pytest.approx(b1.q_c, abs=1e-9)
    assert b2.q_h == pytest.approx(b1.q_h, abs=1e-9)


def test_scalar_problem_validation():
    with pytest.raises(Exception):
        ScalarProblem(1.5, 0.0, 1.0, H01)
    with pytest.raises(Exception):
        ScalarProblem(0.5, 1.0, 1.0, H01)


# --- oracle ------------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(12))
def test_oracle_agrees_on_qutrits(seed):
    h = Hamiltonian.diagonal([0.0, 1.0, 2.0])
    rho = random_density_matrix(3, seed, rank=1 + seed % 3)
    b = heat_bounds(rho, h, 1.0)
    o = heat_bounds_oracle(rho, h, 1.0, samples=400, seed=seed)
    assert abs(b.q_c - o.q_c) <= 1e-6
    assert abs(b.q_h - o.q_h) <= 1e-6
    assert o.tier_b_excess <= 1e-6


def test_oracle_on_larger_dimension():
    rng = np.random.default_rng(4)
    h = Hamiltonian.diagonal(np.sort(rng.uniform(0, 3, 9)))
    rho = random_density_matrix(9, 4, rank=3)
    b = heat_bounds(rho, h, 0.8)
    o = heat_bounds_oracle(rho, h, 0.8, samples=300)
    assert abs(b.q_c - o.q_c) <= 1e-6 and abs(b.q_h - o.q_h) <= 1e-6


def test_oracle_requires_resolution():
    with pytest.raises(DomainError):
        heat_bounds_oracle(np.eye(2) / 2, H01, 1.0, resolution=10)


# --- ladder specialization ---------------------------------------------------------------


def test_ladder_hamiltonian_levels():
    h = ladder_hamiltonian(3, 2)
    assert h.dims == (3, 3)
    assert np.array_equal(np.real(np.diag(h.matrix)), [0, 1, 2, 1, 2, 3, 2, 3, 4])


@pytest.mark.parametrize("bt", [-3.0, -0.4, 1e-4, 0.2, 1.0, 4.0])
def test_two_qubit_objective_is_tanh(bt):
    problem = ScalarProblem(1.0, LOG2, 0.5, ladder_hamiltonian(2, 2))
    objective, _ = ho_constraint_objective(bt, problem, 2, 2)
    assert objective == pytest.approx(math.tanh(bt / 2), abs=1e-12)


@pytest.mark.parametrize("d", [2, 3, 4])
@pytest.mark.parametrize("bt", [-2.5, -1e-3, 0.0, 1e-3, 0.7, 3.0, 60.0])
def test_ho_closed_form_matches_generic(d, bt):
    h = ladder_hamiltonian(d, 2)
    problem = ScalarProblem(d - 1.0, math.log(d), 0.5, h)
    objective, constraint = ho_constraint_objective(bt, problem, 2, d)
    assert objective == pytest.approx(problem.energy - gibbs_thermo(h, bt)[0], abs=1e-9)
    assert constraint == pytest.approx(-0.5 * f_function(bt, problem.free_energy, h, 0.5), abs=1e-9)


def test_ho_limit_at_zero():
    d, n = 4, 2
    problem = ScalarProblem(2.5, 1.0, 1.0, ladder_hamiltonian(d, n))
    objective, _ = ho_constraint_objective(0.0, problem, n, d)
    assert objective == pytest.approx(2.5 - n * (d - 1) / 2)


def test_ho_constraint_zero_at_root():
    d, beta = 3, 0.5
    problem = ScalarProblem(d - 1.0, math.log(d), beta, ladder_hamiltonian(d, 2))
    roots = find_beta_roots(problem)
    for x in (roots.beta_c, roots.beta_h):
        assert abs(ho_constraint_objective(x, problem, 2, d)[1]) <= 1e-9


@given(a=st.floats(-20, 20), b=st.floats(-20, 20))
@settings(max_examples=60, deadline=None)
def test_ho_objective_nondecreasing(a, b):
    assume(a < b)
    problem = ScalarProblem(2.0, 0.5, 1.0, ladder_hamiltonian(3, 2))
    assert ho_constraint_objective(a, problem, 2, 3)[0] <= ho_constraint_objective(b, problem, 2, 3)[0] + 1e-12


def test_beta_c_asymptotic_arithmetic():
    assert beta_c_asymptotic(2, 10) == pytest.approx(6 * LOG2 / 30)
    assert beta_c_asymptotic(5, 10) == pytest.approx(0.0402359478108525, abs=1e-15)
    with pytest.raises(DomainError):
        beta_c_asymptotic(1, 10)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_asymptotic_agreement_improves(d):
    errs = [asymptotic_comparison(d, b).rel_err for b in (10, 20, 50, 100)]
    assert max(errs) <= 0.10
    assert all(a >= b for a, b in zip(errs, errs[1:]))


def test_asymptotic_numeric_root_frozen():
    # mpmath reference for d = 2, beta = 10
    assert asymptotic_comparison(2, 10).numeric == pytest.approx(0.13789899549811081, abs=1e-11)

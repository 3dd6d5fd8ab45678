"""Optimal heat exchange with a thermal environment assisted by a memory.

For a state with energy ``E`` and entropy ``S`` the extremal heats are
attained by Gibbs states ``gamma(x) = exp(-x H)/Z(x)`` with the same free
energy, ``F_beta(gamma(x)) = E - S/beta``. The two solutions ``x = beta_c <=
beta <= beta_h`` give

    Q_c = (S - S(gamma(beta_c))) / beta
    Q_h = min((S - S(gamma(beta_h))) / beta, E - e_ground)

``x`` ranges over the whole real line; negative values are population-inverted
states.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect
from scipy.special import entr, softmax
from scipy.stats import unitary_group

from thermowit.exceptions import DomainError, InfeasibleError, NumericalConsistencyError, ValidationError
from thermowit.qstate import (
    Hamiltonian,
    LEVEL_RTOL,
    as_density_matrix,
    as_hamiltonian,
    average_energy,
    gibbs_populations,
    von_neumann_entropy,
)
from thermowit.validation import check_beta, check_finite, check_int

logger = logging.getLogger(__name__)

# |x| cutoff is X_MAX_SCALE / spectral range; beyond it gamma(x) is numerically pure
X_MAX_SCALE = 1e4
ROOT_RTOL = 1e-12
BOUNDARY_ATOL = 1e-12
INFEASIBLE_ATOL = 1e-9
IDENTITY_ATOL = 1e-8


@dataclass(frozen=True)
class ScalarProblem:
    """The heat problem only depends on a state through ``(E, S)``."""

    energy: float
    entropy: float
    beta: float
    hamiltonian: Hamiltonian

    def __post_init__(self):
        h = as_hamiltonian(self.hamiltonian)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "beta", check_beta(self.beta))
        e = check_finite(self.energy, "energy")
        s = check_finite(self.entropy, "entropy")
        tol = 1e-9 * max(1.0, abs(h.ground_energy), abs(h.top_energy))
        if not h.ground_energy - tol <= e <= h.top_energy + tol:
            raise ValidationError(
                f"energy {e} outside spectrum [{h.ground_energy}, {h.top_energy}]"
            )
        if not -1e-9 <= s <= math.log(h.dim) + 1e-9:
            raise ValidationError(f"entropy {s} outside [0, log {h.dim}]")
        object.__setattr__(self, "energy", e)
        object.__setattr__(self, "entropy", s)

    @classmethod
    def from_state(cls, rho, h, beta):
        rho = as_density_matrix(rho)
        return cls(average_energy(rho, h), von_neumann_entropy(rho), beta, h)

    @property
    def free_energy(self):
        return self.energy - self.entropy / self.beta


@dataclass(frozen=True)
class BetaRoots:
    """Zeros of ``f(x, y)``; ``beta_c = -inf`` and ``beta_h = None`` mark missing roots."""

    beta_c: float
    beta_h: object
    left_root: bool
    right_root: bool
    degenerate: bool


@dataclass(frozen=True)
class HeatBounds:
    beta_c: float
    beta_h: object
    q_c: float
    q_h: float
    h_capped: bool
    degenerate: bool
    energy: float
    entropy: float
    free_energy: float
    beta: float

    @property
    def left_root(self):
        return math.isfinite(self.beta_c)

    @property
    def right_root(self):
        return self.beta_h is not None


# ---------------------------------------------------------------------------
# Gibbs-family thermodynamics


def gibbs_thermo(h, x):
    """``(energy, entropy)`` of ``gamma(x)``; ``x = +-inf`` gives the level limits."""
    h = as_hamiltonian(h)
    if x == math.inf:
        return h.ground_energy, math.log(h.multiplicity("ground"))
    if x == -math.inf:
        return h.top_energy, math.log(h.multiplicity("top"))
    p, _ = gibbs_populations(h.eigenvalues, x)
    return float(p @ h.eigenvalues), float(np.sum(entr(p)))


def gibbs_free_energy(h, x, beta):
    """``F_beta(gamma(x))``."""
    e, s = gibbs_thermo(h, x)
    return e - s / beta


def f_function(x, y, h, beta):
    """``f(x, y) = y - F_beta(gamma(x))``; zero where ``gamma(x)`` has free energy ``y``."""
    beta = check_beta(beta)
    x = check_finite(x, "x")
    return float(y) - gibbs_free_energy(h, x, beta)


def _bisect(g, a, b):
    # stops once the bracket is narrower than ROOT_RTOL * max(1, |x|)
    tol = 0.5 * ROOT_RTOL
    return bisect(g, a, b, xtol=tol, rtol=max(tol, 4 * np.finfo(float).eps), maxiter=400)


def _right_root(h, beta, y, x_cut):
    g = lambda x: gibbs_free_energy(h, x, beta) - y  # noqa: E731
    step = 1.0 / h.spectral_range
    lo = beta
    while True:
        hi = min(beta + step, x_cut)
        if g(hi) > 0:
            return _bisect(g, lo, hi)
        if hi >= x_cut:
            return None
        lo = hi
        step *= 2.0


def _left_root(h, beta, y, x_cut):
    g = lambda x: gibbs_free_energy(h, x, beta) - y  # noqa: E731
    step = 1.0 / h.spectral_range
    hi = beta
    while True:
        lo = max(beta - step, -x_cut)
        if g(lo) > 0:
            return _bisect(g, lo, hi)
        if lo <= -x_cut:
            return None
        hi = lo
        step *= 2.0


def roots_for_free_energy(h, beta, y):
    """Roots of ``f(x, y)`` for a bare free-energy target ``y`` (no state needed)."""
    h = as_hamiltonian(h)
    beta = check_beta(beta)
    y = check_finite(y, "free energy")
    scale = max(1.0, abs(h.ground_energy), abs(h.top_energy))
    if h.spectral_range <= LEVEL_RTOL * scale:
        return BetaRoots(beta, beta, True, True, True)
    f_min = gibbs_free_energy(h, beta, beta)
    if y < f_min - INFEASIBLE_ATOL:
        raise InfeasibleError(
            f"free energy {y!r} is below the Gibbs free energy {f_min!r} at beta={beta}"
        )
    if y - f_min <= 64 * np.finfo(float).eps * max(1.0, abs(f_min), abs(y)):
        return BetaRoots(beta, beta, True, True, True)
    x_cut = X_MAX_SCALE / h.spectral_range
    right = None
    if y <= gibbs_free_energy(h, math.inf, beta) - BOUNDARY_ATOL:
        right = _right_root(h, beta, y, max(x_cut, 2.0 * beta))
    left = None
    if y <= gibbs_free_energy(h, -math.inf, beta) - BOUNDARY_ATOL:
        left = _left_root(h, beta, y, x_cut)
    return BetaRoots(
        beta_c=-math.inf if left is None else left,
        beta_h=right,
        left_root=left is not None,
        right_root=right is not None,
        degenerate=False,
    )


def find_beta_roots(problem):
    """Locate ``beta_c <= beta <= beta_h`` for a :class:`ScalarProblem`.

    Brackets expand outward from ``beta`` by doubling steps (``F_beta(gamma(x))``
    is decreasing left of ``beta`` and increasing right of it) up to the
    cutoff ``|x| = 1e4 / spectral range``, then bisection refines each root.

    Raises
    ------
    InfeasibleError
        If the free energy lies more than 1e-9 below the Gibbs free energy.
    """
    return roots_for_free_energy(problem.hamiltonian, problem.beta, problem.free_energy)


def _check_identity(h, x, energy, q, label):
    e_root, _ = gibbs_thermo(h, x)
    lhs = energy - e_root
    if abs(lhs - q) > IDENTITY_ATOL:
        raise NumericalConsistencyError(
            f"{label}: tr[H(rho - gamma)] = {lhs!r} but (S - S(gamma))/beta = {q!r}"
        )


def heat_from_problem(problem, *, check=True):
    """:class:`HeatBounds` for a :class:`ScalarProblem`."""
    h, beta = problem.hamiltonian, problem.beta
    e, s = problem.energy, problem.entropy
    roots = find_beta_roots(problem)

    if roots.degenerate:
        _, s_beta = gibbs_thermo(h, beta)
        q = (s - s_beta) / beta
        return HeatBounds(beta, beta, min(q, 0.0), max(q, 0.0), False, True,
                          e, s, problem.free_energy, beta)

    if roots.left_root:
        q_c = (s - gibbs_thermo(h, roots.beta_c)[1]) / beta
        if check:
            _check_identity(h, roots.beta_c, e, q_c, "cooling root")
    else:
        # gamma(-inf) is feasible: the environment can give up to e_top - E
        q_c = e - h.top_energy

    cap = e - h.ground_energy
    if roots.right_root:
        q_root = (s - gibbs_thermo(h, roots.beta_h)[1]) / beta
        if check:
            _check_identity(h, roots.beta_h, e, q_root, "heating root")
        q_h, capped = (q_root, False) if q_root <= cap else (cap, True)
    else:
        q_h, capped = cap, True

    text_cap = beta * e >= s
    if capped != text_cap:
        logger.info(
            "energy cap applied=%s but beta*E >= S is %s (ground energy %g)",
            capped, text_cap, h.ground_energy,
        )
    if q_c > 1e-9 or q_h < -1e-9:
        raise NumericalConsistencyError(f"heat bounds do not straddle zero: ({q_c}, {q_h})")
    return HeatBounds(roots.beta_c, roots.beta_h, min(q_c, 0.0), max(q_h, 0.0), capped, False,
                      e, s, problem.free_energy, beta)


def heat_bounds(rho, h, beta):
    """Minimal and maximal heat ``(Q_c, Q_h)`` a state can deliver to the environment.

    Parameters
    ----------
    rho : DensityMatrix or array_like
        System state.
    h : Hamiltonian or array_like
        System Hamiltonian.
    beta : float
        Inverse temperature of the environment.

    Returns
    -------
    HeatBounds
    """
    h = as_hamiltonian(h)
    return heat_from_problem(ScalarProblem.from_state(rho, h, beta))


# ---------------------------------------------------------------------------
# brute-force oracle


@dataclass(frozen=True)
class OracleResult:
    q_c: float
    q_h: float
    n_feasible: int
    tier_b_min: float
    tier_b_max: float

    @property
    def tier_b_excess(self):
        """How far random feasible states beat the Gibbs-family extrema (0 if never)."""
        lo = self.q_c - self.tier_b_min if self.n_feasible else 0.0
        hi = self.tier_b_max - self.q_h if self.n_feasible else 0.0
        return max(0.0, lo, hi)


def _family_thermo(e, xs):
    p = softmax(-np.outer(xs, e), axis=1)
    return p @ e, entr(p).sum(axis=1)


def heat_bounds_oracle(rho, h, beta, resolution=2000, samples=2000, seed=0, levels=4):
    """Brute-force estimate of the heat bounds, independent of :func:`heat_bounds`.

    Tier (a) scans ``x`` on a grid symmetric about ``beta`` (geometrically
    dense near it) plus the two level limits, keeps ``F_beta(gamma(x)) <=
    F_beta(rho) + 1e-12`` and extremizes ``tr[H(rho - gamma(x))]``; each
    extremal grid cell is re-scanned ``levels`` times. Tier (b) draws random
    density matrices and records the best heat among feasible ones.
    """
    if resolution < 1000:
        raise DomainError("resolution must be at least 1000")
    beta = check_beta(beta)
    hm = np.asarray(as_hamiltonian(h).matrix)
    rm = np.asarray(as_density_matrix(rho).matrix)
    e = np.linalg.eigvalsh(hm)
    energy = float(np.real(np.trace(rm @ hm)))
    entropy = float(entr(np.clip(np.linalg.eigvalsh(rm), 0, None)).sum())
    y = energy - entropy / beta
    span = e[-1] - e[0]
    if span <= LEVEL_RTOL * max(1.0, np.abs(e).max()):
        return OracleResult(0.0, 0.0, 0, 0.0, 0.0)

    x_max = X_MAX_SCALE / span
    u = np.geomspace(1e-9, x_max + beta, resolution)
    xs = np.unique(np.clip(np.concatenate([beta - u, [beta], beta + u]), -x_max, max(x_max, 2 * beta)))
    eg, sg = _family_thermo(e, xs)
    feasible = eg - sg / beta <= y + 1e-12
    heat = energy - eg

    def refine(i, j):
        # zoom into the cell between infeasible xs[i] and feasible xs[j]
        a, b = xs[i], xs[j]
        best = heat[j]
        for _ in range(levels):
            sub = np.linspace(a, b, resolution)
            se, ss = _family_thermo(e, sub)
            ok = se - ss / beta <= y + 1e-12
            k = int(np.argmax(ok))
            if not ok[k]:
                break
            best = energy - se[k]
            if k == 0:
                break
            a, b = sub[k - 1], sub[k]
        return float(best)

    idx = np.flatnonzero(feasible)
    candidates_c, candidates_h = [], []
    if idx.size:
        lo_i, hi_i = idx[0], idx[-1]
        candidates_c.append(refine(lo_i - 1, lo_i) if lo_i > 0 else heat[lo_i])
        candidates_h.append(refine(hi_i + 1, hi_i) if hi_i < xs.size - 1 else heat[hi_i])
    tol = LEVEL_RTOL * max(1.0, np.abs(e).max())
    m_top = np.count_nonzero(e[-1] - e <= tol)
    m_bot = np.count_nonzero(e - e[0] <= tol)
    if e[-1] - math.log(m_top) / beta <= y + 1e-12:
        candidates_c.append(energy - e[-1])
    if e[0] - math.log(m_bot) / beta <= y + 1e-12:
        candidates_h.append(energy - e[0])
    q_c = float(min(candidates_c + [0.0]))
    q_h = float(max(candidates_h + [0.0]))

    b_min, b_max, n_ok = 0.0, 0.0, 0
    if samples:
        d = e.size
        rng = np.random.default_rng(seed)
        us = unitary_group.rvs(d, size=samples, random_state=rng).reshape(samples, d, d)
        alphas = rng.choice([0.05, 0.3, 1.0], size=samples)
        pops = np.array([rng.dirichlet(np.full(d, a)) for a in alphas])
        etas = np.einsum("nij,nj,nkj->nik", us, pops, us.conj())
        energies = np.real(np.einsum("nij,ji->n", etas, hm))
        ents = entr(pops).sum(axis=1)
        ok = energies - ents / beta <= y + 1e-12
        n_ok = int(ok.sum())
        if n_ok:
            hb = energy - energies[ok]
            b_min, b_max = float(hb.min()), float(hb.max())
    return OracleResult(q_c, q_h, n_ok, b_min, b_max)


# ---------------------------------------------------------------------------
# ladder ("harmonic oscillator") Hamiltonian


def ladder_hamiltonian(d, n_parties=1):
    """``sum_k 1 x ... x diag(0, 1, ..., d-1) x ... x 1`` on ``n_parties`` qudits."""
    d = check_int(d, "d", minimum=1)
    n_parties = check_int(n_parties, "n_parties", minimum=1)
    levels = np.arange(d, dtype=float)
    total = np.zeros(1)
    for _ in range(n_parties):
        total = np.add.outer(total, levels).ravel()
    return Hamiltonian.diagonal(total, (d,) * n_parties)


def _g(x):
    # 1/(e^x - 1) - 1/x, regular at 0
    if abs(x) < 1e-2:
        x2 = x * x
        return -0.5 + x / 12.0 - x * x2 / 720.0 + x * x2 * x2 / 30240.0
    with np.errstate(over="ignore"):
        return float(1.0 / np.expm1(x) - 1.0 / x)


def _log_abs_expm1(x):
    if x > 0:
        return x + math.log(-math.expm1(-x))
    return math.log(-math.expm1(x))


def ho_constraint_objective(beta_tilde, problem, n_parties, d):
    """Closed-form objective and constraint for the ladder Hamiltonian.

    Returns ``(objective, constraint)`` with

        objective  = N [d/(e^{d bt} - 1) - 1/(e^{bt} - 1)] + E
        constraint = (bt - beta) objective - bt E + N (d-1) bt
                     + N log((e^{bt} - 1)/(e^{d bt} - 1)) + S

    where ``bt = beta_tilde``. The objective equals ``E - E(gamma(bt))`` and the
    constraint equals ``-beta f(bt, E - S/beta)``. At ``bt = 0`` the analytic
    limits are used.
    """
    bt = check_finite(beta_tilde, "beta_tilde")
    d = check_int(d, "d", minimum=2)
    n = check_int(n_parties, "n_parties", minimum=1)
    e, s, beta = problem.energy, problem.entropy, problem.beta
    objective = n * (d * _g(d * bt) - _g(bt)) + e
    if bt == 0.0:
        log_ratio = -math.log(d)
    else:
        log_ratio = _log_abs_expm1(bt) - _log_abs_expm1(d * bt)
    constraint = (bt - beta) * objective - bt * e + n * (d - 1) * bt + n * log_ratio + s
    return objective, constraint


def beta_c_asymptotic(d, beta):
    """Large-``beta`` estimate ``6 log d / (beta (d^2 - 1))`` of the cooling root magnitude."""
    d = check_int(d, "d", minimum=2)
    beta = check_beta(beta)
    return 6.0 * math.log(d) / (beta * (d * d - 1))


@dataclass(frozen=True)
class AsymptoticComparison:
    d: int
    beta: float
    numeric: float
    asymptotic: float

    @property
    def rel_err(self):
        return abs(self.numeric - self.asymptotic) / self.asymptotic


def asymptotic_comparison(d, beta, entropy=None):
    """Compare ``|beta_c|`` for two ladder qudits with ``E = d-1`` to the asymptotic formula.

    ``entropy`` defaults to ``log d`` (maximally mixed marginals, maximally
    entangled joint state).
    """
    d = check_int(d, "d", minimum=2)
    s = math.log(d) if entropy is None else entropy
    problem = ScalarProblem(d - 1.0, s, beta, ladder_hamiltonian(d, 2))
    roots = find_beta_roots(problem)
    if not roots.left_root:
        raise NumericalConsistencyError(f"no cooling root for d={d}, beta={beta}")
    return AsymptoticComparison(d, problem.beta, abs(roots.beta_c), beta_c_asymptotic(d, beta))

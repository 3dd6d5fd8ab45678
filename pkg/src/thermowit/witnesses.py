"""Heat-based witnesses for entanglement and coherence.

Every member of a state set ``S`` obeys ``F_beta(rho) <= f_star`` and
``S(rho) >= s_floor``, with energy at most ``e_cap``. Solving the heat problem
for the virtual point ``(e_cap, s_floor)`` gives an envelope ``[q*_c, q*_h]``
that no member can leave; a measured heat outside it certifies that the state
is not in ``S``.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect
from scipy.special import entr, xlogy

from thermowit.exceptions import DomainError, NumericalConsistencyError, ValidationError
from thermowit.heat import gibbs_thermo, heat_bounds, ladder_hamiltonian, roots_for_free_energy
from thermowit.qstate import (
    DensityMatrix,
    Hamiltonian,
    LEVEL_RTOL,
    as_density_matrix,
    as_hamiltonian,
    average_energy,
    binary_entropy,
    partial_trace,
    von_neumann_entropy,
)
from thermowit.validation import check_beta, check_finite, check_int, check_unit_interval

DEFAULT_MARGIN = 1e-7
ENTROPY_MODES = ("exact", "energy-only")


class Verdict(str, enum.Enum):
    INSIDE = "inside"
    DETECTED_LOW = "detected-low"
    DETECTED_HIGH = "detected-high"

    @property
    def detected(self):
        return self is not Verdict.INSIDE


@dataclass(frozen=True)
class LocalData:
    """Marginal energy and entropy of one party, with its local Hamiltonian.

    ``entropy=None`` means the entropy is unknown; bounds then use the
    trivial lower bound 0.
    """

    energy: float
    entropy: object
    hamiltonian: Hamiltonian

    def __post_init__(self):
        h = as_hamiltonian(self.hamiltonian)
        object.__setattr__(self, "hamiltonian", h)
        e = check_finite(self.energy, "energy")
        tol = 1e-9 * max(1.0, abs(h.ground_energy), abs(h.top_energy))
        if not h.ground_energy - tol <= e <= h.top_energy + tol:
            raise ValidationError(f"local energy {e} outside [{h.ground_energy}, {h.top_energy}]")
        object.__setattr__(self, "energy", e)
        if self.entropy is not None:
            s = check_finite(self.entropy, "entropy")
            if not -1e-9 <= s <= math.log(h.dim) + 1e-9:
                raise ValidationError(f"local entropy {s} outside [0, log {h.dim}]")
            object.__setattr__(self, "entropy", s)

    @classmethod
    def from_state(cls, rho_k, h_k):
        return cls(average_energy(rho_k, h_k), von_neumann_entropy(rho_k), h_k)

    @classmethod
    def energy_only(cls, energy, h_k):
        return cls(energy, None, h_k)


def local_data_from_state(rho, local_hamiltonians):
    """Marginal :class:`LocalData` of every party of ``rho``."""
    rho = as_density_matrix(rho)
    if len(local_hamiltonians) != len(rho.dims):
        raise ValidationError(
            f"{len(local_hamiltonians)} local Hamiltonians for {len(rho.dims)} subsystems"
        )
    return [LocalData.from_state(partial_trace(rho, [k]), h) for k, h in enumerate(local_hamiltonians)]


def local_sum_hamiltonian(local_hamiltonians):
    """``sum_k 1 x ... x H_k x ... x 1`` for the given local terms."""
    hams = [as_hamiltonian(h) for h in local_hamiltonians]
    if not hams:
        raise ValidationError("need at least one local Hamiltonian")
    dims = [h.dim for h in hams]
    total = np.zeros((math.prod(dims),) * 2, dtype=complex)
    for k, h in enumerate(hams):
        left = np.eye(math.prod(dims[:k]))
        right = np.eye(math.prod(dims[k + 1:]))
        total += np.kron(np.kron(left, h.matrix), right)
    sub = tuple(d for h in hams for d in h.dims)
    return Hamiltonian(total, sub)


@dataclass(frozen=True)
class WitnessEnvelope:
    f_star: float
    s_floor: float
    e_cap: float
    q_star_c: float
    q_star_h: float
    beta_star_c: float
    beta_star_h: object
    h_capped: bool

    def verdict(self, q, margin=DEFAULT_MARGIN):
        return verdict(q, self, margin)


# ---------------------------------------------------------------------------
# set-level free-energy bounds


def sep_free_energy_bound(locals_, beta):
    """Free-energy bound for separable states with the given marginal data.

    A separable state has ``S(rho) >= S_k`` for every party, so
    ``F_beta(rho) <= sum_k E_k - max_k S_k / beta``. Parties with unknown
    entropy contribute the floor 0.

    Returns
    -------
    tuple
        ``(f_star, s_floor, e_cap)``.
    """
    beta = check_beta(beta)
    if len(locals_) < 2:
        raise ValidationError("separability needs at least two parties")
    e_cap = math.fsum(ld.energy for ld in locals_)
    s_floor = max(0.0 if ld.entropy is None else ld.entropy for ld in locals_)
    return e_cap - s_floor / beta, s_floor, e_cap


def _min_entropy_at_energy(levels, energy, tol):
    # concave S over the polytope {p in simplex, p.e = E} is minimized at
    # vertices, which have at most two nonzero entries
    distinct = np.unique(levels)
    if np.any(np.abs(distinct - energy) <= tol):
        return 0.0
    below = distinct[distinct < energy]
    above = distinct[distinct > energy]
    lo, hi = below[:, None], above[None, :]
    p = (energy - lo) / (hi - lo)
    return float(np.min(entr(p) + entr(1.0 - p)))


def incoh_free_energy_bound(energy, h, beta, extremal="vertex"):
    """Free-energy bound for incoherent states of fixed energy ``E_S``.

    Parameters
    ----------
    energy : float
        Average energy of the set.
    h : Hamiltonian
    beta : float
    extremal : {"vertex", "two-level"}
        ``"vertex"`` takes the exact entropy minimum over diagonal states of
        energy ``E_S``. ``"two-level"`` mixes only the ground and top levels,
        ``p = (E_S - e_1)/(e_d - e_1)``; this is the minimum for qubits but
        can exceed it for ``d > 2``.

    Returns
    -------
    tuple
        ``(f_star, s_floor, e_cap)``.
    """
    h = as_hamiltonian(h)
    beta = check_beta(beta)
    e = check_finite(energy, "energy")
    e1, ed = h.ground_energy, h.top_energy
    tol = LEVEL_RTOL * max(1.0, abs(e1), abs(ed))
    if not e1 - tol <= e <= ed + tol:
        raise DomainError(f"energy {e} outside [{e1}, {ed}]")
    e = min(max(e, e1), ed)
    if h.spectral_range <= tol:
        s_floor = 0.0
    elif extremal == "two-level":
        s_floor = float(binary_entropy((e - e1) / (ed - e1)))
    elif extremal == "vertex":
        s_floor = _min_entropy_at_energy(h.eigenvalues, e, tol)
    else:
        raise DomainError(f"extremal must be 'vertex' or 'two-level', got {extremal!r}")
    return e - s_floor / beta, s_floor, e


def witness_heat_bounds(f_star, s_floor, e_cap, h, beta):
    """Heat envelope ``[q*_c, q*_h]`` of a set characterized by ``(f_star, s_floor, e_cap)``.

    ``q*`` is ``(s_floor - S(gamma(beta*))) / beta`` at each root of
    ``f(x, f_star)``. A missing right root gives ``e_cap - e_ground``; a
    missing left root gives ``e_cap - e_top``.
    """
    h = as_hamiltonian(h)
    beta = check_beta(beta)
    f_star = check_finite(f_star, "f_star")
    s_floor = check_finite(s_floor, "s_floor")
    e_cap = check_finite(e_cap, "e_cap")
    roots = roots_for_free_energy(h, beta, f_star)

    def at(x):
        return (s_floor - gibbs_thermo(h, x)[1]) / beta

    if roots.degenerate:
        q = at(beta)
        q_c, q_h, capped = q, q, False
    else:
        q_c = at(roots.beta_c) if roots.left_root else e_cap - h.top_energy
        cap = e_cap - h.ground_energy
        if roots.right_root and at(roots.beta_h) <= cap:
            q_h, capped = at(roots.beta_h), False
        else:
            q_h, capped = cap, True
    if q_c > 1e-9 or q_h < -1e-9:
        raise NumericalConsistencyError(
            f"envelope ({q_c}, {q_h}) does not contain 0; inconsistent (f_star, s_floor, e_cap)"
        )
    return WitnessEnvelope(
        f_star=f_star,
        s_floor=s_floor,
        e_cap=e_cap,
        q_star_c=min(q_c, 0.0),
        q_star_h=max(q_h, 0.0),
        beta_star_c=roots.beta_c,
        beta_star_h=roots.beta_h,
        h_capped=capped,
    )


def separable_envelope(locals_, beta, entropy_mode="exact"):
    """Envelope for separable states with marginal data ``locals_``.

    ``entropy_mode="energy-only"`` discards the local entropies, which gives
    a wider but still sound envelope.
    """
    if entropy_mode not in ENTROPY_MODES:
        raise DomainError(f"entropy_mode must be one of {ENTROPY_MODES}, got {entropy_mode!r}")
    if entropy_mode == "energy-only":
        locals_ = [LocalData.energy_only(ld.energy, ld.hamiltonian) for ld in locals_]
    f_star, s_floor, e_cap = sep_free_energy_bound(locals_, beta)
    h = local_sum_hamiltonian([ld.hamiltonian for ld in locals_])
    return witness_heat_bounds(f_star, s_floor, e_cap, h, beta)


def incoherent_envelope(energy, h, beta, extremal="vertex"):
    f_star, s_floor, e_cap = incoh_free_energy_bound(energy, h, beta, extremal)
    return witness_heat_bounds(f_star, s_floor, e_cap, h, beta)


def verdict(q_measured, envelope, margin=DEFAULT_MARGIN):
    """Classify a measured heat against an envelope; the boundary counts as inside."""
    q = check_finite(q_measured, "q")
    margin = check_finite(margin, "margin")
    if margin < 0:
        raise DomainError(f"margin must be nonnegative, got {margin}")
    if q < envelope.q_star_c - margin:
        return Verdict.DETECTED_LOW
    if q > envelope.q_star_h + margin:
        return Verdict.DETECTED_HIGH
    return Verdict.INSIDE


def bounds_detected(bounds, envelope, margin=DEFAULT_MARGIN):
    """True when either extremal heat of a state escapes the envelope."""
    return (verdict(bounds.q_c, envelope, margin) is Verdict.DETECTED_LOW
            or verdict(bounds.q_h, envelope, margin) is Verdict.DETECTED_HIGH)


# ---------------------------------------------------------------------------
# isotropic family and the critical noise level


def isotropic_state(d, lam):
    """``(1 - lam) |psi+><psi+| + lam 1/d^2`` on two qudits."""
    d = check_int(d, "d", minimum=2)
    lam = check_unit_interval(lam, "lambda")
    # outer(e, e) / d rather than outer(psi, psi): the entries are exactly 1/d
    e = np.eye(d).reshape(d * d)
    mat = (1.0 - lam) * np.outer(e, e) / d + lam * np.eye(d * d) / (d * d)
    return DensityMatrix(mat, (d, d))


def werner_state(lam):
    """Two-qubit member of the isotropic family."""
    return isotropic_state(2, lam)


def isotropic_entropy(d, lam):
    """``S(rho_AB)`` from the closed-form spectrum of the isotropic state."""
    d2 = d * d
    top = 1.0 - lam + lam / d2
    rest = lam / d2
    return float(-xlogy(top, top) - (d2 - 1) * xlogy(rest, rest))


def lambda_crt_equation(lam, d):
    """Left minus right side of the transcendental equation for ``lambda_crt``.

    Equal to ``d^2 (S(rho_AB(lam)) - log d)``.
    """
    d2 = float(d * d)
    # split log(lam / d^2) so subnormal lam cannot underflow to log(0)
    first = (1.0 - d2) * (xlogy(lam, lam) - lam * math.log(d2))
    second = (d2 * (lam - 1.0) - lam) * math.log((1.0 / d2 - 1.0) * lam + 1.0)
    return float(first + second - d2 * math.log(d))


def lambda_crt(d):
    """Noise level where the isotropic state's conditional entropy crosses zero."""
    d = check_int(d, "d", minimum=2)
    scan = np.array([lambda_crt_equation(x, d) for x in np.linspace(0.0, 1.0, 1001)])
    changes = np.count_nonzero(np.diff(np.sign(scan)) != 0)
    if changes != 1:
        raise NumericalConsistencyError(f"expected one sign change for d={d}, found {changes}")
    return bisect(lambda_crt_equation, 0.0, 1.0, args=(d,), xtol=1e-13, rtol=1e-15, maxiter=200)


@dataclass(frozen=True)
class SweepRow:
    lam: float
    q_c: float
    q_h: float
    q_star_c: float
    q_star_h: float
    detected: bool


def isotropic_envelope(d, beta):
    """Separable envelope from the exact isotropic marginals on ladder Hamiltonians."""
    d = check_int(d, "d", minimum=2)
    h_loc = ladder_hamiltonian(d)
    marg = LocalData((d - 1) / 2.0, math.log(d), h_loc)
    return separable_envelope([marg, marg], beta)


def isotropic_sweep_point(d, beta, lam, envelope=None, margin=DEFAULT_MARGIN):
    env = isotropic_envelope(d, beta) if envelope is None else envelope
    b = heat_bounds(isotropic_state(d, lam), ladder_hamiltonian(d, 2), beta)
    return SweepRow(lam, b.q_c, b.q_h, env.q_star_c, env.q_star_h, bounds_detected(b, env, margin))


def isotropic_sweep(d, beta, steps=400, margin=DEFAULT_MARGIN):
    """Heat bounds against the separable envelope on a uniform ``lambda`` grid over [0, 1]."""
    steps = check_int(steps, "steps", minimum=2)
    env = isotropic_envelope(d, beta)
    return [isotropic_sweep_point(d, beta, lam, env, margin) for lam in np.linspace(0.0, 1.0, steps)]

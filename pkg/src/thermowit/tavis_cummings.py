"""Two spins coupled to a truncated cavity mode on resonance.

Subsystems are ordered (S, M, E): the system spin, the field mode acting as
memory, and the environment spin. Level 0 is the ground state of each spin
and the Fock vacuum of the field.

    H = eps (s_S^+ s_S + a^+ a + s_E^+ s_E) + g (a s_S^+ + a s_E^+ + h.c.)

The free part commutes with the coupling, so total energy and excitation
number are conserved exactly even after truncation.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from thermowit.exceptions import DomainError, FixedPointError, TruncationError, ValidationError
from thermowit.qstate import DensityMatrix, as_density_matrix, partial_trace_array
from thermowit.validation import check_beta, check_finite, check_int

logger = logging.getLogger(__name__)

DEFAULT_N_MAX = 64
POWER_TOL = 1e-12
POWER_MAX_ITER = 100_000
# power iteration hands over to the direct solve when it projects more steps than this
STALL_BUDGET = 2000
RESIDUAL_TOL = 1e-10
LEAKAGE_TOL = 1e-6
# bordered fixed-point system is solved densely up to this many unknowns
DENSE_LIMIT = 1024

SIGMA = np.array([[0.0, 1.0], [0.0, 0.0]])  # lowering: |1> -> |0>


def annihilation(n_max):
    """Truncated ``a`` with ``a|n> = sqrt(n)|n-1>`` on levels ``0..n_max-1``."""
    n_max = check_int(n_max, "n_max", minimum=2)
    return np.diag(np.sqrt(np.arange(1.0, n_max)), 1)


def _kron3(a, b, c):
    return np.kron(np.kron(a, b), c)


def _trace_norm(a):
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (a + a.conj().T)))))


@dataclass(frozen=True, eq=False)
class TCModel:
    epsilon: float
    g: float
    n_max: int
    beta: float
    h_free: np.ndarray = field(init=False, repr=False)
    v_int: np.ndarray = field(init=False, repr=False)
    hamiltonian: np.ndarray = field(init=False, repr=False)
    number: np.ndarray = field(init=False, repr=False)
    _eig: tuple = field(init=False, repr=False)

    def __post_init__(self):
        eps = check_finite(self.epsilon, "epsilon")
        g = check_finite(self.g, "g")
        if g < 0:
            raise DomainError(f"g must be nonnegative, got {g}")
        n = check_int(self.n_max, "n_max", minimum=2)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "n_max", n)
        object.__setattr__(self, "beta", check_beta(self.beta))

        a = annihilation(n)
        i2, i_n = np.eye(2), np.eye(n)
        up = SIGMA.T @ SIGMA
        number = _kron3(up, i_n, i2) + _kron3(i2, a.T @ a, i2) + _kron3(i2, i_n, up)
        coupling = _kron3(SIGMA.T, a, i2) + _kron3(i2, a, SIGMA.T)
        h_free = eps * number
        v_int = g * (coupling + coupling.T)
        h = h_free + v_int
        if np.max(np.abs(h - h.T)) > 1e-10:
            raise ValidationError("Hamiltonian is not Hermitian")
        comm = h_free @ v_int - v_int @ h_free
        if np.max(np.abs(comm)) > 1e-10:
            raise ValidationError("free part does not commute with the coupling")
        w, v = np.linalg.eigh(h)
        object.__setattr__(self, "h_free", h_free)
        object.__setattr__(self, "v_int", v_int)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "number", number)
        object.__setattr__(self, "_eig", (w, v))

    @property
    def dims(self):
        return (2, self.n_max, 2)

    @property
    def dim(self):
        return 4 * self.n_max

    def spin_gibbs(self):
        """Gibbs populations of a single spin, ``(1, e^{-beta eps}) / Z``."""
        w = np.exp(-self.beta * self.epsilon * np.arange(2))
        return w / w.sum()

    def field_gibbs(self):
        """Thermal state of the truncated mode, the seed of the fixed-point search."""
        x = -self.beta * self.epsilon * np.arange(self.n_max)
        p = np.exp(x - x.max())
        return DensityMatrix(np.diag(p / p.sum()))


def build_tc_model(epsilon=1.0, g=1.0, n_max=DEFAULT_N_MAX, beta=0.3):
    return TCModel(epsilon, g, n_max, beta)


def coherent_input_state(beta, epsilon):
    """Pure spin state whose energy-basis populations are Gibbs at ``beta``.

    Amplitudes ``(1, e^{-beta eps/2}) / sqrt(1 + e^{-beta eps})``. ``beta = 0``
    gives ``|+>`` and ``beta = inf`` gives the ground state.
    """
    eps = check_finite(epsilon, "epsilon")
    try:
        beta = float(beta)
    except (TypeError, ValueError):
        raise DomainError(f"beta must be a real number, got {beta!r}") from None
    if math.isnan(beta) or beta < 0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    amp = 0.0 if math.isinf(beta) else math.exp(-0.5 * beta * eps)
    psi = np.array([1.0, amp]) / math.sqrt(1.0 + amp * amp)
    return DensityMatrix.pure(psi)


def propagator(model, t):
    """``U(t) = exp(-i H t)`` from the cached eigendecomposition."""
    t = check_finite(t, "t")
    w, v = model._eig
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def _check_spin_state(rho_s):
    rho_s = as_density_matrix(rho_s)
    if rho_s.dim != 2:
        raise ValidationError(f"system state must be a qubit, got dimension {rho_s.dim}")
    return rho_s


class MemoryChannel:
    """``Lambda(W) = tr_SE[U (rho_S x W x gamma_E) U^+]`` in Kraus form."""

    def __init__(self, model, rho_s, tau):
        rho_s = _check_spin_state(rho_s)
        n = model.n_max
        u = propagator(model, tau).reshape(2, n, 2, 2, n, 2)
        p_s, vecs = np.linalg.eigh(np.asarray(rho_s.matrix))
        p_e = model.spin_gibbs()
        ops = []
        for i in range(2):
            if p_s[i] <= 1e-15:
                continue
            # <s, e| U |psi_i, e'> as an operator on the field
            block = np.tensordot(u, vecs[:, i], axes=([3], [0]))  # (s, m, e, m', e')
            for e_in in range(2):
                weight = math.sqrt(p_s[i] * p_e[e_in])
                for s in range(2):
                    for e in range(2):
                        ops.append(weight * block[s, :, e, :, e_in])
        self.kraus = np.array(ops)
        self.n_max = n

    def __call__(self, w):
        w = np.asarray(w, dtype=complex)
        return np.einsum("kij,jl,kml->im", self.kraus, w, self.kraus.conj(), optimize=True)

    def superoperator(self):
        """Row-major matrix with ``vec(Lambda(W)) = S vec(W)``."""
        n = self.n_max
        s = np.zeros((n * n, n * n), dtype=complex)
        for k in self.kraus:
            s += np.kron(k, k.conj())
        return s


def memory_channel(model, rho_s, tau):
    return MemoryChannel(model, rho_s, tau)


def apply_memory_map(model, rho_s, omega, tau):
    """One cycle of the memory map by full evolution and partial trace.

    Independent of the Kraus construction; used to cross-check it.
    """
    rho_s = _check_spin_state(rho_s)
    omega = np.asarray(as_density_matrix(omega).matrix)
    gamma_e = np.diag(model.spin_gibbs())
    joint = _kron3(np.asarray(rho_s.matrix), omega, gamma_e)
    u = propagator(model, tau)
    return partial_trace_array(u @ joint @ u.conj().T, model.dims, [1])


def unit_eigenvalue_multiplicity(channel, tol=1e-8):
    """Number of superoperator eigenvalues within ``tol`` of 1 (dense; small ``n_max`` only)."""
    if channel.n_max ** 2 > DENSE_LIMIT:
        raise DomainError(f"dense eigen-analysis limited to n_max <= {math.isqrt(DENSE_LIMIT)}")
    ev = np.linalg.eigvals(channel.superoperator())
    return int(np.count_nonzero(np.abs(ev - 1.0) <= tol))


@dataclass(frozen=True)
class FixedPointResult:
    state: DensityMatrix
    residual: float
    iterations: int
    method: str


def _power_iteration(channel, seed, tol, max_iter, budget=STALL_BUDGET, check_every=50):
    w = seed
    diffs = []
    for k in range(1, max_iter + 1):
        nxt = channel(w)
        diff = _trace_norm(nxt - w)
        w = nxt
        if diff <= tol:
            return w, k, True
        diffs.append(diff)
        if k % check_every == 0 and k >= 2 * check_every:
            rate = (diffs[-1] / diffs[-1 - check_every]) ** (1.0 / check_every)
            if rate >= 1.0:
                return w, k, False
            needed = math.log(tol / diff) / math.log(rate)
            if k + needed > min(max_iter, budget):
                return w, k, False
    return w, max_iter, False


def _bordered_solve(channel, start):
    # Lambda(X) - X + tr(X) 1/n = 1/n has the unique fixed point as its solution
    n = channel.n_max
    rhs = (np.eye(n) / n).ravel()
    if n * n <= DENSE_LIMIT:
        a = channel.superoperator() - np.eye(n * n) + np.outer(rhs, np.eye(n).ravel())
        x = np.linalg.lstsq(a, rhs, rcond=None)[0]
        return x.reshape(n, n), "dense"

    def matvec(x):
        w = x.reshape(n, n)
        return (channel(w) - w + np.trace(w) * np.eye(n) / n).ravel()

    op = LinearOperator((n * n, n * n), matvec=matvec, dtype=complex)
    x, info = gmres(op, rhs, x0=start.ravel(), rtol=1e-14, atol=0.0, restart=200, maxiter=50)
    if info < 0:
        raise FixedPointError(f"GMRES breakdown (info={info})")
    return x.reshape(n, n), "gmres"


def _to_state(w):
    w = 0.5 * (w + w.conj().T)
    vals, vecs = np.linalg.eigh(w)
    vals = np.clip(vals, 0.0, None)
    w = (vecs * vals) @ vecs.conj().T
    return w / np.trace(w).real


def memory_fixed_point(model, rho_s, tau, tol=POWER_TOL, max_iter=POWER_MAX_ITER,
                       residual_tol=RESIDUAL_TOL):
    """Field state returned to itself after one interaction cycle of length ``tau``.

    Power iteration from the field's Gibbs state runs first. If it stalls
    (projected iteration count above ``STALL_BUDGET``) the linear fixed-point
    equation is solved directly, bordered by the trace condition.

    Returns
    -------
    FixedPointResult

    Raises
    ------
    FixedPointError
        If the final residual ``||Lambda(W) - W||_1`` exceeds ``residual_tol``.
    """
    tau = check_finite(tau, "tau")
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    channel = memory_channel(model, rho_s, tau)
    seed = np.asarray(model.field_gibbs().matrix)
    w, iters, converged = _power_iteration(channel, seed, tol, max_iter)
    method = "power"
    if not converged:
        logger.info("power iteration stalled after %d steps; solving the linear system", iters)
        w, method = _bordered_solve(channel, w)
        if model.n_max ** 2 <= 256:
            logger.info("unit-eigenvalue multiplicity %d", unit_eigenvalue_multiplicity(channel))
    w = _to_state(w)
    residual = _trace_norm(channel(w) - w)
    if residual > residual_tol:
        raise FixedPointError(
            f"fixed-point residual {residual:.3e} exceeds {residual_tol:.1e} ({method})",
            residual=residual,
        )
    return FixedPointResult(DensityMatrix(w), residual, iters, method)


def leakage_check(state, n_max=None):
    """Population of the two highest Fock levels of the field."""
    rho = as_density_matrix(state)
    if len(rho.dims) == 3:
        field_state = partial_trace_array(np.asarray(rho.matrix), rho.dims, [1])
    elif len(rho.dims) == 1:
        field_state = np.asarray(rho.matrix)
    else:
        raise ValidationError(f"expected (S, M, E) or field-only dims, got {rho.dims}")
    if n_max is not None and field_state.shape[0] != n_max:
        raise ValidationError(f"field dimension {field_state.shape[0]} != n_max {n_max}")
    return float(np.sum(np.real(np.diag(field_state))[-2:]))


@dataclass(frozen=True)
class TCTrajectory:
    times: np.ndarray
    q: np.ndarray
    delta: np.ndarray
    energy_drift: np.ndarray
    leakage: np.ndarray
    excitation_drift: np.ndarray
    system_energy_change: np.ndarray
    fixed_point: FixedPointResult

    @property
    def max_q(self):
        return float(self.q.max())


def run_trajectory(model, rho_s, tau, steps=200, fixed_point=None, leakage_tol=LEAKAGE_TOL):
    """Heat into the environment spin and memory distance on a uniform grid over ``[0, tau]``.

    ``fixed_point`` may be passed to reuse a solved memory state. With
    ``leakage_tol=None`` the truncation check is skipped.
    """
    rho_s = _check_spin_state(rho_s)
    steps = check_int(steps, "steps", minimum=2)
    if fixed_point is None:
        fixed_point = memory_fixed_point(model, rho_s, tau)
    omega = np.asarray(fixed_point.state.matrix)
    gamma_e = model.spin_gibbs()
    rho = np.asarray(rho_s.matrix)
    x0 = _kron3(rho, omega, np.diag(gamma_e))
    w, v = model._eig
    x_eig = v.conj().T @ x0 @ v
    h, num = model.hamiltonian, model.number
    e0 = np.real(np.trace(h @ x0))
    n0 = np.real(np.trace(num @ x0))

    times = np.linspace(0.0, tau, steps)
    out = np.zeros((6, steps))
    for k, t in enumerate(times):
        if t == 0.0:
            x = x0
        else:
            phase = np.exp(-1j * w * t)
            x = v @ (np.outer(phase, phase.conj()) * x_eig) @ v.conj().T
        eta_e = partial_trace_array(x, model.dims, [2])
        eta_m = partial_trace_array(x, model.dims, [1])
        eta_s = partial_trace_array(x, model.dims, [0])
        out[0, k] = model.epsilon * (eta_e[1, 1].real - gamma_e[1])
        out[1, k] = _trace_norm(eta_m - omega)
        out[2, k] = np.real(np.trace(h @ x)) - e0
        out[3, k] = np.sum(np.real(np.diag(eta_m))[-2:])
        out[4, k] = np.real(np.trace(num @ x)) - n0
        out[5, k] = model.epsilon * (eta_s[1, 1].real - rho[1, 1].real)

    traj = TCTrajectory(times, *out, fixed_point=fixed_point)
    worst = float(traj.leakage.max())
    if leakage_tol is not None and worst > leakage_tol:
        raise TruncationError(
            f"field leakage {worst:.3e} exceeds {leakage_tol:.1e}; increase n_max (now {model.n_max})",
            leakage=worst,
        )
    return traj

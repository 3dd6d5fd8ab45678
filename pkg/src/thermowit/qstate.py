"""Dense quantum-state primitives.

Conventions used throughout the package:

* natural logarithms, ``k_B = hbar = 1``;
* composite systems are ordered with the leftmost subsystem varying slowest
  (``np.kron`` order), matrices are row-major;
* Hamiltonian spectra are sorted ascending.
"""

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import entr, logsumexp

from thermowit.exceptions import (
    DimensionError,
    DomainError,
    NumericalConsistencyError,
    ValidationError,
)
from thermowit.validation import (
    PSD_CLAMP,
    TRACE_ATOL,
    check_beta,
    check_dims,
    check_finite,
    check_hermitian,
    check_int,
    check_square_matrix,
    check_subsystems,
    check_unit_interval,
)

# relative tolerance for grouping eigenvalues into one energy level
LEVEL_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Ascending eigenvalues and the unitary of column eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def hermitian_spectrum(a):
    """Deterministic eigendecomposition of a Hermitian matrix.

    Eigenvalues are ascending. Each eigenvector is phase-fixed so that its
    first component with modulus above 1e-10 is real and positive. Exactly
    diagonal input short-circuits to the (stably permuted) standard basis, so
    degenerate levels of diagonal Hamiltonians dephase in the computational
    basis.
    """
    arr = check_hermitian(check_square_matrix(a))
    n = arr.shape[0]
    off = arr - np.diag(np.diag(arr))
    if not np.any(off):
        diag = np.real(np.diag(arr)).copy()
        order = np.argsort(diag, kind="stable")
        vecs = np.eye(n, dtype=complex)[:, order]
        return Spectrum(diag[order], vecs)
    herm = 0.5 * (arr + arr.conj().T)
    vals, vecs = np.linalg.eigh(herm)
    for k in range(n):
        col = vecs[:, k]
        nz = np.flatnonzero(np.abs(col) > 1e-10)
        if nz.size:
            c = col[nz[0]]
            vecs[:, k] = col * (abs(c) / c)
    return Spectrum(vals, vecs)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Positive, unit-trace Hermitian matrix with subsystem dimensions.

    Construction validates the invariants: Hermitian and unit trace to 1e-9,
    smallest eigenvalue >= -1e-9. The stored matrix is the Hermitian part of
    the input; eigenvalues in ``[-1e-9, 0)`` read as zero.
    """

    matrix: np.ndarray
    dims: tuple = None

    def __post_init__(self):
        arr = check_hermitian(check_square_matrix(self.matrix, "density matrix"), "density matrix")
        arr = 0.5 * (arr + arr.conj().T)
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)
        object.__setattr__(self, "dims", check_dims(self.dims, arr.shape[0]))
        tr = np.trace(arr).real
        if abs(tr - 1.0) > TRACE_ATOL:
            raise ValidationError(f"density matrix trace is {tr!r}, expected 1")
        lo = self.raw_eigenvalues[0]
        if lo < -PSD_CLAMP:
            raise ValidationError(f"density matrix has negative eigenvalue {lo:.3e}")

    @classmethod
    def pure(cls, psi, dims=None):
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), dims)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @cached_property
    def raw_eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    @cached_property
    def eigenvalues(self):
        """Ascending eigenvalues with float noise clamped to zero."""
        return np.clip(self.raw_eigenvalues, 0.0, None)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.matrix, dtype=dtype)


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Hermitian observable with a cached ascending spectrum."""

    matrix: np.ndarray
    dims: tuple = None
    spectrum: Spectrum = field(init=False, repr=False)

    def __post_init__(self):
        arr = check_hermitian(check_square_matrix(self.matrix, "Hamiltonian"), "Hamiltonian")
        arr = 0.5 * (arr + arr.conj().T)
        arr.setflags(write=False)
        object.__setattr__(self, "matrix", arr)
        object.__setattr__(self, "dims", check_dims(self.dims, arr.shape[0]))
        object.__setattr__(self, "spectrum", hermitian_spectrum(arr))

    @classmethod
    def diagonal(cls, energies, dims=None):
        return cls(np.diag(np.asarray(energies, dtype=float)), dims)

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def eigenvalues(self):
        return self.spectrum.eigenvalues

    @property
    def eigenbasis(self):
        return self.spectrum.eigenvectors

    @property
    def ground_energy(self):
        return float(self.eigenvalues[0])

    @property
    def top_energy(self):
        return float(self.eigenvalues[-1])

    @property
    def spectral_range(self):
        return self.top_energy - self.ground_energy

    def multiplicity(self, which):
        """Degeneracy of the ground (``"ground"``) or top (``"top"``) level."""
        e = self.eigenvalues
        tol = LEVEL_RTOL * max(1.0, float(np.max(np.abs(e))))
        if which == "ground":
            return int(np.count_nonzero(e - e[0] <= tol))
        if which == "top":
            return int(np.count_nonzero(e[-1] - e <= tol))
        raise ValueError(f"which must be 'ground' or 'top', got {which!r}")


def as_density_matrix(rho, dims=None):
    """Coerce an array-like (or pass through a :class:`DensityMatrix`)."""
    if isinstance(rho, DensityMatrix):
        if dims is not None and tuple(dims) != rho.dims:
            return DensityMatrix(rho.matrix, dims)
        return rho
    return DensityMatrix(rho, dims)


def as_hamiltonian(h, dims=None):
    if isinstance(h, Hamiltonian):
        return h
    return Hamiltonian(h, dims)


def _matrix(x):
    if isinstance(x, (DensityMatrix, Hamiltonian)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def _check_same_dim(a, b):
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")


# ---------------------------------------------------------------------------
# composition and reduction


def tensor_product(*factors):
    """Kronecker product, leftmost factor slowest.

    Returns a :class:`DensityMatrix` (dims concatenated) when every factor is
    one, otherwise a plain complex array.
    """
    if not factors:
        raise DimensionError("tensor_product needs at least one factor")
    out = _matrix(factors[0])
    for f in factors[1:]:
        out = np.kron(out, _matrix(f))
    if all(isinstance(f, DensityMatrix) for f in factors):
        dims = tuple(d for f in factors for d in f.dims)
        return DensityMatrix(out, dims)
    return out


def partial_trace_array(mat, dims, keep):
    """Partial trace of a raw square array over every subsystem not in ``keep``."""
    dims = tuple(dims)
    n = len(dims)
    keep = check_subsystems(keep, n)
    rows = [chr(ord("a") + i) for i in range(n)]
    cols = [r if i not in keep else chr(ord("A") + i) for i, r in enumerate(rows)]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    t = np.asarray(mat).reshape(dims + dims)
    red = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    dk = math.prod(dims[i] for i in keep)
    return red.reshape(dk, dk)


def partial_trace(rho, keep):
    """Reduced state on the subsystems in ``keep`` (original relative order)."""
    rho = as_density_matrix(rho)
    keep = check_subsystems(keep, len(rho.dims))
    red = partial_trace_array(rho.matrix, rho.dims, keep)
    return DensityMatrix(red, tuple(rho.dims[i] for i in keep))


# ---------------------------------------------------------------------------
# Gibbs states


def gibbs_populations(energies, x):
    """Gibbs weights ``exp(-x e_i) / Z`` and ``log Z`` for finite ``x``.

    Exponents are shifted by their maximum before exponentiating.
    """
    logits = -x * np.asarray(energies, dtype=float)
    shift = np.max(logits)
    w = np.exp(logits - shift)
    s = w.sum()
    return w / s, float(shift + math.log(s))


def log_partition(h, x):
    """``log tr exp(-x H)``, stable for large ``|x e|``."""
    h = as_hamiltonian(h)
    x = check_finite(x, "x")
    return float(logsumexp(-x * h.eigenvalues))


def gibbs_state(h, x):
    """``exp(-x H) / Z(x)`` for any finite real ``x``.

    Negative ``x`` gives the population-inverted thermal state.
    """
    h = as_hamiltonian(h)
    x = check_finite(x, "x")
    p, _ = gibbs_populations(h.eigenvalues, x)
    v = h.eigenbasis
    return DensityMatrix((v * p) @ v.conj().T, h.dims)


def gibbs_limit(h, direction):
    """Limit of :func:`gibbs_state` as ``x -> +inf`` (``direction=+1``) or ``-inf``.

    The limit is the maximally mixed state on the ground (resp. top) level,
    accounting for its multiplicity.
    """
    h = as_hamiltonian(h)
    if direction not in (1, -1):
        raise DomainError(f"direction must be +1 or -1, got {direction!r}")
    m = h.multiplicity("ground" if direction == 1 else "top")
    p = np.zeros(h.dim)
    if direction == 1:
        p[:m] = 1.0 / m
    else:
        p[h.dim - m:] = 1.0 / m
    v = h.eigenbasis
    return DensityMatrix((v * p) @ v.conj().T, h.dims)


# ---------------------------------------------------------------------------
# entropic functionals


def von_neumann_entropy(rho):
    """``-tr rho log rho`` (natural log) from clamped eigenvalues."""
    rho = as_density_matrix(rho)
    return float(np.sum(entr(rho.eigenvalues)))


def binary_entropy(p):
    p = check_unit_interval(p)
    return float(entr(p) + entr(1.0 - p))


def relative_entropy(rho, sigma):
    """``D(rho || sigma)``; ``math.inf`` when supp(rho) is not inside supp(sigma)."""
    rho = as_density_matrix(rho)
    sigma = as_density_matrix(sigma)
    _check_same_dim(rho, sigma)
    mu, v = np.linalg.eigh(sigma.matrix)
    weights = np.real(np.einsum("ij,ik,kj->j", v.conj(), rho.matrix, v))
    cross = 0.0
    for m, w in zip(mu, weights):
        if m < 1e-12:
            if w > 1e-10:
                return math.inf
            continue
        cross += w * math.log(m)
    return float(-von_neumann_entropy(rho) - cross)


def _check_partition(rho, a, b):
    n = len(rho.dims)
    a = check_subsystems(a, n, "a")
    b = check_subsystems(b, n, "b")
    if set(a) & set(b):
        raise DimensionError(f"index sets overlap: {a} and {b}")
    if set(a) | set(b) != set(range(n)):
        raise DimensionError(f"index sets {a}, {b} do not cover all {n} subsystems")
    return a, b


def conditional_entropy(rho, a, b):
    """``S(A|B) = S(AB) - S(B)``."""
    rho = as_density_matrix(rho)
    a, b = _check_partition(rho, a, b)
    return von_neumann_entropy(rho) - von_neumann_entropy(partial_trace(rho, b))


def mutual_information(rho, a, b):
    rho = as_density_matrix(rho)
    a, b = _check_partition(rho, a, b)
    return (
        von_neumann_entropy(partial_trace(rho, a))
        + von_neumann_entropy(partial_trace(rho, b))
        - von_neumann_entropy(rho)
    )


def average_energy(rho, h):
    """``tr(rho H)`` as a real number."""
    rho = as_density_matrix(rho)
    h = as_hamiltonian(h)
    _check_same_dim(rho, h)
    val = np.sum(rho.matrix * h.matrix.T)
    if abs(val.imag) > 1e-8:
        raise NumericalConsistencyError(f"energy has imaginary part {val.imag:.3e}")
    return float(val.real)


def free_energy(rho, h, beta):
    """Nonequilibrium free energy ``E(rho) - S(rho)/beta``."""
    beta = check_beta(beta)
    return average_energy(rho, h) - von_neumann_entropy(rho) / beta


def dephase(rho, h):
    """Remove all coherence in the eigenbasis of ``h``."""
    rho = as_density_matrix(rho)
    h = as_hamiltonian(h)
    _check_same_dim(rho, h)
    v = h.eigenbasis
    pops = np.real(np.einsum("ij,ik,kj->j", v.conj(), rho.matrix, v))
    return DensityMatrix((v * pops) @ v.conj().T, rho.dims)


def rel_entropy_of_coherence(rho, h):
    """Relative entropy of coherence, computed as ``S(dephased) - S(rho)``."""
    rho = as_density_matrix(rho)
    return von_neumann_entropy(dephase(rho, h)) - von_neumann_entropy(rho)


def trace_distance(rho, sigma):
    """Trace norm ``||rho - sigma||_1`` (no 1/2 prefactor), in [0, 2]."""
    a = _matrix(rho)
    b = _matrix(sigma)
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


# ---------------------------------------------------------------------------
# random sampling (test utilities)


def _rng(seed):
    return np.random.default_rng(seed)


def random_density_matrix(dim, seed, rank=None):
    """Ginibre-distributed density matrix of the given rank (default full)."""
    dim = check_int(dim, "dim", minimum=1)
    rank = dim if rank is None else check_int(rank, "rank", minimum=1, maximum=dim)
    rng = _rng(seed)
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real)


def random_pure_state(dim, seed, dims=None):
    dim = check_int(dim, "dim", minimum=1)
    rng = _rng(seed)
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return DensityMatrix.pure(psi, dims)


def random_unitary(dim, seed):
    """``exp(iA)`` for a random Hermitian ``A``, via its spectrum."""
    dim = check_int(dim, "dim", minimum=1)
    rng = _rng(seed)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    spec = hermitian_spectrum(0.5 * (g + g.conj().T))
    v = spec.eigenvectors
    return (v * np.exp(1j * spec.eigenvalues)) @ v.conj().T


def random_separable_state(dims, k, seed):
    """Convex mixture of ``k`` random product states (separable by construction).

    Each local factor has a random rank, so pure product components occur.
    """
    dims = tuple(check_int(d, "dims entry", minimum=1) for d in dims)
    k = check_int(k, "k", minimum=1)
    rng = _rng(seed)
    weights = rng.dirichlet(np.ones(k)) if k > 1 else np.ones(1)
    total = np.zeros((math.prod(dims),) * 2, dtype=complex)
    for w in weights:
        term = np.ones((1, 1), dtype=complex)
        for d in dims:
            r = int(rng.integers(1, d + 1))
            g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
            m = g @ g.conj().T
            term = np.kron(term, m / np.trace(m).real)
        total += w * term
    return DensityMatrix(total / np.trace(total).real, dims)


# ---------------------------------------------------------------------------
# JSON file format: {"dims": [...], "re": [...], "im": [...]}, row-major


def matrix_to_json(matrix, dims):
    arr = np.asarray(matrix, dtype=complex)
    return {"dims": [int(d) for d in dims], "re": arr.real.ravel().tolist(), "im": arr.imag.ravel().tolist()}


def _matrix_from_json(obj):
    if not isinstance(obj, dict):
        raise ValidationError("matrix file must hold a JSON object")
    missing = {"dims", "re", "im"} - set(obj)
    if missing:
        raise ValidationError(f"matrix file is missing keys {sorted(missing)}")
    dims = obj["dims"]
    if not isinstance(dims, list) or not dims:
        raise ValidationError("'dims' must be a non-empty list")
    try:
        dims = tuple(int(d) for d in dims)
    except (TypeError, ValueError):
        raise ValidationError("'dims' entries must be integers") from None
    dims = check_dims(dims, math.prod(dims))
    n = math.prod(dims)
    re, im = obj["re"], obj["im"]
    if not isinstance(re, list) or not isinstance(im, list):
        raise ValidationError("'re' and 'im' must be lists")
    if len(re) != n * n or len(im) != n * n:
        raise ValidationError(f"'re'/'im' must have {n * n} entries for dims {list(dims)}")
    try:
        mat = np.asarray(re, dtype=float) + 1j * np.asarray(im, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError("'re'/'im' entries must be numbers") from None
    return mat.reshape(n, n), dims


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed JSON ({exc})") from None
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None


def load_state(path):
    mat, dims = _matrix_from_json(_read_json(path))
    return DensityMatrix(mat, dims)


def load_hamiltonian(path):
    mat, dims = _matrix_from_json(_read_json(path))
    return Hamiltonian(mat, dims)


def save_matrix(obj, path):
    """Write a :class:`DensityMatrix` or :class:`Hamiltonian` in the JSON format."""
    with open(path, "w") as fh:
        json.dump(matrix_to_json(obj.matrix, obj.dims), fh)

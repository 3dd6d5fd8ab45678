"""scikit-learn style wrappers around the heat bounds and witness envelopes.

The transformers map batches of states to ``[q_c, q_h]`` rows; the witnesses
fit an envelope from set-level data and classify measured heats.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from thermowit.exceptions import ValidationError
from thermowit.heat import heat_bounds
from thermowit.qstate import as_hamiltonian
from thermowit.validation import check_beta
from thermowit.witnesses import (
    DEFAULT_MARGIN,
    LocalData,
    incoherent_envelope,
    separable_envelope,
    verdict,
)


def _as_state_batch(x):
    if isinstance(x, np.ndarray) and x.ndim == 2:
        return [x]
    return list(x)


def _heats(q):
    return check_array(np.atleast_1d(np.asarray(q, dtype=float)).reshape(-1, 1)).ravel()


class HeatBoundsTransformer(TransformerMixin, BaseEstimator):
    """Map density matrices to rows ``[q_c, q_h]``.

    Parameters
    ----------
    hamiltonian : array_like or Hamiltonian
    beta : float, default=1.0
    """

    def __init__(self, hamiltonian=None, beta=1.0):
        self.hamiltonian = hamiltonian
        self.beta = beta

    def fit(self, X=None, y=None):
        if self.hamiltonian is None:
            raise ValidationError("hamiltonian must be set")
        self.hamiltonian_ = as_hamiltonian(self.hamiltonian)
        self.beta_ = check_beta(self.beta)
        return self

    def transform(self, X):
        check_is_fitted(self, "hamiltonian_")
        rows = []
        for rho in _as_state_batch(X):
            b = heat_bounds(rho, self.hamiltonian_, self.beta_)
            rows.append((b.q_c, b.q_h))
        return np.array(rows, dtype=float).reshape(-1, 2)


class _EnvelopeWitness(BaseEstimator):
    def predict(self, q):
        """Verdict strings for each measured heat."""
        check_is_fitted(self, "envelope_")
        return np.array([verdict(v, self.envelope_, self.margin).value for v in _heats(q)])

    def decision_function(self, q):
        """Signed distance outside the envelope; positive means detected (before the margin)."""
        check_is_fitted(self, "envelope_")
        q = _heats(q)
        env = self.envelope_
        return np.maximum(env.q_star_c - q, q - env.q_star_h)


class SeparableWitness(_EnvelopeWitness):
    """Entanglement witness fitted on per-party marginal data.

    ``fit`` takes a list of :class:`~thermowit.witnesses.LocalData` (or
    ``(energy, entropy)`` pairs combined with ``local_hamiltonians``).
    """

    def __init__(self, beta=1.0, local_hamiltonians=None, entropy_mode="exact",
                 margin=DEFAULT_MARGIN):
        self.beta = beta
        self.local_hamiltonians = local_hamiltonians
        self.entropy_mode = entropy_mode
        self.margin = margin

    def fit(self, X, y=None):
        data = []
        for k, item in enumerate(X):
            if isinstance(item, LocalData):
                data.append(item)
                continue
            if self.local_hamiltonians is None:
                raise ValidationError("local_hamiltonians required for raw (energy, entropy) pairs")
            energy, entropy = item
            data.append(LocalData(energy, entropy, self.local_hamiltonians[k]))
        self.envelope_ = separable_envelope(data, self.beta, self.entropy_mode)
        return self


class CoherenceWitness(_EnvelopeWitness):
    """Coherence witness for states of a known average energy; ``fit`` takes that energy."""

    def __init__(self, hamiltonian=None, beta=1.0, extremal="vertex", margin=DEFAULT_MARGIN):
        self.hamiltonian = hamiltonian
        self.beta = beta
        self.extremal = extremal
        self.margin = margin

    def fit(self, X, y=None):
        if self.hamiltonian is None:
            raise ValidationError("hamiltonian must be set")
        energy = np.asarray(X, dtype=float).ravel()
        if energy.size != 1:
            raise ValidationError(f"expected a single energy, got {energy.size} values")
        self.envelope_ = incoherent_envelope(energy[0], self.hamiltonian, self.beta, self.extremal)
        return self

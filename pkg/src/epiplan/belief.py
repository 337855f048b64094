"""Belief representation and exact discrete Bayes filtering.

Beliefs are dense probability vectors over the active state space (base
grid cells or an augmented product space).  Prediction pushes a belief
through a transition matrix, the update conditions on an observation bin,
and the observation marginal supplies the mixture weights the planner
needs.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from epiplan.errors import ContractError, ImpossibleObservationError
from epiplan.observation import ObservationModel
from epiplan.tsir import TransitionModel

SUM_TOL = 1e-9


@dataclass
class Belief:
    """Normalized probability weights over state cells."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ContractError("belief weights must be a vector")
        if np.any(w < 0):
            raise ContractError("belief weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > SUM_TOL:
            raise ContractError(
                f"belief weights must sum to 1 within {SUM_TOL} (got {total})")
        self.weights = w

    @classmethod
    def uniform(cls, n: int) -> "Belief":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def point_mass(cls, n: int, index: int) -> "Belief":
        w = np.zeros(n)
        w[index] = 1.0
        return cls(w)

    def __len__(self) -> int:
        return len(self.weights)


def _matrix_for_action(T, a: int):
    if isinstance(T, TransitionModel):
        return T.matrices[a]
    return T[a]


def predict(b: Belief, a: int, T) -> Belief:
    """Push a belief through the transition of action ``a``.

    b_pred(s') = sum_s T_a[s, s'] b(s), renormalized to undo accumulated
    floating-point drift (asserted to be below 1e-9 beforehand).
    """
    mat = _matrix_for_action(T, a)
    if mat.shape[0] != len(b):
        raise ContractError(
            f"belief has {len(b)} entries but transition is {mat.shape}")
    if sp.issparse(mat):
        w = mat.T @ b.weights
    else:
        w = np.asarray(mat).T @ b.weights
    total = w.sum()
    if abs(total - 1.0) > SUM_TOL:
        raise ContractError(
            f"prediction drifted from normalization by {abs(total - 1.0)}")
    return Belief(w / total)


def _level_matrix(O, level: int):
    if isinstance(O, ObservationModel):
        return O.levels[level]
    return O[level]


def update(b_pred: Belief, o: int, level: int, O) -> Belief:
    """Condition a predicted belief on observation bin ``o``.

    b'(s') = O_level[s', o] * b_pred(s') / Pr(o | b_pred, level).  A zero
    normalizer means the model assigned the observation no probability;
    that is raised, not silently repaired.
    """
    mat = _level_matrix(O, level)
    if mat.shape[0] != len(b_pred):
        raise ContractError("belief and observation model dimensions disagree")
    likelihood = mat[:, o]
    first = likelihood[0]
    if first > 0.0 and np.all(likelihood == first):
        # constant likelihood cancels exactly (null survey, uninformative test)
        return Belief(b_pred.weights.copy())
    w = likelihood * b_pred.weights
    normalizer = w.sum()
    if normalizer <= 0.0:
        raise ImpossibleObservationError(
            f"observation bin {o} has zero probability under the prediction")
    return Belief(w / normalizer)


def obs_marginal(b_pred: Belief, level: int, O) -> np.ndarray:
    """Probability of each observation bin under a predicted belief."""
    mat = _level_matrix(O, level)
    if mat.shape[0] != len(b_pred):
        raise ContractError("belief and observation model dimensions disagree")
    m = b_pred.weights @ mat
    total = m.sum()
    if abs(total - 1.0) > SUM_TOL:
        raise ContractError(
            f"observation marginal drifted from normalization by {abs(total - 1.0)}")
    return m / total

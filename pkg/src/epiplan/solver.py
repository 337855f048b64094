"""Dynamic-programming solvers for the discretized planning problems.

Covers MDP value iteration and policy iteration, the finite-horizon POMDP
backup with piecewise-linear value functions (exact cross-sum and a
reduced one-vector-per-action variant), dominance pruning, greedy action
extraction, and a brute-force expectimax oracle used to validate the
solvers on small instances.

The value function at each stage is the pointwise minimum of a finite set
of state-indexed hyperplanes (alpha vectors), each tagged with the action
it recommends.
"""

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import qmc

from epiplan.belief import Belief
from epiplan.errors import ContractError, SolverError
from epiplan.tsir import TransitionModel


@dataclass
class AlphaVector:
    """A value hyperplane over state cells, tagged with its action."""

    values: np.ndarray
    action: int

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ContractError("alpha vector values must be finite")


@dataclass
class AlphaVectorSet:
    """The hyperplanes representing one stage's value function.

    V(b) = min over vectors of <values, b>.  ``stage`` is the stage index
    within a finite-horizon solve, or -1 for a stationary set.
    """

    stage: int
    vectors: list

    def __post_init__(self):
        if len(self.vectors) == 0:
            raise ContractError("an alpha-vector set must be nonempty")
        dim = len(self.vectors[0].values)
        if any(len(v.values) != dim for v in self.vectors):
            raise ContractError("all vectors in a set must share one dimension")

    def matrix(self) -> np.ndarray:
        return np.vstack([v.values for v in self.vectors])

    def value(self, b) -> float:
        w = b.weights if isinstance(b, Belief) else np.asarray(b)
        return float(np.min(self.matrix() @ w))

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class MdpSolution:
    """Values and greedy policy from an MDP solve.

    Finite horizon: ``values`` has shape (K + 1, n) with row K the
    terminal values, ``policy`` has shape (K, n).  Stationary: both are
    1-D over states.
    """

    values: np.ndarray
    policy: np.ndarray
    stationary: bool
    iterations: int = 0
    residual: float = 0.0


@dataclass
class SolveSettings:
    """Knobs shared by the MDP and POMDP solvers."""

    horizon: Optional[int] = None
    discount: float = 1.0
    tolerance: float = 1e-8
    max_iterations: int = 10_000
    backup_mode: str = "exact"
    witness_count: int = 64
    prune_grid_size: int = 512
    max_cross_products: int = 200_000
    terminal_values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.horizon is not None and self.horizon < 1:
            raise ContractError("horizon must be >= 1")
        if not (0.0 < self.discount <= 1.0):
            raise ContractError("discount must lie in (0, 1]")
        if self.tolerance <= 0 or self.max_iterations < 1:
            raise ContractError("tolerance and max_iterations must be positive")
        if self.backup_mode not in ("exact", "reduced"):
            raise ContractError(f"unknown backup mode {self.backup_mode!r}")


def _transition_list(T) -> list:
    if isinstance(T, TransitionModel):
        return T.matrices
    return list(T)


def _observation_list(O, n_actions: int) -> list:
    """Per-action observation matrices; a single matrix is shared."""
    if isinstance(O, np.ndarray) and O.ndim == 2:
        return [O] * n_actions
    mats = list(O)
    if len(mats) == 1:
        return mats * n_actions
    if len(mats) != n_actions:
        raise ContractError("need one observation matrix per action")
    return mats


def _apply_transition(mat, v: np.ndarray) -> np.ndarray:
    out = mat @ v
    return np.asarray(out).ravel()


def belief_grid(n_states: int, count: int) -> list:
    """A deterministic spread of beliefs over the simplex.

    Point masses and the uniform belief first, then low-discrepancy
    points mapped onto the simplex.  Same inputs always give the same
    grid, so solver output stays reproducible.
    """
    if count < 1:
        raise ContractError("belief grid size must be >= 1")
    points = []
    for i in range(min(n_states, count)):
        points.append(Belief.point_mass(n_states, i))
    if len(points) < count:
        points.append(Belief.uniform(n_states))
    remaining = count - len(points)
    if remaining > 0:
        sampler = qmc.Sobol(d=n_states, scramble=False)
        m = int(np.ceil(np.log2(remaining + 1)))
        draws = sampler.random_base2(m)[1:remaining + 1]  # drop the all-zero point
        spacing = -np.log1p(-draws * (1 - 1e-12)) + 1e-12
        for row in spacing:
            points.append(Belief(row / row.sum()))
    return points[:count]


# ---------------------------------------------------------------------------
# MDP solvers
# ---------------------------------------------------------------------------

def _q_values(T_list, cost, v_next, discount):
    q = np.empty_like(cost)
    for a, mat in enumerate(T_list):
        q[:, a] = cost[:, a] + discount * _apply_transition(mat, v_next)
    return q


def mdp_value_iteration(T, cost, settings: SolveSettings) -> MdpSolution:
    """Backward recursion (finite horizon) or fixed-point iteration.

    Finite horizon solves V_k(s) = min_a [l(s, a) + alpha * E V_{k+1}]
    down from the terminal values; the infinite-horizon mode iterates the
    same backup until the maximum change drops below tolerance.
    """
    T_list = _transition_list(T)
    cost = np.asarray(cost, dtype=np.float64)
    if not np.all(np.isfinite(cost)):
        raise ContractError("stage costs must be finite")
    n = cost.shape[0]

    if settings.horizon is not None:
        K = settings.horizon
        values = np.zeros((K + 1, n))
        policy = np.zeros((K, n), dtype=np.int64)
        if settings.terminal_values is not None:
            values[K] = np.asarray(settings.terminal_values, dtype=np.float64)
        for k in range(K - 1, -1, -1):
            q = _q_values(T_list, cost, values[k + 1], settings.discount)
            values[k] = q.min(axis=1)
            policy[k] = q.argmin(axis=1)
        return MdpSolution(values=values, policy=policy, stationary=False,
                           iterations=K)

    if settings.discount >= 1.0:
        raise ContractError("infinite-horizon mode requires discount < 1")
    v = np.zeros(n)
    for it in range(settings.max_iterations):
        q = _q_values(T_list, cost, v, settings.discount)
        v_new = q.min(axis=1)
        residual = float(np.max(np.abs(v_new - v)))
        v = v_new
        if residual < settings.tolerance:
            return MdpSolution(values=v, policy=q.argmin(axis=1),
                               stationary=True, iterations=it + 1,
                               residual=residual)
    raise SolverError(
        f"value iteration did not converge in {settings.max_iterations} "
        f"iterations (residual {residual:.3e})")


def mdp_policy_iteration(T, cost, settings: SolveSettings) -> MdpSolution:
    """Alternate exact policy evaluation and greedy improvement.

    Evaluation solves (I - alpha * T_pi) v = l_pi directly; improvement
    picks the greedy action per state (lowest index on ties).  Terminates
    when the policy stops changing.  Each improvement is asserted not to
    increase any state value.
    """
    if settings.discount >= 1.0:
        raise ContractError("policy iteration requires discount < 1")
    T_list = [np.asarray(m.todense()) if sp.issparse(m) else np.asarray(m)
              for m in _transition_list(T)]
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    eye = np.eye(n)

    policy = cost.argmin(axis=1)
    v = None
    for it in range(settings.max_iterations):
        t_pi = np.stack([T_list[policy[s]][s] for s in range(n)])
        l_pi = cost[np.arange(n), policy]
        try:
            v_new = np.linalg.solve(eye - settings.discount * t_pi, l_pi)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"policy evaluation system is singular: {exc}")
        if v is not None and np.any(v_new > v + 1e-9):
            raise SolverError("policy improvement increased a state value")
        v = v_new
        q = _q_values(T_list, cost, v, settings.discount)
        new_policy = q.argmin(axis=1)
        if np.array_equal(new_policy, policy):
            return MdpSolution(values=v, policy=policy, stationary=True,
                               iterations=it + 1)
        policy = new_policy
    raise SolverError(
        f"policy iteration did not converge in {settings.max_iterations} iterations")


# ---------------------------------------------------------------------------
# POMDP backups
# ---------------------------------------------------------------------------

def _projections(next_set: AlphaVectorSet, mat_t, mat_o) -> list:
    """Per-observation projections of the next stage's vectors.

    Entry o is an (m, n) matrix whose row i is
    g(s) = sum_s' T[s, s'] O[s', o] gamma_i(s').
    """
    gamma = next_set.matrix()  # (m, n)
    out = []
    for o in range(mat_o.shape[1]):
        weighted = gamma.T * mat_o[:, o:o + 1]  # (n, m)
        out.append(np.asarray(mat_t @ weighted).T)
    return out


def pomdp_backup_exact(next_set: AlphaVectorSet, T, O, cost,
                       settings: SolveSettings, prune: bool = True) -> AlphaVectorSet:
    """One exact stage of the piecewise-linear backup.

    For each action, next-stage vectors are projected through transition
    and observation, one projection is chosen per observation bin
    (full cross-sum), and the immediate cost row is added.  The union
    over actions is then pruned.
    """
    T_list = _transition_list(T)
    cost = np.asarray(cost, dtype=np.float64)
    n_actions = len(T_list)
    O_list = _observation_list(O, n_actions)
    m = len(next_set)

    vectors = []
    for a in range(n_actions):
        n_obs = O_list[a].shape[1]
        n_combos = m ** n_obs
        if n_combos > settings.max_cross_products:
            raise SolverError(
                f"cross-sum of {n_combos} candidates exceeds the guard "
                f"({settings.max_cross_products}); use the reduced backup")
        proj = _projections(next_set, T_list[a], O_list[a])
        combos = np.array(list(itertools.product(range(m), repeat=n_obs)),
                          dtype=np.int64)
        stacked = np.zeros((n_combos, cost.shape[0]))
        for o in range(n_obs):
            stacked += proj[o][combos[:, o]]
        stacked = cost[:, a][None, :] + settings.discount * stacked
        vectors.extend(AlphaVector(values=row, action=a) for row in stacked)

    out = AlphaVectorSet(stage=next_set.stage - 1, vectors=vectors)
    if prune:
        grid = belief_grid(cost.shape[0], settings.prune_grid_size)
        out = prune_dominated(out, grid)
    return out


def pomdp_backup_reduced(next_set: AlphaVectorSet, T, O, cost,
                         settings: SolveSettings,
                         witnesses: Sequence[Belief]) -> AlphaVectorSet:
    """Witness-based backup keeping at most one vector per action.

    For every witness belief the pointwise-best cross-sum candidate of
    each action is assembled (choosing the projection minimizing the dot
    product per observation); among those candidates the one with the
    lowest mean value over the witnesses survives.
    """
    if len(witnesses) == 0:
        raise ContractError("the reduced backup needs at least one witness belief")
    T_list = _transition_list(T)
    cost = np.asarray(cost, dtype=np.float64)
    n_actions = len(T_list)
    O_list = _observation_list(O, n_actions)
    wit = np.vstack([b.weights for b in witnesses])  # (w, n)

    vectors = []
    for a in range(n_actions):
        proj = _projections(next_set, T_list[a], O_list[a])
        n_obs = O_list[a].shape[1]
        choices = np.stack([np.argmin(p @ wit.T, axis=0) for p in proj])  # (n_obs, w)
        # one candidate per witness; duplicates collapse
        seen = {}
        for w_idx in range(wit.shape[0]):
            key = tuple(choices[:, w_idx])
            if key not in seen:
                acc = np.zeros(cost.shape[0])
                for o in range(n_obs):
                    acc += proj[o][key[o]]
                seen[key] = cost[:, a] + settings.discount * acc
        candidates = np.vstack(list(seen.values()))
        means = (candidates @ wit.T).mean(axis=1)
        vectors.append(AlphaVector(values=candidates[int(np.argmin(means))],
                                   action=a))
    return AlphaVectorSet(stage=next_set.stage - 1, vectors=vectors)


def prune_dominated(vector_set: AlphaVectorSet,
                    grid: Sequence[Belief]) -> AlphaVectorSet:
    """Drop duplicate, pointwise-dominated, and never-minimal vectors.

    A vector loses to another that is componentwise <= and strictly less
    somewhere; survivors must attain the minimum at at least one grid
    belief.  The min-dot value at every grid point is unchanged.
    """
    if len(grid) == 0:
        raise ContractError("pruning needs a nonempty belief grid")
    mat = vector_set.matrix()
    m = mat.shape[0]

    # exact duplicates: keep the first occurrence
    keep = np.ones(m, dtype=bool)
    seen = set()
    for i in range(m):
        key = mat[i].tobytes()
        if key in seen:
            keep[i] = False
        else:
            seen.add(key)

    # pointwise dominance among the rest, scanning in order of row sum
    idx = np.flatnonzero(keep)
    order = idx[np.argsort(mat[idx].sum(axis=1), kind="stable")]
    kept_rows = []
    for i in order:
        row = mat[i]
        if kept_rows:
            k = np.vstack(kept_rows)
            dominated = np.any(np.all(k <= row, axis=1) & np.any(k < row, axis=1))
            if dominated:
                keep[i] = False
                continue
        kept_rows.append(row)

    # grid filter: survivors must be minimal somewhere on the grid
    idx = np.flatnonzero(keep)
    dots = mat[idx] @ np.vstack([b.weights for b in grid]).T  # (m', g)
    minimal = dots == dots.min(axis=0, keepdims=True)
    idx = idx[np.any(minimal, axis=1)]

    vectors = [vector_set.vectors[i] for i in sorted(idx)]
    return AlphaVectorSet(stage=vector_set.stage, vectors=vectors)


def greedy_action(b: Belief, vector_set: AlphaVectorSet) -> tuple:
    """Action and value of the minimizing hyperplane at a belief.

    Ties on the dot product break toward the lowest action index.
    """
    dots = vector_set.matrix() @ b.weights
    best = dots.min()
    actions = [v.action for v, d in zip(vector_set.vectors, dots) if d == best]
    return min(actions), float(best)


def _terminal_set(n: int, horizon: int,
                  terminal_values: Optional[np.ndarray]) -> AlphaVectorSet:
    values = (np.zeros(n) if terminal_values is None
              else np.asarray(terminal_values, dtype=np.float64))
    return AlphaVectorSet(stage=horizon, vectors=[AlphaVector(values=values, action=0)])


def solve_pomdp(T, O, cost, settings: SolveSettings,
                witnesses: Optional[Sequence[Belief]] = None) -> list:
    """Finite-horizon backward recursion over alpha-vector sets.

    Returns one set per stage, index 0 first; the finite-horizon policy
    is non-stationary, so each stage keeps its own set.
    """
    if settings.horizon is None:
        raise ContractError("solve_pomdp needs a finite horizon; "
                            "use solve_pomdp_infinite for the stationary case")
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if settings.backup_mode == "reduced" and witnesses is None:
        witnesses = belief_grid(n, settings.witness_count)

    current = _terminal_set(n, settings.horizon, settings.terminal_values)
    stages = []
    for _ in range(settings.horizon):
        if settings.backup_mode == "exact":
            current = pomdp_backup_exact(current, T, O, cost, settings)
        else:
            current = pomdp_backup_reduced(current, T, O, cost, settings,
                                           witnesses)
        stages.append(current)
    stages.reverse()
    return stages


def solve_pomdp_infinite(T, O, cost, settings: SolveSettings,
                         witnesses: Optional[Sequence[Belief]] = None) -> AlphaVectorSet:
    """Stationary alpha-vector set via value iteration over sets.

    Iterates the selected backup until the value change on the witness
    grid falls below tolerance.
    """
    if settings.discount >= 1.0:
        raise ContractError("infinite-horizon mode requires discount < 1")
    cost = np.asarray(cost, dtype=np.float64)
    n = cost.shape[0]
    if witnesses is None:
        witnesses = belief_grid(n, max(settings.witness_count,
                                       settings.prune_grid_size))
    wit = np.vstack([b.weights for b in witnesses])

    current = _terminal_set(n, 0, settings.terminal_values)
    vals = (current.matrix() @ wit.T).min(axis=0)
    for it in range(settings.max_iterations):
        if settings.backup_mode == "exact":
            current = pomdp_backup_exact(current, T, O, cost, settings)
        else:
            current = pomdp_backup_reduced(current, T, O, cost, settings,
                                           witnesses)
        current.stage = -1
        new_vals = (current.matrix() @ wit.T).min(axis=0)
        residual = float(np.max(np.abs(new_vals - vals)))
        vals = new_vals
        if residual < settings.tolerance:
            return current
    raise SolverError(
        f"stationary POMDP iteration did not converge in "
        f"{settings.max_iterations} iterations (residual {residual:.3e})")


def evaluate_exact_tree(b0: Belief, T, O, cost, horizon: int, discount: float,
                        terminal_values: Optional[np.ndarray] = None,
                        max_leaves: float = 1e7) -> float:
    """Brute-force expectimax value of a belief, for validation.

    Enumerates the full action/observation tree to the horizon, so it is
    guarded: instances with more than ``max_leaves`` leaf evaluations are
    refused.
    """
    T_list = _transition_list(T)
    cost = np.asarray(cost, dtype=np.float64)
    n_actions = len(T_list)
    O_list = _observation_list(O, n_actions)
    n_obs = max(mat.shape[1] for mat in O_list)
    if (n_actions * n_obs) ** horizon > max_leaves:
        raise SolverError(
            f"expectimax tree of ({n_actions} * {n_obs})^{horizon} leaves "
            f"exceeds the {max_leaves:.0e} guard")
    terminal = (np.zeros(cost.shape[0]) if terminal_values is None
                else np.asarray(terminal_values, dtype=np.float64))

    def recurse(w: np.ndarray, k: int) -> float:
        if k == horizon:
            return float(w @ terminal)
        best = np.inf
        for a in range(n_actions):
            w_pred = _apply_transition(T_list[a].T, w)
            expected = 0.0
            for o in range(O_list[a].shape[1]):
                weighted = O_list[a][:, o] * w_pred
                marginal = weighted.sum()
                if marginal > 0.0:
                    expected += marginal * recurse(weighted / marginal, k + 1)
            val = float(w @ cost[:, a]) + discount * expected
            best = min(best, val)
        return best

    return recurse(b0.weights, 0)

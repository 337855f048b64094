"""Joint vaccination/surveillance planning and value of information.

Actions here are pairs (a_s, a_o): an intervention level and a survey
level.  The state is augmented with the last survey level taken, the
stage cost charges new cases, vaccination level, and people tested, and
the value of information is the cost difference between planning with
and without access to surveys.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from epiplan.belief import Belief
from epiplan.errors import ContractError, ParameterError
from epiplan.observation import ObservationModel, SurveyDesign
from epiplan.solver import SolveSettings, solve_pomdp
from epiplan.tsir import StateGrid, TransitionModel


@dataclass(frozen=True)
class CostModel:
    """Stage-cost coefficients and the discount factor.

    per_case prices each new infection, per_level each vaccination
    coverage level (linear in the level index), per_test each person
    sampled by a survey.
    """

    per_case: float
    per_level: float
    per_test: float
    discount: float = 1.0

    def __post_init__(self):
        if min(self.per_case, self.per_level, self.per_test) < 0:
            raise ParameterError("cost coefficients must be >= 0")
        if not (0.0 < self.discount <= 1.0):
            raise ParameterError("discount must lie in (0, 1]")


@dataclass(frozen=True)
class AugmentedAction:
    """Joint decision: intervention level a_s and survey level a_o."""

    a_s: int
    a_o: int

    def __post_init__(self):
        if self.a_s < 0 or self.a_o < 0:
            raise ParameterError("action levels must be >= 0")


def stage_cost(src: int, dst: int, action: AugmentedAction, cm: CostModel,
               grid: StateGrid, design: SurveyDesign) -> float:
    """Realized cost of one transition under a joint action.

    New cases are the increase of the infectious count between the source
    and destination cells, floored at zero (a falling count is not a
    reward).  The survey charge is per person tested.
    """
    i_vals = grid.i_values()
    new_cases = max(i_vals[dst] - i_vals[src], 0.0)
    return (cm.per_case * new_cases
            + cm.per_level * action.a_s
            + cm.per_test * design.n_samples(action.a_o))


def expected_new_cases(matrix, i_values: np.ndarray) -> np.ndarray:
    """Per-source expectation of max(I(s') - I(s), 0) under a transition."""
    coo = sp.coo_matrix(matrix)
    gain = np.maximum(i_values[coo.col] - i_values[coo.row], 0.0)
    return np.bincount(coo.row, weights=coo.data * gain,
                       minlength=matrix.shape[0])


@dataclass
class AugmentedSpace:
    """Product space (base cell, last survey level) with joint actions.

    Augmented index: ``s_o * n_base + cell``.  The transition applies the
    intervention's base dynamics and deterministically sets the survey
    memory to the chosen a_o; the observation matrix of a joint action is
    the survey level's matrix, tiled over memory blocks.  ``costs`` holds
    the expected stage cost per augmented state and joint action.
    """

    actions: list
    transitions: list
    observations: list
    costs: np.ndarray
    n_base: int
    n_levels: int

    def index(self, cell: int, s_o: int) -> int:
        if not (0 <= cell < self.n_base and 0 <= s_o < self.n_levels):
            raise ContractError("augmented coordinates out of range")
        return s_o * self.n_base + cell

    def components(self, idx: int) -> tuple:
        s_o, cell = divmod(idx, self.n_base)
        return cell, s_o

    def lift_belief(self, b: Belief, s_o: int = 0) -> Belief:
        """Embed a base-space belief at a fixed survey-memory level."""
        if len(b) != self.n_base:
            raise ContractError("belief does not live on the base space")
        w = np.zeros(self.n_base * self.n_levels)
        w[s_o * self.n_base:(s_o + 1) * self.n_base] = b.weights
        return Belief(w)

    def action_index(self, a_s: int, a_o: int) -> int:
        return a_s * self.n_levels + a_o

    def restrict_to_null_survey(self) -> "AugmentedSpace":
        """The same space with only a_o = 0 available (no surveys)."""
        keep = [i for i, a in enumerate(self.actions) if a.a_o == 0]
        return AugmentedSpace(
            actions=[self.actions[i] for i in keep],
            transitions=[self.transitions[i] for i in keep],
            observations=[self.observations[i] for i in keep],
            costs=self.costs[:, keep],
            n_base=self.n_base,
            n_levels=self.n_levels,
        )


def build_augmented(T: TransitionModel, O: ObservationModel,
                    design: SurveyDesign, actions,
                    cm: CostModel) -> AugmentedSpace:
    """Assemble the joint-action model over the survey-memory product space."""
    n_base = T.n_states
    if O.n_states != n_base:
        raise ContractError("transition and observation models disagree on size")
    if len(O.levels) != design.n_levels:
        raise ContractError("observation model does not match the survey design")
    if len(actions) != len(T.matrices):
        raise ContractError("action list does not match the transition model")
    if T.i_values is None:
        raise ContractError("the transition model carries no infectious values "
                            "for case costing")
    n_levels = design.n_levels
    i_vals = np.asarray(T.i_values, dtype=np.float64)

    joint_actions = []
    transitions = []
    observations = []
    cost_cols = []
    base_case_cost = {}
    for a_s in range(len(actions)):
        for a_o in range(n_levels):
            joint_actions.append(AugmentedAction(a_s=a_s, a_o=a_o))
            selector = sp.csr_matrix(
                (np.ones(n_levels), (np.arange(n_levels),
                                     np.full(n_levels, a_o))),
                shape=(n_levels, n_levels))
            transitions.append(sp.kron(selector, T.matrices[a_s], format="csr"))
            observations.append(np.tile(O.levels[a_o], (n_levels, 1)))
            if a_s not in base_case_cost:
                base_case_cost[a_s] = expected_new_cases(T.matrices[a_s], i_vals)
            col = (cm.per_case * base_case_cost[a_s]
                   + cm.per_level * a_s
                   + cm.per_test * design.n_samples(a_o))
            cost_cols.append(np.tile(col, n_levels))
    return AugmentedSpace(actions=joint_actions, transitions=transitions,
                          observations=observations,
                          costs=np.column_stack(cost_cols),
                          n_base=n_base, n_levels=n_levels)


def value_of_information(T: TransitionModel, O: ObservationModel,
                         design: SurveyDesign, actions, cm: CostModel,
                         settings: SolveSettings, b0: Belief) -> float:
    """Cost saved by having surveys available at all.

    Solves the augmented problem twice, once with the full joint action
    set and once with a_o forced to 0, and returns
    V_restricted(b0) - V_full(b0) at the lifted initial belief.
    """
    aug = build_augmented(T, O, design, actions, cm)
    b0_aug = aug.lift_belief(b0, s_o=0)
    full = solve_pomdp(aug.transitions, aug.observations, aug.costs, settings)
    restricted = aug.restrict_to_null_survey()
    limited = solve_pomdp(restricted.transitions, restricted.observations,
                          restricted.costs, settings)
    return limited[0].value(b0_aug) - full[0].value(b0_aug)

"""Stochastic TSIR dynamics, state-space discretization, transition matrices.

The discrete-time epidemic recursion advances susceptible and infectious
counts one biweek at a time with seasonal transmission, a mixing exponent,
multiplicative lognormal noise, and a vaccination fraction removing
susceptibles.  The state space (S, I, biweek-of-year) is discretized onto
a grid so the planning layers can work with finite row-stochastic
transition matrices.
"""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import norm

from epiplan import kernels
from epiplan.errors import ConfigurationError, ContractError, ParameterError

BIWEEKS_PER_YEAR = 24


@dataclass(frozen=True)
class TsirParams:
    """Parameters of the stochastic TSIR recursion.

    ``beta_seasonal`` multiplies raw susceptible counts (units
    1/(person * biweek)); ``noise_sd`` is the log-sd of the multiplicative
    lognormal noise (median 1).
    """

    beta_seasonal: np.ndarray
    alpha_mix: float
    birth_schedule: np.ndarray
    noise_sd: float
    population: float

    def __post_init__(self):
        object.__setattr__(self, "beta_seasonal",
                           np.asarray(self.beta_seasonal, dtype=np.float64))
        object.__setattr__(self, "birth_schedule",
                           np.asarray(self.birth_schedule, dtype=np.float64))
        if self.beta_seasonal.shape != (BIWEEKS_PER_YEAR,):
            raise ParameterError(
                f"beta_seasonal must have exactly {BIWEEKS_PER_YEAR} entries, "
                f"got shape {self.beta_seasonal.shape}")
        if self.birth_schedule.shape != (BIWEEKS_PER_YEAR,):
            raise ParameterError(
                f"birth_schedule must have exactly {BIWEEKS_PER_YEAR} entries")
        if not np.all(self.beta_seasonal > 0):
            raise ParameterError("all beta_seasonal entries must be > 0")
        if not (0 < self.alpha_mix <= 1):
            raise ParameterError("alpha_mix must lie in (0, 1]")
        if not np.all(self.birth_schedule >= 0):
            raise ParameterError("birth_schedule entries must be >= 0")
        if self.noise_sd < 0:
            raise ParameterError("noise_sd must be >= 0")
        if self.population <= 0:
            raise ParameterError("population must be > 0")


@dataclass(frozen=True)
class EpiState:
    """Epidemic state: susceptibles, incident infectious, biweek of year."""

    S: float
    I: float
    tau: int

    def validate(self, population: float, strict: bool = True) -> None:
        """Raise ParameterError unless the state satisfies its invariants.

        ``strict=False`` skips the S + I <= N bound, which one dynamics
        step may overshoot by at most one biweek of births.
        """
        if not (np.isfinite(self.S) and np.isfinite(self.I)):
            raise ParameterError("state components must be finite")
        if self.S < 0 or self.I < 0:
            raise ParameterError("state counts must be nonnegative")
        if not (0 <= self.tau < BIWEEKS_PER_YEAR):
            raise ParameterError(f"tau must lie in [0, {BIWEEKS_PER_YEAR})")
        if strict and self.S + self.I > population:
            raise ParameterError("S + I exceeds the population")


@dataclass(frozen=True)
class InterventionAction:
    """One vaccination level: index and the susceptible fraction it reaches."""

    level: int
    coverage: float

    def __post_init__(self):
        if not (0.0 <= self.coverage <= 1.0):
            raise ParameterError("coverage must lie in [0, 1]")
        if self.level < 0:
            raise ParameterError("level must be >= 0")


def intervention_actions(coverages: Sequence[float]) -> list[InterventionAction]:
    """Build an action list from per-level coverages.

    Level 0 must have coverage 0 (no intervention) and coverage must be
    nondecreasing in level.
    """
    if len(coverages) == 0:
        raise ConfigurationError("at least one intervention level is required")
    if coverages[0] != 0.0:
        raise ConfigurationError("level 0 must have coverage 0")
    for lo, hi in zip(coverages, coverages[1:]):
        if hi < lo:
            raise ConfigurationError("coverage must be nondecreasing in level")
    return [InterventionAction(level, float(c)) for level, c in enumerate(coverages)]


def seasonal_beta(params: TsirParams, tau: int) -> float:
    """Transmission rate for biweek ``tau``; step t uses tau = t mod 24."""
    if not (0 <= tau < BIWEEKS_PER_YEAR):
        raise IndexError(f"tau must lie in [0, {BIWEEKS_PER_YEAR}), got {tau}")
    return float(params.beta_seasonal[tau])


def tsir_step(state: EpiState, mu: float, params: TsirParams,
              eps: float) -> EpiState:
    """Advance the epidemic one biweek.

    New infections are generated from the incoming state, then the
    susceptible update consumes them:

        I' = clamp(round(beta_tau * I^alpha * S * eps), 0, S + B_tau)
        S' = clamp(round((1 - mu) * (B_tau + S - I')), 0, N)

    Counts are rounded half away from zero; I' is clamped into the pool
    actually available this biweek so coarse parameterizations stay
    feasible.
    """
    if not (0.0 <= mu <= 1.0):
        raise ParameterError(f"mu must lie in [0, 1], got {mu}")
    if not np.isfinite(eps) or eps <= 0:
        raise ParameterError(f"eps must be finite and > 0, got {eps}")
    state.validate(params.population, strict=False)

    beta = params.beta_seasonal[state.tau]
    births = params.birth_schedule[state.tau]
    i_next = np.floor(beta * state.I ** params.alpha_mix * state.S * eps + 0.5)
    i_next = min(max(i_next, 0.0), state.S + births)
    s_next = np.floor((1.0 - mu) * (births + state.S - i_next) + 0.5)
    s_next = min(max(s_next, 0.0), params.population)
    return EpiState(S=float(s_next), I=float(i_next),
                    tau=(state.tau + 1) % BIWEEKS_PER_YEAR)


def noise_quantiles(noise_sd: float, n_quadrature: int) -> np.ndarray:
    """Equal-weight lognormal noise quantiles at (j - 0.5) / n."""
    if n_quadrature < 1:
        raise ConfigurationError("n_quadrature must be >= 1")
    if noise_sd == 0.0:
        return np.ones(n_quadrature)
    probs = (np.arange(1, n_quadrature + 1) - 0.5) / n_quadrature
    return np.exp(noise_sd * norm.ppf(probs))


@dataclass(frozen=True)
class StateGrid:
    """Discretization of (S, I, tau) into indexed cells.

    S bins are linear over [0, N].  The first I bin is the exact-zero bin
    {I = 0}; the rest are logarithmically spaced over [1, N].  Flat cell
    index: ``(s_bin * i_bins + i_bin) * tau_count + tau``.
    """

    s_edges: np.ndarray
    i_edges: np.ndarray
    population: float
    tau_count: int = BIWEEKS_PER_YEAR
    s_rep: np.ndarray = field(init=False)
    i_rep: np.ndarray = field(init=False)

    def __post_init__(self):
        s_edges = np.asarray(self.s_edges, dtype=np.float64)
        i_edges = np.asarray(self.i_edges, dtype=np.float64)
        if np.any(np.diff(s_edges) <= 0) or np.any(np.diff(i_edges) <= 0):
            raise ConfigurationError("grid edges must be strictly increasing")
        object.__setattr__(self, "s_edges", s_edges)
        object.__setattr__(self, "i_edges", i_edges)
        # arithmetic midpoints for S, geometric midpoints for the log I bins
        s_rep = 0.5 * (s_edges[:-1] + s_edges[1:])
        i_rep = np.sqrt(i_edges[:-1] * i_edges[1:])
        i_rep[0] = 0.0
        object.__setattr__(self, "s_rep", s_rep)
        object.__setattr__(self, "i_rep", i_rep)

    @property
    def s_bins(self) -> int:
        return len(self.s_edges) - 1

    @property
    def i_bins(self) -> int:
        return len(self.i_edges) - 1

    @property
    def n_cells(self) -> int:
        return self.s_bins * self.i_bins * self.tau_count

    def cell_index(self, s_bin: int, i_bin: int, tau: int) -> int:
        if not (0 <= s_bin < self.s_bins and 0 <= i_bin < self.i_bins
                and 0 <= tau < self.tau_count):
            raise IndexError("grid coordinates out of range")
        return (s_bin * self.i_bins + i_bin) * self.tau_count + tau

    def cell_coords(self, index: int) -> tuple[int, int, int]:
        if not (0 <= index < self.n_cells):
            raise IndexError("cell index out of range")
        index, tau = divmod(index, self.tau_count)
        s_bin, i_bin = divmod(index, self.i_bins)
        return s_bin, i_bin, tau

    def cell_of(self, state: EpiState) -> int:
        """Flat index of the cell containing a state (edges clip inward)."""
        state.validate(self.population, strict=False)
        s_bin = int(np.clip(np.searchsorted(self.s_edges, state.S, side="right") - 1,
                            0, self.s_bins - 1))
        i_bin = int(np.clip(np.searchsorted(self.i_edges, state.I, side="right") - 1,
                            0, self.i_bins - 1))
        return self.cell_index(s_bin, i_bin, state.tau)

    def representative(self, index: int) -> EpiState:
        """Representative point of a cell."""
        s_bin, i_bin, tau = self.cell_coords(index)
        return EpiState(S=float(self.s_rep[s_bin]), I=float(self.i_rep[i_bin]),
                        tau=tau)

    def i_values(self) -> np.ndarray:
        """Representative infectious count per cell (length n_cells)."""
        per_si = np.tile(self.i_rep, self.s_bins)
        return np.repeat(per_si, self.tau_count)

    def s_values(self) -> np.ndarray:
        """Representative susceptible count per cell (length n_cells)."""
        return np.repeat(self.s_rep, self.i_bins * self.tau_count)


def build_grid(params: TsirParams, s_bins: int, i_bins: int) -> StateGrid:
    """Discretize the state space for a given population."""
    if s_bins < 2 or i_bins < 2:
        raise ConfigurationError("s_bins and i_bins must both be >= 2")
    n = params.population
    s_edges = np.linspace(0.0, n, s_bins + 1)
    i_edges = np.concatenate(([0.0], np.geomspace(1.0, n, i_bins)))
    return StateGrid(s_edges=s_edges, i_edges=i_edges, population=n)


@dataclass
class TransitionModel:
    """Per-action row-stochastic transition matrices over grid cells.

    ``i_values`` carries the per-state infectious count used for case
    costing; grid-built models fill it from the grid representatives,
    abstract test instances may supply their own.
    """

    matrices: list
    actions: list
    i_values: np.ndarray = None

    def __post_init__(self):
        if len(self.matrices) != len(self.actions):
            raise ContractError("one matrix per action is required")

    @property
    def n_states(self) -> int:
        return self.matrices[0].shape[0]

    def validate(self, tol: float = 1e-9) -> None:
        for m in self.matrices:
            if m.shape[0] != m.shape[1] or m.shape[0] != self.n_states:
                raise ContractError("transition matrices must be square and equal-sized")
            data = m.data if sp.issparse(m) else np.asarray(m)
            if np.any(data < 0):
                raise ContractError("transition probabilities must be >= 0")
            row_sums = np.asarray(m.sum(axis=1)).ravel()
            if np.max(np.abs(row_sums - 1.0)) > tol:
                raise ContractError(
                    f"transition rows must sum to 1 within {tol}")


def _transition_matrix(grid: StateGrid, params: TsirParams, mu: float,
                       eps: np.ndarray) -> sp.csr_matrix:
    i_pow = grid.i_rep ** params.alpha_mix
    cols = kernels.transition_cols(
        grid.s_rep, i_pow, grid.s_edges, grid.i_edges,
        params.beta_seasonal, params.birth_schedule,
        float(params.population), float(mu), np.asarray(eps, dtype=np.float64))
    nq = len(eps)
    rows = np.repeat(np.arange(grid.n_cells, dtype=np.int64), nq)
    data = np.full(len(cols), 1.0 / nq)
    mat = sp.coo_matrix((data, (rows, cols)),
                        shape=(grid.n_cells, grid.n_cells)).tocsr()
    # quadrature weights may not sum to exactly 1 in floating point
    row_sums = np.asarray(mat.sum(axis=1)).ravel()
    mat = sp.diags(1.0 / row_sums) @ mat
    return mat.tocsr()


def build_transition(grid: StateGrid, params: TsirParams,
                     actions: Sequence[InterventionAction],
                     n_quadrature: int = 32) -> TransitionModel:
    """Propagate every cell representative through the dynamics.

    Each source cell is pushed through ``tsir_step`` at equal-weight
    lognormal noise quantiles and the resulting mass is accumulated on
    destination cells; rows are renormalized to sum exactly 1.
    """
    eps = noise_quantiles(params.noise_sd, n_quadrature)
    matrices = [_transition_matrix(grid, params, a.coverage, eps)
                for a in actions]
    model = TransitionModel(matrices=matrices, actions=list(actions),
                            i_values=grid.i_values())
    model.validate()
    return model

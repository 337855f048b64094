"""Imperfect binomial test observations and their discretized matrices.

A survey tests n = round(c * N) people with a test of sensitivity q1 and
specificity q2; the positive count is binomial with success probability
(q1 * I + (1 - q2) * (N - I)) / N.  For planning, counts are binned by
positive fraction into a fixed number of observation bins; a reserved
null bin carries the "no survey" outcome.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from epiplan.errors import ConfigurationError, ContractError, ParameterError
from epiplan.tsir import EpiState, StateGrid

NULL_BIN = 0  # column reserved for the sure no-survey observation


@dataclass(frozen=True)
class TestCharacteristics:
    """Sensitivity and specificity of the diagnostic test.

    Informative tests require q1 + q2 > 1.  The boundary q1 + q2 = 1
    (a test carrying no information about prevalence) is permitted only
    with ``allow_boundary=True`` for exercising degenerate properties.
    """

    q1: float
    q2: float
    allow_boundary: bool = False

    def __post_init__(self):
        if not (0.0 <= self.q1 <= 1.0 and 0.0 <= self.q2 <= 1.0):
            raise ParameterError("q1 and q2 must lie in [0, 1]")
        min_sum = 1.0 if self.allow_boundary else 1.0 + 1e-12
        if self.q1 + self.q2 < min_sum:
            raise ParameterError(
                "q1 + q2 must exceed 1 for an informative test "
                f"(got {self.q1 + self.q2})")


@dataclass(frozen=True)
class SurveyDesign:
    """Per-level survey coverages, sample sizes, and observation binning.

    Level 0 is "no survey" (coverage 0).  Sample sizes are fixed at
    construction as round(coverage * population).  Positive fractions o/n
    are aggregated into ``obs_bins`` bins partitioning [0, 1]; observation
    column 0 is the null bin, columns 1..obs_bins are the fraction bins.
    """

    coverages: tuple
    population: float
    obs_bins: int = 8
    bin_edges: np.ndarray = field(default=None)
    sample_sizes: tuple = field(init=False)

    def __post_init__(self):
        coverages = tuple(float(c) for c in self.coverages)
        object.__setattr__(self, "coverages", coverages)
        if len(coverages) == 0:
            raise ConfigurationError("at least one survey level is required")
        if coverages[0] != 0.0:
            raise ConfigurationError("survey level 0 must have coverage 0")
        if any(not (0.0 <= c <= 1.0) for c in coverages):
            raise ConfigurationError("survey coverages must lie in [0, 1]")
        if any(hi < lo for lo, hi in zip(coverages, coverages[1:])):
            raise ConfigurationError("survey coverage must be nondecreasing in level")
        if self.population <= 0:
            raise ConfigurationError("population must be > 0")
        if self.obs_bins < 2:
            raise ConfigurationError("obs_bins must be >= 2")
        edges = self.bin_edges
        if edges is None:
            edges = np.linspace(0.0, 1.0, self.obs_bins + 1)
        edges = np.asarray(edges, dtype=np.float64)
        if (len(edges) != self.obs_bins + 1 or edges[0] != 0.0
                or edges[-1] != 1.0 or np.any(np.diff(edges) <= 0)):
            raise ConfigurationError("bin edges must partition [0, 1]")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(
            self, "sample_sizes",
            tuple(int(round(c * self.population)) for c in coverages))

    @property
    def n_levels(self) -> int:
        return len(self.coverages)

    @property
    def n_obs(self) -> int:
        """Observation bins including the null bin."""
        return self.obs_bins + 1

    def n_samples(self, level: int) -> int:
        """People tested at a survey level."""
        if not (0 <= level < self.n_levels):
            raise ConfigurationError(f"survey level {level} out of range")
        return self.sample_sizes[level]

    def bin_of_count(self, o: int, n: int) -> int:
        """Observation column for o positives out of n tested."""
        if n == 0:
            return NULL_BIN
        frac = o / n
        j = int(np.clip(np.searchsorted(self.bin_edges, frac, side="right") - 1,
                        0, self.obs_bins - 1))
        return j + 1


def positive_rate(state: EpiState, q: TestCharacteristics,
                  population: float) -> float:
    """Probability that one sampled person tests positive.

    True positives from the infectious plus false positives from everyone
    else (susceptible and recovered, with R = N - S - I).
    """
    state.validate(population, strict=False)
    n = float(population)
    p = (q.q1 * state.I + (1.0 - q.q2) * (n - state.I)) / n
    return float(min(max(p, 0.0), 1.0))


def obs_pmf(state: EpiState, level: int, design: SurveyDesign,
            q: TestCharacteristics) -> np.ndarray:
    """Binomial pmf of the positive count at a survey level.

    Returns probabilities over counts {0, ..., n}; an empty survey
    (level 0, or a coverage rounding to zero samples) returns the sure
    count 0.
    """
    n = design.n_samples(level)
    if n == 0:
        return np.array([1.0])
    p = positive_rate(state, q, design.population)
    return binom.pmf(np.arange(n + 1), n, p)


@dataclass
class ObservationModel:
    """Per-level observation-bin probability matrices over grid cells.

    ``levels[k]`` has shape (n_cells, obs_bins + 1); column 0 is the
    null bin.  Level 0 rows are the point mass on the null bin.
    """

    levels: list
    design: SurveyDesign

    @property
    def n_obs(self) -> int:
        return self.levels[0].shape[1]

    @property
    def n_states(self) -> int:
        return self.levels[0].shape[0]

    def validate(self, tol: float = 1e-9) -> None:
        for mat in self.levels:
            if mat.shape != (self.n_states, self.n_obs):
                raise ContractError("observation matrices must share one shape")
            if np.any(mat < 0):
                raise ContractError("observation probabilities must be >= 0")
            if np.max(np.abs(mat.sum(axis=1) - 1.0)) > tol:
                raise ContractError(f"observation rows must sum to 1 within {tol}")


def _count_bin_map(n: int, design: SurveyDesign) -> np.ndarray:
    """Observation column of each count 0..n."""
    fracs = np.arange(n + 1) / n
    cols = np.clip(np.searchsorted(design.bin_edges, fracs, side="right") - 1,
                   0, design.obs_bins - 1)
    return cols + 1


def build_observation(grid: StateGrid, design: SurveyDesign,
                      q: TestCharacteristics,
                      chunk: int = 4096) -> ObservationModel:
    """Aggregate binomial survey pmfs into observation bins per cell.

    Each cell contributes its representative point's positive rate; the
    count pmf is summed into the design's fraction bins.  Rows are
    renormalized to sum exactly 1.
    """
    if design.population != grid.population:
        raise ContractError("survey design and grid disagree on population")
    n_cells = grid.n_cells
    i_vals = grid.i_values()
    n_pop = grid.population
    p_eff = (q.q1 * i_vals + (1.0 - q.q2) * (n_pop - i_vals)) / n_pop
    p_eff = np.clip(p_eff, 0.0, 1.0)

    matrices = []
    for level in range(design.n_levels):
        n = design.n_samples(level)
        mat = np.zeros((n_cells, design.n_obs))
        if n == 0:
            mat[:, NULL_BIN] = 1.0
        else:
            cols = _count_bin_map(n, design)
            counts = np.arange(n + 1)
            for start in range(0, n_cells, chunk):
                stop = min(start + chunk, n_cells)
                pmf = binom.pmf(counts[None, :], n, p_eff[start:stop, None])
                for j in range(1, design.n_obs):
                    sel = cols == j
                    if np.any(sel):
                        mat[start:stop, j] = pmf[:, sel].sum(axis=1)
            mat /= mat.sum(axis=1, keepdims=True)
        matrices.append(mat)
    model = ObservationModel(levels=matrices, design=design)
    model.validate()
    return model

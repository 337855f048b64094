"""Pure NumPy implementation of the transition-build kernel.

Used when the compiled extension is unavailable (or forced via
EPIPLAN_PURE_PYTHON=1).  Must stay arithmetically identical to
``epiplan._core.transition_cols``: the two backends are required to
produce bit-identical destination indices for the same inputs.
"""

import numpy as np

BACKEND = "python"


def transition_cols(s_rep, i_pow, s_edges, i_edges, beta, births,
                    n_pop, mu, eps):
    """Destination cell index for every (source cell, noise draw) pair.

    Cells are enumerated as ``((s_bin * i_bins) + i_bin) * n_tau + tau`` and
    the output block ``[r * nq : (r + 1) * nq]`` holds the destinations of
    source cell ``r`` under each of the ``nq`` noise quantiles.

    Args:
        s_rep: representative susceptible count per S bin.
        i_pow: representative infectious count per I bin, already raised
            to the mixing exponent.
        s_edges, i_edges: bin edges used to locate destinations.
        beta: per-biweek transmission rate, indexed by the source tau.
        births: per-biweek births, indexed by the source tau.
        n_pop: total population (upper clamp for susceptibles).
        mu: vaccination fraction applied in this step.
        eps: noise quantile values (equal weights).

    Returns:
        int64 array of length ``n_cells * len(eps)``.
    """
    s_rep = np.asarray(s_rep, dtype=np.float64)
    i_pow = np.asarray(i_pow, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    s_bins = s_rep.shape[0]
    i_bins = i_pow.shape[0]
    n_tau = len(beta)
    n_cells = s_bins * i_bins * n_tau
    nq = eps.shape[0]

    s_val = np.repeat(s_rep, i_bins * n_tau)
    ipow_val = np.tile(np.repeat(i_pow, n_tau), s_bins)
    tau = np.tile(np.arange(n_tau), s_bins * i_bins)
    beta_t = np.asarray(beta, dtype=np.float64)[tau]
    births_t = np.asarray(births, dtype=np.float64)[tau]
    tau_next = (tau + 1) % n_tau

    cols = np.empty((n_cells, nq), dtype=np.int64)
    base = beta_t * ipow_val * s_val
    i_cap = s_val + births_t
    for j in range(nq):
        i_next = np.floor(base * eps[j] + 0.5)
        i_next = np.minimum(np.maximum(i_next, 0.0), i_cap)
        s_next = np.floor((1.0 - mu) * (births_t + s_val - i_next) + 0.5)
        s_next = np.minimum(np.maximum(s_next, 0.0), n_pop)
        s_bin = np.clip(np.searchsorted(s_edges, s_next, side="right") - 1,
                        0, s_bins - 1)
        i_bin = np.clip(np.searchsorted(i_edges, i_next, side="right") - 1,
                        0, i_bins - 1)
        cols[:, j] = (s_bin * i_bins + i_bin) * n_tau + tau_next
    return cols.reshape(-1)

"""Countably infinite hidden Markov model with shared Dirichlet-process weights.

Every transition row is a Dirichlet-process draw around one shared
stick-breaking weight vector, so sequences can occupy an unbounded state
space while still sharing states. Inference is collapsed Gibbs sampling in
the direct-assignment representation: transition rows and emission
parameters are integrated out, and the chain state carries only the
per-sequence state labels, the shared weights (plus the unbroken
remainder), transition counts, per-state emission statistics, and the two
concentration parameters.

Emissions are Gaussian with a normal-inverse-gamma base measure, so the
collapsed emission predictive is Student-t. Both concentrations carry
gamma hyperpriors and are resampled by the standard auxiliary-variable
schemes (per-row Beta/Bernoulli augmentation for the row-level
concentration, the two-component gamma mixture for the top-level one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

__all__ = [
    "HdpHyperParams",
    "HdpChainState",
    "PosteriorSample",
    "PosteriorSampleSet",
    "PriorDraw",
    "stick_breaking_draw",
    "init_chain",
    "chain_state_from_assignments",
    "resample_assignment",
    "resample_beta",
    "resample_concentrations",
    "gibbs_sweep",
    "run_chain",
    "snapshot_state",
    "consistency_errors",
    "sample_prior_joint",
    "regenerate_observations",
    "empirical_dissimilarity",
    "represented_state_histogram",
    "empirical_transition_matrix",
    "save_samples",
    "load_samples",
]

_LOG_PI = math.log(math.pi)


@dataclass
class HdpHyperParams:
    """Hyperparameters: gamma priors for the two concentrations and the
    normal-inverse-gamma emission base measure.

    ``a_*``/``b_*`` are shape/rate pairs. ``m0``/``kappa0`` locate the
    emission mean prior, ``a0``/``b0`` shape the variance prior.
    """

    a_alpha0: float = 1.0
    b_alpha0: float = 1.0
    a_gamma: float = 1.0
    b_gamma: float = 1.0
    m0: float = 0.0
    kappa0: float = 0.1
    a0: float = 1.0
    b0: float = 1.0

    def validate(self):
        for name in ("a_alpha0", "b_alpha0", "a_gamma", "b_gamma", "kappa0", "a0", "b0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not math.isfinite(self.m0):
            raise ValueError("m0 must be finite")
        return self

    @classmethod
    def for_data(cls, values, b_gamma=1.0):
        """Center the emission base on the pooled data: m0 = global mean,
        b0 = global variance (kappa0=0.1, a0=1 fixed)."""
        flat = np.asarray(getattr(values, "values", values), dtype=float).ravel()
        return cls(
            b_gamma=b_gamma,
            m0=float(flat.mean()),
            b0=max(float(flat.var()), 1e-6),
        ).validate()


def stick_breaking_draw(gamma, truncation, rng):
    """Draw the first ``truncation`` stick-breaking weights.

    Each fraction is Beta(1, gamma); weight k is its fraction times the
    length of stick left over by the earlier breaks, and the unbroken
    remainder is returned alongside so weights + remainder account for the
    whole unit stick.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    weights = np.empty(truncation)
    remaining = 1.0
    for i in range(truncation):
        frac = rng.beta(1.0, gamma)
        weights[i] = frac * remaining
        remaining *= 1.0 - frac
    return weights, remaining


def _student_log_predictive(y, cnt, total, total_sq, h):
    """Collapsed emission log predictive for observation y against states
    with the given sufficient statistics (vectorized over states)."""
    kn = h.kappa0 + cnt
    mn = (h.kappa0 * h.m0 + total) / kn
    an = h.a0 + 0.5 * cnt
    bn = h.b0 + 0.5 * (total_sq + h.kappa0 * h.m0 * h.m0 - kn * mn * mn)
    bn = np.maximum(bn, 1e-300)  # guards cancellation in the subtraction above
    # Student-t with df=2*an, location mn, scale^2 = bn*(kn+1)/(an*kn)
    nu_s2 = 2.0 * bn * (kn + 1.0) / kn
    return (
        gammaln(an + 0.5)
        - gammaln(an)
        - 0.5 * (np.log(nu_s2) + _LOG_PI)
        - (an + 0.5) * np.log1p((y - mn) ** 2 / nu_s2)
    )


class HdpChainState:
    """Mutable direct-assignment sampler state.

    Attributes
    ----------
    values : (N, T) float array, the observations (mutable for
        joint-distribution diagnostics).
    assignments : (N, T) int array of state labels in 0..K-1.
    beta : (K+1,) shared weights; the last entry is the unbroken remainder.
    counts : (K+1, K) transition counts; row 0 is the distinguished
        initial state, row j+1 collects transitions out of state j.
    e_count, e_sum, e_sumsq : per-state emission sufficient statistics.
    alpha0, gamma : concentration parameters.
    tables : (K+1, K) table counts from the last weight resampling, or
        None before the first one.
    """

    def __init__(self, values, hypers, rng, alpha0, gamma):
        self.values = np.array(values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-d matrix")
        self.hypers = hypers.validate()
        self.rng = rng
        self.alpha0 = float(alpha0)
        self.gamma = float(gamma)
        n, t = self.values.shape
        self.assignments = np.full((n, t), -1, dtype=np.int64)
        self.beta = np.ones(1)
        self.counts = np.zeros((1, 0), dtype=np.int64)
        self.e_count = np.zeros(0, dtype=np.int64)
        self.e_sum = np.zeros(0)
        self.e_sumsq = np.zeros(0)
        self.tables = None

    @property
    def n_states(self):
        return self.e_count.shape[0]

    # K is the conventional shorthand throughout the module.
    K = n_states

    def _spawn_state(self):
        """Split the remainder mass for a brand-new state; returns its index."""
        frac = self.rng.beta(1.0, self.gamma)
        rem = self.beta[-1]
        self.beta = np.concatenate([self.beta[:-1], [frac * rem, (1.0 - frac) * rem]])
        k = self.e_count.shape[0]
        self.counts = np.concatenate([self.counts, np.zeros((k + 1, 1), dtype=np.int64)], axis=1)
        self.counts = np.concatenate([self.counts, np.zeros((1, k + 1), dtype=np.int64)], axis=0)
        self.e_count = np.append(self.e_count, 0)
        self.e_sum = np.append(self.e_sum, 0.0)
        self.e_sumsq = np.append(self.e_sumsq, 0.0)
        return k

    def _remove_state(self, j):
        """Drop an emptied state, folding its weight back into the remainder."""
        self.beta[-1] += self.beta[j]
        self.beta = np.delete(self.beta, j)
        self.counts = np.delete(np.delete(self.counts, j + 1, axis=0), j, axis=1)
        self.e_count = np.delete(self.e_count, j)
        self.e_sum = np.delete(self.e_sum, j)
        self.e_sumsq = np.delete(self.e_sumsq, j)
        self.assignments[self.assignments > j] -= 1

    def _emission_log_predictive(self, y):
        """Log predictive of y under each represented state plus one fresh
        state (last entry), with the statistics as currently stored."""
        cnt = np.append(self.e_count, 0).astype(float)
        total = np.append(self.e_sum, 0.0)
        total_sq = np.append(self.e_sumsq, 0.0)
        return _student_log_predictive(y, cnt, total, total_sq, self.hypers)


def init_chain(dataset, hypers, seed):
    """Start a chain: concentrations from their priors, then every label
    drawn sequentially from the transition prior predictive given the
    labels placed so far (emissions play no role in initialization)."""
    values = np.asarray(getattr(dataset, "values", dataset), dtype=float)
    if values.ndim != 2:
        raise ValueError("dataset values must be a 2-d matrix")
    if not np.all(np.isfinite(values)):
        raise ValueError("dataset values must be finite")
    hypers = hypers.validate()
    rng = np.random.default_rng(seed)
    alpha0 = rng.gamma(hypers.a_alpha0, 1.0 / hypers.b_alpha0)
    gamma = rng.gamma(hypers.a_gamma, 1.0 / hypers.b_gamma)
    state = HdpChainState(values, hypers, rng, alpha0, gamma)
    n, t_len = values.shape
    for g in range(n):
        prev_row = 0
        for t in range(t_len):
            k = state.n_states
            w = np.empty(k + 1)
            w[:k] = state.counts[prev_row, :k] + alpha0 * state.beta[:k]
            w[k] = alpha0 * state.beta[k]
            cdf = np.cumsum(w)
            r = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            r = min(r, k)
            if r == k:
                r = state._spawn_state()
            state.assignments[g, t] = r
            state.counts[prev_row, r] += 1
            y = values[g, t]
            state.e_count[r] += 1
            state.e_sum[r] += y
            state.e_sumsq[r] += y * y
            prev_row = r + 1
    return state


def chain_state_from_assignments(values, hypers, assignments, beta, alpha0, gamma, rng=None):
    """Rebuild a chain state around externally supplied labels.

    Counts and emission statistics are recounted from scratch, so the
    result always satisfies the bookkeeping invariants.
    """
    values = np.asarray(values, dtype=float)
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.shape != values.shape:
        raise ValueError("assignments shape must match values shape")
    k = int(assignments.max()) + 1
    if assignments.min() < 0:
        raise ValueError("assignments must be non-negative")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (k + 1,):
        raise ValueError(f"beta must have length K+1={k + 1}")
    if rng is None:
        rng = np.random.default_rng()
    state = HdpChainState(values, hypers, rng, alpha0, gamma)
    state.assignments = assignments.copy()
    state.beta = beta.copy()
    state.counts = np.zeros((k + 1, k), dtype=np.int64)
    n, t_len = values.shape
    np.add.at(state.counts, (0, assignments[:, 0]), 1)
    if t_len > 1:
        np.add.at(
            state.counts,
            (assignments[:, :-1].ravel() + 1, assignments[:, 1:].ravel()),
            1,
        )
    flat = assignments.ravel()
    yy = values.ravel()
    state.e_count = np.bincount(flat, minlength=k).astype(np.int64)
    if np.any(state.e_count == 0):
        raise ValueError("every state in 0..K-1 must appear in assignments")
    state.e_sum = np.bincount(flat, weights=yy, minlength=k)
    state.e_sumsq = np.bincount(flat, weights=yy * yy, minlength=k)
    return state


def resample_assignment(state, gene, t, _force=None):
    """Resample one hidden label by remove-then-add.

    The label's two incident transitions and its emission are removed from
    the bookkeeping (an emptied state dies immediately, its weight folded
    into the remainder), the full conditional is evaluated over every
    represented state plus one fresh-state candidate, and the chosen label
    is written back. ``_force`` is a testing hook that fixes the
    categorical choice (0..K-1 an existing state, K the fresh candidate).
    """
    v = state.assignments
    t_len = v.shape[1]
    y = state.values[gene, t]
    old = int(v[gene, t])
    prev_row = 0 if t == 0 else int(v[gene, t - 1]) + 1
    nxt = int(v[gene, t + 1]) if t + 1 < t_len else -1

    state.counts[prev_row, old] -= 1
    if nxt >= 0:
        state.counts[old + 1, nxt] -= 1
    state.e_count[old] -= 1
    state.e_sum[old] -= y
    state.e_sumsq[old] -= y * y
    if state.e_count[old] == 0:
        # Only this site referenced the state; neighbors keep it alive
        # otherwise, so the removal cannot orphan prev/nxt.
        state._remove_state(old)
        prev_row = 0 if t == 0 else int(v[gene, t - 1]) + 1
        nxt = int(v[gene, t + 1]) if t + 1 < t_len else -1

    k = state.n_states
    alpha0 = state.alpha0
    beta = state.beta
    log_w = np.empty(k + 1)
    with np.errstate(divide="ignore"):
        log_w[:k] = np.log(state.counts[prev_row, :k] + alpha0 * beta[:k])
        log_w[k] = np.log(alpha0 * beta[k])
        if nxt >= 0:
            prev_state = prev_row - 1
            num = state.counts[1:, nxt] + alpha0 * beta[nxt]
            den = state.counts[1:, :].sum(axis=1) + alpha0
            if prev_state >= 0:
                # Placing the incoming transition first enlarges row
                # prev_state before the outgoing one is scored.
                den[prev_state] += 1.0
                if prev_state == nxt:
                    num[prev_state] += 1.0
            log_w[:k] += np.log(num) - np.log(den)
            log_w[k] += np.log(beta[nxt])
    log_w += state._emission_log_predictive(y)

    if _force is None:
        w = np.exp(log_w - log_w.max())
        cdf = np.cumsum(w)
        r = int(np.searchsorted(cdf, state.rng.random() * cdf[-1], side="right"))
        r = min(r, k)
    else:
        r = int(_force)
        if not 0 <= r <= k:
            raise ValueError(f"_force must be in 0..{k}")
    if r == k:
        r = state._spawn_state()

    v[gene, t] = r
    state.counts[prev_row, r] += 1
    if nxt >= 0:
        state.counts[r + 1, nxt] += 1
    state.e_count[r] += 1
    state.e_sum[r] += y
    state.e_sumsq[r] += y * y
    return state


def _crt_draw(n, theta, rng):
    # Number of tables spawned by n customers at concentration theta:
    # customer i opens a table with probability theta/(theta+i).
    if n == 0:
        return 0
    u = rng.random(n)
    return int(np.sum(u * (theta + np.arange(n)) < theta))


def resample_beta(state):
    """Resample the shared weights given the transition counts.

    For every (row, state) cell a table count is drawn from the Chinese
    restaurant distribution at concentration alpha0*beta_state; the new
    weights (including the remainder) are then Dirichlet with the column
    table totals and gamma. Table counts are cached for the concentration
    updates.
    """
    k = state.n_states
    if k == 0:
        state.tables = np.zeros((1, 0), dtype=np.int64)
        state.beta = np.ones(1)
        return state
    theta = state.alpha0 * state.beta[:k]
    tables = np.zeros_like(state.counts)
    rows, cols = np.nonzero(state.counts)
    for j, c in zip(rows.tolist(), cols.tolist()):
        tables[j, c] = _crt_draw(int(state.counts[j, c]), float(theta[c]), state.rng)
    state.tables = tables
    params = np.concatenate([tables.sum(axis=0).astype(float), [state.gamma]])
    state.beta = state.rng.dirichlet(params)
    return state


def resample_concentrations(state, hypers=None):
    """Auxiliary-variable updates of both concentration parameters.

    Requires the table counts cached by the last resample_beta. With no
    data at all this reduces to fresh draws from the gamma priors.
    """
    h = (hypers or state.hypers).validate()
    if state.tables is None:
        raise RuntimeError("resample_beta must run before resample_concentrations")
    rng = state.rng
    m_total = int(state.tables.sum())

    group_sizes = state.counts.sum(axis=1)
    group_sizes = group_sizes[group_sizes > 0].astype(float)
    if m_total == 0 or group_sizes.size == 0:
        state.alpha0 = float(rng.gamma(h.a_alpha0, 1.0 / h.b_alpha0))
    else:
        w = rng.beta(state.alpha0 + 1.0, group_sizes)
        s = rng.random(group_sizes.size) < group_sizes / (group_sizes + state.alpha0)
        shape = h.a_alpha0 + m_total - int(s.sum())
        rate = h.b_alpha0 - float(np.log(w).sum())
        state.alpha0 = float(rng.gamma(shape, 1.0 / rate))

    k = state.n_states
    if m_total == 0:
        state.gamma = float(rng.gamma(h.a_gamma, 1.0 / h.b_gamma))
    else:
        eta = rng.beta(state.gamma + 1.0, m_total)
        rate = h.b_gamma - math.log(eta)
        odds = (h.a_gamma + k - 1.0) / (m_total * rate)
        shape = h.a_gamma + k if rng.random() < odds / (1.0 + odds) else h.a_gamma + k - 1.0
        state.gamma = float(rng.gamma(shape, 1.0 / rate))
    return state


def gibbs_sweep(state):
    """One full sweep: every site in gene-major order, then the shared
    weights, then both concentrations."""
    n, t_len = state.assignments.shape
    for g in range(n):
        for t in range(t_len):
            resample_assignment(state, g, t)
    resample_beta(state)
    resample_concentrations(state)
    return state


@dataclass(frozen=True)
class PosteriorSample:
    """One retained chain snapshot."""

    assignments: np.ndarray
    n_states: int
    beta: np.ndarray
    alpha0: float
    gamma: float
    state_means: np.ndarray


@dataclass
class PosteriorSampleSet:
    samples: list
    burn_in: int
    spacing: int

    @property
    def n_samples(self):
        return len(self.samples)


def snapshot_state(state):
    means = np.where(state.e_count > 0, state.e_sum / np.maximum(state.e_count, 1), 0.0)
    return PosteriorSample(
        assignments=state.assignments.copy(),
        n_states=state.n_states,
        beta=state.beta.copy(),
        alpha0=state.alpha0,
        gamma=state.gamma,
        state_means=means,
    )


def run_chain(dataset, hypers, seed, schedule):
    """Run one chain and collect snapshots.

    ``schedule`` is (burn_in, n_samples, spacing): burn_in full sweeps,
    then the first snapshot immediately, with ``spacing`` sweeps between
    consecutive snapshots.
    """
    burn_in, n_samples, spacing = (int(x) for x in schedule)
    if burn_in < 0 or spacing < 0:
        raise ValueError("burn_in and spacing must be >= 0")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    state = init_chain(dataset, hypers, seed)
    for _ in range(burn_in):
        gibbs_sweep(state)
    samples = []
    for i in range(n_samples):
        if i:
            for _ in range(spacing):
                gibbs_sweep(state)
        samples.append(snapshot_state(state))
    return PosteriorSampleSet(samples=samples, burn_in=burn_in, spacing=spacing)


def consistency_errors(state):
    """Recount everything from the labels; returns a list of discrepancy
    descriptions (empty when the state is internally consistent)."""
    errs = []
    v = state.assignments
    k = state.n_states
    if v.min() < 0 or (k > 0 and v.max() >= k):
        errs.append(f"labels outside 0..{k - 1}")
        return errs
    counts = np.zeros((k + 1, k), dtype=np.int64)
    np.add.at(counts, (0, v[:, 0]), 1)
    if v.shape[1] > 1:
        np.add.at(counts, (v[:, :-1].ravel() + 1, v[:, 1:].ravel()), 1)
    if not np.array_equal(counts, state.counts):
        errs.append("transition counts do not match a full recount")
    e_count = np.bincount(v.ravel(), minlength=k)
    if not np.array_equal(e_count, state.e_count):
        errs.append("emission counts do not match a full recount")
    if np.any(e_count == 0):
        errs.append("unrepresented state present")
    yy = state.values.ravel()
    e_sum = np.bincount(v.ravel(), weights=yy, minlength=k)
    e_sumsq = np.bincount(v.ravel(), weights=yy * yy, minlength=k)
    scale = max(1.0, float(np.abs(yy).sum()))
    if np.max(np.abs(e_sum - state.e_sum), initial=0.0) > 1e-6 * scale:
        errs.append("emission sums drifted from a full recount")
    if np.max(np.abs(e_sumsq - state.e_sumsq), initial=0.0) > 1e-6 * max(1.0, float((yy * yy).sum())):
        errs.append("emission squared sums drifted from a full recount")
    if state.beta.shape != (k + 1,):
        errs.append(f"beta length {state.beta.shape[0]} != K+1")
    elif np.any(state.beta < 0) or abs(state.beta.sum() - 1.0) > 1e-9:
        errs.append("beta is not a probability vector within 1e-9")
    if not (state.alpha0 > 0 and math.isfinite(state.alpha0)):
        errs.append("alpha0 not positive finite")
    if not (state.gamma > 0 and math.isfinite(state.gamma)):
        errs.append("gamma not positive finite")
    return errs


class PriorDraw(NamedTuple):
    values: np.ndarray
    assignments: np.ndarray
    beta: np.ndarray
    alpha0: float
    gamma: float


def sample_prior_joint(n_sequences, seq_length, hypers, rng):
    """Exact ancestral draw from the full joint model.

    Labels come from the hierarchical Polya urn (restaurants are indexed
    by the previous state, dishes are the shared states), the shared
    weights from the Dirichlet implied by the realized table counts, and
    observations from freshly drawn per-state Gaussian parameters. Used by
    the joint-distribution sampler diagnostics.
    """
    h = hypers.validate()
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    alpha0 = float(rng.gamma(h.a_alpha0, 1.0 / h.b_alpha0))
    gamma = float(rng.gamma(h.a_gamma, 1.0 / h.b_gamma))
    restaurants = {}
    dish_tables = []
    v = np.empty((n_sequences, seq_length), dtype=np.int64)
    for g in range(n_sequences):
        group = 0
        for t in range(seq_length):
            tabs = restaurants.setdefault(group, [])
            total = sum(c for _, c in tabs) + alpha0
            u = rng.random() * total
            acc = 0.0
            chosen = None
            for tab in tabs:
                acc += tab[1]
                if u < acc:
                    chosen = tab
                    break
            if chosen is None:
                top = sum(dish_tables) + gamma
                ud = rng.random() * top
                accd = 0.0
                dish = None
                for kk, mk in enumerate(dish_tables):
                    accd += mk
                    if ud < accd:
                        dish = kk
                        break
                if dish is None:
                    dish = len(dish_tables)
                    dish_tables.append(0)
                dish_tables[dish] += 1
                chosen = [dish, 1]
                tabs.append(chosen)
            else:
                chosen[1] += 1
            v[g, t] = chosen[0]
            group = chosen[0] + 1
    k = len(dish_tables)
    beta = rng.dirichlet(np.asarray(dish_tables + [gamma], dtype=float))
    variances = 1.0 / rng.gamma(h.a0, 1.0 / h.b0, size=k)
    means = rng.normal(h.m0, np.sqrt(variances / h.kappa0))
    values = rng.normal(means[v], np.sqrt(variances[v]))
    return PriorDraw(values=values, assignments=v, beta=beta, alpha0=alpha0, gamma=gamma)


def regenerate_observations(state):
    """Redraw the observations given the current labels (per-state Gaussian
    parameters from the base measure), refreshing the emission statistics.
    This is the data half of the joint-distribution diagnostics."""
    h = state.hypers
    k = state.n_states
    variances = 1.0 / state.rng.gamma(h.a0, 1.0 / h.b0, size=k)
    means = state.rng.normal(h.m0, np.sqrt(variances / h.kappa0))
    v = state.assignments
    state.values = state.rng.normal(means[v], np.sqrt(variances[v]))
    flat = v.ravel()
    yy = state.values.ravel()
    state.e_sum = np.bincount(flat, weights=yy, minlength=k)
    state.e_sumsq = np.bincount(flat, weights=yy * yy, minlength=k)
    return state


def empirical_dissimilarity(sample_set):
    """Pairwise -log of the empirical probability that two sequences share
    a state at every time point, pooled over snapshots.

    Per-time match frequencies are floored at 1/(S+1) so never-matching
    pairs stay finite; the diagonal is exactly zero.
    """
    from .clustering import DissimilarityMatrix

    samples = sample_set.samples
    s_count = len(samples)
    if s_count == 0:
        raise ValueError("sample set is empty")
    n, t_len = samples[0].assignments.shape
    floor = 1.0 / (s_count + 1)
    out = np.zeros((n, n))
    for t in range(t_len):
        matches = np.zeros((n, n))
        for snap in samples:
            col = snap.assignments[:, t]
            matches += col[:, None] == col[None, :]
        p = np.maximum(matches / s_count, floor)
        out -= np.log(p)
    return DissimilarityMatrix(out)


def represented_state_histogram(sample_set):
    """Snapshot counts keyed by the number of represented states."""
    hist = {}
    for snap in sample_set.samples:
        hist[snap.n_states] = hist.get(snap.n_states, 0) + 1
    return dict(sorted(hist.items()))


def _greedy_align(ref_means, snap_means):
    """Greedily match snapshot states to reference states by closeness of
    their emission means; unmatched states extend the reference list."""
    pairs = sorted(
        (abs(ref_means[i] - snap_means[j]), i, j)
        for i in range(len(ref_means))
        for j in range(len(snap_means))
    )
    used_ref, used_snap = set(), set()
    mapping = np.full(len(snap_means), -1, dtype=np.int64)
    for _, i, j in pairs:
        if i not in used_ref and j not in used_snap:
            mapping[j] = i
            used_ref.add(i)
            used_snap.add(j)
    for j in range(len(snap_means)):
        if mapping[j] < 0:
            mapping[j] = len(ref_means)
            ref_means.append(snap_means[j])
    return mapping


def empirical_transition_matrix(sample_set, threshold=1e-3):
    """Pooled transition matrix over snapshots with states aligned by
    emission means.

    States of every snapshot are greedily matched to the first snapshot's
    states (closest posterior means first); unmatched states get fresh
    indices. Within-trajectory transitions are pooled over all snapshots,
    rows with any outgoing mass are normalized, entries at or below
    ``threshold`` are zeroed, and the sparsity fraction (share of entries
    above the threshold) is returned alongside.
    """
    samples = sample_set.samples
    if not samples:
        raise ValueError("sample set is empty")
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    ref_means = list(samples[0].state_means)
    mappings = [_greedy_align(ref_means, list(s.state_means)) for s in samples]
    k_max = len(ref_means)
    counts = np.zeros((k_max, k_max))
    for snap, mapping in zip(samples, mappings):
        w = mapping[snap.assignments]
        if w.shape[1] > 1:
            np.add.at(counts, (w[:, :-1].ravel(), w[:, 1:].ravel()), 1)
    row_sums = counts.sum(axis=1)
    matrix = np.zeros_like(counts)
    nz = row_sums > 0
    matrix[nz] = counts[nz] / row_sums[nz, None]
    sparsity = float(np.mean(matrix > threshold))
    matrix = np.where(matrix > threshold, matrix, 0.0)
    return matrix, sparsity


def save_samples(sample_set, path):
    """Persist snapshots as self-describing text (17 significant digits)."""
    samples = sample_set.samples
    if not samples:
        raise ValueError("sample set is empty")
    n, t_len = samples[0].assignments.shape
    fmt = lambda arr: " ".join("%.17g" % x for x in np.ravel(arr))
    with open(path, "w") as fh:
        fh.write(
            f"snapshots {len(samples)} burn_in {sample_set.burn_in} "
            f"spacing {sample_set.spacing} genes {n} length {t_len}\n"
        )
        for i, snap in enumerate(samples):
            fh.write(
                "sample %d K %d alpha0 %.17g gamma %.17g\n"
                % (i, snap.n_states, snap.alpha0, snap.gamma)
            )
            fh.write("beta " + fmt(snap.beta) + "\n")
            fh.write("means " + fmt(snap.state_means) + "\n")
            for g in range(n):
                fh.write(" ".join(str(int(x)) for x in snap.assignments[g]) + "\n")


def load_samples(path):
    """Read back a snapshot file written by save_samples."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    head = lines[0].split()
    try:
        n_snap = int(head[1])
        burn_in = int(head[3])
        spacing = int(head[5])
        n = int(head[7])
        t_len = int(head[9])
    except (IndexError, ValueError):
        raise ValueError(f"{path}: malformed snapshot header") from None
    pos = 1
    samples = []
    for _ in range(n_snap):
        meta = lines[pos].split()
        k = int(meta[3])
        alpha0 = float(meta[5])
        gamma = float(meta[7])
        beta = np.asarray([float(x) for x in lines[pos + 1].split()[1:]])
        means = np.asarray([float(x) for x in lines[pos + 2].split()[1:]])
        traj = np.asarray(
            [[int(x) for x in lines[pos + 3 + g].split()] for g in range(n)],
            dtype=np.int64,
        )
        if traj.shape != (n, t_len) or beta.shape != (k + 1,):
            raise ValueError(f"{path}: inconsistent snapshot block at line {pos + 1}")
        samples.append(
            PosteriorSample(
                assignments=traj,
                n_states=k,
                beta=beta,
                alpha0=alpha0,
                gamma=gamma,
                state_means=means,
            )
        )
        pos += 3 + n
    return PosteriorSampleSet(samples=samples, burn_in=burn_in, spacing=spacing)

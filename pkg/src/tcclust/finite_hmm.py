"""Finite Gaussian-emission hidden Markov model trained by EM.

All sequences share one parameter set (initial distribution, transition
matrix, per-state emission mean and variance). Inference runs in log space
so long or ill-scaled series cannot underflow. The module also provides
the hidden-trajectory-overlap dissimilarity between sequences: minus the
log probability that two independently evolving sequences occupy the same
state at every time point, evaluated from their smoothed state marginals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "FiniteHmmModel",
    "StateMarginals",
    "init_model",
    "forward_backward",
    "baum_welch",
    "log_similarity",
    "state_marginals",
    "dissimilarity_matrix",
    "save_model",
    "load_model",
]

VARIANCE_FLOOR = 1e-6
DISSIMILARITY_CAP = 1e9
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class FiniteHmmModel:
    """Parameter set of a k-state Gaussian HMM.

    initial : (k,) probabilities, transition : (k, k) row-stochastic,
    means/variances : (k,) emission parameters, variances >= 1e-6.
    """

    k: int
    initial: np.ndarray
    transition: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)

    def validate(self, atol=1e-9):
        k = self.k
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        if self.initial.shape != (k,) or self.transition.shape != (k, k):
            raise ValueError("initial/transition shapes do not match k")
        if self.means.shape != (k,) or self.variances.shape != (k,):
            raise ValueError("means/variances shapes do not match k")
        if np.any(self.initial < -atol) or abs(self.initial.sum() - 1.0) > atol:
            raise ValueError("initial distribution must be a probability vector")
        rows = self.transition.sum(axis=1)
        if np.any(self.transition < -atol) or np.any(np.abs(rows - 1.0) > atol):
            raise ValueError("transition rows must be probability vectors")
        if np.any(self.variances < VARIANCE_FLOOR - 1e-15):
            raise ValueError(f"variances must be >= {VARIANCE_FLOOR}")
        return self


@dataclass
class StateMarginals:
    """Smoothed posterior state probabilities for one sequence.

    probs : (T, k) rows summing to 1; log_likelihood : sequence evidence.
    """

    probs: np.ndarray
    log_likelihood: float


def init_model(dataset, k, seed):
    """Draw a random starting point for EM.

    Emission means are sampled uniformly from the observed values (without
    replacement when possible), every variance starts at the global data
    variance, and the initial and transition rows are flat-Dirichlet draws.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    values = np.asarray(getattr(dataset, "values", dataset), dtype=float)
    flat = values.ravel()
    rng = np.random.default_rng(seed)
    means = rng.choice(flat, size=k, replace=flat.size < k)
    global_var = max(float(flat.var()), VARIANCE_FLOOR)
    model = FiniteHmmModel(
        k=k,
        initial=rng.dirichlet(np.ones(k)),
        transition=rng.dirichlet(np.ones(k), size=k),
        means=np.asarray(means, dtype=float),
        variances=np.full(k, global_var),
    )
    return model.validate()


def _log_emissions(model, seq):
    # (T, k) Gaussian log densities.
    diff = seq[:, None] - model.means[None, :]
    return -0.5 * (_LOG_2PI + np.log(model.variances)[None, :] + diff * diff / model.variances[None, :])


def _forward_backward_core(log_init, log_trans, log_emis):
    T, k = log_emis.shape
    log_alpha = np.empty((T, k))
    log_alpha[0] = log_init + log_emis[0]
    for t in range(1, T):
        log_alpha[t] = log_emis[t] + logsumexp(log_alpha[t - 1][:, None] + log_trans, axis=0)
    log_beta = np.zeros((T, k))
    for t in range(T - 2, -1, -1):
        log_beta[t] = logsumexp(log_trans + (log_emis[t + 1] + log_beta[t + 1])[None, :], axis=1)
    loglik = float(logsumexp(log_alpha[-1]))
    post = log_alpha + log_beta
    post -= logsumexp(post, axis=1)[:, None]
    return log_alpha, log_beta, np.exp(post), loglik


def forward_backward(model, seq):
    """Exact smoothed marginals and evidence for one observation sequence."""
    model.validate()
    seq = np.asarray(seq, dtype=float).ravel()
    if seq.size == 0:
        raise ValueError("sequence must be non-empty")
    if not np.all(np.isfinite(seq)):
        raise ValueError("sequence contains non-finite values")
    with np.errstate(divide="ignore"):
        log_init = np.log(model.initial)
        log_trans = np.log(model.transition)
    _, _, probs, loglik = _forward_backward_core(log_init, log_trans, _log_emissions(model, seq))
    return StateMarginals(probs=probs, log_likelihood=loglik)


def baum_welch(dataset, k, seed, tol=1e-6, max_iter=200):
    """Fit a k-state model to all sequences jointly by EM.

    Parameters are shared across sequences; sufficient statistics are
    pooled over the whole dataset each iteration. Stops when the total
    log likelihood improves by less than ``tol`` or after ``max_iter``
    iterations.

    Returns
    -------
    (model, trace)
        trace[i] is the total log likelihood under the parameters at the
        start of iteration i; it is non-decreasing up to accumulation noise.
    """
    values = np.asarray(getattr(dataset, "values", dataset), dtype=float)
    if values.ndim != 2:
        raise ValueError("dataset values must be a 2-d matrix")
    model = init_model(values, k, seed)
    n, T = values.shape
    trace = []
    for _ in range(max_iter):
        with np.errstate(divide="ignore"):
            log_init = np.log(model.initial)
            log_trans = np.log(model.transition)
        total_ll = 0.0
        init_acc = np.zeros(k)
        trans_acc = np.zeros((k, k))
        occ_acc = np.zeros(k)          # state occupancy over all t
        mean_acc = np.zeros(k)
        sq_acc = np.zeros(k)
        for i in range(n):
            seq = values[i]
            log_emis = _log_emissions(model, seq)
            la, lb, post, ll = _forward_backward_core(log_init, log_trans, log_emis)
            total_ll += ll
            init_acc += post[0]
            if T > 1:
                # xi summed over t, in log space per sequence
                stacked = (
                    la[:-1, :, None]
                    + log_trans[None, :, :]
                    + (log_emis[1:] + lb[1:])[:, None, :]
                    - ll
                )
                trans_acc += np.exp(logsumexp(stacked, axis=0))
            occ_acc += post.sum(axis=0)
            mean_acc += post.T @ seq
            sq_acc += post.T @ (seq * seq)
        trace.append(total_ll)
        if len(trace) > 1 and total_ll - trace[-2] < tol:
            break
        # M-step; guard states that lost all occupancy.
        occ_safe = np.where(occ_acc > 0, occ_acc, 1.0)
        new_means = np.where(occ_acc > 0, mean_acc / occ_safe, model.means)
        new_vars = np.where(
            occ_acc > 0,
            sq_acc / occ_safe - new_means * new_means,
            model.variances,
        )
        new_vars = np.maximum(new_vars, VARIANCE_FLOOR)
        if T > 1:
            row = trans_acc.sum(axis=1)
            row_safe = np.where(row > 0, row, 1.0)
            new_trans = np.where(row[:, None] > 0, trans_acc / row_safe[:, None], model.transition)
        else:
            new_trans = model.transition
        model = FiniteHmmModel(
            k=k,
            initial=init_acc / n,
            transition=new_trans,
            means=new_means,
            variances=new_vars,
        )
    return model, trace


def log_similarity(marginals_c, marginals_d):
    """Log probability that two sequences traverse identical hidden states.

    Sums, over time, the log of the inner product of the two smoothed
    marginal rows. Accepts StateMarginals or bare (T, k) arrays. Always
    <= 0; -inf when some time point admits no common state. Symmetric in
    its arguments by construction.
    """
    pc = np.asarray(getattr(marginals_c, "probs", marginals_c), dtype=float)
    pd = np.asarray(getattr(marginals_d, "probs", marginals_d), dtype=float)
    if pc.shape != pd.shape:
        raise ValueError(f"marginal shapes differ: {pc.shape} vs {pd.shape}")
    overlap = np.einsum("tk,tk->t", pc, pd)
    if np.any(overlap == 0.0):
        return float("-inf")
    return float(np.log(overlap).sum())


def state_marginals(model, dataset):
    """Smoothed marginals for every sequence in the dataset."""
    values = np.asarray(getattr(dataset, "values", dataset), dtype=float)
    return [forward_backward(model, values[i]) for i in range(values.shape[0])]


def dissimilarity_matrix(model, dataset):
    """Pairwise -log trajectory-overlap under a fitted finite model.

    The diagonal is NOT forced to zero: a sequence with soft state
    posteriors has positive self-dissimilarity. Infinite entries (no
    common state somewhere) are capped at 1e9 so downstream linkage
    arithmetic stays finite.
    """
    from .clustering import DissimilarityMatrix

    margs = state_marginals(model, dataset)
    n = len(margs)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            v = -log_similarity(margs[i], margs[j])
            v = min(v, DISSIMILARITY_CAP)
            out[i, j] = v
            out[j, i] = v
    return DissimilarityMatrix(out)


def save_model(model, path):
    """Persist a model as self-describing text with 17 significant digits."""
    model.validate()
    fmt = lambda arr: " ".join("%.17g" % v for v in np.ravel(arr))
    with open(path, "w") as fh:
        fh.write(f"k {model.k}\n")
        fh.write(f"initial {fmt(model.initial)}\n")
        fh.write(f"transition {fmt(model.transition)}\n")
        fh.write(f"means {fmt(model.means)}\n")
        fh.write(f"variances {fmt(model.variances)}\n")


def load_model(path):
    """Read back a model written by save_model; round-trips bit-exactly."""
    fields = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if parts:
                fields[parts[0]] = parts[1:]
    try:
        k = int(fields["k"][0])
        model = FiniteHmmModel(
            k=k,
            initial=np.asarray([float(v) for v in fields["initial"]]),
            transition=np.asarray([float(v) for v in fields["transition"]]).reshape(k, k),
            means=np.asarray([float(v) for v in fields["means"]]),
            variances=np.asarray([float(v) for v in fields["variances"]]),
        )
    except (KeyError, IndexError) as exc:
        raise ValueError(f"{path}: malformed model file (missing {exc})") from None
    return model.validate()

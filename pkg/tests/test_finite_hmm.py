import itertools
import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.stats import norm

from tcclust.dataset import ExpressionDataset, SyntheticSpec, generate_synthetic
from tcclust.finite_hmm import (
    DISSIMILARITY_CAP,
    VARIANCE_FLOOR,
    FiniteHmmModel,
    baum_welch,
    dissimilarity_matrix,
    forward_backward,
    init_model,
    load_model,
    log_similarity,
    save_model,
    state_marginals,
)


def random_model(rng, k):
    init = rng.dirichlet(np.ones(k))
    trans = rng.dirichlet(np.ones(k), size=k)
    means = rng.normal(scale=3, size=k)
    variances = rng.uniform(0.3, 2.0, size=k)
    return FiniteHmmModel(k=k, initial=init, transition=trans, means=means, variances=variances)


def make_dataset(values):
    values = np.asarray(values, dtype=float)
    return ExpressionDataset(
        gene_ids=[f"g{i}" for i in range(values.shape[0])],
        values=values,
        time_labels=[f"t{j}" for j in range(values.shape[1])],
    )


def enumerate_posteriors(model, seq):
    """Sum over every state path explicitly; the quadratic-time recursions
    must reproduce this."""
    t_len = len(seq)
    k = model.k
    logs = {}
    for path in itertools.product(range(k), repeat=t_len):
        lp = math.log(model.initial[path[0]])
        for t in range(1, t_len):
            lp += math.log(model.transition[path[t - 1], path[t]])
        for t, s in enumerate(path):
            lp += norm.logpdf(seq[t], model.means[s], math.sqrt(model.variances[s]))
        logs[path] = lp
    total = math.log(sum(math.exp(v) for v in logs.values()))
    probs = np.zeros((t_len, k))
    for path, lp in logs.items():
        w = math.exp(lp - total)
        for t, s in enumerate(path):
            probs[t, s] += w
    return probs, total


def test_forward_backward_matches_enumeration():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, 4))
        t_len = int(rng.integers(1, 6))
        model = random_model(rng, k)
        seq = rng.normal(scale=2, size=t_len)
        marg = forward_backward(model, seq)
        probs, total = enumerate_posteriors(model, seq)
        npt.assert_allclose(marg.probs, probs, atol=1e-10)
        assert abs(marg.log_likelihood - total) < 1e-10
        npt.assert_allclose(marg.probs.sum(axis=1), 1.0, atol=1e-12)


def test_forward_backward_single_state():
    model = FiniteHmmModel(
        k=1,
        initial=np.array([1.0]),
        transition=np.array([[1.0]]),
        means=np.array([0.5]),
        variances=np.array([2.0]),
    )
    seq = np.array([0.0, 1.0, -1.0])
    marg = forward_backward(model, seq)
    npt.assert_array_equal(marg.probs, 1.0)
    want = norm.logpdf(seq, 0.5, math.sqrt(2.0)).sum()
    assert marg.log_likelihood == pytest.approx(want, abs=1e-12)


def test_forward_backward_symmetric_states():
    # identical emissions and uniform dynamics cannot distinguish states
    model = FiniteHmmModel(
        k=2,
        initial=np.array([0.5, 0.5]),
        transition=np.full((2, 2), 0.5),
        means=np.array([1.0, 1.0]),
        variances=np.array([0.7, 0.7]),
    )
    marg = forward_backward(model, np.array([0.0, 2.0, 1.0]))
    npt.assert_allclose(marg.probs, 0.5, atol=1e-12)


def test_forward_backward_input_checks():
    model = random_model(np.random.default_rng(0), 2)
    with pytest.raises(ValueError):
        forward_backward(model, np.array([]))
    with pytest.raises(ValueError):
        forward_backward(model, np.array([1.0, np.nan]))


def test_init_model_deterministic_and_valid():
    ds = make_dataset(np.random.default_rng(1).normal(size=(6, 5)))
    a = init_model(ds, 3, seed=9)
    b = init_model(ds, 3, seed=9)
    npt.assert_array_equal(a.means, b.means)
    npt.assert_array_equal(a.transition, b.transition)
    for seed in range(30):
        m = init_model(ds, 4, seed=seed)
        npt.assert_allclose(m.transition.sum(axis=1), 1.0, atol=1e-12)
        npt.assert_allclose(m.initial.sum(), 1.0, atol=1e-12)
        assert np.all(m.variances >= VARIANCE_FLOOR)


def test_init_model_k1():
    ds = make_dataset([[1.0, 2.0], [3.0, 4.0]])
    m = init_model(ds, 1, seed=0)
    npt.assert_array_equal(m.initial, [1.0])
    npt.assert_array_equal(m.transition, [[1.0]])


def test_baum_welch_k1_closed_form():
    vals = np.random.default_rng(2).normal(loc=1.5, scale=2.0, size=(5, 6))
    ds = make_dataset(vals)
    model, trace = baum_welch(ds, 1, seed=0)
    assert model.means[0] == pytest.approx(vals.mean(), abs=1e-9)
    assert model.variances[0] == pytest.approx(vals.var(), abs=1e-9)
    assert len(trace) >= 1


def test_baum_welch_monotone_trace():
    for seed in range(6):
        rng = np.random.default_rng(seed)
        ds = make_dataset(rng.normal(size=(8, 10)))
        k = int(rng.integers(1, 6))
        _, trace = baum_welch(ds, k, seed=seed, max_iter=40)
        diffs = np.diff(trace)
        assert np.all(diffs >= -1e-8), (seed, k, diffs.min())


def test_baum_welch_recovers_separated_means():
    truth = FiniteHmmModel(
        k=3,
        initial=np.full(3, 1 / 3),
        transition=np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]),
        means=np.array([-5.0, 0.0, 5.0]),
        variances=np.full(3, 0.25),
    )
    ds, _ = generate_synthetic(SyntheticSpec(30, 12, truth, seed=3))
    best = None
    for seed in range(5):
        model, trace = baum_welch(ds, 3, seed=seed)
        if best is None or trace[-1] > best[1]:
            best = (model, trace[-1])
    fitted = np.sort(best[0].means)
    npt.assert_allclose(fitted, [-5.0, 0.0, 5.0], atol=0.3)


def test_baum_welch_determinism():
    ds = make_dataset(np.random.default_rng(11).normal(size=(6, 7)))
    m1, t1 = baum_welch(ds, 2, seed=4)
    m2, t2 = baum_welch(ds, 2, seed=4)
    npt.assert_array_equal(m1.means, m2.means)
    assert t1 == t2


def test_log_similarity_identical_onehot():
    probs = np.zeros((4, 3))
    probs[:, 1] = 1.0
    assert log_similarity(probs, probs) == 0.0


def test_log_similarity_uniform():
    t_len, k = 5, 3
    probs = np.full((t_len, k), 1.0 / k)
    assert log_similarity(probs, probs) == pytest.approx(-t_len * math.log(k), abs=1e-12)


def test_log_similarity_disjoint_support():
    a = np.array([[1.0, 0.0], [1.0, 0.0]])
    b = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert log_similarity(a, b) == -math.inf


def test_log_similarity_shape_mismatch():
    with pytest.raises(ValueError):
        log_similarity(np.full((2, 2), 0.5), np.full((3, 2), 0.5))


def test_log_similarity_direct_loop():
    rng = np.random.default_rng(14)
    for _ in range(10):
        a = rng.dirichlet(np.ones(4), size=3)
        b = rng.dirichlet(np.ones(4), size=3)
        want = sum(math.log(np.dot(a[t], b[t])) for t in range(3))
        assert log_similarity(a, b) == pytest.approx(want, abs=1e-12)


def test_dissimilarity_matrix_properties():
    rng = np.random.default_rng(6)
    ds = make_dataset(rng.normal(size=(5, 6)))
    model, _ = baum_welch(ds, 3, seed=1)
    diss = dissimilarity_matrix(model, ds)
    assert diss.n == 5
    npt.assert_allclose(diss.values, diss.values.T, atol=1e-12)
    # soft marginals mean positive self-dissimilarity; the diagonal stays
    assert np.all(np.diag(diss.values) > 0)
    marg = state_marginals(model, ds)
    for c in range(5):
        for d in range(5):
            want = -log_similarity(marg[c].probs, marg[d].probs)
            assert diss.values[c, d] == pytest.approx(want, abs=1e-12)


def test_dissimilarity_identical_rows_match_self():
    ds = make_dataset([[1.0, 2.0, 1.5], [1.0, 2.0, 1.5], [4.0, 4.2, 3.9]])
    model, _ = baum_welch(ds, 2, seed=0)
    diss = dissimilarity_matrix(model, ds).values
    assert diss[0, 1] == pytest.approx(diss[0, 0], abs=1e-12)


def test_dissimilarity_k1_all_zero():
    ds = make_dataset(np.random.default_rng(9).normal(size=(4, 5)))
    model, _ = baum_welch(ds, 1, seed=0)
    diss = dissimilarity_matrix(model, ds)
    npt.assert_array_equal(diss.values, 0.0)


def test_dissimilarity_cap_applied():
    # far-apart tight clusters give essentially disjoint marginals
    vals = np.vstack([np.full((1, 12), -60.0), np.full((1, 12), 60.0)])
    ds = make_dataset(vals)
    model = FiniteHmmModel(
        k=2,
        initial=np.array([0.5, 0.5]),
        transition=np.array([[0.999, 0.001], [0.001, 0.999]]),
        means=np.array([-60.0, 60.0]),
        variances=np.array([1e-4, 1e-4]),
    )
    diss = dissimilarity_matrix(model, ds)
    assert diss.values[0, 1] == DISSIMILARITY_CAP
    assert np.isfinite(diss.values).all()


def test_model_save_load_round_trip(tmp_path):
    model = random_model(np.random.default_rng(21), 3)
    path = tmp_path / "model.txt"
    save_model(model, path)
    back = load_model(path)
    npt.assert_array_equal(back.initial, model.initial)
    npt.assert_array_equal(back.transition, model.transition)
    npt.assert_array_equal(back.means, model.means)
    npt.assert_array_equal(back.variances, model.variances)
    assert back.k == model.k


def test_model_validation():
    with pytest.raises(ValueError):
        FiniteHmmModel(
            k=2,
            initial=np.array([0.7, 0.7]),
            transition=np.full((2, 2), 0.5),
            means=np.zeros(2),
            variances=np.ones(2),
        ).validate()
    with pytest.raises(ValueError):
        FiniteHmmModel(
            k=2,
            initial=np.array([0.5, 0.5]),
            transition=np.full((2, 2), 0.5),
            means=np.zeros(2),
            variances=np.array([1.0, -1.0]),
        ).validate()

import itertools
import math

import numpy as np
import pytest

from ddn._numeric import finite_diff_grad, make_rng, relative_error, sigmoid
from ddn._optim import SGDConfig
from ddn.data import gen_planted_mrf_dataset
from ddn.mrf import (PairwiseMRF, binarize_evidence, bp_marginals, conjunctive_mrf, drf_predict,
                     exact_marginals, fit_weights, gibbs_marginals, induced_width, learn_structure,
                     map_assignment, min_degree_order, pll, pll_grad, random_mrf)
from ddn.mrf.map import icm
from ddn.mrf.model import enumerate_scores
from ddn.mrf.structure import kill_threshold, l1_logistic


def brute_force_max(mrf, evidence):
    e = np.asarray(evidence, dtype=int)
    best = -math.inf
    for x in itertools.product((0, 1), repeat=mrf.n_x):
        best = max(best, mrf.score(np.concatenate([x, e])))
    return best


# --- model ---------------------------------------------------------------

def test_model_validation():
    with pytest.raises(ValueError):
        PairwiseMRF(2, 0, [(0,), (1,)], [1.0])
    with pytest.raises(ValueError):
        PairwiseMRF(2, 0, [(0, 0)], [1.0])
    with pytest.raises(ValueError):
        PairwiseMRF(2, 0, [(0, 5)], [1.0])
    with pytest.raises(ValueError):
        PairwiseMRF(2, 0, [(0,)], [np.nan])
    with pytest.raises(ValueError):
        PairwiseMRF(2, 0, [(0,)], [1.0], neighbor_cap=11)
    star = [(0, k) for k in range(1, 4)]
    with pytest.raises(ValueError, match="cap"):
        PairwiseMRF(4, 0, star, np.ones(3), neighbor_cap=2)


def test_score_and_reduce_agree():
    rng = make_rng(1, "t")
    mrf = random_mrf(rng, 5, 3, edge_prob=0.5)
    e = np.array([1, 0, 1])
    u, J, const = mrf.reduce(e)
    for x in itertools.product((0, 1), repeat=5):
        x = np.array(x)
        assert const + u @ x + x @ np.triu(J, 1) @ x == pytest.approx(mrf.score(np.concatenate([x, e])), abs=1e-12)


def test_evidence_checked():
    mrf = random_mrf(make_rng(0), 3, 2)
    with pytest.raises(ValueError):
        mrf.check_evidence([1])
    with pytest.raises(ValueError):
        mrf.check_evidence([1, 2])


# --- structure -----------------------------------------------------------

def test_duplicated_column_edge_below_kill_threshold():
    rng = make_rng(2, "t")
    col = rng.integers(0, 2, size=1000)
    Z = np.column_stack([col, col])
    top = kill_threshold(Z[:, [1]], Z[:, 0])
    for lam in np.geomspace(1e-3, top * 0.9, 6):
        w, _ = l1_logistic(Z[:, [1]].astype(float), Z[:, 0].astype(float), lam)
        assert abs(w[0]) > 0
        assert learn_structure(Z, lambdas=[lam]) == [(0, 1)]
    w, _ = l1_logistic(Z[:, [1]].astype(float), Z[:, 0].astype(float), top * 1.01)
    assert w[0] == 0


def test_independent_columns_large_lambda_empty():
    Z = make_rng(3, "t").integers(0, 2, size=(10_000, 5))
    assert learn_structure(Z, lambdas=[1.0]) == []


def test_planted_chain_recovered():
    chain = [(i, i + 1) for i in range(4)]
    data = gen_planted_mrf_dataset(make_rng(4, "t"), 5, 10_000, chain, [2.0, -2.0, 2.0, -2.0])
    edges = set(learn_structure(data.X))
    tp = len(edges & set(chain))
    assert tp / max(len(edges), 1) >= 0.9 and tp / len(chain) >= 0.9


def test_cap_is_respected_after_symmetrization():
    rng = make_rng(5, "t")
    hub = rng.integers(0, 2, size=4000)
    Z = np.column_stack([hub] + [np.where(rng.random(4000) < 0.9, hub, 1 - hub) for _ in range(6)])
    edges = learn_structure(Z, neighbor_cap=2)
    deg = np.bincount(np.array(edges).ravel(), minlength=7)
    assert deg.max() <= 2


def test_constant_column_warns():
    Z = np.column_stack([np.ones(50, int), make_rng(0).integers(0, 2, 50)])
    with pytest.warns(RuntimeWarning, match="constant"):
        assert learn_structure(Z) == []


# --- pseudo-likelihood -----------------------------------------------------

def test_pll_zero_weights():
    mrf = conjunctive_mrf(4, 0, [(0, 1), (2, 3)])
    Z = make_rng(0).integers(0, 2, size=(7, 4))
    assert pll(mrf, Z) == pytest.approx(4 * math.log(0.5), abs=1e-12)


def test_pll_single_unary():
    mrf = PairwiseMRF(1, 0, [(0,)], [0.7])
    assert pll(mrf, np.ones((5, 1), int)) == pytest.approx(math.log(sigmoid(0.7)), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_pll_grad_finite_difference(seed):
    rng = make_rng(seed, "pll")
    mrf = random_mrf(rng, 3, 1, edge_prob=0.7)
    Z = rng.integers(0, 2, size=(20, 4))
    num = finite_diff_grad(lambda th: pll(mrf.with_weights(th), Z, l2=0.1), mrf.weights)
    assert relative_error(pll_grad(mrf, Z, l2=0.1), num).max() <= 1e-4


def test_fit_weights_zero_epochs_and_heavy_l2():
    mrf = random_mrf(make_rng(0), 4, 0, edge_prob=0.8)
    Z = make_rng(1).integers(0, 2, size=(200, 4))
    same = fit_weights(mrf, Z, SGDConfig(epochs=0))
    assert np.array_equal(same.weights, mrf.weights)
    shrunk = fit_weights(mrf, Z, SGDConfig(epochs=5, lr=0.1, l2=1e6))
    assert np.abs(shrunk.weights).max() < 1e-2


def test_fit_weights_reaches_planted_pll():
    edges = [(0, 1), (1, 2), (2, 3), (0, 3)]
    w = [1.5, -1.0, 2.0, 1.0]
    unary = [-0.5, 0.3, -1.0, 0.2]
    rng = make_rng(6, "t")
    train = gen_planted_mrf_dataset(rng, 4, 5000, edges, w, unary)
    test = gen_planted_mrf_dataset(rng, 4, 5000, edges, w, unary)
    planted = conjunctive_mrf(4, 0, edges, weights=np.array(unary + w))
    losses = []
    fitted = fit_weights(conjunctive_mrf(4, 0, edges), train.X, SGDConfig(epochs=30, lr=0.05),
                         log=lambda e, l: losses.append(l))
    assert len(losses) == 30
    assert pll(fitted, test.X) >= 1.05 * pll(planted, test.X)


# --- gibbs -----------------------------------------------------------------

def test_gibbs_uniform():
    mrf = conjunctive_mrf(5, 0, [(0, 1), (1, 2)])
    est = gibbs_marginals(mrf, [], 50_000, rng=make_rng(0))
    assert np.abs(est.p - 0.5).max() <= 0.02
    assert est.method == "gibbs" and est.diagnostics["samples"] == 50_000


def test_gibbs_random_8_label():
    mrf = random_mrf(make_rng(7, "g"), 8, 0, edge_prob=0.4)
    est = gibbs_marginals(mrf, [], 50_000, rng=make_rng(1))
    assert np.abs(est.p - exact_marginals(mrf, []).p).max() <= 0.02


def test_gibbs_strong_edge():
    mrf = PairwiseMRF(2, 0, [(0,), (0, 1)], [5.0, 5.0])
    assert exact_marginals(mrf, []).p[1] > 0.9
    assert gibbs_marginals(mrf, [], 20_000, rng=make_rng(2)).p[1] > 0.9


def test_gibbs_deterministic_and_clamped():
    mrf = random_mrf(make_rng(8), 4, 2, edge_prob=0.6)
    a = gibbs_marginals(mrf, [1, 0], 2000, rng=make_rng(3, "x"))
    b = gibbs_marginals(mrf, [1, 0], 2000, rng=make_rng(3, "x"))
    assert np.array_equal(a.p, b.p)
    assert a.p.shape == (4,)


# --- belief propagation ------------------------------------------------------

def test_bp_tree_exact():
    rng = make_rng(9, "bp")
    edges = [(0, 1), (1, 2), (1, 3), (3, 4), (3, 5)]
    mrf = conjunctive_mrf(6, 0, edges, weights=rng.uniform(-2, 2, 6 + len(edges)))
    for ib in (2, 3, 5):
        assert np.abs(bp_marginals(mrf, [], i_bound=ib).p - exact_marginals(mrf, []).p).max() <= 1e-6


def test_bp_four_cycle_exact():
    rng = make_rng(10, "bp")
    edges = [(0, 1), (1, 2), (2, 3), (0, 3)]
    mrf = conjunctive_mrf(4, 0, edges, weights=rng.uniform(-2, 2, 8))
    assert induced_width(mrf) == 2
    est = bp_marginals(mrf, [], i_bound=3)
    assert np.abs(est.p - exact_marginals(mrf, []).p).max() <= 1e-6
    assert est.diagnostics["join_tree"]


def test_bp_zero_weights_half():
    mrf = conjunctive_mrf(5, 0, [(0, 1), (1, 2), (2, 0), (3, 4)])
    assert np.array_equal(bp_marginals(mrf, [], i_bound=2).p, np.full(5, 0.5))


def test_bp_with_evidence_matches_enumeration():
    mrf = random_mrf(make_rng(11), 6, 3, edge_prob=0.5)
    e = [1, 1, 0]
    ib = induced_width(mrf) + 1
    assert np.abs(bp_marginals(mrf, e, i_bound=max(ib, 2)).p - exact_marginals(mrf, e).p).max() <= 1e-6


def test_bp_loopy_regime_reports():
    mrf = random_mrf(make_rng(12), 9, 0, edge_prob=0.8, weight_scale=0.5)
    est = bp_marginals(mrf, [], i_bound=2, max_iters=500)
    assert est.diagnostics["stopped_by"] in ("converged", "max_iters")
    assert np.all((est.p >= 0) & (est.p <= 1))
    assert np.abs(est.p - exact_marginals(mrf, []).p).max() < 0.2


def test_min_degree_order():
    order, width = min_degree_order(4, [(0, 1), (1, 2), (2, 3), (0, 3)])
    assert sorted(order) == [0, 1, 2, 3] and width == 2
    assert min_degree_order(3, [])[1] == 0


# --- MAP -------------------------------------------------------------------

def test_map_small_example():
    mrf = PairwiseMRF(2, 0, [(0, 1), (0,)], [2.0, -1.0])
    states, scores = enumerate_scores(mrf, [])
    assert dict(zip(map(tuple, states.tolist()), scores)) == {(0, 0): 0, (1, 0): -1, (0, 1): 0, (1, 1): 1}
    res = map_assignment(mrf, [])
    assert res.assignment.tolist() == [1, 1] and res.score == 1.0 and res.exact


def test_map_zero_weights():
    res = map_assignment(conjunctive_mrf(4, 0, [(0, 1)]), [])
    assert res.score == 0.0


def test_map_matches_brute_force_n12():
    rng = make_rng(13, "map")
    for _ in range(100):
        mrf = random_mrf(rng, 12, 0, edge_prob=0.3)
        assert map_assignment(mrf, [], rng=rng).score == brute_force_max(mrf, [])


def test_icm_is_local_optimum():
    mrf = random_mrf(make_rng(14), 8, 0, edge_prob=0.5)
    u, J, const = mrf.reduce([])
    x = icm(u, J, np.zeros(8, dtype=np.int8))
    base = const + u @ x + x @ np.triu(J, 1) @ x
    for i in range(8):
        y = x.copy()
        y[i] = 1 - y[i]
        assert const + u @ y + y @ np.triu(J, 1) @ y <= base + 1e-12
    res = map_assignment(mrf, [], mode="icm", rng=make_rng(0))
    assert not res.exact and res.score <= brute_force_max(mrf, [])


# --- DRF prediction ----------------------------------------------------------

def test_binarize_evidence():
    assert binarize_evidence(np.full(3, 0.9), 0.5).tolist() == [1, 1, 1]
    assert binarize_evidence(np.full(3, 0.9), 1.1).tolist() == [0, 0, 0]


def test_drf_predict_map_copies_evidence():
    n = 4
    rng = make_rng(15, "drf")
    X = rng.integers(0, 2, size=(3000, n))
    E = np.where(rng.random(X.shape) < 0.95, X, 1 - X)
    Z = np.concatenate([X, E], axis=1)
    edges = [(i, n + i) for i in range(n)]
    mrf = fit_weights(conjunctive_mrf(n, n, edges), Z, SGDConfig(epochs=20, lr=0.05))
    test = rng.integers(0, 2, size=(200, n))
    e_cont = np.where(test == 1, 0.8, 0.2)
    agree = np.mean([
        np.array_equal(drf_predict(mrf, e, 0.5, "map").assignment, t) for e, t in zip(e_cont, test)
    ])
    assert agree >= 0.95
    marg = drf_predict(mrf, e_cont[0], 0.5, "map", as_marginals=True)
    assert set(np.unique(marg.p)) <= {0.0, 1.0}
    for method in ("gibbs", "bp"):
        assert drf_predict(mrf, e_cont[0], inference=method, rng=make_rng(0), n_samples=500).p.shape == (n,)
    with pytest.raises(ValueError):
        drf_predict(mrf, e_cont[0], inference="nope")
    with pytest.raises(ValueError):
        drf_predict(mrf, e_cont[0][:2])

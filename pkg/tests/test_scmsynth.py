import itertools

import numpy as np
import pytest

from gracevae import scmsynth as S
from gracevae.errors import ConstructionError, ContractError, UnsupportedError


def linear_gt(G, W, noise=None, interventions=None, d=None):
    p = len(G)
    mixing = S.make_mixing(p, p if d is None else d, "linear", seed=0,
                           coeffs=None if d else {"H": np.eye(p)})
    return S.GroundTruth(p, np.asarray(G), np.asarray(W, float),
                         np.ones(p) if noise is None else noise,
                         interventions or [(i, 1.0) for i in range(p)], mixing)


# ---- sample_dag

def test_sample_dag_extremes():
    assert S.sample_dag(5, 0.0, 1).sum() == 0
    G = S.sample_dag(4, 1.0, 1)
    assert G.sum() == 6 and np.all(np.triu(G, 1) == G)


def test_sample_dag_mean_edge_count():
    counts = np.array([S.sample_dag(6, 0.5, s).sum() for s in range(10_000)])
    se = np.sqrt(15 * 0.25 / len(counts))
    assert abs(counts.mean() - 7.5) < 3 * se


def test_sample_dag_deterministic():
    assert np.array_equal(S.sample_dag(6, 0.4, 3), S.sample_dag(6, 0.4, 3))


def test_ground_truth_rejects_cycles_and_stray_weights():
    with pytest.raises(ConstructionError):
        linear_gt([[0, 0], [1, 0]], [[0, 0], [1, 0]])
    with pytest.raises(ConstructionError):
        linear_gt([[0, 0], [0, 0]], [[0, 1], [0, 0]])


# ---- ancestral_sample

def test_empty_graph_covariance_identity():
    gt = linear_gt(np.zeros((3, 3), int), np.zeros((3, 3)))
    U, _ = S.ancestral_sample(gt, 10_000, seed=0)
    assert np.linalg.norm(np.cov(U.T) - np.eye(3)) < 0.05


def test_chain_covariance_and_shift():
    w, n = 0.8, 10_000
    gt = S.chain_ground_truth([w], shift=1.5)
    U, X = S.ancestral_sample(gt, n, seed=1)
    np.testing.assert_array_equal(U, X)
    c = np.cov(U.T)[0, 1]
    # var of the product of a unit normal and (w*u0 + e1) is 1 + 2 w^2
    assert abs(c - w) < 3 * np.sqrt((1 + 2 * w * w) / n)
    UI, _ = S.ancestral_sample(gt, n, 0, seed=2)
    se = np.sqrt(U[:, 1].var() / n + UI[:, 1].var() / n)
    assert abs((UI[:, 1].mean() - U[:, 1].mean()) - w * 1.5) < 3 * se


def test_intervention_changes_only_target_mechanism():
    gt, _, _ = S.generate_benchmark(5, 8, 10, 10, 0.6, 2.0, "linear", 1.0, seed=4)
    noise = np.random.default_rng(0).standard_normal((200, 5))
    U0, _ = S.ancestral_sample(gt, 200, noise=noise)
    for k in range(5):
        i = gt.target(k)
        UI, _ = S.ancestral_sample(gt, 200, k, noise=noise)
        untouched = [c for c in range(5) if c != i and c not in gt.descendants(i)]
        assert UI[:, untouched].tobytes() == U0[:, untouched].tobytes()


def test_interventional_mean_matches_total_effects():
    gt, _, _ = S.generate_benchmark(4, 6, 10, 10, 0.7, 2.0, "linear", 1.0, seed=9)
    n = 10_000
    U0, _ = S.ancestral_sample(gt, n, seed=1)
    T = gt.total_effects()
    for k in range(4):
        i, delta = gt.interventions[k]
        UI, _ = S.ancestral_sample(gt, n, k, seed=2 + k)
        se = np.sqrt(U0.var(0) / n + UI.var(0) / n)
        assert np.all(np.abs(UI.mean(0) - U0.mean(0) - delta * T[i]) < 3 * se + 1e-12)


def test_intervention_index_checked():
    gt = S.chain_ground_truth([1.0])
    with pytest.raises(ContractError):
        S.ancestral_sample(gt, 5, 3, seed=0)


# ---- make_mixing

def test_identity_mixing():
    m = S.make_mixing(3, 3, "linear", coeffs={"H": np.eye(3)})
    U = np.random.default_rng(0).standard_normal((5, 3))
    np.testing.assert_array_equal(m(U), U)


def test_random_linear_mixing_has_full_rank():
    m = S.make_mixing(4, 20, "linear", seed=3)
    s = np.linalg.svd(m.coeffs["H"], compute_uv=False)
    assert np.sum(s / s.max() > 1e-8) == 4


def test_duplicated_rows_rejected():
    H = np.ones((3, 6))
    with pytest.raises(ConstructionError):
        S.make_mixing(3, 6, "linear", coeffs={"H": H})


def test_mixing_d_below_p_rejected():
    with pytest.raises(ConstructionError):
        S.make_mixing(4, 3, "linear", seed=0)


@pytest.mark.parametrize("kind", ["poly2", "mlp"])
def test_nonlinear_mixings_are_deterministic(kind):
    a = S.make_mixing(3, 7, kind, seed=5)
    b = S.make_mixing(3, 7, kind, seed=5)
    U = np.random.default_rng(1).standard_normal((4, 3))
    assert a(U).shape == (4, 7) and a(U).tobytes() == b(U).tobytes()


# ---- context network

def test_informative_context_links_loading_blocks():
    p, d = 3, 9
    H = np.zeros((p, d))
    H[0, 3:6] = 1.0
    H[1, 0:3] = 1.0
    H[2, 6:9] = 1.0
    G = np.zeros((p, p), int)
    G[0, 1] = 1
    gt = linear_gt(G, G * 0.9)
    mixing = S.make_mixing(p, d, "linear", coeffs={"H": H})
    g = S.make_context_network(gt, mixing, 1.0, seed=0)
    for a, b in itertools.combinations([0, 1, 2], 2):
        assert (a, b) in g.edges_xx
    assert {(v, d + 1) for v in (0, 1, 2)} <= set(g.edges_xh)
    assert (d, d + 1) in g.edges_hh


def test_uninformative_context_preserves_counts():
    gt, _, g1 = S.generate_benchmark(4, 16, 5, 5, 0.5, 1.0, "linear", 1.0, seed=2)
    mixing = gt.mixing
    g0 = S.make_context_network(gt, mixing, 0.0, seed=7)
    assert g0.counts() == g1.counts()
    assert g0.edge_set() != g1.edge_set()
    again = S.make_context_network(gt, mixing, 0.0, seed=7)
    assert again.typed_edges() == g0.typed_edges()


# ---- generate_benchmark and bundles

def test_benchmark_full_coverage():
    gt, ds, g = S.generate_benchmark(4, 12, 30, 20, 0.5, 2.0, "linear", 0.9, seed=0)
    assert sorted(gt.target(k) for k in range(4)) == [0, 1, 2, 3]
    for _, delta in gt.interventions:
        assert abs(delta) >= 2.0
    assert ds.labels == ["I0", "I1", "I2", "I3"]
    assert all(X.shape == (20, 12) for X in ds.Xk) and ds.X0.shape == (30, 12)


def test_benchmark_double_pairs_label_and_effect():
    gt, ds, _ = S.generate_benchmark(3, 6, 10, 10, 0.5, 2.0, "linear", 1.0, seed=1, double_pairs=[(0, 2)])
    assert ds.labels[-1] == "I0+I2"
    assert ds.vocabulary == ["I0", "I1", "I2"]


def test_benchmark_is_pure_function_of_seed():
    a = S.generate_benchmark(3, 6, 20, 20, 0.5, 2.0, "poly2", 0.8, seed=8)
    b = S.generate_benchmark(3, 6, 20, 20, 0.5, 2.0, "poly2", 0.8, seed=8)
    assert a[1].X0.tobytes() == b[1].X0.tobytes()
    assert a[2].typed_edges() == b[2].typed_edges()


def test_bundle_round_trip_bit_identical(tmp_path):
    gt, ds, g = S.generate_benchmark(3, 7, 25, 15, 0.5, 2.0, "linear", 0.9, seed=3, double_pairs=[(0, 1)])
    S.save_bundle(tmp_path / "b", gt, ds, g)
    gt2, ds2, g2 = S.load_bundle(tmp_path / "b")
    assert ds2.labels == ds.labels
    assert ds2.X0.tobytes() == ds.X0.tobytes()
    assert all(a.tobytes() == b.tobytes() for a, b in zip(ds.Xk, ds2.Xk))
    assert all(a.tobytes() == b.tobytes() for a, b in zip(ds.Uk, ds2.Uk))
    assert g2.typed_edges() == g.typed_edges()
    assert gt2.W.tobytes() == gt.W.tobytes() and gt2.interventions == gt.interventions
    header = (tmp_path / "b" / "data_obs.csv").read_text().splitlines()[0]
    assert header.startswith("sample_id,intervention,x0,")


def test_zero_shift_regimes_are_null():
    accepted = 0
    for t in range(100):
        gt, ds, _ = S.generate_benchmark(2, 3, 200, 200, 0.5, 0.0, "linear", 1.0, seed=t)
        proj = np.random.default_rng(t).standard_normal(3)
        _, pv = S.mmd_permutation_test(ds.X0 @ proj, ds.Xk[0] @ proj, 100, seed=t)
        accepted += pv > 0.05
    # a level-0.05 test accepts 95 of 100 on average; allow 3 binomial SE
    assert accepted >= 95 - 3 * np.sqrt(100 * 0.05 * 0.95)


# ---- assumption checks

def test_faithfulness_eligibility_skips_blocked_children():
    # 0 -> 1, 0 -> 2, 1 -> 2: child 2 has parent 1 which descends from 0
    G = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]])
    gt = linear_gt(G, G * 1.0)
    rep = S.check_faithfulness(gt, 0, 300, n_C_draws=1, seed=0, n_perm=50)
    assert rep.eligible == [0, 1] and rep.skipped == [2]


def test_faithfulness_range_check():
    with pytest.raises(ContractError):
        S.check_faithfulness(S.chain_ground_truth([1.0]), 5, 100)


def test_faithfulness_detects_chain_shift():
    rep = S.check_faithfulness(S.chain_ground_truth([1.0], 1.0), 0, 2000, n_C_draws=2, seed=3)
    assert rep.eligible == [0, 1]
    assert rep.faithful


def test_total_separation_on_unit_chain():
    gt = S.chain_ground_truth([1.0])
    bad = S.check_total_separation(gt, (0, 1), np.linspace(-2, 2, 41))
    assert not bad.holds and bad.argmin["c_j"] == pytest.approx(-1.0)
    good = S.check_total_separation(gt, (0, 1), [0.5, 1.0, 2.0])
    assert good.holds


def test_total_separation_preconditions():
    gt = S.chain_ground_truth([1.0, 1.0])
    with pytest.raises(ContractError):
        S.check_total_separation(gt, (0, 2), [0.0])
    gt.mechanism = "nonlinear"
    with pytest.raises(UnsupportedError):
        S.check_total_separation(gt, (0, 1), [0.0])


def test_total_separation_generic_random_scms():
    # Edges with S empty: independence needs c_j = -w exactly, which a
    # generic weight never puts on an integer grid. With S nonempty the
    # solutions form a curve in (c_j, c_k), so dense grids always find one.
    grid = np.arange(-5000.0, 5000.0)
    held = total = 0
    for seed in range(40):
        gt, _, _ = S.generate_benchmark(4, 4, 5, 5, 0.6, 1.0, "linear", 1.0, seed=seed)
        for i, j in zip(*np.nonzero(gt.G)):
            i, j = int(i), int(j)
            if set(gt.parents(j)) & gt.descendants(i):
                continue
            total += 1
            held += S.check_total_separation(gt, (i, j), grid).holds
    assert total >= 20 and held >= 0.95 * total


def test_total_separation_finds_curve_when_s_nonempty():
    # 0 -> 1 -> 2 and 0 -> 2: S = {1} for the edge 0 -> 2
    G = np.array([[0, 1, 1], [0, 0, 1], [0, 0, 0]])
    W = np.array([[0, 0.7, 0.9], [0, 0, 1.3], [0, 0, 0]])
    gt = linear_gt(G, W)
    c_k = -0.7
    c_j = -(0.9 + 1.3 * 0.7)
    v = S.check_total_separation(gt, (0, 2), [c_j, c_k, 0.0])
    assert not v.holds and v.argmin == {"c_j": c_j, "c_k": {1: c_k}}

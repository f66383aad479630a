import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from dtwisland.coherency import build_constraints
from dtwisland.netgraph import build_graph, build_laplacians
from dtwisland.spectral import (
    InfeasibleError,
    SpectralError,
    default_beta,
    exhaustive_medoids,
    generalized_eigenpairs,
    kmedoids_assign,
    labels_from_medoids,
    medoid_cost,
    normalize_constraints,
    pam,
    partition_graph,
    recover_indicator,
    solve_constrained,
    _pairwise,
)

from conftest import CASE1_GROUPS, CASE2_GROUPS
from planted import min_cut_oracle, planted_graph, same_split, satisfies


def test_normalize_examples():
    q = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert normalize_constraints(q, [4.0, 9.0])[0, 1] == pytest.approx(1 / 6)
    assert np.array_equal(normalize_constraints(np.zeros((2, 2)), [4.0, 9.0]), np.zeros((2, 2)))
    assert np.array_equal(normalize_constraints(q, np.eye(2)), q)
    with pytest.raises(SpectralError):
        normalize_constraints(q, [0.0, 1.0])


def test_recover_indicator():
    d = np.array([4.0, 9.0, 1.0])
    v = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(recover_indicator(v, np.ones(3)), v)
    assert np.allclose(recover_indicator(np.sqrt(d), d), 1.0)
    assert np.allclose(recover_indicator(v, d) * np.sqrt(d), v)


def _random_problem(seed, n=8):
    r = np.random.default_rng(seed)
    w = np.triu(r.uniform(0.1, 2.0, (n, n)) * (r.random((n, n)) < 0.6), 1)
    for i in range(n - 1):  # chain keeps it connected
        w[i, i + 1] = max(w[i, i + 1], 0.2)
    w = w + w.T
    q = np.zeros((n, n))
    gens = r.choice(n, 4, replace=False)
    labels = dict(zip(gens, [0, 0, 1, 1]))  # both groups present
    for a in gens:
        for b in gens:
            if a != b:
                q[a, b] = 1.0 if labels[a] == labels[b] else -1.0
    lap, lap_n, vol = build_laplacians(w)
    d = w.sum(1)
    return lap_n, normalize_constraints(q, d), vol, d


@given(seed=st.integers(0, 10**6), alpha=st.floats(-2.0, 0.9))
def test_residuals(seed, alpha):
    lap_n, qn, vol, _ = _random_problem(seed)
    beta = alpha * vol * np.linalg.eigvalsh(qn)[-1]
    b = qn - beta / vol * np.eye(len(qn))
    lam, v = generalized_eigenpairs(lap_n, b)
    norm_l = np.linalg.norm(lap_n, 2)
    for j in range(len(lam)):
        r = lap_n @ v[:, j] - lam[j] * b @ v[:, j]
        assert np.linalg.norm(r) <= 1e-8 * norm_l * np.linalg.norm(v[:, j]) * max(1.0, abs(lam[j]))


@given(seed=st.integers(0, 10**6), alpha=st.floats(0.05, 0.9))
def test_eigenvalues_match_qz(seed, alpha):
    lap_n, qn, vol, _ = _random_problem(seed)
    b = qn - default_beta(qn, vol, alpha) / vol * np.eye(len(qn))
    lam, _ = generalized_eigenpairs(lap_n, b)
    ref = scipy.linalg.eig(lap_n, b, right=False)
    ref = np.sort(ref[np.isfinite(ref)].real)
    np.testing.assert_allclose(np.sort(lam), ref, rtol=1e-6, atol=1e-8)


def test_q_zero_matches_standard_spectral():
    lap_n, _, vol, d = _random_problem(3)
    n = len(d)
    sol = solve_constrained(lap_n, np.zeros((n, n)), -1e6, vol, 3, degrees=d)
    mu, u = np.linalg.eigh(lap_n)
    ang = scipy.linalg.subspace_angles(sol.selected, u[:, 1:3])
    assert np.max(ang) < 1e-6
    # 2-way split equals unconstrained normalized spectral bisection
    two = solve_constrained(lap_n, np.zeros((n, n)), -1.0, vol, 2, degrees=d)
    fiedler = recover_indicator(u[:, 1] * np.sqrt(vol), d)
    assert same_split(two.assignment, kmedoids_assign(fiedler, 2))


@given(seed=st.integers(0, 10**6), k=st.integers(2, 3))
def test_solution_invariants(seed, k):
    lap_n, qn, vol, d = _random_problem(seed)
    # two groups give Q_N a single positive direction, so k=3 needs beta < 0
    beta = default_beta(qn, vol) if k == 2 else default_beta(qn, vol, -0.5)
    sol = solve_constrained(lap_n, qn, beta, vol, k, degrees=d)
    assert np.all(sol.selected_values > 0)
    for j in range(k - 1):
        v = sol.selected[:, j]
        assert v @ v == pytest.approx(vol, rel=1e-6)
        assert v @ qn @ v > beta - 1e-9 * vol
    assert sol.assignment.shape == (len(d),)
    assert set(sol.assignment) <= set(range(1, k + 1))


def test_infeasible_beta():
    lap_n, qn, vol, d = _random_problem(1)
    top = vol * np.linalg.eigvalsh(qn)[-1]
    with pytest.raises(InfeasibleError, match="beta"):
        solve_constrained(lap_n, qn, top * 1.01, vol, 2, degrees=d)
    with pytest.raises(SpectralError):
        solve_constrained(lap_n, qn, 0.0, vol, 1)


def test_too_few_positive_eigenvalues():
    # with beta near the top of Q_N only one direction keeps B positive
    lap_n, qn, vol, d = _random_problem(5)
    beta = 0.999 * vol * np.linalg.eigvalsh(qn)[-1]
    lam, _ = generalized_eigenpairs(lap_n, qn - beta / vol * np.eye(len(d)))
    k_bad = int(np.sum(lam > 0)) + 2
    with pytest.raises(InfeasibleError, match="positive"):
        solve_constrained(lap_n, qn, beta, vol, k_bad, degrees=d)


def test_planted_partition():
    rng = np.random.default_rng(99)
    for _ in range(10):
        w, q, truth = planted_graph(rng)
        _, lap_n, vol = build_laplacians(w)
        d = w.sum(1)
        qn = normalize_constraints(q, d)
        sol = solve_constrained(lap_n, qn, default_beta(qn, vol), vol, 2, degrees=d)
        oracle, _ = min_cut_oracle(w, q)
        assert same_split(sol.assignment, truth)
        assert same_split(oracle, truth)
        assert satisfies(sol.assignment, q)


@given(seed=st.integers(0, 10**6), flips=st.lists(st.booleans(), min_size=2, max_size=2))
def test_sign_flip_invariance(seed, flips):
    lap_n, qn, vol, d = _random_problem(seed, n=10)
    sol = solve_constrained(lap_n, qn, default_beta(qn, vol, -0.5), vol, 3, degrees=d)
    signs = np.where(flips, -1.0, 1.0)
    again = kmedoids_assign(sol.embedding * signs, 3)
    pairs = {(a, b) for a, b in zip(sol.assignment, again)}
    assert len(pairs) == len(set(sol.assignment))


# --- k-medoids -------------------------------------------------------------------------


def test_kmedoids_line():
    assert list(kmedoids_assign(np.array([0, 0, 0, 10, 10, 10.0]), 2)) == [1, 1, 1, 2, 2, 2]


def test_kmedoids_k_equals_n():
    x = np.random.default_rng(0).normal(size=(5, 2))
    lab = kmedoids_assign(x, 5)
    assert sorted(lab) == [1, 2, 3, 4, 5]
    dist = _pairwise(x)
    assert medoid_cost(dist, pam(dist, 5)) == 0.0


def test_kmedoids_degenerate_warns():
    with pytest.warns(UserWarning, match="distinct"):
        kmedoids_assign(np.zeros((4, 1)), 2)


def test_kmedoids_bad_k():
    with pytest.raises(SpectralError):
        kmedoids_assign(np.zeros((3, 1)), 4)


@pytest.mark.parametrize("seed", range(25))
def test_pam_matches_exhaustive(seed):
    x = np.random.default_rng(seed).normal(size=(6, 2))
    dist = _pairwise(x)
    assert medoid_cost(dist, pam(dist, 2)) == pytest.approx(medoid_cost(dist, exhaustive_medoids(x, 2)))


@given(seed=st.integers(0, 10**6), n=st.integers(4, 12), k=st.integers(2, 4))
def test_pam_is_swap_optimal(seed, n, k):
    x = np.random.default_rng(seed).normal(size=(n, 2))
    dist = _pairwise(x)
    med = pam(dist, k)
    cost = medoid_cost(dist, med)
    for slot in range(k):
        for c in range(n):
            if c not in med:
                trial = list(med)
                trial[slot] = c
                assert medoid_cost(dist, trial) >= cost - 1e-9


def test_labels_first_appearance():
    dist = _pairwise(np.array([5.0, 0.0, 5.1, 0.1]))
    assert list(labels_from_medoids(dist, [1, 0])) == [1, 2, 1, 2]


# --- 39-bus cases ------------------------------------------------------------------------


@pytest.mark.parametrize(
    "trips, groups",
    [([(16, 17), (1, 2)], CASE1_GROUPS), ([(13, 14), (16, 17)], CASE2_GROUPS)],
)
def test_case_constraints_honoured(case39, trips, groups):
    grid = case39.with_open_branches(trips)
    q = build_constraints(groups, grid)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        sol = partition_graph(build_graph(grid), q, 2)
    assert satisfies(sol.assignment, q)

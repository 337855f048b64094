import numpy as np
import pytest

from epiplan.belief import Belief
from epiplan.errors import ContractError, SolverError
from epiplan.solver import (
    AlphaVector,
    AlphaVectorSet,
    SolveSettings,
    belief_grid,
    evaluate_exact_tree,
    greedy_action,
    mdp_policy_iteration,
    mdp_value_iteration,
    pomdp_backup_exact,
    pomdp_backup_reduced,
    prune_dominated,
    solve_pomdp,
    solve_pomdp_infinite,
)


def row_stochastic(rng, n, k=None):
    m = rng.uniform(size=(n, k or n))
    return m / m.sum(axis=1, keepdims=True)


def random_instance(rng, n, n_actions, n_obs):
    T = [row_stochastic(rng, n) for _ in range(n_actions)]
    O = row_stochastic(rng, n, n_obs)
    cost = rng.uniform(0.0, 10.0, size=(n, n_actions))
    return T, O, cost


def tiger_instance(listen=2.5, correct=2.0, wrong=25.0, acc=0.85):
    """Two hidden states, listen/open actions, noisy listening."""
    T = [np.eye(2),                      # listen keeps the state
         np.full((2, 2), 0.5),           # opening resets
         np.full((2, 2), 0.5)]
    O = [np.array([[acc, 1 - acc], [1 - acc, acc]]),  # listening is informative
         np.full((2, 2), 0.5),
         np.full((2, 2), 0.5)]
    cost = np.array([[listen, correct, wrong],
                     [listen, wrong, correct]])
    return T, O, cost


class TestMdpValueIteration:
    def test_one_step_problem(self):
        rng = np.random.default_rng(0)
        T, _, cost = random_instance(rng, 6, 3, 2)
        sol = mdp_value_iteration(T, cost, SolveSettings(horizon=1))
        assert np.allclose(sol.values[0], cost.min(axis=1))
        assert np.array_equal(sol.policy[0], cost.argmin(axis=1))

    def test_zero_costs(self):
        rng = np.random.default_rng(1)
        T = [row_stochastic(rng, 5) for _ in range(2)]
        sol = mdp_value_iteration(T, np.zeros((5, 2)),
                                  SolveSettings(horizon=7, discount=1.0))
        assert np.all(sol.values == 0.0)

    def test_agrees_with_policy_iteration(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            T, _, cost = random_instance(rng, 20, 3, 2)
            settings = SolveSettings(discount=0.95, tolerance=1e-12,
                                     max_iterations=100_000)
            vi = mdp_value_iteration(T, cost, settings)
            pi = mdp_policy_iteration(T, cost, settings)
            assert np.max(np.abs(vi.values - pi.values)) <= 1e-6

    def test_infinite_requires_discount(self):
        rng = np.random.default_rng(3)
        T, _, cost = random_instance(rng, 4, 2, 2)
        with pytest.raises(ContractError):
            mdp_value_iteration(T, cost, SolveSettings(discount=1.0))

    def test_nonconvergence_raises(self):
        rng = np.random.default_rng(4)
        T, _, cost = random_instance(rng, 10, 2, 2)
        with pytest.raises(SolverError):
            mdp_value_iteration(T, cost,
                                SolveSettings(discount=0.999, tolerance=1e-14,
                                              max_iterations=3))


class TestMdpPolicyIteration:
    def test_deterministic_chain(self):
        # 0 -> 1 -> 2 -> 2 with one action; values are discounted cost sums
        n = 3
        t = np.zeros((n, n))
        t[0, 1] = t[1, 2] = t[2, 2] = 1.0
        cost = np.array([[2.0], [3.0], [1.0]])
        a = 0.9
        sol = mdp_policy_iteration([t], cost, SolveSettings(discount=a))
        v2 = 1.0 / (1 - a)
        v1 = 3.0 + a * v2
        v0 = 2.0 + a * v1
        assert np.allclose(sol.values, [v0, v1, v2], atol=1e-9)
        assert np.all(sol.policy == 0)

    def test_fixed_point_matches_value_iteration(self):
        rng = np.random.default_rng(5)
        T, _, cost = random_instance(rng, 20, 3, 2)
        settings = SolveSettings(discount=0.95, tolerance=1e-12,
                                 max_iterations=100_000)
        pi = mdp_policy_iteration(T, cost, settings)
        vi = mdp_value_iteration(T, cost, settings)
        assert np.max(np.abs(pi.values - vi.values)) <= 1e-6
        q = np.stack([cost[:, a] + 0.95 * T[a] @ pi.values
                      for a in range(3)], axis=1)
        assert np.array_equal(pi.policy, q.argmin(axis=1))


class TestBackupExact:
    def test_terminal_zero_base_case(self):
        rng = np.random.default_rng(6)
        T, O, cost = random_instance(rng, 4, 3, 2)
        terminal = AlphaVectorSet(stage=1, vectors=[AlphaVector(np.zeros(4), 0)])
        out = pomdp_backup_exact(terminal, T, O, cost, SolveSettings(horizon=1))
        assert len(out) <= 3
        # V_0(b) = min_a <l(:, a), b>
        for _ in range(20):
            b = Belief(rng.dirichlet(np.ones(4)))
            assert out.value(b) == pytest.approx((cost.T @ b.weights).min(), abs=1e-12)

    def test_pre_pruning_count(self):
        rng = np.random.default_rng(7)
        T, O, cost = random_instance(rng, 3, 2, 2)
        nxt = AlphaVectorSet(stage=2, vectors=[
            AlphaVector(rng.uniform(size=3), 0) for _ in range(4)])
        raw = pomdp_backup_exact(nxt, T, O, cost, SolveSettings(horizon=2),
                                 prune=False)
        assert len(raw) == 2 * 4 ** 2
        pruned = pomdp_backup_exact(nxt, T, O, cost, SolveSettings(horizon=2))
        assert len(pruned) <= len(raw)

    def test_matches_expectimax(self):
        rng = np.random.default_rng(8)
        T, O, cost = random_instance(rng, 2, 2, 2)
        settings = SolveSettings(horizon=3, discount=0.95)
        stages = solve_pomdp(T, O, cost, settings)
        for _ in range(200):
            b = Belief(rng.dirichlet(np.ones(2)))
            tree = evaluate_exact_tree(b, T, O, cost, 3, 0.95)
            assert stages[0].value(b) == pytest.approx(tree, abs=1e-8)

    def test_cross_sum_guard(self):
        rng = np.random.default_rng(9)
        T, O, cost = random_instance(rng, 3, 2, 4)
        nxt = AlphaVectorSet(stage=1, vectors=[
            AlphaVector(rng.uniform(size=3), 0) for _ in range(30)])
        with pytest.raises(SolverError):
            pomdp_backup_exact(nxt, T, O, cost,
                               SolveSettings(horizon=1, max_cross_products=1000))


class TestBackupReduced:
    def test_single_action_equals_exact(self):
        rng = np.random.default_rng(10)
        T, O, cost = random_instance(rng, 3, 1, 2)
        nxt = AlphaVectorSet(stage=1, vectors=[AlphaVector(rng.uniform(size=3), 0)])
        witnesses = belief_grid(3, 16)
        settings = SolveSettings(horizon=1, discount=0.9)
        red = pomdp_backup_reduced(nxt, T, O, cost, settings, witnesses)
        exact = pomdp_backup_exact(nxt, T, O, cost, settings)
        assert len(red) == 1
        for b in witnesses:
            assert red.value(b) == pytest.approx(exact.value(b), abs=1e-9)

    def test_never_below_exact(self):
        # every reduced vector is the exact value of one executable policy
        # tree, so the reduced value cannot undercut the optimum
        rng = np.random.default_rng(24)
        T, O, cost = random_instance(rng, 3, 2, 2)
        witnesses = belief_grid(3, 16)
        exact = solve_pomdp(T, O, cost, SolveSettings(horizon=3, discount=0.9))
        red = solve_pomdp(T, O, cost,
                          SolveSettings(horizon=3, discount=0.9,
                                        backup_mode="reduced"),
                          witnesses=witnesses)
        for b in witnesses:
            assert red[0].value(b) >= exact[0].value(b) - 1e-9

    def test_output_size_bounded_by_actions(self):
        rng = np.random.default_rng(11)
        T, O, cost = random_instance(rng, 4, 3, 2)
        nxt = AlphaVectorSet(stage=1, vectors=[
            AlphaVector(rng.uniform(size=4), a % 3) for a in range(6)])
        red = pomdp_backup_reduced(nxt, T, O, cost, SolveSettings(horizon=1),
                                   belief_grid(4, 20))
        assert len(red) <= 3

    def test_tiger_reduced_close_to_exact(self):
        T, O, cost = tiger_instance()
        witnesses = belief_grid(2, 33)
        exact_settings = SolveSettings(horizon=4, discount=1.0)
        reduced_settings = SolveSettings(horizon=4, discount=1.0,
                                         backup_mode="reduced")
        exact = solve_pomdp(T, O, cost, exact_settings)
        reduced = solve_pomdp(T, O, cost, reduced_settings, witnesses=witnesses)
        for b in witnesses:
            ve = exact[0].value(b)
            vr = reduced[0].value(b)
            assert vr >= ve - 1e-9
            assert abs(vr - ve) <= 0.05 * max(abs(ve), 1e-12)


class TestPrune:
    def test_duplicates_collapse(self):
        v = np.array([1.0, 2.0])
        s = AlphaVectorSet(stage=0, vectors=[AlphaVector(v, 0), AlphaVector(v.copy(), 1)])
        out = prune_dominated(s, belief_grid(2, 8))
        assert len(out) == 1

    def test_pointwise_dominated_removed(self):
        v = np.array([1.0, 2.0, 3.0])
        s = AlphaVectorSet(stage=0, vectors=[AlphaVector(v, 0),
                                             AlphaVector(v + 1.0, 1)])
        out = prune_dominated(s, belief_grid(3, 8))
        assert len(out) == 1
        assert out.vectors[0].action == 0

    def test_grid_values_unchanged(self):
        rng = np.random.default_rng(12)
        vectors = [AlphaVector(rng.uniform(0, 10, size=4), int(rng.integers(0, 3)))
                   for _ in range(50)]
        s = AlphaVectorSet(stage=0, vectors=vectors)
        grid = belief_grid(4, 500)
        out = prune_dominated(s, grid)
        assert len(out) < 50
        for b in grid:
            assert out.value(b) == s.value(b)


class TestGreedy:
    def test_single_vector(self):
        s = AlphaVectorSet(stage=0, vectors=[AlphaVector(np.array([1.0, 2.0]), 3)])
        a, v = greedy_action(Belief(np.array([0.5, 0.5])), s)
        assert a == 3
        assert v == pytest.approx(1.5)

    def test_point_mass(self):
        s = AlphaVectorSet(stage=0, vectors=[
            AlphaVector(np.array([5.0, 1.0]), 0),
            AlphaVector(np.array([2.0, 4.0]), 1)])
        a, v = greedy_action(Belief.point_mass(2, 0), s)
        assert (a, v) == (1, 2.0)
        a, v = greedy_action(Belief.point_mass(2, 1), s)
        assert (a, v) == (0, 1.0)

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(13)
        vectors = [AlphaVector(rng.uniform(size=5), int(rng.integers(0, 4)))
                   for _ in range(20)]
        s = AlphaVectorSet(stage=0, vectors=vectors)
        for _ in range(50):
            b = Belief(rng.dirichlet(np.ones(5)))
            a, v = greedy_action(b, s)
            dots = [vec.values @ b.weights for vec in s.vectors]
            assert v == pytest.approx(min(dots), abs=1e-12)
            best = min(d for d in dots)
            assert a == min(vec.action for vec, d in zip(s.vectors, dots)
                            if d == best)

    def test_tie_breaks_to_lowest_action(self):
        s = AlphaVectorSet(stage=0, vectors=[
            AlphaVector(np.array([1.0, 1.0]), 2),
            AlphaVector(np.array([1.0, 1.0]), 1)])
        a, _ = greedy_action(Belief.uniform(2), s)
        assert a == 1


class TestExactTree:
    def test_zero_horizon_returns_terminal(self):
        rng = np.random.default_rng(14)
        T, O, cost = random_instance(rng, 3, 2, 2)
        b = Belief(rng.dirichlet(np.ones(3)))
        assert evaluate_exact_tree(b, T, O, cost, 0, 1.0) == 0.0
        term = rng.uniform(size=3)
        assert evaluate_exact_tree(b, T, O, cost, 0, 1.0, terminal_values=term) == \
            pytest.approx(b.weights @ term, abs=1e-12)

    def test_one_step(self):
        rng = np.random.default_rng(15)
        T, O, cost = random_instance(rng, 4, 3, 2)
        b = Belief(rng.dirichlet(np.ones(4)))
        assert evaluate_exact_tree(b, T, O, cost, 1, 1.0) == \
            pytest.approx((cost.T @ b.weights).min(), abs=1e-12)

    def test_size_guard(self):
        rng = np.random.default_rng(16)
        T, O, cost = random_instance(rng, 3, 3, 4)
        with pytest.raises(SolverError):
            evaluate_exact_tree(Belief.uniform(3), T, O, cost, 20, 0.9)


class TestSolvePomdp:
    def test_horizon_one_is_single_backup(self):
        rng = np.random.default_rng(17)
        T, O, cost = random_instance(rng, 3, 2, 2)
        stages = solve_pomdp(T, O, cost, SolveSettings(horizon=1))
        assert len(stages) == 1
        assert stages[0].stage == 0

    def test_cost_scaling_invariance(self):
        rng = np.random.default_rng(18)
        T, O, cost = random_instance(rng, 3, 3, 2)
        lam = 3.7
        settings = SolveSettings(horizon=3, discount=0.9)
        stages = solve_pomdp(T, O, cost, settings)
        scaled = solve_pomdp(T, O, lam * cost, settings)
        for s, sc in zip(stages, scaled):
            assert np.allclose(lam * s.matrix(), sc.matrix(), rtol=1e-12)
        for _ in range(30):
            b = Belief(rng.dirichlet(np.ones(3)))
            assert greedy_action(b, stages[0])[0] == greedy_action(b, scaled[0])[0]

    def test_concavity_on_sampled_pairs(self):
        rng = np.random.default_rng(19)
        T, O, cost = random_instance(rng, 3, 2, 2)
        stages = solve_pomdp(T, O, cost, SolveSettings(horizon=3, discount=0.9))
        for _ in range(50):
            w1 = rng.dirichlet(np.ones(3))
            w2 = rng.dirichlet(np.ones(3))
            lam = rng.uniform()
            mix = Belief(lam * w1 + (1 - lam) * w2)
            lhs = stages[0].value(mix)
            rhs = lam * stages[0].value(Belief(w1)) + \
                (1 - lam) * stages[0].value(Belief(w2))
            assert lhs >= rhs - 1e-12

    def test_horizon_monotonicity(self):
        rng = np.random.default_rng(20)
        T, O, cost = random_instance(rng, 3, 2, 2)  # costs nonnegative
        stages = solve_pomdp(T, O, cost, SolveSettings(horizon=4, discount=1.0))
        for _ in range(30):
            b = Belief(rng.dirichlet(np.ones(3)))
            vals = [s.value(b) for s in stages]  # K, K-1, ... stages to go
            assert all(a >= b2 - 1e-10 for a, b2 in zip(vals, vals[1:]))

    def test_perfect_observation_matches_mdp(self):
        rng = np.random.default_rng(21)
        T, _, cost = random_instance(rng, 4, 2, 2)
        O = np.eye(4)  # observing the state exactly
        K = 3
        settings = SolveSettings(horizon=K, discount=0.9)
        stages = solve_pomdp(T, O, cost, settings)
        mdp = mdp_value_iteration(T, cost, settings)
        for k in range(K):
            for s in range(4):
                assert stages[k].value(Belief.point_mass(4, s)) == \
                    pytest.approx(mdp.values[k, s], abs=1e-8)

    def test_action_superset_dominance(self):
        rng = np.random.default_rng(22)
        T, O, cost = random_instance(rng, 3, 3, 2)
        settings = SolveSettings(horizon=3, discount=0.9)
        full = solve_pomdp(T, O, cost, settings)
        sub = solve_pomdp(T[:2], O, cost[:, :2], settings)
        for _ in range(40):
            b = Belief(rng.dirichlet(np.ones(3)))
            assert full[0].value(b) <= sub[0].value(b) + 1e-10

    def test_infinite_horizon_stationary(self):
        T, O, cost = tiger_instance()
        settings = SolveSettings(discount=0.7, tolerance=1e-4,
                                 max_iterations=100, prune_grid_size=64)
        stationary = solve_pomdp_infinite(T, O, cost, settings)
        assert stationary.stage == -1
        # one more backup changes witness values by at most the tolerance scale
        again = pomdp_backup_exact(stationary, T, O, cost, settings)
        for b in belief_grid(2, 16):
            assert again.value(b) == pytest.approx(stationary.value(b), abs=1e-3)


class TestBeliefGrid:
    def test_deterministic(self):
        a = belief_grid(5, 64)
        b = belief_grid(5, 64)
        assert len(a) == 64
        for x, y in zip(a, b):
            assert np.array_equal(x.weights, y.weights)

    def test_contains_point_masses(self):
        grid = belief_grid(3, 10)
        mats = np.vstack([g.weights for g in grid[:3]])
        assert np.allclose(mats, np.eye(3))

import numpy as np
import pytest

from qpolicy.emulator import AE_ORACLE, SHOT_SAMPLING, EstimatorConfig, NoiseModel
from qpolicy.engine import (
    IndexMap,
    QPolicyConfig,
    decode_qtable,
    encode_qtable,
    estimate_lambda,
    policy_improve,
    quantum_bellman_update,
    run_qpolicy,
    update_baseline,
    variance_reduce,
    verify_convergence_bound,
    verify_stability,
)
from qpolicy.mdp import (
    Policy,
    bellman_backup,
    exact_policy_evaluation,
    policy_values,
    value_iteration,
)

from oracles import absorbing_single, enumerate_optimal_values, linear_solve_q, two_state_two_action


def exact_cfg(**kw):
    return QPolicyConfig.exact(**kw)


class TestIndexMap:
    def test_bijection(self):
        imap = IndexMap(5, 3)
        seen = set()
        for s in range(5):
            for a in range(3):
                idx = imap.flat(s, a)
                assert imap.pair(idx) == (s, a)
                seen.add(idx)
        assert seen == set(range(15))

    def test_out_of_range(self):
        imap = IndexMap(2, 2)
        with pytest.raises(ValueError):
            imap.flat(2, 0)
        with pytest.raises(ValueError):
            imap.pair(4)


class TestEncodeQTable:
    def test_grid_table_needs_six_qubits(self, grid4):
        imap = IndexMap(16, 4)
        state, scale, offset = encode_qtable(np.arange(64.0).reshape(16, 4), imap)
        assert state.num_qubits == 6

    def test_constant_table_is_degenerate(self):
        imap = IndexMap(2, 2)
        state, scale, offset = encode_qtable(np.full((2, 2), 3.5), imap)
        assert state is None
        assert scale == 0.0
        assert offset == 3.5
        decoded = decode_qtable(state, scale, offset, imap)
        assert np.array_equal(decoded, np.full((2, 2), 3.5))

    def test_roundtrip_random_table(self):
        rng = np.random.default_rng(1)
        imap = IndexMap(5, 3)  # 15 entries padded to 16
        q = rng.normal(size=(5, 3))
        state, scale, offset = encode_qtable(q, imap)
        back = decode_qtable(state, scale, offset, imap)
        assert np.abs(back - q).max() <= 1e-10

    def test_rejects_nonfinite(self):
        imap = IndexMap(2, 2)
        with pytest.raises(ValueError):
            encode_qtable(np.array([[np.inf, 0.0], [0.0, 0.0]]), imap)


class TestQuantumBellmanUpdate:
    def test_hard_bound_in_ae_mode(self, grid4):
        rng = np.random.default_rng(0)
        policy = Policy.uniform(16, 4)
        for trial in range(20):
            q = rng.normal(size=(16, 4))
            eps = float(rng.choice([0.3, 0.1, 0.02]))
            cfg = QPolicyConfig(
                epsilon=eps,
                estimator=EstimatorConfig(mode=AE_ORACLE, epsilon=eps, seed=trial),
                seed=trial,
            )
            q_tilde, _ = quantum_bellman_update(grid4, q, policy, cfg)
            targets = bellman_backup(grid4, q, policy)
            span = targets.max() - targets.min()
            assert np.abs(q_tilde - targets).max() <= eps * span + 1e-12

    def test_exact_mode_matches_backup(self, grid4):
        policy = Policy.uniform(16, 4)
        q = np.linspace(0, 1, 64).reshape(16, 4)
        q_tilde, _ = quantum_bellman_update(grid4, q, policy, exact_cfg(seed=3))
        assert np.abs(q_tilde - bellman_backup(grid4, q, policy)).max() <= 1e-9

    def test_query_accounting(self, grid4):
        policy = Policy.uniform(16, 4)
        q = np.zeros((16, 4))
        cfg = QPolicyConfig(
            epsilon=0.01,
            estimator=EstimatorConfig(mode=AE_ORACLE, epsilon=0.01, c_ae=1.0),
            skip_terminal_rows=False,
        )
        _, queries = quantum_bellman_update(grid4, q, policy, cfg)
        assert queries == 64 * 100
        cfg_skip = QPolicyConfig(
            epsilon=0.01,
            estimator=EstimatorConfig(mode=AE_ORACLE, epsilon=0.01, c_ae=1.0),
            skip_terminal_rows=True,
        )
        _, queries_skip = quantum_bellman_update(grid4, q, policy, cfg_skip)
        assert queries_skip == 60 * 100  # 4 goal-state pairs are pinned at zero

    def test_constant_targets_cost_nothing(self):
        mdp = absorbing_single(reward=0.0, gamma=0.5)
        q_tilde, queries = quantum_bellman_update(
            mdp, np.zeros((1, 1)), Policy.deterministic([0]), exact_cfg())
        assert queries == 0
        assert np.array_equal(q_tilde, np.zeros((1, 1)))


class TestVarianceReduce:
    def test_beta_zero_bitwise(self):
        rng = np.random.default_rng(2)
        q = rng.normal(size=(4, 3))
        f = rng.normal(size=(4, 3))
        out = variance_reduce(q, f, 0.0)
        assert np.array_equal(out, q)
        assert out is not q

    def test_constant_baseline_vanishes(self):
        q = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = variance_reduce(q, np.full((2, 2), 0.5), 0.8)
        assert np.array_equal(out, q)  # 0.5 sums exactly, so the correction is 0
        out2 = variance_reduce(q, np.full((2, 2), 0.1), 0.8)
        assert np.abs(out2 - q).max() <= 1e-15

    def test_correlated_baseline_halves_variance(self):
        # noise and baseline jointly Gaussian with correlation 0.8
        rng = np.random.default_rng(5)
        rho, trials, cells = 0.8, 1000, 64
        truth = rng.normal(size=cells)
        raw_errors, cv_errors = [], []
        for _ in range(trials):
            z1 = rng.normal(size=cells)
            z2 = rng.normal(size=cells)
            noise = z1
            f = rho * z1 + np.sqrt(1 - rho ** 2) * z2
            beta = -rho  # analytic optimum for unit variances
            q_tilde = truth + noise
            q_hat = variance_reduce(q_tilde.reshape(8, 8), f.reshape(8, 8), beta)
            raw_errors.append(noise)
            cv_errors.append(q_hat.reshape(-1) - truth)
        var_raw = np.var(np.concatenate(raw_errors))
        var_cv = np.var(np.concatenate(cv_errors))
        assert var_cv <= 0.5 * var_raw

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            variance_reduce(np.zeros((2, 2)), np.zeros((3, 2)), 0.5)


class TestEstimateLambda:
    def test_independent_samples_near_zero(self):
        rng = np.random.default_rng(8)
        ae = rng.normal(size=10_000)
        cv = rng.normal(size=10_000)
        assert abs(estimate_lambda(ae, cv)) <= 0.1

    def test_perfect_control_variate(self):
        rng = np.random.default_rng(9)
        ae = rng.normal(size=500)
        lam = estimate_lambda(ae, ae)
        assert lam == pytest.approx(-1.0, abs=1e-12)
        residual = ae + lam * (ae - ae.mean())
        assert np.var(residual) <= 1e-20

    def test_gaussian_closed_form(self):
        rng = np.random.default_rng(10)
        n, rho, s_ae, s_cv = 100_000, 0.6, 2.0, 1.0
        z1 = rng.normal(size=n)
        z2 = rng.normal(size=n)
        ae = s_ae * z1
        cv = s_cv * (rho * z1 + np.sqrt(1 - rho ** 2) * z2)
        lam = estimate_lambda(ae, cv)
        assert lam == pytest.approx(-rho * s_ae / s_cv, abs=0.1)  # -1.2

    def test_errors(self):
        with pytest.raises(ValueError):
            estimate_lambda([1.0, 2.0], [3.0, 3.0])  # constant
        with pytest.raises(ValueError):
            estimate_lambda([1.0], [2.0])  # too short
        with pytest.raises(ValueError):
            estimate_lambda([1.0, 2.0, 3.0], [1.0, 2.0])  # length mismatch


class TestUpdateBaseline:
    def test_eta_one_replaces(self):
        f = np.zeros((2, 2))
        q = np.array([[1.0, -2.0], [0.25, 4.0]])
        assert np.array_equal(update_baseline(f, q, 1.0), q)

    def test_eta_zero_keeps(self):
        f = np.array([[1.0, 2.0]])
        assert np.array_equal(update_baseline(f, np.array([[9.0, 9.0]]), 0.0), f)

    def test_geometric_convergence_exact(self):
        # halving is exact in binary, so the closed form holds bitwise
        f = np.array([[1.0, -3.0], [0.5, 8.0]])
        target = np.zeros((2, 2))
        for t in range(1, 30):
            f = update_baseline(f, target, 0.5)
            expected = np.array([[1.0, -3.0], [0.5, 8.0]]) *  0.5 ** t
            assert np.array_equal(f, expected)

    def test_geometric_rate_generic(self):
        eta = 0.3
        f0 = np.array([[2.0, -1.0]])
        target = np.array([[0.7, 0.7]])
        f = f0.copy()
        for t in range(1, 40):
            f = update_baseline(f, target, eta)
            expected_gap = (1 - eta) ** t * np.abs(f0 - target).max()
            assert np.abs(f - target).max() == pytest.approx(expected_gap, rel=1e-9)

    def test_rejects_bad_eta(self):
        with pytest.raises(ValueError):
            update_baseline(np.zeros((1, 1)), np.zeros((1, 1)), 1.5)


class TestPolicyImprove:
    def test_unique_argmax(self):
        assert policy_improve(np.array([[0.0, 5.0, 3.0, 1.0]])).actions[0] == 1

    def test_tie_break(self):
        assert policy_improve(np.array([[2.0, 2.0, 0.0, 2.0]])).actions[0] == 0

    def test_improvement_theorem(self, grid4):
        policy = Policy.deterministic(np.zeros(16, dtype=int))
        q = exact_policy_evaluation(grid4, policy, 1e-9)
        improved = policy_improve(q)
        v_old = policy_values(grid4, policy, q)
        v_new = policy_values(grid4, improved,
                              exact_policy_evaluation(grid4, improved, 1e-9))
        assert np.all(v_new >= v_old - 1e-9)

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            policy_improve(np.array([[np.nan, 1.0]]))


class TestRunQPolicy:
    def test_exact_mode_matches_value_iteration(self, grid4):
        _, vi_policy = value_iteration(grid4, 1e-10)
        cfg = exact_cfg(seed=0, max_iterations=200, convergence_tol=1e-10)
        _, policy = run_qpolicy(grid4, cfg)
        non_terminal = [s for s in range(16) if s not in grid4.terminal_states]
        assert np.array_equal(policy.actions[non_terminal],
                              vi_policy.actions[non_terminal])

    def test_exact_mode_matches_value_iteration_on_lake(self, frozen8):
        # argmax equivalence on a 64-state environment
        _, vi_policy = value_iteration(frozen8, 1e-10)
        cfg = exact_cfg(seed=5, max_iterations=400, convergence_tol=1e-10)
        _, policy = run_qpolicy(frozen8, cfg)
        live = [s for s in range(64) if s not in frozen8.terminal_states]
        assert np.array_equal(policy.actions[live], vi_policy.actions[live])

    def test_exact_mode_matches_value_iteration_at_100_states(self):
        from qpolicy.mdp import build_gridworld
        big = build_gridworld(10, 10, 0.2, (9, 9), 0.95)
        _, vi_policy = value_iteration(big, 1e-10)
        cfg = exact_cfg(seed=2, max_iterations=600, convergence_tol=1e-10)
        _, policy = run_qpolicy(big, cfg)
        live = [s for s in range(100) if s not in big.terminal_states]
        assert np.array_equal(policy.actions[live], vi_policy.actions[live])

    def test_noisy_mode_error_trend(self, grid4):
        # per-step monotonicity does not hold under stochastic readout; the
        # late-run mean must still sit below the early-run mean
        cfg = QPolicyConfig(
            epsilon=0.05,
            estimator=EstimatorConfig(mode=SHOT_SAMPLING, shots=512, seed=6),
            seed=6, max_iterations=40, convergence_tol=1e-12,
        )
        records, _ = run_qpolicy(grid4, cfg)
        deltas = [r.bellman_error_max for r in records]
        assert np.mean(deltas[-10:]) < np.mean(deltas[:10])

    def test_exact_mode_bellman_error_monotone(self, grid4):
        # the convergence check halts the run before readout noise (at the
        # 1e-12 oracle precision) can dominate the shrinking signal
        cfg = exact_cfg(seed=1, max_iterations=60, convergence_tol=1e-8)
        records, _ = run_qpolicy(grid4, cfg)
        deltas = [r.bellman_error_max for r in records]
        for a, b in zip(deltas, deltas[1:]):
            assert b <= a + 1e-12
        for t, d in enumerate(deltas):
            assert d <= grid4.gamma ** t * deltas[0] * 1.01

    def test_single_iteration_boundary(self, grid4):
        cfg = exact_cfg(seed=0, max_iterations=1)
        records, _ = run_qpolicy(grid4, cfg)
        assert len(records) == 1
        assert records[0].queries_cumulative == records[0].queries_iteration
        with pytest.raises(ValueError):
            QPolicyConfig(max_iterations=0)

    def test_query_accounting_additive(self, grid4):
        cfg = QPolicyConfig(
            epsilon=0.1,
            estimator=EstimatorConfig(mode=SHOT_SAMPLING, shots=128, seed=4),
            seed=4, max_iterations=12, convergence_tol=1e-12,
        )
        records, _ = run_qpolicy(grid4, cfg)
        total = 0
        for rec in records:
            total += rec.queries_iteration
            assert rec.queries_cumulative == total

    def test_deterministic_given_seed(self, grid4):
        cfg = QPolicyConfig(
            epsilon=0.05,
            estimator=EstimatorConfig(mode=SHOT_SAMPLING, shots=256, seed=7),
            seed=7, max_iterations=10, convergence_tol=1e-12,
        )
        rec_a, pol_a = run_qpolicy(grid4, cfg)
        rec_b, pol_b = run_qpolicy(grid4, cfg)
        assert np.array_equal(pol_a.actions, pol_b.actions)
        for a, b in zip(rec_a, rec_b):
            assert a.bellman_error_max == b.bellman_error_max
            assert a.q_variance == b.q_variance
            assert np.array_equal(a.policy_actions, b.policy_actions)

    def test_zero_noise_identical_to_noiseless(self, grid4):
        base = QPolicyConfig(
            epsilon=0.05,
            estimator=EstimatorConfig(mode=SHOT_SAMPLING, shots=128, seed=2),
            seed=2, max_iterations=8, convergence_tol=1e-12,
        )
        noisy = QPolicyConfig(
            epsilon=0.05,
            estimator=EstimatorConfig(mode=SHOT_SAMPLING, shots=128,
                                      noise=NoiseModel(0.0), seed=2),
            seed=2, max_iterations=8, convergence_tol=1e-12,
        )
        rec_a, _ = run_qpolicy(grid4, base)
        rec_b, _ = run_qpolicy(grid4, noisy)
        for a, b in zip(rec_a, rec_b):
            assert a.bellman_error_max == b.bellman_error_max
            assert a.bellman_error_mean == b.bellman_error_mean

    def test_convergence_stop(self, grid4):
        cfg = exact_cfg(seed=0, max_iterations=500, convergence_tol=1e-6)
        records, _ = run_qpolicy(grid4, cfg)
        assert len(records) < 500

    def test_first_iteration_matches_standalone_update(self, grid4):
        seed = 13
        cfg = QPolicyConfig(
            epsilon=0.05,
            estimator=EstimatorConfig(mode=SHOT_SAMPLING, shots=512, seed=seed),
            seed=seed, max_iterations=1,
        )
        records, _ = run_qpolicy(grid4, cfg)
        q0 = np.zeros((16, 4))
        q_tilde, _ = quantum_bellman_update(grid4, q0, policy_improve(q0), cfg)
        assert records[0].bellman_error_max == pytest.approx(
            np.abs(q_tilde.max(axis=1)).max(), abs=0)

    def test_auto_lambda_smoke(self, grid4):
        cfg = QPolicyConfig(
            epsilon=0.05,
            estimator=EstimatorConfig(mode=SHOT_SAMPLING, shots=512, seed=3),
            seed=3, lambda_mode="auto_lambda", eta=0.3, max_iterations=15,
            convergence_tol=1e-12,
        )
        records, policy = run_qpolicy(grid4, cfg)
        assert len(records) == 15
        assert np.isfinite([r.bellman_error_max for r in records]).all()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            QPolicyConfig(eta=1.5)
        with pytest.raises(ValueError):
            QPolicyConfig(convergence_tol=0.0)
        with pytest.raises(ValueError):
            QPolicyConfig(lambda_mode="other")
        with pytest.raises(ValueError):
            QPolicyConfig(epsilon=-1.0)


class TestVerifyStability:
    def test_zero_perturbation_on_optimal_policy(self, grid4):
        _, policy = value_iteration(grid4, 1e-10)
        report = verify_stability(grid4, policy, 0.0, trials=5, seed=0)
        assert report.violations == 0
        assert report.max_value_change <= 1e-9

    def test_grid_perturbations_within_bound(self, grid4):
        _, policy = value_iteration(grid4, 1e-10)
        report = verify_stability(grid4, policy, 0.05, trials=100, seed=1)
        assert report.bound == pytest.approx(2 * 0.95 * 0.05 / 0.05)
        assert report.violations == 0

    def test_single_state_closed_form(self):
        mdp = absorbing_single(reward=1.0, gamma=0.5)
        report = verify_stability(mdp, Policy.deterministic([0]), 0.1, trials=10, seed=2)
        assert report.violations == 0
        assert report.max_value_change == 0.0  # only one policy exists

    def test_rejects_negative_epsilon(self, grid4):
        with pytest.raises(ValueError):
            verify_stability(grid4, Policy.uniform(16, 4), -0.1)


class TestVerifyConvergenceBound:
    def test_zero_error_reaches_optimal(self, grid4):
        report = verify_convergence_bound(grid4, 0.0, seed=0)
        assert report.gap <= 1e-8
        assert report.holds

    def test_grid_bound_value(self, grid4):
        report = verify_convergence_bound(grid4, 0.01, seed=0)
        assert report.iterations == int(np.ceil(np.log(100.0) / 0.05))  # 93
        assert report.bound == pytest.approx(7.6)
        assert report.holds
        assert report.gap <= report.bound

    def test_two_state_with_enumeration_oracle(self):
        mdp = two_state_two_action(gamma=0.5)
        report = verify_convergence_bound(mdp, 0.1, seed=3)
        assert report.bound == pytest.approx(0.4)
        # independent optimal values from exhaustive policy enumeration
        best = enumerate_optimal_values(mdp)
        q_star, _ = value_iteration(mdp, 1e-10)
        assert np.abs(q_star.max(axis=1) - best).max() <= 1e-8
        assert report.holds
        # the small-gamma variant bound is finite only below 1/3
        assert report.bound_small_gamma == np.inf

    def test_small_gamma_variant_reported(self):
        mdp = absorbing_single(reward=1.0, gamma=0.25)
        report = verify_convergence_bound(mdp, 0.1, seed=0)
        assert report.bound_small_gamma == pytest.approx(2 * 0.1 / 0.25)

import numpy as np
import pytest

from config import BanditConfig, ReasoningConfig
from environments import (
    DeepSeaTreasure,
    EvaluationSet,
    evaluate,
    make_evaluation_set,
    mo_bandit,
    synthetic_reasoning_env,
    true_pareto_front,
)
from exceptions import RejectedInput
from pareto_core import pareto_filter, unsupported_points, weakly_dominates
from rl_core import Policy, sample_trajectory

DST_FRONT = {(1.0, -1.0), (2.0, -3.0), (3.0, -5.0), (5.0, -7.0), (8.0, -8.0), (16.0, -9.0)}


class TestDeepSeaTreasure:
    def test_nearest_treasure_is_the_fastest_endpoint(self, dst):
        eval_set = make_evaluation_set(dst, 3, seed=0, greedy=True)
        assert evaluate(dst.greedy_nearest_policy(), eval_set) == (1.0, -1.0)

    def test_true_front(self, dst):
        assert true_pareto_front(dst) == DST_FRONT

    def test_front_is_not_convex(self, dst):
        concave = unsupported_points(true_pareto_front(dst))
        assert (2.0, -3.0) in concave
        assert (16.0, -9.0) not in concave

    def test_rollouts_are_covered_by_the_front(self, dst):
        rng = np.random.default_rng(0)
        base = dst.make_policy()
        front = true_pareto_front(dst)
        for i in range(200):
            policy = base.with_theta(rng.normal(0, 2, size=base.dim))
            metrics = dst.episode_metrics(sample_trajectory(policy, dst, i))
            assert any(weakly_dominates(p, metrics) for p in front)

    def test_rewards_are_bounded(self, dst):
        rng = np.random.default_rng(1)
        for _ in range(300):
            state = dst.reset(rng)
            for _ in range(dst.horizon):
                state, reward, done = dst.step(state, int(rng.integers(4)), rng)
                assert np.all((reward >= 0) & (reward <= dst.r_max))
                if done:
                    break
            assert done

    def test_time_scale_shrinks_only_the_time_reward(self):
        env = DeepSeaTreasure([1, 2, 3, 4, 4, 4], [1, 2, 3, 5, 8, 16], horizon=20, time_scale=0.05)
        _, reward, done = env.step(env.reset(None), 2, None)  # down onto the first treasure
        assert done and reward.tolist() == pytest.approx([1 / 16, 0.05 * 19 / 20])
        eval_set = make_evaluation_set(env, 1, seed=0, greedy=True)
        assert evaluate(env.greedy_nearest_policy(), eval_set) == (1.0, -1.0)

    @pytest.mark.parametrize("w", [1 / 3, 0.5, 2 / 3])
    def test_scaled_time_makes_deeper_treasures_pay_more(self, w):
        env = DeepSeaTreasure([1, 2, 3, 4, 4, 4], [1, 2, 3, 5, 8, 16], horizon=20, time_scale=0.05)
        paid = [
            w * t / env.max_value + (1 - w) * env.time_scale * (env.horizon - d) / env.horizon
            for t, d in zip(env.treasures, env.shortest_paths())
        ]
        assert paid == sorted(paid) and len(set(paid)) == len(paid)

    @pytest.mark.parametrize("scale", [0.0, -0.5, 1.5])
    def test_time_scale_range(self, scale):
        with pytest.raises(RejectedInput, match="time_scale"):
            DeepSeaTreasure([1, 2], [1, 2], horizon=5, time_scale=scale)

    def test_rock_and_walls_block(self, dst):
        start = dst._cell(0, 0)
        assert dst.move(start, 0) == start  # up, off the grid
        assert dst.move(start, 3) == start  # left, off the grid
        below_first = dst._cell(2, 0)
        assert dst.is_rock(2, 0) and dst.move(dst._cell(1, 1), 3) == dst._cell(1, 0)
        assert below_first not in {dst.move(dst._cell(2, 1), a) for a in range(4)}

    def test_reference_below_every_outcome(self, dst):
        ref = dst.reference_point()
        assert all(weakly_dominates(p, ref) and p != ref for p in dst.achievable_outcomes())

    @pytest.mark.parametrize(
        "depths, treasures",
        [([], []), ([2, 1], [1, 2]), ([1, 2], [2, 1]), ([1, 2], [1, 2, 3]), ([0, 1], [1, 2])],
    )
    def test_malformed_grid(self, depths, treasures):
        with pytest.raises(RejectedInput):
            DeepSeaTreasure(depths, treasures, horizon=10)


class TestSyntheticReasoning:
    def test_correct_short_structured_template(self, reasoning):
        # template 2: correct for context 0, 300 tokens, explicit steps
        _, reward, done = reasoning.step(0, 2, np.random.default_rng(0))
        assert reward.tolist() == [1.0, 1.0, 1.0] and done

    def test_cold_start_uses_initial_average(self):
        env = synthetic_reasoning_env(ReasoningConfig(kind="synthetic_reasoning", initial_average=100))
        assert env.running_average == 100.0
        _, reward, _ = env.step(0, 3, np.random.default_rng(0))
        assert reward[1] == 0.0

    def test_default_cold_start_is_mean_length(self, reasoning):
        assert reasoning.running_average == pytest.approx(2600 / 6)

    def test_average_follows_training_rollouts(self, reasoning):
        policy = Policy.tabular(3, 6, np.tile([20.0, 0, 0, 0, 0, 0], 3))
        trajs = [sample_trajectory(policy, reasoning, i, greedy=True) for i in range(4)]
        reasoning.update_statistics(trajs)
        assert reasoning.running_average == 900.0

    def test_evaluation_leaves_statistics_alone(self, reasoning):
        evaluate(reasoning.make_policy(), make_evaluation_set(reasoning, 12, seed=0))
        assert reasoning.running_average == pytest.approx(2600 / 6)

    def test_objectives_conflict_within_a_context(self, reasoning):
        for context in range(reasoning.n_contexts):
            options = [tuple(reasoning.template_metrics(context, a)) for a in range(reasoning.n_actions)]
            assert len(pareto_filter(options)) >= 2

    def test_front_over_deterministic_policies(self, reasoning):
        front = true_pareto_front(reasoning)
        assert (1.0, -300 / 900, 1.0) not in front  # template 2 fails context 2
        assert len(front) >= 2

    def test_length_is_reported_raw(self, reasoning):
        assert reasoning.objectives[1].raw(-600 / 900) == pytest.approx(600.0)

    def test_empty_table(self):
        with pytest.raises(RejectedInput):
            synthetic_reasoning_env(
                ReasoningConfig.model_construct(
                    kind="synthetic_reasoning", template_correct=[], template_lengths=[],
                    template_steps=[], initial_average=None, reference=None,
                )
            )


class TestBandit:
    def test_front_keeps_the_compromise_arm(self, bandit):
        assert true_pareto_front(bandit) == {(1.0, 0.0), (0.0, 1.0), (0.2, 0.2)}

    def test_single_arm(self):
        env = mo_bandit(BanditConfig(kind="mo_bandit", arms=[[0.3, 0.4]]))
        assert true_pareto_front(env) == {(0.3, 0.4)}

    def test_uniform_policy_evaluates_to_the_mean(self, two_arm_bandit):
        value = evaluate(two_arm_bandit.make_policy(), make_evaluation_set(two_arm_bandit, 4000, seed=2))
        assert value == pytest.approx((0.5, 0.5), abs=0.05)

    def test_bernoulli_means(self):
        env = mo_bandit(BanditConfig(kind="mo_bandit", arms=[[0.3, 0.8]], bernoulli=True))
        rng = np.random.default_rng(3)
        n = 100_000
        total = np.zeros(2)
        for _ in range(n):
            total += env.step(0, 0, rng)[1]
        sigma = np.sqrt(np.array([0.3 * 0.7, 0.8 * 0.2]) / n)
        assert np.all(np.abs(total / n - [0.3, 0.8]) <= 4 * sigma)

    def test_empty_arms(self):
        with pytest.raises(RejectedInput):
            mo_bandit(BanditConfig.model_construct(kind="mo_bandit", arms=[], bernoulli=False, reference=None))

    def test_configured_reference(self):
        env = mo_bandit(BanditConfig(kind="mo_bandit", arms=[[1, 0], [0, 1]], reference=[-1, -1]))
        assert env.reference_point() == (-1.0, -1.0)


class TestEvaluation:
    def test_repeatable(self, dst):
        policy = dst.make_policy()
        eval_set = make_evaluation_set(dst, 10, seed=4)
        assert evaluate(policy, eval_set) == evaluate(policy, eval_set)

    def test_empty_set(self, dst):
        with pytest.raises(RejectedInput, match="empty"):
            evaluate(dst.make_policy(), EvaluationSet(env=dst, episodes=()))

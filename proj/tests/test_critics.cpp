#include <gtest/gtest.h>

#include <cmath>

#include "prpl/critics/critics.hpp"
#include "prpl/envs/generate.hpp"

using namespace prpl;

namespace {

/// One-step episodes from (0, 0) ending in (1, 1); reward 1 on every other episode.
DatasetFile coin_dataset(std::size_t n) {
    DatasetFile ds;
    ds.obs_dim = 2;
    ds.act_dim = 2;
    ds.env = "maze";
    for (std::size_t e = 0; e < n; ++e) {
        Episode ep;
        ep.obs = {0.0f, 0.0f, 1.0f, 1.0f};
        ep.act = {0.0f, 0.0f};
        ep.rew = {e % 2 == 0 ? 1.0f : 0.0f};
        ep.terminal = true;
        ds.episodes.push_back(ep);
    }
    ds.stats = compute_stats(ds.episodes, 2);
    return ds;
}

CriticTrainConfig small_config(std::size_t steps) {
    CriticTrainConfig cfg;
    cfg.steps = steps;
    cfg.batch = 128;
    cfg.hidden = 32;
    cfg.seed = 3;
    return cfg;
}

}  // namespace

TEST(Properties, RewardAndValue) {
    const std::vector<float> r{1.0f, 2.0f, 3.0f};
    EXPECT_DOUBLE_EQ(reward_property(r), 6.0);
    EXPECT_DOUBLE_EQ(value_property(r, 0.5, 8.0), 1.0 + 1.0 + 0.75 + 1.0);
    EXPECT_DOUBLE_EQ(value_property({}, 0.9, 2.0), 2.0);
}

TEST(Properties, ReturnsToGo) {
    Episode ep;
    ep.obs.assign(4 * 2, 0.0f);
    ep.rew = {1.0f, 0.0f, 2.0f};
    const auto g = returns_to_go(ep, 0.5);
    ASSERT_EQ(g.size(), 4u);
    EXPECT_DOUBLE_EQ(g[3], 0.0);
    EXPECT_DOUBLE_EQ(g[2], 2.0);
    EXPECT_DOUBLE_EQ(g[1], 1.0);
    EXPECT_DOUBLE_EQ(g[0], 1.5);
}

TEST(Properties, CriticKindNames) {
    EXPECT_EQ(critic_kind_from_string("value"), CriticKind::value);
    EXPECT_EQ(critic_kind_from_string("reward"), CriticKind::reward);
    EXPECT_THROW(critic_kind_from_string("q"), Error);
}

TEST(ValueCritic, MedianExpectileIsMeanReturn) {
    const DatasetFile ds = coin_dataset(400);
    const ValueCritic v = train_value(ds, 0.99, 0.5, small_config(3000));
    EXPECT_NEAR(v(std::vector<float>{0.0f, 0.0f}), 0.5, 0.03);
    EXPECT_NEAR(v(std::vector<float>{1.0f, 1.0f}), 0.0, 0.03);
}

TEST(ValueCritic, UpperExpectile) {
    // tau p (1 - v) = (1 - tau)(1 - p) v with p = 1/2 gives v = tau
    const DatasetFile ds = coin_dataset(400);
    const ValueCritic v = train_value(ds, 0.99, 0.9, small_config(3000));
    EXPECT_NEAR(v(std::vector<float>{0.0f, 0.0f}), 0.9, 0.03);
}

TEST(ValueCritic, RejectsBadArguments) {
    const DatasetFile ds = coin_dataset(4);
    EXPECT_THROW(train_value(ds, 0.0, 0.5, small_config(1)), Error);
    EXPECT_THROW(train_value(ds, 0.99, 1.0, small_config(1)), Error);
    EXPECT_THROW(train_value(DatasetFile{}, 0.99, 0.5, small_config(1)), Error);
}

TEST(CriticConfig, CosineLearningRate) {
    CriticTrainConfig cfg;
    cfg.steps = 101;
    cfg.opt.lr = 1.0;
    EXPECT_DOUBLE_EQ(cfg.lr_at(0), 1.0);
    EXPECT_NEAR(cfg.lr_at(50), 0.525, 1e-12);
    EXPECT_NEAR(cfg.lr_at(100), 0.05, 1e-12);
}

TEST(InverseDynamics, LearnsMazeActions) {
    const auto env = make_env("maze");
    const DatasetFile ds = generate_dataset(*env, PolicyMix{}, 100, 5);
    TrainReport rep;
    CriticTrainConfig cfg = small_config(3000);
    cfg.hidden = 64;
    const InverseDynamics id = train_inverse_dynamics(ds, *env, cfg, &rep);
    EXPECT_LT(rep.holdout_mse, 1e-2);
    EXPECT_GT(rep.skipped, 0u);
    EXPECT_LT(rep.losses.back(), rep.losses.front());
    const std::vector<float> s{0.2f, 0.2f}, a{0.5f, -0.3f};
    const auto next = env->step(s, a).next;
    const auto pred = id(s, next);
    ASSERT_EQ(pred.size(), 2u);
    EXPECT_NEAR(pred[0], 0.5f, 0.15);
    EXPECT_NEAR(pred[1], -0.3f, 0.15);
    for (float p : id(s, std::vector<float>{0.9f, 0.9f})) EXPECT_LE(std::abs(p), env->action_bound());
}

TEST(InverseDynamics, RejectsMismatchedEnvironment) {
    const auto maze = make_env("maze"), runner = make_env("runner");
    const DatasetFile ds = generate_dataset(*maze, PolicyMix{}, 3, 1);
    EXPECT_THROW(train_inverse_dynamics(ds, *runner, small_config(1)), Error);
}

TEST(Holdout, EveryTenthEpisode) {
    EXPECT_FALSE(is_holdout_episode(0));
    EXPECT_TRUE(is_holdout_episode(9));
    EXPECT_TRUE(is_holdout_episode(19));
}

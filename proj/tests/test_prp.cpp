#include <gtest/gtest.h>

#include <cmath>

#include "prpl/envs/env.hpp"
#include "prpl/prp/planner.hpp"

using namespace prpl;

namespace {

Episode line_episode(std::size_t len) {
    Episode ep;
    for (std::size_t t = 0; t <= len; ++t) {
        ep.obs.push_back(static_cast<float>(t));
        ep.obs.push_back(-static_cast<float>(t));
    }
    for (std::size_t t = 0; t < len; ++t) {
        ep.act.insert(ep.act.end(), {0.0f, 0.0f});
        ep.rew.push_back(1.0f);
    }
    return ep;
}

PlannerModel untrained_model(const std::vector<LevelConfig>& levels, Rng& rng) {
    PlannerModel m;
    m.levels = levels;
    m.stats = {{0.5f, 0.5f}, {0.3f, 0.3f}};
    for (const auto& l : levels) {
        m.backbones.push_back(make_backbone(BackboneKind::diffusion, {l.tokens, 2, 16, 1, 8}, 100, AdamWConfig{}, rng));
        m.normalizers.push_back({0.0, 1.0});
    }
    m.inverse_dynamics.net = make_mlp({4, 16, 2}, Activation::mish, Activation::tanh, rng);
    m.inverse_dynamics.stats = m.stats;
    m.inverse_dynamics.delta_scale = {0.05f, 0.05f};
    return m;
}

}  // namespace

TEST(Levels, ThreeLevelPreset) {
    const auto lv = build_levels(129, {32, 8, 1});
    ASSERT_EQ(lv.size(), 3u);
    EXPECT_EQ(lv[0], (LevelConfig{0, 129, 32, 5}));
    EXPECT_EQ(lv[1], (LevelConfig{1, 33, 8, 5}));
    EXPECT_EQ(lv[2], (LevelConfig{2, 9, 1, 9}));
    EXPECT_EQ(total_tokens(lv), 19u);
    EXPECT_EQ(describe(lv), "(129,32,5), (33,8,5), (9,1,9)");
}

TEST(Levels, OneShotAndOnlyLast) {
    const auto os = build_levels(129, {1});
    EXPECT_EQ(total_tokens(os), 129u);
    const auto last = build_levels(9, {1});
    EXPECT_EQ(last[0], (LevelConfig{0, 9, 1, 9}));
}

TEST(Levels, RejectsBadJumps) {
    EXPECT_THROW(build_levels(129, {}), Error);
    EXPECT_THROW(build_levels(129, {32, 8}), Error);
    EXPECT_THROW(build_levels(129, {32, 7, 1}), Error);
    EXPECT_THROW(build_levels(130, {32, 8, 1}), Error);
    EXPECT_THROW(build_levels(1, {1}), Error);
}

TEST(Normalizer, MapsRangeMonotonically) {
    const std::vector<float> labels{2.0f, -1.0f, 5.0f};
    const auto n = ConditionNormalizer::fit(labels);
    EXPECT_DOUBLE_EQ(n.normalize(-1.0), -1.0);
    EXPECT_DOUBLE_EQ(n.normalize(5.0), 1.0);
    EXPECT_DOUBLE_EQ(n.denormalize(n.normalize(2.0)), 2.0);
    const std::vector<float> flat{3.0f, 3.0f};
    const auto f = ConditionNormalizer::fit(flat);
    EXPECT_LT(f.normalize(3.0), f.normalize(3.5));
    EXPECT_THROW(ConditionNormalizer::fit(std::vector<float>{}), Error);
}

TEST(Slicing, JumpySliceWithTerminalPadding) {
    const Episode ep = line_episode(10);
    const LevelConfig lvl{0, 9, 4, 3};
    EXPECT_EQ(jumpy_slice(ep, 2, 0, lvl), (std::vector<float>{0, 0, 4, -4, 8, -8}));
    EXPECT_EQ(jumpy_slice(ep, 2, 5, lvl), (std::vector<float>{5, -5, 9, -9, 10, -10}));
    EXPECT_EQ(padded_index(ep, 42), 10u);
}

TEST(Slicing, RewardLabelSumsWindow) {
    const Episode ep = line_episode(20);
    const auto levels = build_levels(9, {4, 1});
    const auto s = make_training_slices(ep, 2, levels, 0, CriticKind::reward, 0.99);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_DOUBLE_EQ(s[0].label, 9.0);
    EXPECT_DOUBLE_EQ(s[1].label, 5.0);
    EXPECT_EQ(s[0].sequence.size(), 3u * 2u);
    EXPECT_EQ(s[1].sequence.size(), 5u * 2u);
    // past the end rewards are zero
    const auto tail = make_training_slices(ep, 2, levels, 18, CriticKind::reward, 0.99);
    EXPECT_DOUBLE_EQ(tail[0].label, 2.0);
    EXPECT_THROW(make_training_slices(ep, 2, levels, 20, CriticKind::reward, 0.99), Error);
}

TEST(Slicing, ValueLabelDiscountsAndBootstraps) {
    const Episode ep = line_episode(10);
    std::vector<float> values(11, 0.0f);
    values[3] = 10.0f;
    const double label = dense_label(ep, 0, 4, CriticKind::value, 0.5, values);
    EXPECT_DOUBLE_EQ(label, 1.0 + 0.5 + 0.25 + 0.125 * 10.0);
}

TEST(Selection, ArgmaxAndNearest) {
    const std::vector<double> s{0.1, 0.7, 0.7, -2.0};
    EXPECT_EQ(select_candidate(s), 1u);
    EXPECT_EQ(select_candidate(s, SelectMode::nearest, -1.5), 3u);
    EXPECT_EQ(select_candidate(s, SelectMode::nearest, 0.0), 0u);
    EXPECT_THROW(select_candidate(std::vector<double>{}), Error);
}

TEST(PlanCritic, RewardAndValueScoring) {
    PointMaze2D maze;
    PlanCritic rc{CriticKind::reward, 0.99, &maze, nullptr};
    // second key point enters the goal
    const Tensor2 seq = Tensor2::from_rows({{0.1f, 0.6f, 0.1f, 0.83f, 0.1f, 0.84f}});
    EXPECT_EQ(rc.score(seq, 3, 1), std::vector<double>{1.0});
    PlanCritic vc{CriticKind::value, 0.99, &maze, nullptr};
    EXPECT_THROW(vc.score(seq, 3, 1), Error);
}

TEST(Planner, ChainsAndAnchorsExactly) {
    Rng rng(21);
    const auto levels = build_levels(17, {4, 2, 1});
    const PlannerModel model = untrained_model(levels, rng);
    PointMaze2D maze;
    const PlanCritic critic{CriticKind::reward, 0.99, &maze, nullptr};
    PlannerSettings st;
    st.n_candidates = 6;
    for (int trial = 0; trial < 20; ++trial) {
        const std::vector<float> obs{static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
        const PrpPlan plan = plan_once(model, critic, obs, st, rng);
        ASSERT_EQ(plan.levels.size(), 3u);
        for (std::size_t l = 0; l < 3; ++l) {
            const auto& lp = plan.levels[l];
            EXPECT_EQ(lp.candidates.rows(), 6u);
            EXPECT_EQ(lp.candidates.cols(), levels[l].tokens * 2);
            for (std::size_t r = 0; r < lp.candidates.rows(); ++r) {
                const auto row = lp.candidates.row(r);
                EXPECT_EQ(row[0], obs[0]);
                EXPECT_EQ(row[1], obs[1]);
                if (l > 0) {
                    const auto prev = plan.levels[l - 1].chosen();
                    const std::size_t last = (levels[l].tokens - 1) * 2;
                    EXPECT_EQ(row[last], prev[2]);
                    EXPECT_EQ(row[last + 1], prev[3]);
                }
            }
        }
        EXPECT_EQ(plan.action.size(), 2u);
    }
}

TEST(Planner, SameSeedSamePlan) {
    Rng init(22);
    const auto levels = build_levels(9, {4, 1});
    const PlannerModel model = untrained_model(levels, init);
    PointMaze2D maze;
    const PlanCritic critic{CriticKind::reward, 0.99, &maze, nullptr};
    const std::vector<float> obs{0.2f, 0.3f};
    Rng a(7), b(7);
    const PrpPlan pa = plan_once(model, critic, obs, PlannerSettings{}, a);
    const PrpPlan pb = plan_once(model, critic, obs, PlannerSettings{}, b);
    EXPECT_EQ(pa.action, pb.action);
    for (std::size_t l = 0; l < pa.levels.size(); ++l) EXPECT_EQ(pa.levels[l].candidates, pb.levels[l].candidates);
}

TEST(Planner, RejectsBadInputs) {
    Rng rng(23);
    const auto levels = build_levels(9, {4, 1});
    PlannerModel model = untrained_model(levels, rng);
    PointMaze2D maze;
    const PlanCritic critic{CriticKind::reward, 0.99, &maze, nullptr};
    const std::vector<float> wrong{0.1f};
    EXPECT_THROW(plan_once(model, critic, wrong, PlannerSettings{}, rng), Error);
    PlannerSettings st;
    st.n_candidates = 0;
    EXPECT_THROW(plan_once(model, critic, std::vector<float>{0.1f, 0.1f}, st, rng), Error);
    model.backbones.pop_back();
    EXPECT_THROW(plan_once(model, critic, std::vector<float>{0.1f, 0.1f}, PlannerSettings{}, rng), Error);
}

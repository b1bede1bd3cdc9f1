// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "tcdnet/errors.hpp"
#include "tcdnet/trainer.hpp"
#include "test_support.hpp"

using namespace tcdnet;
using tcdnet::testing::random_tensor;

namespace {

ModelConfig small_config() {
    ModelConfig c = ModelConfig::tiny();
    c.embed_dim = 16;
    c.heads = 2;
    c.depth = 1;
    return c;
}

DataConfig small_data() {
    DataConfig d;
    d.count = 20;
    d.height = 20;
    d.width = 20;
    d.crop = 16;
    d.sigma_min = 0.0;
    d.sigma_max = 50.0;
    return d;
}

StagePlan short_plan(std::size_t steps, std::size_t batch = 2) {
    StagePlan p = StagePlan::stage1();
    p.steps = steps;
    p.batch = batch;
    p.lr = 2e-3;
    return p;
}

}  // namespace

TEST(AdamW, ZeroGradientWithoutDecayIsNoOp) {
    Tensor p = random_tensor({3, 4}, 1);
    const Tensor before = p;
    OptimState s;
    s.config.weight_decay = 0.0;
    std::vector<Tensor*> ps{&p};
    std::vector<Tensor> gs{Tensor::zeros({3, 4})};
    for (int i = 0; i < 3; ++i) adamw_step(ps, gs, s, 1e-2);
    EXPECT_EQ(p, before);
    EXPECT_EQ(s.step, 3u);
    EXPECT_EQ(s.m[0].shape(), p.shape());
}

TEST(AdamW, FirstStepClosedForm) {
    Tensor p = Tensor::vector({0.5});
    OptimState s;
    s.config.weight_decay = 0.0;
    std::vector<Tensor*> ps{&p};
    std::vector<Tensor> gs{Tensor::vector({1.0})};
    adamw_step(ps, gs, s, 1e-3);
    // m_hat = v_hat = 1 after bias correction.
    EXPECT_NEAR(p[0], 0.5 - 1e-3 / (1.0 + 1e-8), 1e-16);
    EXPECT_NEAR(s.m[0][0], 0.1, 1e-16);
    EXPECT_NEAR(s.v[0][0], 0.001, 1e-18);
}

TEST(AdamW, DecoupledDecayShrinksParameters) {
    Tensor p = random_tensor({5}, 2);
    const Tensor before = p;
    OptimState s;
    s.config.weight_decay = 0.1;
    std::vector<Tensor*> ps{&p};
    std::vector<Tensor> gs{Tensor::zeros({5})};
    adamw_step(ps, gs, s, 0.01);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(p[i], before[i] * (1.0 - 0.01 * 0.1));
}

TEST(AdamW, MissingOrMismatchedGradientIsContractError) {
    Tensor p = random_tensor({2}, 3);
    OptimState s;
    std::vector<Tensor*> ps{&p};
    std::vector<Tensor> empty{Tensor()};
    EXPECT_THROW(adamw_step(ps, empty, s, 1e-3), ContractError);
    std::vector<Tensor> none;
    EXPECT_THROW(adamw_step(ps, none, s, 1e-3), ContractError);
    std::vector<Tensor> wrong{Tensor::zeros({3})};
    OptimState fresh;
    EXPECT_THROW(adamw_step(ps, wrong, fresh, 1e-3), ContractError);
}

TEST(CosineLr, EndpointsAndMidpoint) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 2e-4, 1e-6), 2e-4);
    EXPECT_NEAR(cosine_lr(100, 100, 2e-4, 1e-6), 1e-6, 1e-20);
    EXPECT_NEAR(cosine_lr(50, 100, 2e-4, 1e-6), (2e-4 + 1e-6) / 2.0, 1e-18);
    double prev = 1.0;
    for (std::size_t s = 0; s <= 100; ++s) {
        const double lr = cosine_lr(s, 100, 1e-3);
        EXPECT_LE(lr, prev);
        prev = lr;
    }
}

TEST(StagePlan, BuiltInStages) {
    auto s1 = StagePlan::stage1();
    EXPECT_EQ(s1.epochs, 100.0);
    EXPECT_EQ(s1.lr, 2e-4);
    EXPECT_EQ(s1.batch, 32u);
    EXPECT_EQ(s1.weights, (LossWeights{0.5, 0.1, 0.0}));
    EXPECT_FALSE(s1.teacher_enabled);
    EXPECT_EQ(s1.adamw.weight_decay, 1e-4);
    auto s2 = StagePlan::stage2();
    EXPECT_EQ(s2.epochs, 50.0);
    EXPECT_EQ(s2.lr, 5e-5);
    EXPECT_EQ(s2.weights, (LossWeights{0.25, 0.05, 0.1}));
    EXPECT_TRUE(s2.teacher_enabled);
    EXPECT_DOUBLE_EQ(s1.scaled(0.1).epochs, 10.0);
    EXPECT_THROW(s1.scaled(0.0), ConfigError);
}

TEST(StagePlan, StepCountFollowsEpochsAndRepetition) {
    DataConfig d;
    d.count = 50;  // 45 training, 5 validation
    d.repetition = 2;
    StagePlan p;
    p.epochs = 3.0;
    p.batch = 4;
    EXPECT_EQ(d.train_count(), 45u);
    EXPECT_EQ(p.total_steps(d), 68u);  // ceil(3 * 90 / 4)
    p.steps = 7;
    EXPECT_EQ(p.total_steps(d), 7u);
}

TEST(Data, SplitsAreDisjointAndDeterministic) {
    DataConfig d = small_data();
    EXPECT_EQ(d.val_count(), 2u);
    std::set<std::uint64_t> train, val;
    for (std::size_t i = 0; i < d.train_count(); ++i) train.insert(content_seed(5, i));
    for (std::size_t v = 0; v < d.val_count(); ++v) val.insert(content_seed(5, d.train_count() + v));
    for (auto s : val) EXPECT_FALSE(train.contains(s));
    EXPECT_THROW(training_sample(d, 5, d.train_count(), 1, false), ContractError);

    auto a = validation_sample(d, 5, 1), b = validation_sample(d, 5, 1);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.sigma, 25.0);
    auto t = training_sample(d, 5, 3, 99, true);
    EXPECT_EQ(t.y, training_sample(d, 5, 3, 99, true).y);
    EXPECT_FALSE(t.y == training_sample(d, 5, 3, 100, true).y);
    EXPECT_EQ(t.x, training_sample(d, 5, 3, 100, true).x);
    ASSERT_TRUE(t.teacher.has_value());
    EXPECT_EQ(*t.teacher, box_blur3x3(t.x));
}

TEST(Data, ScmModeRecordsEnvironment) {
    DataConfig d = small_data();
    d.mode = NoiseMode::scm;
    auto s = training_sample(d, 6, 0, 11, false);
    EXPECT_FALSE(s.env.is_neutral());
    EXPECT_EQ(parse_noise_mode("scm"), NoiseMode::scm);
    EXPECT_THROW(parse_noise_mode("poisson"), ConfigError);
}

TEST(TrainStage, ZeroLearningRateLeavesParametersUntouched) {
    auto c = small_config();
    auto params = init_params(c, 1);
    const auto before = params;
    auto plan = short_plan(3);
    plan.lr = 0.0;
    train_stage(c, params, small_data(), plan, 2);
    EXPECT_EQ(params, before);
}

TEST(TrainStage, ReconstructionLossDecreases) {
    auto c = small_config();
    auto params = init_params(c, 3);
    auto log = train_stage(c, params, small_data(), short_plan(200), 4);
    ASSERT_EQ(log.size(), 200u);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        first += log[i].rec;
        last += log[190 + i].rec;
    }
    EXPECT_LT(last, first);
    EXPECT_EQ(log.front().lr, 2e-3);
}

TEST(TrainStage, DeterministicAcrossRunsAndThreadCounts) {
    auto c = small_config();
    auto p1 = init_params(c, 5), p2 = p1, p3 = p1;
    std::ostringstream l1, l2;
    auto plan = short_plan(6, 3);
    train_stage(c, p1, small_data(), plan, 6, {&l1});
    train_stage(c, p2, small_data(), plan, 6, {&l2});
    EXPECT_EQ(p1, p2);
    EXPECT_EQ(l1.str(), l2.str());
    TrainOptions threaded;
    threaded.threads = 3;
    train_stage(c, p3, small_data(), plan, 6, threaded);
    EXPECT_EQ(p1, p3);
}

TEST(TrainStage, LogRecordsEveryComponent) {
    auto c = small_config();
    auto params = init_params(c, 7);
    std::ostringstream out;
    auto plan = short_plan(2);
    plan.weights = {0.25, 0.05, 0.1};
    plan.teacher_enabled = true;
    auto log = train_stage(c, params, small_data(), plan, 8, {&out});
    const auto text = out.str();
    EXPECT_EQ(text.rfind("{\"step\":0,\"lr\":", 0), 0u) << text;
    for (const char* key : {"l_rec", "l_noise", "l_ortho", "l_teacher", "total"}) {
        EXPECT_NE(text.find(key), std::string::npos);
    }
    EXPECT_GT(log[0].teacher, 0.0);
    EXPECT_NEAR(log[0].total, log[0].rec + 0.25 * log[0].noise + 0.05 * log[0].ortho + 0.1 * log[0].teacher, 1e-12);
}

TEST(TrainStage, NonFiniteParameterAbortsWithStep) {
    auto c = small_config();
    auto params = init_params(c, 9);
    params.patch_w[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        train_stage(c, params, small_data(), short_plan(2), 1);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("step 0"), std::string::npos) << e.what();
    }
}

TEST(TrainStage, RejectsCropNotDivisibleByPatch) {
    auto c = small_config();
    auto params = init_params(c, 1);
    auto d = small_data();
    d.crop = 18;
    EXPECT_THROW(train_stage(c, params, d, short_plan(1), 1), ConfigError);
}

TEST(Ablation, RowsFollowTheTogglePattern) {
    auto rows = AblationConfig::table_rows();
    ASSERT_EQ(rows.size(), 6u);
    for (int i = 0; i < 6; ++i) EXPECT_EQ(rows[i].id, i + 1);
    EXPECT_FALSE(rows[0].dual_stream);
    EXPECT_TRUE(rows[1].dual_stream);
    EXPECT_EQ(rows[0].ortho, rows[1].ortho);
    EXPECT_EQ(rows[0].pos_encoding, rows[1].pos_encoding);
    EXPECT_EQ(rows[0].eba, rows[1].eba);
    EXPECT_EQ(rows[0].teacher, rows[1].teacher);
    EXPECT_TRUE(rows[2].ortho);
    EXPECT_EQ(rows[2].pos_encoding, PosEncoding::hybrid);
    EXPECT_EQ(rows[3].eba, EbaTopology::parallel);
    EXPECT_EQ(rows[4].eba, EbaTopology::serial);
    const auto& all = rows[5];
    EXPECT_TRUE(all.dual_stream && all.ortho && all.teacher);
    EXPECT_EQ(all.eba, EbaTopology::serial);

    const LossWeights base{0.5, 0.1, 0.0};
    EXPECT_EQ(rows[0].loss_weights(base), (LossWeights{0.0, 0.0, 0.0}));
    EXPECT_EQ(rows[1].loss_weights(base), (LossWeights{0.5, 0.0, 0.0}));
    EXPECT_EQ(rows[5].loss_weights(base), (LossWeights{0.5, 0.1, 0.1}));
    EXPECT_EQ(rows[3].model_config(ModelConfig::tiny()).eba_topology, EbaTopology::parallel);
}

TEST(Ablation, SmallRunReportsFinitePsnr) {
    auto rows = AblationConfig::table_rows();
    rows.resize(2);
    auto result = run_ablation(rows, small_config(), small_data(), short_plan(4), 10);
    ASSERT_EQ(result.rows.size(), 2u);
    for (const auto& r : result.rows) EXPECT_TRUE(std::isfinite(r.psnr_db));
    const auto md = result.to_markdown();
    EXPECT_NE(md.find("| 1 | no | no | APE | none | no |"), std::string::npos) << md;
    EXPECT_NE(md.find("| 2 | yes | no | APE | none | no |"), std::string::npos) << md;
}

TEST(Threads, EnvironmentParsing) {
    ::unsetenv("TCDNET_THREADS");
    EXPECT_EQ(threads_from_env(), 1u);
    ::setenv("TCDNET_THREADS", "3", 1);
    EXPECT_EQ(threads_from_env(), 3u);
    ::setenv("TCDNET_THREADS", "zero", 1);
    EXPECT_EQ(threads_from_env(), 1u);
    ::unsetenv("TCDNET_THREADS");
}

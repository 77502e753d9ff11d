#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "ovod/pipeline.hpp"
#include "ovod/reward_model.hpp"
#include "support.hpp"

using namespace ovod;

namespace {

constexpr std::array<double, kActionCount> kUniform = {1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7, 1.0 / 7};

RmParams64 random_params(std::uint64_t seed, int hidden = 8, double scale = 0.5) {
    Rng rng(seed);
    auto p = RmParams64::zeros({kFeatureDim, hidden, kActionCount});
    p.for_each([&](double& x) { x = rng.uniform(-scale, scale); });
    return p;
}

std::vector<RmSample> random_batch(std::uint64_t seed, int n) {
    Rng rng(seed);
    std::vector<RmSample> out(static_cast<std::size_t>(n));
    for (auto& s : out) {
        for (auto& f : s.features) f = rng.uniform(-1, 1);
        s.successor = static_cast<int>(rng.below(kActionCount));
        s.reward = rng.uniform();
        s.weight = rng.uniform(0.1, 1.0);
        double sum = 0;
        for (auto& p : s.prior) sum += (p = rng.uniform(0.05, 1.0));
        for (auto& p : s.prior) p /= sum;
    }
    return out;
}

std::array<WeakUnit, kActionCount> candidates_for(const FeatureVector& base) {
    std::array<WeakUnit, kActionCount> c{};
    for (int k = 0; k < kActionCount; ++k) {
        c[static_cast<std::size_t>(k)].features = base;
        c[static_cast<std::size_t>(k)].features[static_cast<std::size_t>(feature::kSlotBegin + k)] = 1.0;
    }
    return c;
}

/// Samples whose successor follows a fixed distribution and whose prior is that distribution.
std::vector<RmSample> chain_samples(const std::array<double, kActionCount>& p, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<RmSample> out(static_cast<std::size_t>(n));
    for (auto& s : out) {
        s.features[feature::kBias] = 1.0;
        double u = rng.uniform(), acc = 0;
        s.successor = kActionCount - 1;
        for (int k = 0; k < kActionCount; ++k)
            if (u < (acc += p[static_cast<std::size_t>(k)])) {
                s.successor = k;
                break;
            }
        s.reward = 0.5;
        s.prior = p;
    }
    return out;
}

}  // namespace

TEST_CASE("zero weights give a uniform policy and a neutral reward") {
    const auto w = RmWeights::zeros();
    CHECK(w.parameter_count() == 20 * 64 + 64 + 64 * 64 + 64 + 7 * 64 + 7 + 64 + 1);
    WeakUnit z;
    z.features[3] = 0.7;
    const auto out = rm_forward(w, z);
    for (double p : out.policy) CHECK(p == doctest::Approx(1.0 / 7.0));
    CHECK(out.reward == doctest::Approx(0.5));
}

TEST_CASE("forward pass is a distribution and rejects bad input") {
    const auto w = random_params(1, 16, 2.0);
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        FeatureVector f;
        for (auto& x : f) x = rng.uniform(-3, 3);
        const auto a = rm_forward(w, f);
        double sum = 0;
        for (double p : a.policy) {
            CHECK(p > 0.0);
            sum += p;
        }
        CHECK(sum == doctest::Approx(1.0));
        CHECK(a.reward > 0.0);
        CHECK(a.reward < 1.0);
        CHECK(rm_forward(w, f).policy == a.policy);
    }
    FeatureVector bad{};
    bad[0] = NAN;
    CHECK_THROWS_AS(rm_forward(w, bad), ValidationError);
}

TEST_CASE("loss terms") {
    const auto zero = RmParams64::zeros();
    RmSample s;
    s.successor = 3;
    s.reward = 0.5;
    s.prior = kUniform;
    const std::vector<RmSample> one = {s};
    const auto l = rm_loss(zero, one, LossWeights{1.0, 0.1});
    CHECK(l.distillation == doctest::Approx(std::log(7.0)));
    CHECK(l.reward == doctest::Approx(0.0));
    CHECK(l.kl == doctest::Approx(0.0));

    const auto batch = random_batch(3, 12);
    const auto w = random_params(4);
    const LossWeights lw{0.7, 0.3};
    const auto b = rm_loss(w, batch, lw);
    CHECK(b.total == doctest::Approx(b.distillation + lw.beta * b.reward + lw.gamma * b.kl));
    CHECK(b.kl >= 0.0);

    auto zero_prior = batch;
    zero_prior[0].prior[2] = 0.0;
    CHECK_THROWS_AS(rm_loss(w, zero_prior, lw), ValidationError);
    CHECK_THROWS_AS(rm_loss(w, std::vector<RmSample>{}, lw), ValidationError);
}

TEST_CASE("loss agrees with the extended-precision reference") {
    const auto w = random_params(5);
    const auto batch = random_batch(6, 10);
    const LossWeights lw{0.7, 0.3};
    const auto flat = w.flatten();
    const std::vector<long double> p(flat.begin(), flat.end());
    CHECK(rm_loss(w, batch, lw).total == doctest::Approx(static_cast<double>(oracle::reference_loss(p, w.dims, batch, lw))).epsilon(1e-12));
}

TEST_CASE("analytic gradient matches central differences of the reference") {
    const LossWeights lw{0.7, 0.3};
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto w = random_params(seed);
        const auto batch = random_batch(seed + 100, 6);
        const auto g = rm_grad(w, batch, lw).flatten();
        const auto fd = oracle::reference_gradient(w, batch, lw);
        REQUIRE(g.size() == fd.size());
        double worst = 0;
        for (std::size_t i = 0; i < g.size(); ++i)
            worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max({std::abs(g[i]), std::abs(fd[i]), 1e-10}));
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("gradient uses mean semantics and respects symmetry") {
    const auto w = random_params(8);
    const auto batch = random_batch(9, 5);
    auto twice = batch;
    twice.insert(twice.end(), batch.begin(), batch.end());
    const auto g1 = rm_grad(w, batch, {}).flatten();
    const auto g2 = rm_grad(w, twice, {}).flatten();
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(g1[i]).epsilon(1e-10));

    // zero network, successors only 0 and 1: the other bias partials coincide
    auto sym = random_batch(10, 6);
    for (std::size_t i = 0; i < sym.size(); ++i) {
        sym[i].successor = static_cast<int>(i % 2);
        sym[i].prior = kUniform;
    }
    const auto g = rm_grad(RmParams64::zeros(), sym, {});
    for (int k = 3; k < kActionCount; ++k) CHECK(g.bp(k) == doctest::Approx(g.bp(2)));
}

TEST_CASE("training is deterministic and converges on a chain") {
    const std::array<double, kActionCount> p = {0.4, 0.2, 0.1, 0.1, 0.1, 0.05, 0.05};
    const auto samples = chain_samples(p, 600, 3);
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.hidden = 16;
    cfg.seed = 2;
    const auto a = train_rm_samples(samples, cfg);
    const auto b = train_rm_samples(samples, cfg);
    CHECK(encode_weights(a.weights) == encode_weights(b.weights));
    REQUIRE(a.loss_history.size() == 60);
    for (std::size_t i = 1; i < a.loss_history.size(); ++i) CHECK(a.loss_history[i] <= a.loss_history[i - 1] * 1.05);
    CHECK(a.loss_history.back() < a.loss_history.front());

    FeatureVector f{};
    f[feature::kBias] = 1.0;
    const auto pi = rm_forward(a.weights.cast<double>(), f).policy;
    double kl = 0;
    for (int k = 0; k < kActionCount; ++k) kl += pi[static_cast<std::size_t>(k)] * std::log(pi[static_cast<std::size_t>(k)] / p[static_cast<std::size_t>(k)]);
    CHECK(kl < 0.05);

    cfg.epochs = 0;
    CHECK_THROWS_AS(train_rm_samples(samples, cfg), ValidationError);
    CHECK_THROWS_AS(train_rm(std::vector<ImageRecord>{}, TrainConfig{}), ValidationError);
}

TEST_CASE("distillation weights") {
    ImageRecord r;
    r.image_id = "x";
    r.transition_posterior = DirichletCounts{}.posterior();
    Trajectory t;
    for (double rew : {0.2, 0.6, 1.0}) {
        TrajectoryStep s;
        s.action = ActionId::Color;
        s.z_to.state = StateId::after(ActionId::Color);
        s.reward = rew;
        t.steps.push_back(s);
    }
    r.trajectories.push_back(t);
    const auto samples = build_samples(std::vector<ImageRecord>{r});
    REQUIRE(samples.size() == 3);
    CHECK(samples[0].weight == doctest::Approx(0.1));
    CHECK(samples[1].weight == doctest::Approx(0.55));
    CHECK(samples[2].weight == doctest::Approx(1.0));
    CHECK(samples[0].successor == 1);

    for (auto& s : r.trajectories[0].steps) s.reward = 0.4;
    for (const auto& s : build_samples(std::vector<ImageRecord>{r})) CHECK(s.weight == 1.0);
}

TEST_CASE("inference rules") {
    const auto w = random_params(11, 16, 1.0).cast<float>();
    WeakUnit z;
    z.features[feature::kBias] = 1.0;
    const auto cands = candidates_for(z.features);

    const auto pol = infer_scores(w, z, cands, {InferenceMode::Policy});
    const auto hyb1 = infer_scores(w, z, cands, {InferenceMode::Hybrid, 1.0});
    for (int k = 0; k < kActionCount; ++k) CHECK(hyb1[static_cast<std::size_t>(k)] == doctest::Approx(std::log(pol[static_cast<std::size_t>(k)])));
    CHECK(infer_select(w, z, cands, {InferenceMode::Hybrid, 1.0}) == infer_select(w, z, cands, {InferenceMode::Policy}));
    CHECK(infer_select(w, z, cands, {InferenceMode::Hybrid, 0.0}) == infer_select(w, z, cands, {InferenceMode::Reward}));
    CHECK_THROWS_AS(infer_scores(w, z, cands, {InferenceMode::Hybrid, 1.5}), ValidationError);

    // constant shifts of the head biases keep every argmax
    auto shifted = w;
    shifted.bp.array() += 3.0f;
    shifted.br.array() += 2.0f;
    for (auto mode : {InferenceMode::Policy, InferenceMode::Reward, InferenceMode::Hybrid})
        CHECK(infer_select(shifted, z, cands, {mode}) == infer_select(w, z, cands, {mode}));

    // all-equal candidates: ties go to the smallest index
    const auto zero = RmWeights::zeros();
    CHECK(infer_select(zero, z, cands, {InferenceMode::Reward}) == ActionId::Dictionary);
    CHECK(infer_select(zero, z, cands, {InferenceMode::Hybrid}) == ActionId::Dictionary);

    CHECK(parse_mode("hybrid") == InferenceMode::Hybrid);
    CHECK_THROWS_AS(parse_mode("greedy"), ValidationError);
}

TEST_CASE("weight files round trip and reject corruption") {
    const auto w = random_params(12, 64, 1.0).cast<float>();
    const auto bytes = encode_weights(w);
    const auto back = decode_weights(bytes);
    CHECK(back.flatten() == w.flatten());
    CHECK(back.dims == w.dims);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_weights(bad), ValidationError);
    bad = bytes;
    bad[4] = 9;
    CHECK_THROWS_AS(decode_weights(bad), ValidationError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_weights(bad), ValidationError);
    bad = bytes;
    bad.push_back(0);
    CHECK_THROWS_AS(decode_weights(bad), ValidationError);

    const auto dir = testing::scratch_dir("weights");
    const auto path = (dir / "rm.bin").string();
    save_weights(path, w);
    CHECK(load_weights(path).flatten() == w.flatten());
    CHECK_THROWS_AS(load_weights((dir / "missing.bin").string()), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("rollouts stop in time and never localise worse") {
    const auto& lex = testing::shipped_lexicon();
    std::vector<std::string> nouns;
    for (const auto& [n, e] : lex.entries()) nouns.push_back(n);
    const auto train_scenes = make_scenes(30, 31, nouns);
    SamplerConfig sc;
    sc.seed = 3;
    const auto data = sample_scenes(train_scenes, lex, sc, 4);
    TrainConfig tc;
    tc.epochs = 40;
    const auto model = train_rm(data, tc);

    const auto scenes = make_scenes(100, 32, nouns);
    RolloutConfig rc;
    rc.seed = 3;
    for (auto mode : {InferenceMode::Policy, InferenceMode::Reward, InferenceMode::Hybrid}) {
        const auto traces = infer_scenes(scenes, lex, model.weights, {mode}, rc, 4);
        int improved = 0;
        for (const auto& t : traces) {
            CHECK(t.result.actions.size() <= 7);
            CHECK(t.result.rewards.size() == t.result.actions.size());
            improved += t.final_iou >= t.baseline_iou;
        }
        CHECK(improved >= 70);
    }

    rc.thresholds.h_max = 0;
    const auto none = infer_scenes(scenes, lex, model.weights, {}, rc, 2);
    for (const auto& t : none) {
        CHECK(t.result.actions.empty());
        CHECK(t.result.final_detection.boxes == t.result.baseline.boxes);
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "ovod/bandit.hpp"
#include "ovod/metrics.hpp"
#include "ovod/persistence.hpp"
#include "support.hpp"

using namespace ovod;

namespace {

const std::string kCtx = "apricot";

std::size_t idx(ActionId a) { return static_cast<std::size_t>(action_index(a)); }

TransitionMatrix uniform_posterior() { return DirichletCounts{}.posterior(); }

/// Wraps the mock detector and fails on the n-th call (1-based).
class FlakyDetector final : public DetectorPort {
public:
    FlakyDetector(const MockDetector& inner, int fail_at) : inner_(inner), fail_at_(fail_at) {}
    DetectionResult detect(const RasterImage& img, const PromptState& p) const override {
        if (++calls_ == fail_at_) throw DetectorError("detector offline");
        return inner_.detect(img, p);
    }

private:
    const MockDetector& inner_;
    int fail_at_;
    mutable int calls_ = 0;
};

struct Fixture {
    SceneSpec spec = testing::base_spec();
    Scene scene = gen_scene(spec);
    const Lexicon& lex = testing::shipped_lexicon();
    MockDetector det{spec, lex, 1};

    ImageRecord run(const SamplerConfig& cfg, const DetectorPort* d = nullptr) const {
        return sample_image(spec.image_id, scene.image, PromptState{spec.noun, {}}, d ? *d : det, lex, spec.gt_box,
                            cfg);
    }
};

}  // namespace

TEST_CASE("ucb bonus") {
    CHECK(ucb_bonus(0, 1, 1.0) == doctest::Approx(std::sqrt(std::log(2.0))));
    CHECK(ucb_bonus(0, 2, 1.0) == ucb_bonus(0, 1, 1.0));
    CHECK(ucb_bonus(0, 2, 0.0) == 0.0);
    for (int t = 2; t < 50; ++t)
        for (std::uint64_t n = 0; n < 30; ++n) {
            CHECK(ucb_bonus(n + 1, t, 1.0) < ucb_bonus(n, t, 1.0));
            CHECK(ucb_bonus(n, t + 1, 1.0) > ucb_bonus(n, t, 1.0));
        }
}

TEST_CASE("ucb selection examples") {
    ArmStats s;
    CHECK(ucb_select(s, kCtx, 2, 1.0) == ActionId::Dictionary);

    s.update(kCtx, ActionId::Dictionary, 0.2);
    s.update(kCtx, ActionId::Color, 0.9);
    CHECK(ucb_select(s, kCtx, 5, 0.0) == ActionId::Color);

    ArmStats e;
    for (int i = 0; i < 3; ++i) e.update(kCtx, ActionId::Dictionary, 0.8);
    const double q1 = e.mean(kCtx, ActionId::Dictionary) + ucb_bonus(3, 4, 1.0);
    const double q2 = ucb_bonus(0, 4, 1.0);
    CHECK(q1 == doctest::Approx(1.3887).epsilon(1e-4));
    CHECK(q2 == doctest::Approx(1.1774).epsilon(1e-4));
    CHECK(ucb_select(e, kCtx, 4, 1.0) == ActionId::Dictionary);
    CHECK_THROWS_AS(ucb_select(e, kCtx, 4, -1.0), ValidationError);
}

TEST_CASE("arms are separate per context") {
    ArmStats s;
    s.update("a", ActionId::Texture, 1.0);
    CHECK(s.count("a", ActionId::Texture) == 1);
    CHECK(s.count("b", ActionId::Texture) == 0);
    CHECK(s.mean("b", ActionId::Texture) == 0.0);
    CHECK(s.context_count() == 1);
    CHECK(greedy_select(s, "a") == ActionId::Texture);
    CHECK(greedy_select(s, "b") == ActionId::Dictionary);
}

TEST_CASE("default lambda tries every arm before repeating one") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
        ArmStats s;
        std::set<ActionId> seen;
        for (int t = 1; t <= kActionCount; ++t) {
            const auto a = ucb_select(s, kCtx, t, SamplerConfig{}.lambda);
            CHECK(seen.insert(a).second);
            s.update(kCtx, a, rng.uniform());
        }
    }
}

TEST_CASE("baseline policies") {
    ArmStats s;
    s.update(kCtx, ActionId::Color, 0.7);
    s.update(kCtx, ActionId::Dictionary, 0.1);
    Rng rng(1);
    CHECK(baseline_select(PolicyKind::Greedy, s, kCtx, rng) == ActionId::Color);

    const int n = 100000;
    std::array<int, kActionCount> freq{};
    for (int i = 0; i < n; ++i) ++freq[idx(baseline_select(PolicyKind::Random, s, kCtx, rng))];
    for (int f : freq) CHECK(std::abs(f / double(n) - 1.0 / 7.0) < 0.01);

    int off_greedy = 0;
    for (int i = 0; i < n; ++i) off_greedy += baseline_select(PolicyKind::EpsGreedy, s, kCtx, rng, 0.1) != ActionId::Color;
    CHECK(std::abs(off_greedy / double(n) - 0.1 * 6.0 / 7.0) < 0.01);

    CHECK(parse_policy("eps_greedy") == PolicyKind::EpsGreedy);
    CHECK(parse_policy(policy_name(PolicyKind::Ucb)) == PolicyKind::Ucb);
    CHECK_THROWS_AS(parse_policy("softmax"), ValidationError);
}

TEST_CASE("incremental arm means stay accurate") {
    ArmStats s;
    Rng rng(99);
    long double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double r = rng.uniform();
        sum += r;
        s.update(kCtx, ActionId::Lighting, r);
    }
    CHECK(s.count(kCtx, ActionId::Lighting) == static_cast<std::uint64_t>(n));
    CHECK(std::abs(s.mean(kCtx, ActionId::Lighting) - static_cast<double>(sum / n)) < 1e-12);
}

TEST_CASE("dirichlet counts") {
    DirichletCounts d;
    const auto s0 = StateId::initial();
    for (int j = 1; j < kStateCount; ++j) CHECK(d.at(s0, StateId(j)) == 1.0);
    CHECK(d.at(s0, s0) == 0.0);

    d.observe(s0, StateId(3));
    CHECK(d.at(s0, StateId(3)) == 2.0);
    d.observe(s0, StateId(3));
    CHECK(d.at(s0, StateId(3)) == 3.0);
    CHECK_THROWS_AS(d.observe(s0, s0), ValidationError);

    const auto p = d.posterior();
    CHECK(p[0][3] == doctest::Approx(3.0 / 9.0));
    CHECK(p[0][1] == doctest::Approx(1.0 / 9.0));
    CHECK(p[0][0] == 0.0);
    for (int j = 1; j < kStateCount; ++j) CHECK(p[5][static_cast<std::size_t>(j)] == doctest::Approx(1.0 / 7.0));

    const auto d2 = update_dirichlet(DirichletCounts{}, StateId(2), StateId(4));
    CHECK(d2.at(StateId(2), StateId(4)) == 2.0);
    CHECK(posterior(d2)[2][4] == doctest::Approx(2.0 / 8.0));
}

TEST_CASE("posterior rows stay on the simplex") {
    DirichletCounts d;
    Rng rng(4);
    for (int i = 0; i < 5000; ++i)
        d.observe(StateId(static_cast<int>(rng.below(8))), StateId(1 + static_cast<int>(rng.below(7))));
    for (const auto& row : d.posterior()) {
        double sum = 0;
        for (double x : row) {
            CHECK(x >= 0.0);
            sum += x;
        }
        CHECK(sum == doctest::Approx(1.0));
    }
}

TEST_CASE("trajectory stop") {
    const StopThresholds thr;
    CHECK(traj_stop_reason(1.0, 0.1, 0.9, 7, thr) == TrajStopReason::StepLimit);
    CHECK(traj_stop_reason(1.0, 0.4, 0.4005, 2, thr) == TrajStopReason::RewardConverged);
    CHECK(traj_stop_reason(1.0, 0.2, 0.5, 2, thr) == TrajStopReason::None);
    CHECK(traj_stop_reason(0.01, 0.2, 0.5, 2, thr) == TrajStopReason::Stabilized);
}

TEST_CASE("image stop") {
    const StopThresholds thr;
    const auto u = uniform_posterior();
    auto moved = u;
    moved[0][1] += 0.2;
    moved[0][2] -= 0.2;

    const std::vector<double> jump = {0.6};
    CHECK(image_stop_reason(jump, u, moved, 1, thr) == ImageStopReason::None);
    CHECK(image_stop_reason(jump, u, u, 1, thr) == ImageStopReason::TransitionConverged);
    CHECK(image_stop_reason(jump, u, moved, 50, thr) == ImageStopReason::EpisodeLimit);
    const std::vector<double> flat = {0.5, 0.6, 0.4, 0.5};
    CHECK(image_stop_reason(flat, u, moved, 4, thr) == ImageStopReason::RewardConverged);
    CHECK(image_stop(flat, u, moved, 4, thr));
}

TEST_CASE("threshold validation") {
    StopThresholds t;
    CHECK_NOTHROW(t.validate());
    t.e_max = 0;
    CHECK_THROWS_AS(t.validate(), ValidationError);
    t = {};
    t.delta_r = 0;
    CHECK_THROWS_AS(t.validate(), ValidationError);
}

TEST_CASE("sampling one step of one episode") {
    Fixture f;
    SamplerConfig cfg;
    cfg.thresholds.h_max = 1;
    cfg.thresholds.e_max = 1;
    const auto rec = f.run(cfg);
    REQUIRE(rec.trajectories.size() == 1);
    CHECK(rec.trajectories[0].steps.size() == 1);
    CHECK(rec.trajectories[0].steps[0].z_from.state.is_initial());
    CHECK_NOTHROW(rec.validate());
}

TEST_CASE("sampled records respect the limits and are reproducible") {
    Fixture f;
    for (auto kind : {PolicyKind::Ucb, PolicyKind::Random, PolicyKind::Greedy, PolicyKind::EpsGreedy}) {
        SamplerConfig cfg;
        cfg.policy = kind;
        cfg.seed = 5;
        const auto a = f.run(cfg);
        CHECK(a.trajectories.size() >= 1);
        CHECK(a.trajectories.size() <= 50);
        for (const auto& t : a.trajectories) {
            CHECK(t.steps.size() <= 7);
            for (const auto& s : t.steps) {
                CHECK(s.reward >= 0.0);
                CHECK(s.reward <= 1.0);
                CHECK(s.z_to.state == StateId::after(s.action));
            }
        }
        for (const auto& row : a.transition_posterior) {
            double sum = 0;
            for (double x : row) sum += x;
            CHECK(sum == doctest::Approx(1.0));
        }
        const auto b = f.run(cfg);
        CHECK(record_to_json(a).dump() == record_to_json(b).dump());
    }
}

TEST_CASE("detector failures") {
    Fixture f;
    const FlakyDetector dead(f.det, 1);
    CHECK_THROWS_AS(f.run(SamplerConfig{}, &dead), DetectorError);

    const FlakyDetector flaky(f.det, 3);
    const auto rec = f.run(SamplerConfig{}, &flaky);
    REQUIRE_FALSE(rec.trajectories.empty());
    CHECK(rec.trajectories[0].aborted);
    CHECK(rec.trajectories[0].steps.size() == 1);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ovod/core.hpp"
#include "ovod/random.hpp"

using namespace ovod;

namespace {

BoundingBox random_box(Rng& rng) {
    const double x = rng.uniform(0, 50), y = rng.uniform(0, 50);
    return {x, y, x + rng.uniform(0.5, 40), y + rng.uniform(0.5, 40)};
}

}  // namespace

TEST_CASE("iou on hand-computed boxes") {
    CHECK(iou({0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(1.0));
    CHECK(iou({0, 0, 1, 1}, {2, 2, 3, 3}) == 0.0);
    // inter 1, union 4 + 4 - 1
    CHECK(iou({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
    CHECK(gt_reward({0, 0, 2, 2}, {1, 1, 3, 3}) == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
    CHECK(gt_reward({0, 0, 1, 1}, {0, 0, 1, 1}) == doctest::Approx(0.0));
    CHECK(gt_reward({0, 0, 1, 1}, {2, 2, 3, 3}) == 1.0);
}

TEST_CASE("degenerate boxes contribute no overlap") {
    CHECK(iou({1, 1, 1, 1}, {0, 0, 2, 2}) == 0.0);
    CHECK(iou({1, 1, 1, 1}, {1, 1, 1, 1}) == 0.0);
}

TEST_CASE("iou is symmetric, bounded, and gt_reward is its complement") {
    Rng rng(42);
    for (int i = 0; i < 2000; ++i) {
        const auto a = random_box(rng), b = random_box(rng);
        const double ab = iou(a, b);
        CHECK(ab == iou(b, a));
        CHECK(ab >= 0.0);
        CHECK(ab <= 1.0);
        CHECK(gt_reward(a, b) == 1.0 - ab);
        CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("box validity") {
    CHECK(BoundingBox{0, 0, 1, 1}.valid());
    CHECK_FALSE(BoundingBox{1, 0, 1, 1}.valid());
    CHECK_FALSE(BoundingBox{0, 0, NAN, 1}.valid());
}

TEST_CASE("state ids and action labels") {
    CHECK(StateId::initial().is_initial());
    CHECK(StateId::after(ActionId::Color).value() == 2);
    CHECK(StateId(7).action() == ActionId::Spatial);
    CHECK_THROWS_AS(StateId(8), ValidationError);
    CHECK_THROWS_AS(StateId(-1), ValidationError);
    CHECK_THROWS_AS(StateId::initial().action(), ValidationError);
    CHECK(action_label(ActionId::Dictionary) == "a1");
    CHECK(action_label(ActionId::Spatial) == "a7");
    CHECK_THROWS_AS(action_from_index(7), ValidationError);
    for (ActionId a : kAllActions) CHECK(action_from_index(action_index(a)) == a);
}

TEST_CASE("prompt rendering follows slot order") {
    PromptState p{"apricot", {}};
    CHECK(p.render() == "apricot");
    p.slot(Slot::Lighting) = "well-lit lighting";
    p.slot(Slot::Color) = "red color";
    CHECK(p.render() == "apricot, red color, well-lit lighting");
    CHECK(p.filled_count() == 2);
    CHECK_NOTHROW(p.validate());
    p.slot(Slot::Texture) = "";
    CHECK_THROWS_AS(p.validate(), ValidationError);
    CHECK_THROWS_AS(PromptState{}.validate(), ValidationError);
}

TEST_CASE("weak unit encoding") {
    VisualContext c;
    c.image_id = "x";
    c.roi = {0, 0, 10, 10};
    c.prompt = {"apricot", {}};

    const auto z0 = make_weak_unit(c, std::nullopt);
    CHECK(z0.state.value() == 0);
    CHECK(z0.features[0] == 1.0);
    for (int i = 0; i < kSlotCount; ++i) CHECK(z0.features[feature::kSlotBegin + i] == 0.0);
    CHECK(z0.features[feature::kStep] == 0.0);
    CHECK(z0.features[feature::kBias] == 1.0);

    c.prompt.slot(Slot::Color) = "red color";
    c.step = 1;
    const auto z2 = make_weak_unit(c, ActionId::Color);
    CHECK(z2.state.value() == 2);
    CHECK(z2.features[2] == 1.0);
    CHECK(z2.features[0] == 0.0);
    CHECK(z2.features[feature::kSlotBegin + 1] == 1.0);
    CHECK(z2.features[feature::kStep] == doctest::Approx(1.0 / 7.0));
    CHECK(make_weak_unit(c, ActionId::Color) == z2);

    c.detection = {0.9, 0.2, 40};
    const auto z3 = make_weak_unit(c, ActionId::Color);
    CHECK(z3.features[feature::kMaxScore] == 0.9);
    CHECK(z3.features[feature::kEntropy] == 0.2);
    CHECK(z3.features[feature::kBoxCount] == 1.0);  // clamped
}

TEST_CASE("context distance masks state and step") {
    VisualContext c;
    c.prompt = {"apricot", {}};
    const auto a = make_weak_unit(c, std::nullopt);
    c.step = 3;
    const auto b = make_weak_unit(c, ActionId::Lighting);
    CHECK(context_distance(a, b) == 0.0);

    c.prompt.slot(Slot::Color) = "red color";
    const auto d = make_weak_unit(c, ActionId::Color);
    CHECK(context_distance(a, d) == doctest::Approx(1.0));
    CHECK(context_distance(a, d) == context_distance(d, a));
}

TEST_CASE("normalized entropy and detection summary") {
    CHECK(normalized_entropy({1.0}) == 0.0);
    CHECK(normalized_entropy({1.0 / 3, 1.0 / 3, 1.0 / 3}) == doctest::Approx(1.0));
    CHECK(normalized_entropy({1.0, 0.0, 0.0}) == doctest::Approx(0.0));

    DetectionResult d;
    d.boxes = {{0, 0, 1, 1}, {0, 0, 2, 2}};
    d.scores = {{0.2, 0.3}, {0.9, 0.1}};
    CHECK(d.top_index() == 1u);
    const auto s = summarize(d);
    CHECK(s.max_score == 0.9);
    CHECK(s.box_count == 2);
    CHECK_FALSE(DetectionResult{}.top_index().has_value());

    d.scores[0] = {1.5, 0.0};
    CHECK_THROWS_AS(d.validate(), ValidationError);
}

TEST_CASE("trajectory mean reward") {
    Trajectory t;
    CHECK(t.mean_reward() == 0.0);
    TrajectoryStep s;
    s.reward = 0.2;
    t.steps.push_back(s);
    s.reward = 0.6;
    t.steps.push_back(s);
    CHECK(t.mean_reward() == doctest::Approx(0.4));
}

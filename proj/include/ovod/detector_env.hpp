#pragma once

// AttributeWorld: a synthetic scene generator plus a mock open-vocabulary
// detector whose localisation noise shrinks as the prompt describes the
// planted object more accurately.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ovod/core.hpp"
#include "ovod/raster.hpp"
#include "ovod/visual_actions.hpp"

namespace ovod {

struct SceneSpec {
    std::string image_id;
    std::string noun;
    int width = 96;
    int height = 96;
    std::string true_color = "red";
    std::string true_texture = "smooth";
    std::string true_geometry = "square medium";  ///< "<aspect> <scale>"
    std::string true_lighting = "well-lit";
    std::string true_position = "center";
    double background_clutter = 0.0;
    BoundingBox gt_box;
    std::uint64_t seed = 0;

    /// Checks vocabularies and that the box fits the canvas.
    void validate() const;
    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Scene {
    RasterImage image;
    BoundingBox gt_box;
};

/// Renders the planted object over a background whose edge density tracks
/// `background_clutter`. Byte-identical for identical specs.
Scene gen_scene(const SceneSpec& spec);

/// A spec with attributes drawn from the vocabularies and a box consistent
/// with the chosen geometry and position classes.
SceneSpec random_scene_spec(const std::string& image_id, const std::vector<std::string>& nouns, std::uint64_t seed,
                            int width = 96, int height = 96);

/// The phrase each slot would need to hold for the prompt to describe the scene exactly.
std::array<std::optional<std::string>, kSlotCount> expected_slots(const SceneSpec& spec, const Lexicon& lex,
                                                                  const ActionConfig& cfg = {});

/// Fraction of the seven slots holding the expected phrase.
double match_score(const PromptState& prompt, const SceneSpec& spec, const Lexicon& lex,
                   const ActionConfig& cfg = {});

class DetectorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// p = D(x, T). Implementations must be safe for concurrent const use and
/// deterministic in (image, prompt).
class DetectorPort {
public:
    virtual ~DetectorPort() = default;
    virtual DetectionResult detect(const RasterImage& image, const PromptState& prompt) const = 0;
};

inline const std::vector<std::string> kDistractorPhrases = {"truck", "sign"};

DetectionResult mock_detect(const RasterImage& image, const PromptState& prompt, const SceneSpec& spec,
                            std::uint64_t noise_seed, const Lexicon& lex, const ActionConfig& cfg = {});

class MockDetector final : public DetectorPort {
public:
    MockDetector(SceneSpec spec, const Lexicon& lex, std::uint64_t noise_seed, ActionConfig cfg = {})
        : spec_(std::move(spec)), lex_(&lex), seed_(noise_seed), cfg_(cfg) {}

    DetectionResult detect(const RasterImage& image, const PromptState& prompt) const override {
        return mock_detect(image, prompt, spec_, seed_, *lex_, cfg_);
    }
    const SceneSpec& spec() const { return spec_; }

private:
    SceneSpec spec_;
    const Lexicon* lex_;
    std::uint64_t seed_;
    ActionConfig cfg_;
};

/// Scores how much more confident the detector became, mapped to [0,1] with
/// "no change" at 0.5.
double uncertainty_reduction(const std::vector<double>& before, const std::vector<double>& after);
/// Uses the score vector of each detection's top box.
double uncertainty_reduction(const DetectionResult& before, const DetectionResult& after);

/// w_gt * iou(pred, gt) + (1 - w_gt) * uncertainty_reduction; without ground
/// truth only the uncertainty term remains.
double step_reward(const BoundingBox& pred, const std::optional<BoundingBox>& gt, const std::vector<double>& before,
                   const std::vector<double>& after, double w_gt = 0.5);

}  // namespace ovod

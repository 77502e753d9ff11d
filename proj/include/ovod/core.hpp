#pragma once

// Domain types shared across the agent: boxes, detections, slot prompts,
// visual contexts and the weak Markov unit encoder.

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ovod {

/// Raised when an input violates a documented precondition.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A file could not be opened, read or written.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kActionCount = 7;
inline constexpr int kStateCount = 8;
inline constexpr int kFeatureDim = 20;
inline constexpr int kSlotCount = 7;

struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const;
    double center_x() const { return 0.5 * (x_min + x_max); }
    double center_y() const { return 0.5 * (y_min + y_max); }
    double diagonal() const;
    /// Finite and strictly ordered on both axes.
    bool valid() const;

    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// One box per detection; each box carries a score vector over prompt phrases.
struct DetectionResult {
    std::vector<BoundingBox> boxes;
    std::vector<std::vector<double>> scores;
    /// Phrase behind each score column; may be empty.
    std::vector<std::string> phrases;

    /// Index of the box whose best class score is highest; nullopt when empty.
    std::optional<std::size_t> top_index() const;
    void validate() const;
};

/// Scalar summary of a detection, the observation part of a context.
struct DetectionSummary {
    double max_score = 0.0;
    double normalized_entropy = 0.0;
    std::size_t box_count = 0;

    friend bool operator==(const DetectionSummary&, const DetectionSummary&) = default;
};

DetectionSummary summarize(const DetectionResult& det);

/// Normalized Shannon entropy (entropy / ln K) of a score vector; 0 when K <= 1.
double normalized_entropy(const std::vector<double>& scores);

enum class Slot : std::uint8_t { Alias, Color, Texture, Background, Geometry, Lighting, Spatial };

std::string_view slot_name(Slot s);

enum class ActionId : std::uint8_t { Dictionary, Color, Texture, Background, Geometry, Lighting, Spatial };

inline constexpr std::array<ActionId, kActionCount> kAllActions = {
    ActionId::Dictionary, ActionId::Color,    ActionId::Texture, ActionId::Background,
    ActionId::Geometry,   ActionId::Lighting, ActionId::Spatial};

constexpr int action_index(ActionId a) { return static_cast<int>(a); }
ActionId action_from_index(int index);
/// "a1".."a7".
std::string action_label(ActionId a);
std::string_view action_name(ActionId a);
constexpr Slot slot_of(ActionId a) { return static_cast<Slot>(static_cast<std::uint8_t>(a)); }

/// 0 = initial state (no action applied yet); i = last applied action a_i.
class StateId {
public:
    constexpr StateId() = default;
    explicit StateId(int value);
    static constexpr StateId initial() { return StateId{}; }
    static StateId after(ActionId a) { return StateId(action_index(a) + 1); }

    constexpr int value() const { return value_; }
    bool is_initial() const { return value_ == 0; }
    /// The action that produced this state; throws for the initial state.
    ActionId action() const;

    friend bool operator==(const StateId&, const StateId&) = default;

private:
    int value_ = 0;
};

/// Base noun plus one optional attribute phrase per slot.
struct PromptState {
    std::string base_noun;
    std::array<std::optional<std::string>, kSlotCount> slots{};

    const std::optional<std::string>& slot(Slot s) const { return slots[static_cast<std::size_t>(s)]; }
    std::optional<std::string>& slot(Slot s) { return slots[static_cast<std::size_t>(s)]; }
    int filled_count() const;
    /// "<noun>, <phrase>, <phrase>..." in slot order.
    std::string render() const;
    void validate() const;

    friend bool operator==(const PromptState&, const PromptState&) = default;
};

struct VisualContext {
    std::string image_id;
    BoundingBox roi;
    PromptState prompt;
    int step = 0;
    DetectionSummary detection;

    friend bool operator==(const VisualContext&, const VisualContext&) = default;
};

using FeatureVector = std::array<double, kFeatureDim>;

/// Feature layout:
///   [0..7]   one-hot state
///   [8..14]  slot occupancy flags
///   [15]     max detector score
///   [16]     normalized score entropy
///   [17]     box count / 10, clamped to [0,1]
///   [18]     step / H_max
///   [19]     bias (1)
struct WeakUnit {
    StateId state;
    FeatureVector features{};

    friend bool operator==(const WeakUnit&, const WeakUnit&) = default;
};

namespace feature {
inline constexpr int kStateBegin = 0;
inline constexpr int kSlotBegin = 8;
inline constexpr int kMaxScore = 15;
inline constexpr int kEntropy = 16;
inline constexpr int kBoxCount = 17;
inline constexpr int kStep = 18;
inline constexpr int kBias = 19;
}  // namespace feature

/// g(c, a): encodes context plus the applied action (nullopt = initial marker).
WeakUnit make_weak_unit(const VisualContext& c, std::optional<ActionId> a, int h_max = 7);

/// Euclidean distance between two units' features with the state one-hot and
/// the step counter masked out.
double context_distance(const WeakUnit& a, const WeakUnit& b);

struct StepDiagnostics {
    double max_score_before = 0.0;
    double max_score_after = 0.0;
    double entropy_before = 0.0;
    double entropy_after = 0.0;

    friend bool operator==(const StepDiagnostics&, const StepDiagnostics&) = default;
};

struct TrajectoryStep {
    WeakUnit z_from;
    ActionId action = ActionId::Dictionary;
    WeakUnit z_to;
    double reward = 0.0;
    StepDiagnostics diagnostics;

    void validate() const;
    friend bool operator==(const TrajectoryStep&, const TrajectoryStep&) = default;
};

struct Trajectory {
    std::vector<TrajectoryStep> steps;
    /// Set when the detector failed mid-episode; the steps before the failure are kept.
    bool aborted = false;

    /// Mean step reward; 0 for an empty trajectory.
    double mean_reward() const;
    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

using TransitionMatrix = std::array<std::array<double, kStateCount>, kStateCount>;

struct ImageRecord {
    std::string image_id;
    std::vector<Trajectory> trajectories;
    TransitionMatrix transition_posterior{};

    std::size_t step_count() const;
    void validate() const;
    friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

double iou(const BoundingBox& a, const BoundingBox& b);

/// 1 - IoU: larger means the prediction is further from ground truth.
double gt_reward(const BoundingBox& pred, const BoundingBox& gt);

}  // namespace ovod

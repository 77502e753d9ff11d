#include "ovod/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ovod {

double BoundingBox::area() const {
    if (!valid()) return 0.0;
    return width() * height();
}

double BoundingBox::diagonal() const { return std::hypot(width(), height()); }

bool BoundingBox::valid() const {
    return std::isfinite(x_min) && std::isfinite(y_min) && std::isfinite(x_max) &&
           std::isfinite(y_max) && x_min < x_max && y_min < y_max;
}

std::optional<std::size_t> DetectionResult::top_index() const {
    std::optional<std::size_t> best;
    double best_score = -1.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i].empty()) continue;
        const double s = *std::max_element(scores[i].begin(), scores[i].end());
        if (s > best_score) {
            best_score = s;
            best = i;
        }
    }
    return best;
}

void DetectionResult::validate() const {
    if (scores.size() != boxes.size()) throw ValidationError("detection: one score vector per box required");
    for (const auto& v : scores)
        for (double s : v)
            if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("detection: scores must lie in [0,1]");
}

double normalized_entropy(const std::vector<double>& scores) {
    if (scores.size() <= 1) return 0.0;
    const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double s : scores) {
        const double p = s / total;
        if (p > 0.0) h -= p * std::log(p);
    }
    return h / std::log(static_cast<double>(scores.size()));
}

DetectionSummary summarize(const DetectionResult& det) {
    DetectionSummary out;
    out.box_count = det.boxes.size();
    if (auto top = det.top_index()) {
        const auto& s = det.scores[*top];
        out.max_score = *std::max_element(s.begin(), s.end());
        out.normalized_entropy = normalized_entropy(s);
    }
    return out;
}

std::string_view slot_name(Slot s) {
    switch (s) {
        case Slot::Alias: return "alias";
        case Slot::Color: return "color";
        case Slot::Texture: return "texture";
        case Slot::Background: return "background";
        case Slot::Geometry: return "geometry";
        case Slot::Lighting: return "lighting";
        case Slot::Spatial: return "spatial";
    }
    return "?";
}

ActionId action_from_index(int index) {
    if (index < 0 || index >= kActionCount) throw ValidationError("action index out of range");
    return static_cast<ActionId>(index);
}

std::string action_label(ActionId a) { return "a" + std::to_string(action_index(a) + 1); }

std::string_view action_name(ActionId a) {
    switch (a) {
        case ActionId::Dictionary: return "Dictionary";
        case ActionId::Color: return "Color";
        case ActionId::Texture: return "Texture";
        case ActionId::Background: return "Background";
        case ActionId::Geometry: return "Geometry";
        case ActionId::Lighting: return "Lighting";
        case ActionId::Spatial: return "Spatial";
    }
    return "?";
}

StateId::StateId(int value) : value_(value) {
    if (value < 0 || value >= kStateCount) throw ValidationError("state id must lie in [0,7]");
}

ActionId StateId::action() const {
    if (value_ == 0) throw ValidationError("initial state has no action");
    return action_from_index(value_ - 1);
}

int PromptState::filled_count() const {
    return static_cast<int>(std::count_if(slots.begin(), slots.end(), [](const auto& s) { return s.has_value(); }));
}

std::string PromptState::render() const {
    std::string out = base_noun;
    for (const auto& s : slots) {
        if (!s) continue;
        out += ", ";
        out += *s;
    }
    return out;
}

void PromptState::validate() const {
    if (base_noun.empty()) throw ValidationError("prompt: base noun must be nonempty");
    for (const auto& s : slots)
        if (s && s->empty()) throw ValidationError("prompt: filled slot must be a nonempty phrase");
}

WeakUnit make_weak_unit(const VisualContext& c, std::optional<ActionId> a, int h_max) {
    WeakUnit z;
    z.state = a ? StateId::after(*a) : StateId::initial();
    auto& f = z.features;
    f[feature::kStateBegin + z.state.value()] = 1.0;
    for (int i = 0; i < kSlotCount; ++i)
        f[feature::kSlotBegin + i] = c.prompt.slots[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    f[feature::kMaxScore] = c.detection.max_score;
    f[feature::kEntropy] = c.detection.normalized_entropy;
    f[feature::kBoxCount] = std::clamp(static_cast<double>(c.detection.box_count) / 10.0, 0.0, 1.0);
    f[feature::kStep] = h_max > 0 ? static_cast<double>(c.step) / h_max : 0.0;
    f[feature::kBias] = 1.0;
    return z;
}

double context_distance(const WeakUnit& a, const WeakUnit& b) {
    double sq = 0.0;
    for (int i = feature::kSlotBegin; i < kFeatureDim; ++i) {
        if (i == feature::kStep) continue;
        const double d = a.features[i] - b.features[i];
        sq += d * d;
    }
    return std::sqrt(sq);
}

void TrajectoryStep::validate() const {
    if (z_to.state != StateId::after(action)) throw ValidationError("step: successor state must match the action");
    if (!(reward >= 0.0 && reward <= 1.0)) throw ValidationError("step: reward must lie in [0,1]");
}

double Trajectory::mean_reward() const {
    if (steps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& st : steps) s += st.reward;
    return s / static_cast<double>(steps.size());
}

std::size_t ImageRecord::step_count() const {
    std::size_t n = 0;
    for (const auto& t : trajectories) n += t.steps.size();
    return n;
}

void ImageRecord::validate() const {
    for (const auto& row : transition_posterior) {
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0)) throw ValidationError("record: posterior entries must be nonnegative");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("record: posterior rows must sum to 1");
    }
    for (const auto& t : trajectories)
        for (const auto& s : t.steps) s.validate();
}

double iou(const BoundingBox& a, const BoundingBox& b) {
    if (!a.valid() || !b.valid()) return 0.0;
    const double ix = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double iy = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    const double inter = ix * iy;
    const double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return std::clamp(inter / uni, 0.0, 1.0);
}

double gt_reward(const BoundingBox& pred, const BoundingBox& gt) { return 1.0 - iou(pred, gt); }

}  // namespace ovod

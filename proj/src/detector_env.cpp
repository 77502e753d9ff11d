#include "ovod/detector_env.hpp"

#include <algorithm>
#include <cmath>

#include "ovod/random.hpp"

namespace ovod {

namespace {

bool in_vocab(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

struct ColorDef {
    double hue;
    double saturation;
    double value;  // only used for achromatic colours
    bool achromatic;
};

ColorDef color_def(const std::string& name) {
    static const std::vector<std::pair<std::string, double>> hues = {
        {"red", 0.0},   {"orange", 30.0}, {"yellow", 60.0}, {"green", 120.0},
        {"cyan", 180.0}, {"blue", 240.0},  {"purple", 285.0}, {"pink", 330.0}};
    for (const auto& [n, h] : hues)
        if (n == name) return {h, 0.85, 0.0, false};
    if (name == "white") return {0.0, 0.0, 1.0, true};
    if (name == "gray") return {0.0, 0.0, 0.6, true};
    return {0.0, 0.0, 0.15, true};  // black
}

struct LightingDef {
    double base_value;
    bool shadow;
};

LightingDef lighting_def(const std::string& name) {
    if (name == "underexposed") return {0.2, false};
    if (name == "overexposed") return {1.0, false};
    if (name == "shadowed") return {0.75, true};
    return {0.75, false};
}

constexpr double kShadowFactor = 0.15;
constexpr int kPatternBlock = 4;
constexpr int kClutterTile = 4;

std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        z += out[i];
    }
    for (auto& v : out) v /= z;
    return out;
}

BoundingBox clip_box(BoundingBox b, int width, int height) {
    if (b.x_min > b.x_max) std::swap(b.x_min, b.x_max);
    if (b.y_min > b.y_max) std::swap(b.y_min, b.y_max);
    auto fix_axis = [](double& lo, double& hi, double extent) {
        constexpr double kMin = 1.0;
        if (hi - lo < kMin) {
            const double c = 0.5 * (lo + hi);
            lo = c - 0.5 * kMin;
            hi = c + 0.5 * kMin;
        }
        lo = std::clamp(lo, 0.0, extent - kMin);
        hi = std::clamp(hi, lo + kMin, extent);
    };
    fix_axis(b.x_min, b.x_max, width);
    fix_axis(b.y_min, b.y_max, height);
    return b;
}

}  // namespace

void SceneSpec::validate() const {
    if (image_id.empty()) throw ValidationError("scene: image_id must be nonempty");
    if (noun.empty()) throw ValidationError("scene: noun must be nonempty");
    if (width < 1 || height < 1) throw ValidationError("scene: canvas must be at least 1x1");
    if (!in_vocab(vocab::kColors, true_color)) throw ValidationError("scene: unknown color '" + true_color + "'");
    if (!in_vocab(vocab::kTextures, true_texture))
        throw ValidationError("scene: unknown texture '" + true_texture + "'");
    if (!in_vocab(vocab::kLighting, true_lighting))
        throw ValidationError("scene: unknown lighting '" + true_lighting + "'");
    if (!in_vocab(vocab::kPositions, true_position))
        throw ValidationError("scene: unknown position '" + true_position + "'");
    const auto space = true_geometry.find(' ');
    if (space == std::string::npos || !in_vocab(vocab::kAspects, true_geometry.substr(0, space)) ||
        !in_vocab(vocab::kScales, true_geometry.substr(space + 1)))
        throw ValidationError("scene: unknown geometry '" + true_geometry + "'");
    if (!(background_clutter >= 0.0 && background_clutter <= 1.0))
        throw ValidationError("scene: clutter must lie in [0,1]");
    if (!gt_box.valid() || gt_box.x_min < 0.0 || gt_box.y_min < 0.0 || gt_box.x_max > width ||
        gt_box.y_max > height)
        throw ValidationError("scene: gt_box must be a valid box inside the canvas");
}

Scene gen_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(derive_seed(spec.seed, spec.image_id, 0, 3));
    const int W = spec.width, H = spec.height;

    const Rgb bg = hsv_to_rgb({rng.uniform(0.0, 360.0), 0.08, 0.35});
    RasterImage img(W, H, bg);

    // Busy tiles hold a 2-px high-contrast checkerboard.
    for (int ty = 0; ty < H; ty += kClutterTile)
        for (int tx = 0; tx < W; tx += kClutterTile) {
            const double draw = rng.uniform();
            const double hue = rng.uniform(0.0, 360.0);
            if (draw >= spec.background_clutter) continue;
            const Rgb dark = hsv_to_rgb({hue, 0.1, 0.1});
            const Rgb light = hsv_to_rgb({hue, 0.1, 0.9});
            for (int y = ty; y < std::min(H, ty + kClutterTile); ++y)
                for (int x = tx; x < std::min(W, tx + kClutterTile); ++x)
                    img.at(x, y) = ((x / 2 + y / 2) % 2 == 0) ? dark : light;
        }

    const ColorDef color = color_def(spec.true_color);
    const LightingDef light = lighting_def(spec.true_lighting);
    const double base_v = color.achromatic ? color.value : light.base_value;
    double amplitude = 0.5;
    if (color.achromatic)
        amplitude = 0.12;
    else if (spec.true_lighting == "overexposed")
        amplitude = 0.16;

    const PixelRect r = pixel_region(spec.gt_box, W, H);
    const int mid_y = r.y0 + r.height() / 2;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x) {
            const int lx = x - r.x0, ly = y - r.y0;
            double f = 1.0;
            if (spec.true_texture == "striped")
                f = (lx % 2 == 0) ? 1.0 : 1.0 - amplitude;
            else if (spec.true_texture == "patterned")
                f = ((lx / kPatternBlock + ly / kPatternBlock) % 2 == 0) ? 1.0 : 1.0 - amplitude;
            else if (spec.true_texture == "rough")
                f = 1.0 - amplitude * rng.uniform();
            double v = base_v * f;
            if (light.shadow && y >= mid_y) v *= kShadowFactor;
            img.at(x, y) = hsv_to_rgb({color.hue, color.saturation, v});
        }
    return {std::move(img), spec.gt_box};
}

SceneSpec random_scene_spec(const std::string& image_id, const std::vector<std::string>& nouns, std::uint64_t seed,
                            int width, int height) {
    if (nouns.empty()) throw ValidationError("random_scene_spec: noun list is empty");
    Rng rng(derive_seed(seed, image_id, 0, 4));
    auto pick = [&](const std::vector<std::string>& v) { return v[rng.below(v.size())]; };
    auto range = [&](double lo, double hi) { return std::floor(rng.uniform(lo, hi + 1.0)); };

    SceneSpec s;
    s.image_id = image_id;
    s.width = width;
    s.height = height;
    s.seed = splitmix64(seed ^ fnv1a(image_id));
    s.noun = pick(nouns);

    // Achromatic objects only read correctly under neutral light, so they are
    // limited to gray + well-lit.
    static const std::vector<std::string> palette = {"red",  "orange", "yellow", "green", "cyan",
                                                     "blue", "purple", "pink",   "gray"};
    s.true_color = pick(palette);
    s.true_texture = pick(vocab::kTextures);
    s.true_lighting = s.true_color == "gray" ? "well-lit" : pick(vocab::kLighting);
    s.background_clutter = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.04) : rng.uniform(0.4, 1.0);

    // Box sizes are fractions of a 96x96 canvas chosen to land inside each class.
    const std::string aspect = pick(vocab::kAspects);
    const std::string scale = pick(vocab::kScales);
    double bw = 0, bh = 0;
    const double k = std::sqrt(static_cast<double>(width) * height) / 96.0;
    if (scale == "tiny") {
        if (aspect == "square") bw = bh = range(9, 12);
        else { bw = range(7, 8); bh = range(14, 20); }
    } else if (scale == "medium") {
        if (aspect == "square") bw = bh = range(30, 45);
        else { bw = range(20, 26); bh = range(42, 56); }
    } else {
        if (aspect == "square") bw = bh = range(64, 72);
        else { bw = range(46, 52); bh = range(84, 92); }
    }
    if (aspect == "wide") std::swap(bw, bh);
    bw = std::min(std::round(bw * k), static_cast<double>(width));
    bh = std::min(std::round(bh * k), static_cast<double>(height));

    // Positions whose grid cell can hold the box centre strictly inside it.
    auto feasible = [](double extent, double size, int cell) -> std::pair<double, double> {
        const double lo = std::max(size / 2.0, cell * extent / 3.0 + 1.0);
        const double hi = std::min(extent - size / 2.0, (cell + 1) * extent / 3.0 - 1.0);
        return {lo, hi};
    };
    std::vector<int> cells;
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 3; ++col) {
            auto [xl, xh] = feasible(width, bw, col);
            auto [yl, yh] = feasible(height, bh, row);
            if (xl <= xh && yl <= yh) cells.push_back(row * 3 + col);
        }
    if (cells.empty()) throw ValidationError("random_scene_spec: canvas too small for the chosen box");
    const int cell = cells[rng.below(cells.size())];
    auto [xl, xh] = feasible(width, bw, cell % 3);
    auto [yl, yh] = feasible(height, bh, cell / 3);
    const double cx = rng.uniform(xl, xh);
    const double cy = rng.uniform(yl, yh);
    const double x0 = std::clamp(std::round(cx - bw / 2.0), 0.0, width - bw);
    const double y0 = std::clamp(std::round(cy - bh / 2.0), 0.0, height - bh);
    s.gt_box = {x0, y0, x0 + bw, y0 + bh};

    // Derive the labels from the final integer box so they agree with the operators.
    const auto geom = act_geometry(s.gt_box, width, height);
    s.true_geometry = geom.substr(0, geom.size() - std::string(" shaped").size());
    const auto pos = act_spatial(s.gt_box, width, height);
    s.true_position = pos.substr(4, pos.size() - 4 - std::string(" object").size());
    s.validate();
    return s;
}

std::array<std::optional<std::string>, kSlotCount> expected_slots(const SceneSpec& spec, const Lexicon& lex,
                                                                  const ActionConfig& cfg) {
    std::array<std::optional<std::string>, kSlotCount> out{};
    if (auto alias = dictionary_alias(spec.noun, lex)) out[0] = alias_phrase(*alias);
    out[1] = color_phrase(spec.true_color);
    out[2] = texture_phrase(spec.true_texture);
    out[3] = background_phrase(spec.background_clutter > cfg.clutter_tau);
    out[4] = spec.true_geometry + " shaped";
    out[5] = lighting_phrase(spec.true_lighting);
    out[6] = spatial_phrase(spec.true_position);
    return out;
}

double match_score(const PromptState& prompt, const SceneSpec& spec, const Lexicon& lex, const ActionConfig& cfg) {
    const auto expected = expected_slots(spec, lex, cfg);
    int matches = 0;
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (expected[i] && prompt.slots[i] && *prompt.slots[i] == *expected[i]) ++matches;
    return matches / static_cast<double>(kSlotCount);
}

DetectionResult mock_detect(const RasterImage& image, const PromptState& prompt, const SceneSpec& spec,
                            std::uint64_t noise_seed, const Lexicon& lex, const ActionConfig& cfg) {
    const double m = match_score(prompt, spec, lex, cfg);
    const double sigma = 0.25 * spec.gt_box.diagonal() * (1.0 - m);

    // One noise draw per image: the prompt only scales it, so a better prompt
    // never localises worse on the same image.
    Rng jitter(derive_seed(noise_seed, spec.image_id, 0, 1));
    BoundingBox box = spec.gt_box;
    box.x_min += sigma * jitter.normal();
    box.y_min += sigma * jitter.normal();
    box.x_max += sigma * jitter.normal();
    box.y_max += sigma * jitter.normal();
    if (sigma > 0.0) box = clip_box(box, image.width(), image.height());

    // Distractor confidences belong to the image, not the call.
    Rng distract(derive_seed(noise_seed, spec.image_id, 0, 2));
    std::vector<double> logits = {2.0 * m};
    for (std::size_t i = 0; i < kDistractorPhrases.size(); ++i) logits.push_back(distract.uniform());

    DetectionResult det;
    det.boxes.push_back(box);
    det.scores.push_back(softmax(logits));
    det.phrases.push_back(prompt.render());
    for (const auto& p : kDistractorPhrases) det.phrases.push_back(p);
    return det;
}

double uncertainty_reduction(const std::vector<double>& before, const std::vector<double>& after) {
    if (before.empty() || after.empty()) throw ValidationError("uncertainty_reduction: empty score vector");
    const double u_before = normalized_entropy(before);
    const double u_after = normalized_entropy(after);
    const double max_before = *std::max_element(before.begin(), before.end());
    const double max_after = *std::max_element(after.begin(), after.end());
    return std::clamp(0.5 + 0.5 * (u_before - u_after) + 0.5 * (max_after - max_before), 0.0, 1.0);
}

double uncertainty_reduction(const DetectionResult& before, const DetectionResult& after) {
    const auto b = before.top_index();
    const auto a = after.top_index();
    if (!b || !a) throw ValidationError("uncertainty_reduction: detection without boxes");
    return uncertainty_reduction(before.scores[*b], after.scores[*a]);
}

double step_reward(const BoundingBox& pred, const std::optional<BoundingBox>& gt, const std::vector<double>& before,
                   const std::vector<double>& after, double w_gt) {
    if (!(w_gt >= 0.0 && w_gt <= 1.0)) throw ValidationError("step_reward: w_gt must lie in [0,1]");
    const double ur = uncertainty_reduction(before, after);
    if (!gt) return ur;
    return std::clamp(w_gt * iou(pred, *gt) + (1.0 - w_gt) * ur, 0.0, 1.0);
}

}  // namespace ovod

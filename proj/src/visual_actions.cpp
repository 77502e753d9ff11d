#include "ovod/visual_actions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "ovod/random.hpp"

namespace ovod {

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& field) {
    std::vector<std::string> out;
    if (trim(field).empty()) return out;
    for (auto& part : split(field, '|')) {
        auto t = trim(part);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::string lowercase(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

struct Point3 {
    double x, y, z;
};

Point3 embed(const Hsv& p) {
    const double rad = p.h * kPi / 180.0;
    return {p.s * std::cos(rad), p.s * std::sin(rad), p.v};
}

Hsv unembed(const Point3& q) {
    Hsv out;
    out.s = std::hypot(q.x, q.y);
    double h = out.s > 1e-12 ? std::atan2(q.y, q.x) * 180.0 / kPi : 0.0;
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
    out.h = h;
    out.v = q.z;
    return out;
}

double dist2(const Point3& a, const Point3& b) {
    const double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
    return dx * dx + dy * dy + dz * dz;
}

double region_gray(const RasterImage& img, int x, int y) {
    x = std::clamp(x, 0, img.width() - 1);
    y = std::clamp(y, 0, img.height() - 1);
    return gray_level(img.at(x, y));
}

}  // namespace

Lexicon Lexicon::parse(std::istream& in) {
    Lexicon lex;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        auto cols = split(line, '\t');
        if (cols.size() < 3 || cols.size() > 4)
            throw ValidationError("lexicon line " + std::to_string(line_no) + ": expected 3 or 4 tab-separated columns");
        LexiconEntry e;
        e.synonyms = split_list(cols[1]);
        e.hypernyms = split_list(cols[2]);
        for (auto& s : e.synonyms) s = lowercase(s);
        for (auto& s : e.hypernyms) s = lowercase(s);
        const std::size_t n = e.synonyms.size() + e.hypernyms.size();
        if (cols.size() == 4 && !trim(cols[3]).empty()) {
            const auto flags = split_list(cols[3]);
            if (flags.size() != n)
                throw ValidationError("lexicon line " + std::to_string(line_no) + ": visual flags must align with candidates");
            for (const auto& f : flags) {
                if (f != "0" && f != "1")
                    throw ValidationError("lexicon line " + std::to_string(line_no) + ": visual flags must be 0 or 1");
                e.visual.push_back(f == "1");
            }
        } else {
            e.visual.assign(n, true);
        }
        lex.add(lowercase(trim(cols[0])), std::move(e));
    }
    return lex;
}

Lexicon Lexicon::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open lexicon: " + path);
    return parse(in);
}

void Lexicon::add(std::string term, LexiconEntry entry) {
    if (term.empty()) throw ValidationError("lexicon: empty term");
    if (entry.visual.size() != entry.synonyms.size() + entry.hypernyms.size())
        throw ValidationError("lexicon: visual flags must align with candidates");
    entries_[std::move(term)] = std::move(entry);
}

const LexiconEntry* Lexicon::find(const std::string& term) const {
    auto it = entries_.find(lowercase(term));
    return it == entries_.end() ? nullptr : &it->second;
}

std::vector<Cluster> kmeans_hsv(std::span<const Hsv> pixels, int k, std::uint64_t seed) {
    if (pixels.empty()) throw ValidationError("kmeans: no pixels");
    if (k < 1) throw ValidationError("kmeans: k must be at least 1");

    std::vector<Point3> pts;
    pts.reserve(pixels.size());
    for (const auto& p : pixels) pts.push_back(embed(p));
    const std::size_t n = pts.size();
    const auto kk = static_cast<std::size_t>(k);

    // k-means++ seeding
    Rng rng(seed);
    std::vector<Point3> centers;
    centers.reserve(kk);
    centers.push_back(pts[rng.below(n)]);
    std::vector<double> d2(n);
    while (centers.size() < kk) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : centers) best = std::min(best, dist2(pts[i], c));
            d2[i] = best;
            total += best;
        }
        if (total <= 0.0) {
            centers.push_back(pts[rng.below(n)]);
            continue;
        }
        double target = rng.uniform() * total;
        std::size_t pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            target -= d2[i];
            if (target < 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(pts[pick]);
    }

    std::vector<std::size_t> assign(n, kk);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double bd = dist2(pts[i], centers[0]);
            for (std::size_t c = 1; c < kk; ++c) {
                const double d = dist2(pts[i], centers[c]);
                if (d < bd) {
                    bd = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<Point3> sum(kk, {0, 0, 0});
        std::vector<std::size_t> cnt(kk, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& s = sum[assign[i]];
            s.x += pts[i].x;
            s.y += pts[i].y;
            s.z += pts[i].z;
            ++cnt[assign[i]];
        }
        for (std::size_t c = 0; c < kk; ++c) {
            if (cnt[c] == 0) continue;  // empty cluster keeps its centre
            const double inv = 1.0 / static_cast<double>(cnt[c]);
            centers[c] = {sum[c].x * inv, sum[c].y * inv, sum[c].z * inv};
        }
    }

    std::vector<Cluster> out(kk);
    for (std::size_t c = 0; c < kk; ++c) out[c].centroid = unembed(centers[c]);
    for (std::size_t i = 0; i < n; ++i) ++out[assign[i]].count;
    return out;
}

std::size_t largest_cluster(const std::vector<Cluster>& clusters) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < clusters.size(); ++i)
        if (clusters[i].count > clusters[best].count) best = i;
    return best;
}

std::string color_name(const Hsv& hsv, const ActionConfig& cfg) {
    if (hsv.s < cfg.achromatic_saturation) {
        if (hsv.v > cfg.white_value) return "white";
        if (hsv.v < cfg.black_value) return "black";
        return "gray";
    }
    const double h = hsv.h;
    if (h >= 345.0 || h < 15.0) return "red";
    if (h < 45.0) return "orange";
    if (h < 75.0) return "yellow";
    if (h < 165.0) return "green";
    if (h < 195.0) return "cyan";
    if (h < 270.0) return "blue";
    if (h < 315.0) return "purple";
    return "pink";
}

TextureFeatures texture_features(const RasterImage& img, const PixelRect& r) {
    TextureFeatures f;
    if (r.width() < 3 || r.height() < 3) return f;
    const int w = r.width(), h = r.height();

    std::vector<double> gray(static_cast<std::size_t>(w) * h);
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double g = gray_level(img.at(r.x0 + x, r.y0 + y));
            gray[static_cast<std::size_t>(y) * w + x] = g;
            mn = std::min(mn, g);
            mx = std::max(mx, g);
        }

    // 8 gray levels after min-max normalization within the ROI
    std::vector<int> level(gray.size(), 0);
    if (mx > mn)
        for (std::size_t i = 0; i < gray.size(); ++i)
            level[i] = std::min(7, static_cast<int>(std::floor((gray[i] - mn) / (mx - mn) * 8.0)));

    auto lv = [&](int x, int y) { return level[static_cast<std::size_t>(y) * w + x]; };
    double c_h = 0.0, hom = 0.0, c_v = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) {
            const int d = lv(x, y) - lv(x + 1, y);
            c_h += d * d;
            hom += 1.0 / (1.0 + std::abs(d));
        }
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int d = lv(x, y) - lv(x, y + 1);
            c_v += d * d;
        }
    const double pairs_h = static_cast<double>(h) * (w - 1);
    const double pairs_v = static_cast<double>(h - 1) * w;
    f.contrast = c_h / pairs_h / 49.0;
    f.homogeneity = hom / pairs_h;
    f.contrast_vertical = c_v / pairs_v / 49.0;

    static constexpr int dx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
    static constexpr int dy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};
    auto gv = [&](int x, int y) { return gray[static_cast<std::size_t>(y) * w + x]; };
    int uniform = 0, total = 0;
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            const double c = gv(x, y);
            int bits[8];
            for (int k = 0; k < 8; ++k) bits[k] = gv(x + dx[k], y + dy[k]) >= c ? 1 : 0;
            int transitions = 0;
            for (int k = 0; k < 8; ++k) transitions += bits[k] != bits[(k + 1) % 8];
            uniform += transitions <= 2;
            ++total;
        }
    f.lbp_uniform_fraction = total > 0 ? static_cast<double>(uniform) / total : 0.0;
    return f;
}

std::string texture_name(const TextureFeatures& f, const ActionConfig& cfg) {
    if (f.contrast < cfg.smooth_contrast) return "smooth";
    const double hi = std::max(f.contrast, f.contrast_vertical);
    const double lo = std::min(f.contrast, f.contrast_vertical);
    if (lo <= 0.0 || hi / lo > cfg.stripe_ratio) return "striped";
    if (f.lbp_uniform_fraction > cfg.pattern_uniform_fraction) return "patterned";
    return "rough";
}

double background_clutter(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg) {
    const PixelRect fg = pixel_region(roi, img.width(), img.height());
    std::size_t edges = 0, count = 0;
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
            if (fg.contains(x, y)) continue;
            ++count;
            const double gx = (region_gray(img, x + 1, y - 1) + 2 * region_gray(img, x + 1, y) +
                               region_gray(img, x + 1, y + 1)) -
                              (region_gray(img, x - 1, y - 1) + 2 * region_gray(img, x - 1, y) +
                               region_gray(img, x - 1, y + 1));
            const double gy = (region_gray(img, x - 1, y + 1) + 2 * region_gray(img, x, y + 1) +
                               region_gray(img, x + 1, y + 1)) -
                              (region_gray(img, x - 1, y - 1) + 2 * region_gray(img, x, y - 1) +
                               region_gray(img, x + 1, y - 1));
            if (std::hypot(gx, gy) > cfg.sobel_threshold) ++edges;
        }
    return count == 0 ? 0.0 : static_cast<double>(edges) / static_cast<double>(count);
}

LightingStats value_channel_stats(std::span<const Rgb> pixels) {
    LightingStats st;
    if (pixels.empty()) return st;
    double sum = 0.0, sq = 0.0;
    for (const auto& p : pixels) {
        const double v = std::max({p.r, p.g, p.b}) / 255.0;
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(pixels.size());
    st.mean = sum / n;
    st.variance = std::max(0.0, sq / n - st.mean * st.mean);
    return st;
}

std::string color_phrase(const std::string& name) { return name + " color"; }
std::string texture_phrase(const std::string& name) { return name + " texture"; }
std::string background_phrase(bool cluttered) {
    return std::string("object against ") + (cluttered ? "cluttered" : "clean background");
}
std::string geometry_phrase(const std::string& aspect, const std::string& scale) {
    return aspect + " " + scale + " shaped";
}
std::string lighting_phrase(const std::string& cond) { return cond + " lighting"; }
std::string spatial_phrase(const std::string& position) { return "the " + position + " object"; }
std::string alias_phrase(const std::string& token) { return "a " + token + " object"; }

std::string act_color(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg) {
    const auto px = region_pixels(img, pixel_region(roi, img.width(), img.height()));
    if (px.empty()) throw ValidationError("act_color: empty ROI");
    std::vector<Hsv> hsv;
    hsv.reserve(px.size());
    for (const auto& p : px) hsv.push_back(rgb_to_hsv(p));
    const auto clusters = kmeans_hsv(hsv, cfg.kmeans_k, cfg.kmeans_seed);
    return color_phrase(color_name(clusters[largest_cluster(clusters)].centroid, cfg));
}

std::optional<std::string> act_texture(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg) {
    const auto r = pixel_region(roi, img.width(), img.height());
    if (r.width() < 3 || r.height() < 3) return std::nullopt;
    return texture_phrase(texture_name(texture_features(img, r), cfg));
}

std::string act_background(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg) {
    return background_phrase(background_clutter(img, roi, cfg) > cfg.clutter_tau);
}

std::string act_geometry(const BoundingBox& roi, int width, int height, const ActionConfig& cfg) {
    const double ar = roi.width() / roi.height();
    const double scale = roi.area() / (static_cast<double>(width) * height);
    const char* aspect = ar < cfg.tall_ratio ? "tall" : (ar > cfg.wide_ratio ? "wide" : "square");
    const char* size = scale < cfg.tiny_scale ? "tiny" : (scale > cfg.large_scale ? "large" : "medium");
    return geometry_phrase(aspect, size);
}

std::string act_lighting(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg) {
    const auto px = region_pixels(img, pixel_region(roi, img.width(), img.height()));
    const auto st = value_channel_stats(px);
    const char* cond = "well-lit";
    if (st.mean < cfg.dark_mean)
        cond = "underexposed";
    else if (st.mean > cfg.bright_mean)
        cond = "overexposed";
    else if (st.variance > cfg.shadow_variance)
        cond = "shadowed";
    return lighting_phrase(cond);
}

std::string act_spatial(const BoundingBox& roi, int width, int height) {
    auto cell = [](double c, int extent) {
        if (c * 3.0 <= extent) return 0;
        if (c * 3.0 <= 2.0 * extent) return 1;
        return 2;
    };
    const int col = cell(roi.center_x(), width);
    const int row = cell(roi.center_y(), height);
    return spatial_phrase(vocab::kPositions[static_cast<std::size_t>(row * 3 + col)]);
}

std::optional<std::string> dictionary_alias(const std::string& noun, const Lexicon& lex) {
    const auto* e = lex.find(noun);
    if (!e) return std::nullopt;
    const std::string base = lowercase(noun);
    std::optional<std::string> best;
    std::size_t i = 0;
    auto consider = [&](const std::string& cand) {
        const bool visual = e->visual[i++];
        if (!visual || cand == base) return;
        if (!best || cand < *best) best = cand;
    };
    for (const auto& s : e->synonyms) consider(s);
    for (const auto& s : e->hypernyms) consider(s);
    return best;
}

std::optional<PromptState> act_dictionary(const PromptState& prompt, const Lexicon& lex) {
    auto token = dictionary_alias(prompt.base_noun, lex);
    if (!token) return std::nullopt;
    PromptState out = prompt;
    out.slot(Slot::Alias) = alias_phrase(*token);
    return out;
}

std::optional<std::string> action_phrase(ActionId a, const VisualContext& c, const RasterImage& img,
                                         const Lexicon& lex, const ActionConfig& cfg) {
    if (a == ActionId::Dictionary) {
        auto token = dictionary_alias(c.prompt.base_noun, lex);
        if (!token) return std::nullopt;
        return alias_phrase(*token);
    }
    if (!c.roi.valid()) return std::nullopt;
    const auto region = pixel_region(c.roi, img.width(), img.height());
    if (region.empty()) return std::nullopt;
    switch (a) {
        case ActionId::Color: return act_color(img, c.roi, cfg);
        case ActionId::Texture: return act_texture(img, c.roi, cfg);
        case ActionId::Background: return act_background(img, c.roi, cfg);
        case ActionId::Geometry: return act_geometry(c.roi, img.width(), img.height(), cfg);
        case ActionId::Lighting: return act_lighting(img, c.roi, cfg);
        case ActionId::Spatial: return act_spatial(c.roi, img.width(), img.height());
        case ActionId::Dictionary: break;
    }
    return std::nullopt;
}

const std::optional<std::string>& PhraseCache::get(ActionId a, const VisualContext& c) {
    Key key{action_index(a), c.prompt.base_noun, c.roi.x_min, c.roi.y_min, c.roi.x_max, c.roi.y_max};
    auto it = memo_.find(key);
    if (it == memo_.end()) it = memo_.emplace(std::move(key), action_phrase(a, c, img_, lex_, cfg_)).first;
    return it->second;
}

VisualContext apply_phrase(const VisualContext& c, ActionId a, const std::optional<std::string>& phrase) {
    VisualContext out = c;
    out.step = c.step + 1;
    if (phrase) out.prompt.slot(slot_of(a)) = *phrase;
    return out;
}

VisualContext apply_action(const VisualContext& c, ActionId a, const RasterImage& img, const Lexicon& lex,
                           const ActionConfig& cfg) {
    return apply_phrase(c, a, action_phrase(a, c, img, lex, cfg));
}

}  // namespace ovod

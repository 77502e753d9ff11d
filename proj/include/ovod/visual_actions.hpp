#pragma once

// The seven visual operators a1..a7. Each reads the ROI (or the prompt, for
// the dictionary action) and yields a short attribute phrase for one slot.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ovod/core.hpp"
#include "ovod/raster.hpp"

namespace ovod {

struct LexiconEntry {
    std::vector<std::string> synonyms;
    std::vector<std::string> hypernyms;
    /// Aligned to synonyms followed by hypernyms.
    std::vector<bool> visual;
};

/// Offline stand-in for WordNet lookups.
class Lexicon {
public:
    Lexicon() = default;

    /// Parses `term<TAB>syn|syn<TAB>hyper|hyper<TAB>0|1|...`; `#` starts a comment.
    static Lexicon parse(std::istream& in);
    static Lexicon load(const std::string& path);

    void add(std::string term, LexiconEntry entry);
    const LexiconEntry* find(const std::string& term) const;
    const std::map<std::string, LexiconEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, LexiconEntry> entries_;
};

/// Thresholds for every operator. Defaults are the documented values.
struct ActionConfig {
    // a2
    int kmeans_k = 3;
    std::uint64_t kmeans_seed = 7;
    double achromatic_saturation = 0.15;
    double white_value = 0.85;
    double black_value = 0.25;
    // a3
    double smooth_contrast = 0.05;
    double stripe_ratio = 3.0;
    double pattern_uniform_fraction = 0.8;
    // a4
    double clutter_tau = 0.15;
    double sobel_threshold = 64.0;
    // a5
    double tall_ratio = 0.67;
    double wide_ratio = 1.5;
    double tiny_scale = 0.02;
    double large_scale = 0.4;
    // a6
    double dark_mean = 0.25;
    double bright_mean = 0.85;
    double shadow_variance = 0.05;
};

struct Cluster {
    Hsv centroid;
    std::size_t count = 0;
};

/// Lloyd's k-means with seeded k-means++ initialization. Pixels are embedded
/// as (s cos h, s sin h, v) so hue wraps correctly.
std::vector<Cluster> kmeans_hsv(std::span<const Hsv> pixels, int k, std::uint64_t seed);

/// Index of the cluster with the most members (lowest index on ties).
std::size_t largest_cluster(const std::vector<Cluster>& clusters);

std::string color_name(const Hsv& hsv, const ActionConfig& cfg = {});

struct TextureFeatures {
    double contrast = 0.0;           ///< GLCM contrast at offset (1,0), normalized to [0,1]
    double contrast_vertical = 0.0;  ///< GLCM contrast at offset (0,1)
    double homogeneity = 0.0;        ///< GLCM homogeneity at offset (1,0)
    double lbp_uniform_fraction = 0.0;
};

TextureFeatures texture_features(const RasterImage& img, const PixelRect& r);
std::string texture_name(const TextureFeatures& f, const ActionConfig& cfg = {});

/// Fraction of background pixels whose Sobel magnitude exceeds the threshold;
/// 0 when the ROI covers the image.
double background_clutter(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg = {});

struct LightingStats {
    double mean = 0.0;
    double variance = 0.0;
};

LightingStats value_channel_stats(std::span<const Rgb> pixels);

std::string act_color(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg = {});
/// nullopt when the ROI is smaller than 3x3.
std::optional<std::string> act_texture(const RasterImage& img, const BoundingBox& roi,
                                       const ActionConfig& cfg = {});
std::string act_background(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg = {});
std::string act_geometry(const BoundingBox& roi, int width, int height, const ActionConfig& cfg = {});
std::string act_lighting(const RasterImage& img, const BoundingBox& roi, const ActionConfig& cfg = {});
std::string act_spatial(const BoundingBox& roi, int width, int height);

/// The alias token for a noun: lexicographically smallest visual candidate that
/// differs from the noun. nullopt when the noun is unknown or has no candidate.
std::optional<std::string> dictionary_alias(const std::string& noun, const Lexicon& lex);
/// nullopt signals a skipped action.
std::optional<PromptState> act_dictionary(const PromptState& prompt, const Lexicon& lex);

/// Phrase the action would write into its slot; nullopt when skipped.
std::optional<std::string> action_phrase(ActionId a, const VisualContext& c, const RasterImage& img,
                                         const Lexicon& lex, const ActionConfig& cfg = {});

/// f(c, a): fills the action's slot and advances the step. A skipped action
/// leaves everything but the step unchanged.
VisualContext apply_action(const VisualContext& c, ActionId a, const RasterImage& img, const Lexicon& lex,
                           const ActionConfig& cfg = {});

/// Same as apply_action with a precomputed phrase (nullopt = skipped).
VisualContext apply_phrase(const VisualContext& c, ActionId a, const std::optional<std::string>& phrase);

/// Memoises action_phrase per (action, ROI) for one image and lexicon. The
/// operators are pure, so a hit returns exactly what a fresh call would.
class PhraseCache {
public:
    PhraseCache(const RasterImage& img, const Lexicon& lex, const ActionConfig& cfg = {})
        : img_(img), lex_(lex), cfg_(cfg) {}
    const std::optional<std::string>& get(ActionId a, const VisualContext& c);

private:
    using Key = std::tuple<int, std::string, double, double, double, double>;
    const RasterImage& img_;
    const Lexicon& lex_;
    ActionConfig cfg_;
    std::map<Key, std::optional<std::string>> memo_;
};

// Phrase vocabularies.
namespace vocab {
inline const std::vector<std::string> kColors = {"red",  "orange", "yellow", "green", "cyan", "blue",
                                                 "purple", "pink", "white",  "gray",  "black"};
inline const std::vector<std::string> kTextures = {"smooth", "rough", "patterned", "striped"};
inline const std::vector<std::string> kLighting = {"underexposed", "overexposed", "shadowed", "well-lit"};
inline const std::vector<std::string> kPositions = {"top-left",    "top",    "top-right",
                                                    "left",        "center", "right",
                                                    "bottom-left", "bottom", "bottom-right"};
inline const std::vector<std::string> kAspects = {"tall", "wide", "square"};
inline const std::vector<std::string> kScales = {"tiny", "medium", "large"};
}  // namespace vocab

std::string color_phrase(const std::string& name);
std::string texture_phrase(const std::string& name);
/// `cluttered` selects the cluttered tag, otherwise the clean one.
std::string background_phrase(bool cluttered);
std::string geometry_phrase(const std::string& aspect, const std::string& scale);
std::string lighting_phrase(const std::string& cond);
std::string spatial_phrase(const std::string& position);
std::string alias_phrase(const std::string& token);

}  // namespace ovod

#pragma once

// Dual-head reward-policy model: a tanh MLP over weak-unit features with a
// softmax policy head over the seven successor actions and a sigmoid reward
// head. Trained offline on bandit trajectories.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ovod/bandit.hpp"
#include "ovod/core.hpp"
#include "ovod/detector_env.hpp"
#include "ovod/visual_actions.hpp"

namespace ovod {

struct RmDims {
    int input = kFeatureDim;
    int hidden = 64;
    int actions = kActionCount;

    friend bool operator==(const RmDims&, const RmDims&) = default;
};

template <class T>
struct RmParams {
    using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

    RmDims dims;
    Matrix w1;  ///< hidden x input
    Vector b1;
    Matrix w2;  ///< hidden x hidden
    Vector b2;
    Matrix wp;  ///< actions x hidden
    Vector bp;
    Matrix wr;  ///< 1 x hidden
    Vector br;  ///< size 1

    static RmParams zeros(RmDims d = {}) {
        if (d.input != kFeatureDim || d.actions != kActionCount || d.hidden < 1)
            throw ValidationError("rm: unsupported dimensions");
        RmParams p;
        p.dims = d;
        p.w1 = Matrix::Zero(d.hidden, d.input);
        p.b1 = Vector::Zero(d.hidden);
        p.w2 = Matrix::Zero(d.hidden, d.hidden);
        p.b2 = Vector::Zero(d.hidden);
        p.wp = Matrix::Zero(d.actions, d.hidden);
        p.bp = Vector::Zero(d.actions);
        p.wr = Matrix::Zero(1, d.hidden);
        p.br = Vector::Zero(1);
        return p;
    }

    /// Visits every parameter in file order: each layer's weights row-major, then its biases.
    template <class F>
    void for_each(F&& f) {
        auto mat = [&](Matrix& m) {
            for (Eigen::Index r = 0; r < m.rows(); ++r)
                for (Eigen::Index c = 0; c < m.cols(); ++c) f(m(r, c));
        };
        auto vec = [&](Vector& v) {
            for (Eigen::Index i = 0; i < v.size(); ++i) f(v(i));
        };
        mat(w1), vec(b1), mat(w2), vec(b2), mat(wp), vec(bp), mat(wr), vec(br);
    }
    template <class F>
    void for_each(F&& f) const {
        const_cast<RmParams*>(this)->for_each([&](T& x) { f(static_cast<const T&>(x)); });
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for_each([&](const T&) { ++n; });
        return n;
    }

    std::vector<T> flatten() const {
        std::vector<T> out;
        out.reserve(parameter_count());
        for_each([&](const T& x) { out.push_back(x); });
        return out;
    }

    void assign(std::span<const T> values) {
        if (values.size() != parameter_count()) throw ValidationError("rm: parameter count mismatch");
        std::size_t i = 0;
        for_each([&](T& x) { x = values[i++]; });
    }

    template <class U>
    RmParams<U> cast() const {
        RmParams<U> out;
        out.dims = dims;
        out.w1 = w1.template cast<U>();
        out.b1 = b1.template cast<U>();
        out.w2 = w2.template cast<U>();
        out.b2 = b2.template cast<U>();
        out.wp = wp.template cast<U>();
        out.bp = bp.template cast<U>();
        out.wr = wr.template cast<U>();
        out.br = br.template cast<U>();
        return out;
    }

    bool all_finite() const {
        bool ok = true;
        for_each([&](const T& x) { ok = ok && std::isfinite(static_cast<double>(x)); });
        return ok;
    }
};

/// Stored weights are 32-bit; training runs on a 64-bit master copy.
using RmWeights = RmParams<float>;
using RmParams64 = RmParams<double>;

struct RmOutput {
    std::array<double, kActionCount> policy{};
    std::array<double, kActionCount> logits{};
    double reward = 0.5;
};

RmOutput rm_forward(const RmWeights& w, const WeakUnit& z);
RmOutput rm_forward(const RmParams64& w, const FeatureVector& features);

struct LossWeights {
    double beta = 1.0;   ///< reward reconstruction
    double gamma = 0.1;  ///< Markov (KL) regularization
};

/// One training transition: the source unit's features, the successor action,
/// the observed reward, the distillation weight w_t and the image's posterior
/// row for the source state (over successors 1..7).
struct RmSample {
    FeatureVector features{};
    int successor = 0;
    double reward = 0.0;
    double weight = 1.0;
    std::array<double, kActionCount> prior{};
};

/// Flattens records into samples. w_t is the step reward min-max normalized
/// per image into [0.1, 1] (1 when all rewards of an image are equal).
std::vector<RmSample> build_samples(std::span<const ImageRecord> records);

struct LossBreakdown {
    double total = 0.0;
    double distillation = 0.0;  ///< mean of -w_t log pi(successor)
    double reward = 0.0;        ///< mean squared reward error (unscaled by beta)
    double kl = 0.0;            ///< mean KL(pi || P) (unscaled by gamma)
};

LossBreakdown rm_loss(const RmParams64& w, std::span<const RmSample> batch, const LossWeights& lw);
LossBreakdown rm_loss(const RmWeights& w, std::span<const RmSample> batch, const LossWeights& lw);

/// Exact gradient of rm_loss by reverse-mode differentiation.
RmParams64 rm_grad(const RmParams64& w, std::span<const RmSample> batch, const LossWeights& lw,
                   LossBreakdown* loss = nullptr);

struct TrainConfig {
    LossWeights loss;
    int epochs = 150;
    double lr = 0.05;
    int batch_size = 64;
    int hidden = 64;
    double init_scale = 0.1;
    std::uint64_t seed = 0;
};

struct TrainResult {
    RmWeights weights;
    /// Mean mini-batch loss of each epoch.
    std::vector<double> loss_history;
};

TrainResult train_rm(std::span<const ImageRecord> dataset, const TrainConfig& cfg);
TrainResult train_rm_samples(std::span<const RmSample> samples, const TrainConfig& cfg);

enum class InferenceMode { Policy, Reward, Hybrid };

std::string_view mode_name(InferenceMode m);
InferenceMode parse_mode(std::string_view name);

struct InferenceRule {
    InferenceMode mode = InferenceMode::Policy;
    double alpha = 0.5;
};

/// Picks the next action. `candidates[i]` is the successor unit reached by action i.
ActionId infer_select(const RmWeights& w, const WeakUnit& z, std::span<const WeakUnit, kActionCount> candidates,
                      const InferenceRule& rule);

/// Per-action scores the rule maximises (policy probabilities, candidate
/// rewards, or the hybrid blend).
std::array<double, kActionCount> infer_scores(const RmWeights& w, const WeakUnit& z,
                                              std::span<const WeakUnit, kActionCount> candidates,
                                              const InferenceRule& rule);

struct InferenceResult {
    DetectionResult baseline;
    DetectionResult final_detection;
    std::vector<ActionId> actions;
    std::vector<double> rewards;
    PromptState final_prompt;
};

/// Chooses the next action given the current context, its weak unit, and the
/// seven candidate successors.
using ActionChooser =
    std::function<ActionId(const VisualContext&, const WeakUnit&, std::span<const WeakUnit, kActionCount>)>;

/// Refinement loop shared by RM-guided and baseline inference: select, apply,
/// detect, until the trajectory stop fires. Rewards use `gt` when given.
InferenceResult run_rollout(const std::string& image_id, const RasterImage& image, const PromptState& prompt,
                            const DetectorPort& detector, const Lexicon& lex, const ActionChooser& chooser,
                            const StopThresholds& thr, const std::optional<BoundingBox>& gt = std::nullopt,
                            double w_gt = 0.5, const ActionConfig& actions = {});

InferenceResult run_inference(const std::string& image_id, const RasterImage& image, const PromptState& prompt,
                              const DetectorPort& detector, const Lexicon& lex, const RmWeights& w,
                              const InferenceRule& rule, const StopThresholds& thr,
                              const std::optional<BoundingBox>& gt = std::nullopt, double w_gt = 0.5,
                              const ActionConfig& actions = {});

/// Weight file: "OVRM", u32 version, u32 input/hidden/actions, then each
/// layer's f32 weights (row-major) followed by its f32 biases, little-endian.
void save_weights(const std::string& path, const RmWeights& w);
RmWeights load_weights(const std::string& path);
std::vector<std::uint8_t> encode_weights(const RmWeights& w);
RmWeights decode_weights(std::span<const std::uint8_t> bytes);

inline constexpr std::uint32_t kWeightFormatVersion = 1;

}  // namespace ovod

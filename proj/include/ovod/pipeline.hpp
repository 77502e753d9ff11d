#pragma once

// Batch drivers over scene files: sampling, RM-guided and baseline rollouts,
// and the exploration-strategy comparison. Every driver derives its random
// streams from (seed, image_id), so the worker count never changes results.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ovod/bandit.hpp"
#include "ovod/detector_env.hpp"
#include "ovod/reward_model.hpp"
#include "ovod/visual_actions.hpp"

namespace ovod {

/// Runs f(i) for i in [0, n) on up to `jobs` threads. The first exception is rethrown.
template <class F>
void parallel_for(std::size_t n, int jobs, F&& f) {
    const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, 256));
    if (workers == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, n); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

/// One ImageRecord per scene, sorted by image id. The detector noise seed is cfg.seed.
std::vector<ImageRecord> sample_scenes(std::span<const SceneSpec> scenes, const Lexicon& lex,
                                       const SamplerConfig& cfg, int jobs = 1);

struct SceneTrace {
    std::string image_id;
    BoundingBox gt_box;
    InferenceResult result;
    double baseline_iou = 0.0;
    double final_iou = 0.0;
    /// step_reward of the final detection against the noun-only baseline.
    double final_reward = 0.0;
};

struct RolloutConfig {
    StopThresholds thresholds;
    double w_gt = 0.5;
    std::uint64_t seed = 0;  ///< detector noise seed
    ActionConfig actions;
    /// Restricts the action set; disabled actions are never chosen.
    std::array<bool, kActionCount> enabled{true, true, true, true, true, true, true};
};

using ChooserFactory = std::function<ActionChooser(const SceneSpec&)>;

/// Rollouts sorted by image id.
std::vector<SceneTrace> rollout_scenes(std::span<const SceneSpec> scenes, const Lexicon& lex,
                                       const ChooserFactory& make_chooser, const RolloutConfig& cfg, int jobs = 1);

std::vector<SceneTrace> infer_scenes(std::span<const SceneSpec> scenes, const Lexicon& lex, const RmWeights& w,
                                     const InferenceRule& rule, const RolloutConfig& cfg, int jobs = 1);

/// Uniformly random action choice, seeded per image from `policy_seed`.
std::vector<SceneTrace> random_rollouts(std::span<const SceneSpec> scenes, const Lexicon& lex,
                                        std::uint64_t policy_seed, const RolloutConfig& cfg, int jobs = 1);

nlohmann::json traces_to_json(std::span<const SceneTrace> traces, const std::string& mode);

struct TraceSummary {
    double mean_final_reward = 0.0;
    double mean_baseline_iou = 0.0;
    double mean_final_iou = 0.0;
    double action_entropy = 0.0;  ///< 0 when no action was taken
    std::array<std::uint64_t, kActionCount> action_counts{};
    std::size_t max_steps = 0;
};

TraceSummary summarize_traces(std::span<const SceneTrace> traces);

struct StrategyReport {
    std::string strategy;
    double topk_mean = 0.0;  ///< mean over seeds of the per-seed image-mean Top-K@Stop
    double topk_std = 0.0;   ///< sample std over seeds
    double pwr = 0.0;        ///< mean over seeds of Pareto-Win Rate against Random
    double entropy = 0.0;    ///< action entropy over all sampled steps
    double budget_mean = 0.0;
    std::vector<double> topk_per_seed;
    std::vector<double> pwr_per_seed;
};

std::vector<StrategyReport> evaluate_exploration(std::span<const SceneSpec> scenes, const Lexicon& lex,
                                                 std::span<const PolicyKind> strategies,
                                                 std::span<const std::uint64_t> seeds, const SamplerConfig& base,
                                                 int jobs = 1);

std::string format_report_table(std::span<const StrategyReport> reports);
nlohmann::json report_to_json(std::span<const StrategyReport> reports);

/// Deterministic scene batch with ids "scene_0000"...
std::vector<SceneSpec> make_scenes(std::size_t count, std::uint64_t seed, const std::vector<std::string>& nouns,
                                   int width = 96, int height = 96);

}  // namespace ovod

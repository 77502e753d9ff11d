#pragma once

// Bandit-driven trajectory sampling over the weak Markov state space.

#include <array>
#include <map>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "ovod/core.hpp"
#include "ovod/detector_env.hpp"
#include "ovod/random.hpp"
#include "ovod/visual_actions.hpp"

namespace ovod {

struct StopThresholds {
    double delta_s = 0.02;   ///< context stabilization
    double delta_r = 1e-3;   ///< step reward convergence
    double eps_r = 1e-3;     ///< mean episode reward increment
    double eps_p = 1e-3;     ///< transition posterior change (Frobenius)
    int h_max = 7;           ///< steps per trajectory
    int e_max = 50;          ///< episodes per image

    void validate() const;
};

/// Key of a bandit context c = (image, prompt). Arms are per image, so the
/// prompt alone identifies the context.
std::string context_key(const PromptState& prompt);

/// Per (context, action) running mean reward and visit count.
class ArmStats {
public:
    double mean(const std::string& ctx, ActionId a) const;
    std::uint64_t count(const std::string& ctx, ActionId a) const;
    void update(const std::string& ctx, ActionId a, double reward);
    std::size_t context_count() const { return arms_.size(); }

private:
    struct Row {
        std::array<double, kActionCount> mean{};
        std::array<std::uint64_t, kActionCount> count{};
    };
    std::map<std::string, Row> arms_;
};

enum class PolicyKind { Ucb, Random, Greedy, EpsGreedy };

std::string_view policy_name(PolicyKind k);
/// Accepts "ucb", "random", "greedy", "eps" (or "eps_greedy").
PolicyKind parse_policy(std::string_view name);

/// lambda * sqrt(ln max(2, t) / (1 + n)).
double ucb_bonus(std::uint64_t n, int t, double lambda);

/// argmax_a mean(a) + bonus(a); unvisited arms count as mean 0, ties go to the lowest index.
ActionId ucb_select(const ArmStats& stats, const std::string& ctx, int t, double lambda);

ActionId greedy_select(const ArmStats& stats, const std::string& ctx);

/// Random, Greedy-Q and epsilon-greedy baselines.
ActionId baseline_select(PolicyKind kind, const ArmStats& stats, const std::string& ctx, Rng& rng,
                         double epsilon = 0.1);

/// 8x8 Dirichlet pseudo-counts; column 0 stays zero because the initial
/// state is never a successor.
class DirichletCounts {
public:
    DirichletCounts();

    double at(StateId from, StateId to) const { return counts_[from.value()][to.value()]; }
    const TransitionMatrix& counts() const { return counts_; }
    /// Throws ValidationError when `to` is the initial state.
    void observe(StateId from, StateId to);
    /// Posterior mean of every row.
    TransitionMatrix posterior() const;

private:
    TransitionMatrix counts_{};
};

DirichletCounts update_dirichlet(DirichletCounts counts, StateId from, StateId to);
TransitionMatrix posterior(const DirichletCounts& counts);

enum class TrajStopReason { None, Stabilized, RewardConverged, StepLimit };
enum class ImageStopReason { None, RewardConverged, TransitionConverged, EpisodeLimit };

/// `t` is the number of steps taken so far.
TrajStopReason traj_stop_reason(double context_distance, double r_prev, double r_cur, int t,
                                const StopThresholds& thr);
bool traj_stop(const WeakUnit& before, const WeakUnit& after, double r_prev, double r_cur, int t,
               const StopThresholds& thr);

/// `episode_rewards` holds one mean reward per finished episode (this one last).
ImageStopReason image_stop_reason(std::span<const double> episode_rewards, const TransitionMatrix& p_prev,
                                  const TransitionMatrix& p_cur, int episode, const StopThresholds& thr);
bool image_stop(std::span<const double> episode_rewards, const TransitionMatrix& p_prev,
                const TransitionMatrix& p_cur, int episode, const StopThresholds& thr);

struct SamplerConfig {
    PolicyKind policy = PolicyKind::Ucb;
    double lambda = 5.0;  ///< large enough that every arm is tried once before any repeat
    double epsilon = 0.1;
    double w_gt = 0.5;
    StopThresholds thresholds;
    ActionConfig actions;
    std::uint64_t seed = 0;
};

/// Runs bandit episodes on one image until the image-level stop fires.
/// Throws DetectorError if the initial detection fails; later failures abort
/// the current episode and flag its trajectory.
ImageRecord sample_image(const std::string& image_id, const RasterImage& image, const PromptState& prompt,
                         const DetectorPort& detector, const Lexicon& lex, const std::optional<BoundingBox>& gt,
                         const SamplerConfig& cfg);

}  // namespace ovod

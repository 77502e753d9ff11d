#include "ovod/bandit.hpp"

#include <cmath>

#include "ovod/metrics.hpp"

namespace ovod {

void StopThresholds::validate() const {
    if (!(delta_s > 0.0 && delta_r > 0.0 && eps_r > 0.0 && eps_p > 0.0))
        throw ValidationError("thresholds: tolerances must be positive");
    if (h_max < 0 || e_max < 1) throw ValidationError("thresholds: h_max must be >= 0 and e_max >= 1");
}

std::string context_key(const PromptState& prompt) { return prompt.render(); }

double ArmStats::mean(const std::string& ctx, ActionId a) const {
    const auto it = arms_.find(ctx);
    return it == arms_.end() ? 0.0 : it->second.mean[static_cast<std::size_t>(action_index(a))];
}

std::uint64_t ArmStats::count(const std::string& ctx, ActionId a) const {
    const auto it = arms_.find(ctx);
    return it == arms_.end() ? 0 : it->second.count[static_cast<std::size_t>(action_index(a))];
}

void ArmStats::update(const std::string& ctx, ActionId a, double reward) {
    auto& row = arms_[ctx];
    const auto k = static_cast<std::size_t>(action_index(a));
    ++row.count[k];
    row.mean[k] += (reward - row.mean[k]) / static_cast<double>(row.count[k]);
}

std::string_view policy_name(PolicyKind k) {
    switch (k) {
        case PolicyKind::Ucb: return "ucb";
        case PolicyKind::Random: return "random";
        case PolicyKind::Greedy: return "greedy";
        case PolicyKind::EpsGreedy: return "eps";
    }
    return "?";
}

PolicyKind parse_policy(std::string_view name) {
    if (name == "ucb") return PolicyKind::Ucb;
    if (name == "random") return PolicyKind::Random;
    if (name == "greedy") return PolicyKind::Greedy;
    if (name == "eps" || name == "eps_greedy") return PolicyKind::EpsGreedy;
    throw ValidationError("unknown policy '" + std::string(name) + "'");
}

double ucb_bonus(std::uint64_t n, int t, double lambda) {
    const double log_t = std::log(std::max(2.0, static_cast<double>(t)));
    return lambda * std::sqrt(log_t / (1.0 + static_cast<double>(n)));
}

ActionId ucb_select(const ArmStats& stats, const std::string& ctx, int t, double lambda) {
    if (!(lambda >= 0.0)) throw ValidationError("ucb: lambda must be nonnegative");
    ActionId best = ActionId::Dictionary;
    double best_q = -1.0;
    for (ActionId a : kAllActions) {
        const auto n = stats.count(ctx, a);
        const double mu = n > 0 ? stats.mean(ctx, a) : 0.0;
        const double q = mu + ucb_bonus(n, t, lambda);
        if (q > best_q) {
            best_q = q;
            best = a;
        }
    }
    return best;
}

ActionId greedy_select(const ArmStats& stats, const std::string& ctx) {
    ActionId best = ActionId::Dictionary;
    double best_mu = -1.0;
    for (ActionId a : kAllActions) {
        const double mu = stats.count(ctx, a) > 0 ? stats.mean(ctx, a) : 0.0;
        if (mu > best_mu) {
            best_mu = mu;
            best = a;
        }
    }
    return best;
}

ActionId baseline_select(PolicyKind kind, const ArmStats& stats, const std::string& ctx, Rng& rng, double epsilon) {
    switch (kind) {
        case PolicyKind::Random: return action_from_index(static_cast<int>(rng.below(kActionCount)));
        case PolicyKind::Greedy: return greedy_select(stats, ctx);
        case PolicyKind::EpsGreedy:
            if (rng.uniform() < epsilon) return action_from_index(static_cast<int>(rng.below(kActionCount)));
            return greedy_select(stats, ctx);
        case PolicyKind::Ucb: break;
    }
    throw ValidationError("baseline_select: not a baseline policy");
}

DirichletCounts::DirichletCounts() {
    for (auto& row : counts_)
        for (int j = 1; j < kStateCount; ++j) row[j] = 1.0;
}

void DirichletCounts::observe(StateId from, StateId to) {
    if (to.is_initial()) throw ValidationError("dirichlet: the initial state cannot be a successor");
    counts_[from.value()][to.value()] += 1.0;
}

TransitionMatrix DirichletCounts::posterior() const {
    TransitionMatrix p{};
    for (int i = 0; i < kStateCount; ++i) {
        double total = 0.0;
        for (int j = 1; j < kStateCount; ++j) total += counts_[i][j];
        for (int j = 1; j < kStateCount; ++j) p[i][j] = counts_[i][j] / total;
    }
    return p;
}

DirichletCounts update_dirichlet(DirichletCounts counts, StateId from, StateId to) {
    counts.observe(from, to);
    return counts;
}

TransitionMatrix posterior(const DirichletCounts& counts) { return counts.posterior(); }

TrajStopReason traj_stop_reason(double context_distance, double r_prev, double r_cur, int t,
                                const StopThresholds& thr) {
    if (context_distance < thr.delta_s) return TrajStopReason::Stabilized;
    if (std::abs(r_cur - r_prev) < thr.delta_r) return TrajStopReason::RewardConverged;
    if (t >= thr.h_max) return TrajStopReason::StepLimit;
    return TrajStopReason::None;
}

bool traj_stop(const WeakUnit& before, const WeakUnit& after, double r_prev, double r_cur, int t,
               const StopThresholds& thr) {
    return traj_stop_reason(context_distance(before, after), r_prev, r_cur, t, thr) != TrajStopReason::None;
}

ImageStopReason image_stop_reason(std::span<const double> episode_rewards, const TransitionMatrix& p_prev,
                                  const TransitionMatrix& p_cur, int episode, const StopThresholds& thr) {
    if (!episode_rewards.empty()) {
        const std::size_t k = episode_rewards.size();
        double sum_prev = 0.0;
        for (std::size_t i = 0; i + 1 < k; ++i) sum_prev += episode_rewards[i];
        const double mean_prev = k > 1 ? sum_prev / static_cast<double>(k - 1) : 0.0;
        const double mean_cur = (sum_prev + episode_rewards[k - 1]) / static_cast<double>(k);
        if (std::abs(mean_cur - mean_prev) < thr.eps_r) return ImageStopReason::RewardConverged;
    }
    if (frobenius_delta(p_prev, p_cur) < thr.eps_p) return ImageStopReason::TransitionConverged;
    if (episode >= thr.e_max) return ImageStopReason::EpisodeLimit;
    return ImageStopReason::None;
}

bool image_stop(std::span<const double> episode_rewards, const TransitionMatrix& p_prev,
                const TransitionMatrix& p_cur, int episode, const StopThresholds& thr) {
    return image_stop_reason(episode_rewards, p_prev, p_cur, episode, thr) != ImageStopReason::None;
}

namespace {

ActionId choose(const SamplerConfig& cfg, const ArmStats& arms, const std::string& ctx, int t, Rng& rng) {
    if (cfg.policy == PolicyKind::Ucb) return ucb_select(arms, ctx, t, cfg.lambda);
    return baseline_select(cfg.policy, arms, ctx, rng, cfg.epsilon);
}

}  // namespace

ImageRecord sample_image(const std::string& image_id, const RasterImage& image, const PromptState& prompt,
                         const DetectorPort& detector, const Lexicon& lex, const std::optional<BoundingBox>& gt,
                         const SamplerConfig& cfg) {
    cfg.thresholds.validate();
    prompt.validate();
    const auto& thr = cfg.thresholds;
    if (thr.h_max < 1) throw ValidationError("sample_image: h_max must be at least 1");

    ImageRecord rec;
    rec.image_id = image_id;
    ArmStats arms;
    DirichletCounts counts;
    TransitionMatrix p_prev = counts.posterior();
    Rng rng(derive_seed(cfg.seed, image_id, 0, 5));

    const DetectionResult base = detector.detect(image, prompt);
    const auto base_top = base.top_index();
    if (!base_top) throw DetectorError("sample_image: initial detection returned no boxes");
    const BoundingBox roi = base.boxes[*base_top];

    PhraseCache phrases(image, lex, cfg.actions);
    const VisualContext start{image_id, roi, prompt, 0, summarize(base)};

    std::vector<double> episode_rewards;
    for (int episode = 1; episode <= thr.e_max; ++episode) {
        VisualContext c = start;
        WeakUnit z = make_weak_unit(c, std::nullopt, thr.h_max);
        std::vector<double> scores_prev = base.scores[*base_top];
        double r_prev = 0.0;
        Trajectory traj;

        while (c.step < thr.h_max) {
            const std::string ctx = context_key(c.prompt);
            const ActionId a = choose(cfg, arms, ctx, c.step, rng);
            VisualContext next = apply_phrase(c, a, phrases.get(a, c));

            DetectionResult det;
            try {
                det = detector.detect(image, next.prompt);
            } catch (const DetectorError&) {
                traj.aborted = true;
                break;
            }
            const auto top = det.top_index();
            if (!top) {
                traj.aborted = true;
                break;
            }
            next.detection = summarize(det);
            next.roi = det.boxes[*top];
            const WeakUnit z_next = make_weak_unit(next, a, thr.h_max);
            const auto& scores = det.scores[*top];
            const double r = step_reward(det.boxes[*top], gt, scores_prev, scores, cfg.w_gt);

            counts.observe(z.state, z_next.state);
            arms.update(ctx, a, r);

            TrajectoryStep step{z, a, z_next, r, {}};
            step.diagnostics = {c.detection.max_score, next.detection.max_score, c.detection.normalized_entropy,
                                next.detection.normalized_entropy};
            traj.steps.push_back(std::move(step));

            const bool stop = traj_stop(z, z_next, r_prev, r, next.step, thr);
            c = std::move(next);
            z = z_next;
            scores_prev = scores;
            r_prev = r;
            if (stop) break;
        }

        episode_rewards.push_back(traj.mean_reward());
        rec.trajectories.push_back(std::move(traj));
        const TransitionMatrix p_cur = counts.posterior();
        if (image_stop(episode_rewards, p_prev, p_cur, episode, thr)) break;
        p_prev = p_cur;
    }
    rec.transition_posterior = counts.posterior();
    return rec;
}

}  // namespace ovod

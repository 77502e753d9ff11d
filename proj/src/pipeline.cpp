#include "ovod/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include "ovod/metrics.hpp"
#include "ovod/random.hpp"

namespace ovod {

using nlohmann::json;

namespace {

template <class T>
void sort_by_id(std::vector<T>& v) {
    std::sort(v.begin(), v.end(), [](const T& a, const T& b) { return a.image_id < b.image_id; });
}

PromptState noun_prompt(const SceneSpec& s) { return PromptState{s.noun, {}}; }

json box_json(const BoundingBox& b) { return json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

}  // namespace

std::vector<ImageRecord> sample_scenes(std::span<const SceneSpec> scenes, const Lexicon& lex,
                                       const SamplerConfig& cfg, int jobs) {
    std::vector<ImageRecord> out(scenes.size());
    parallel_for(scenes.size(), jobs, [&](std::size_t i) {
        const auto& spec = scenes[i];
        const Scene scene = gen_scene(spec);
        const MockDetector det(spec, lex, cfg.seed, cfg.actions);
        out[i] = sample_image(spec.image_id, scene.image, noun_prompt(spec), det, lex, scene.gt_box, cfg);
    });
    sort_by_id(out);
    return out;
}

std::vector<SceneTrace> rollout_scenes(std::span<const SceneSpec> scenes, const Lexicon& lex,
                                       const ChooserFactory& make_chooser, const RolloutConfig& cfg, int jobs) {
    std::vector<SceneTrace> out(scenes.size());
    parallel_for(scenes.size(), jobs, [&](std::size_t i) {
        const auto& spec = scenes[i];
        const Scene scene = gen_scene(spec);
        const MockDetector det(spec, lex, cfg.seed, cfg.actions);
        SceneTrace tr;
        tr.image_id = spec.image_id;
        tr.gt_box = scene.gt_box;
        tr.result = run_rollout(spec.image_id, scene.image, noun_prompt(spec), det, lex, make_chooser(spec),
                                cfg.thresholds, scene.gt_box, cfg.w_gt, cfg.actions);
        const auto& base = tr.result.baseline;
        const auto& fin = tr.result.final_detection;
        const auto b = *base.top_index();
        const auto f = *fin.top_index();
        tr.baseline_iou = iou(base.boxes[b], scene.gt_box);
        tr.final_iou = iou(fin.boxes[f], scene.gt_box);
        tr.final_reward = step_reward(fin.boxes[f], scene.gt_box, base.scores[b], fin.scores[f], cfg.w_gt);
        out[i] = std::move(tr);
    });
    sort_by_id(out);
    return out;
}

namespace {

ActionId first_enabled(const std::array<bool, kActionCount>& enabled) {
    for (int k = 0; k < kActionCount; ++k)
        if (enabled[static_cast<std::size_t>(k)]) return action_from_index(k);
    throw ValidationError("rollout: no action enabled");
}

}  // namespace

std::vector<SceneTrace> infer_scenes(std::span<const SceneSpec> scenes, const Lexicon& lex, const RmWeights& w,
                                     const InferenceRule& rule, const RolloutConfig& cfg, int jobs) {
    const auto enabled = cfg.enabled;
    first_enabled(enabled);
    auto factory = [&](const SceneSpec&) -> ActionChooser {
        return [&w, rule, enabled](const VisualContext&, const WeakUnit& z,
                                   std::span<const WeakUnit, kActionCount> cands) {
            const auto scores = infer_scores(w, z, cands, rule);
            int best = -1;
            for (int k = 0; k < kActionCount; ++k) {
                if (!enabled[static_cast<std::size_t>(k)]) continue;
                if (best < 0 || scores[static_cast<std::size_t>(k)] > scores[static_cast<std::size_t>(best)]) best = k;
            }
            return action_from_index(best);
        };
    };
    return rollout_scenes(scenes, lex, factory, cfg, jobs);
}

std::vector<SceneTrace> random_rollouts(std::span<const SceneSpec> scenes, const Lexicon& lex,
                                        std::uint64_t policy_seed, const RolloutConfig& cfg, int jobs) {
    std::vector<int> pool;
    for (int k = 0; k < kActionCount; ++k)
        if (cfg.enabled[static_cast<std::size_t>(k)]) pool.push_back(k);
    if (pool.empty()) throw ValidationError("rollout: no action enabled");
    auto factory = [&](const SceneSpec& spec) -> ActionChooser {
        auto rng = std::make_shared<Rng>(derive_seed(policy_seed, spec.image_id, 0, 9));
        return [rng, pool](const VisualContext&, const WeakUnit&, std::span<const WeakUnit, kActionCount>) {
            return action_from_index(pool[rng->below(pool.size())]);
        };
    };
    return rollout_scenes(scenes, lex, factory, cfg, jobs);
}

json traces_to_json(std::span<const SceneTrace> traces, const std::string& mode) {
    json scenes = json::array();
    for (const auto& t : traces) {
        json actions = json::array();
        for (ActionId a : t.result.actions) actions.push_back(action_label(a));
        const auto& fin = t.result.final_detection;
        const auto f = *fin.top_index();
        scenes.push_back({{"image_id", t.image_id},
                          {"actions", std::move(actions)},
                          {"rewards", t.result.rewards},
                          {"final_prompt", t.result.final_prompt.render()},
                          {"final_box", box_json(fin.boxes[f])},
                          {"final_max_score", *std::max_element(fin.scores[f].begin(), fin.scores[f].end())},
                          {"gt_box", box_json(t.gt_box)},
                          {"baseline_iou", t.baseline_iou},
                          {"final_iou", t.final_iou},
                          {"final_reward", t.final_reward}});
    }
    const auto s = summarize_traces(traces);
    return json{{"mode", mode},
                {"scenes", std::move(scenes)},
                {"summary",
                 {{"mean_final_reward", s.mean_final_reward},
                  {"mean_baseline_iou", s.mean_baseline_iou},
                  {"mean_final_iou", s.mean_final_iou},
                  {"action_entropy", s.action_entropy},
                  {"action_counts", s.action_counts},
                  {"max_steps", s.max_steps}}}};
}

TraceSummary summarize_traces(std::span<const SceneTrace> traces) {
    TraceSummary s;
    if (traces.empty()) return s;
    for (const auto& t : traces) {
        s.mean_final_reward += t.final_reward;
        s.mean_baseline_iou += t.baseline_iou;
        s.mean_final_iou += t.final_iou;
        for (ActionId a : t.result.actions) ++s.action_counts[static_cast<std::size_t>(action_index(a))];
        s.max_steps = std::max(s.max_steps, t.result.actions.size());
    }
    const double n = static_cast<double>(traces.size());
    s.mean_final_reward /= n;
    s.mean_baseline_iou /= n;
    s.mean_final_iou /= n;
    std::uint64_t total = 0;
    for (auto c : s.action_counts) total += c;
    s.action_entropy = total ? action_entropy(s.action_counts) : 0.0;
    return s;
}

std::vector<StrategyReport> evaluate_exploration(std::span<const SceneSpec> scenes, const Lexicon& lex,
                                                 std::span<const PolicyKind> strategies,
                                                 std::span<const std::uint64_t> seeds, const SamplerConfig& base,
                                                 int jobs) {
    if (strategies.empty() || seeds.empty() || scenes.empty())
        throw ValidationError("evaluate_exploration: need scenes, strategies and seeds");
    std::vector<StrategyReport> reports(strategies.size());
    std::vector<std::array<std::uint64_t, kActionCount>> counts(strategies.size());
    std::vector<double> budgets(strategies.size(), 0.0);

    for (std::uint64_t seed : seeds) {
        SamplerConfig random_cfg = base;
        random_cfg.seed = seed;
        random_cfg.policy = PolicyKind::Random;
        const auto random_records = sample_scenes(scenes, lex, random_cfg, jobs);

        for (std::size_t s = 0; s < strategies.size(); ++s) {
            SamplerConfig cfg = base;
            cfg.seed = seed;
            cfg.policy = strategies[s];
            const auto records = strategies[s] == PolicyKind::Random ? random_records : sample_scenes(scenes, lex, cfg, jobs);
            double topk = 0.0;
            for (const auto& r : records) {
                topk += topk_at_stop(r);
                budgets[s] += static_cast<double>(r.trajectories.size());
            }
            reports[s].topk_per_seed.push_back(topk / static_cast<double>(records.size()));
            reports[s].pwr_per_seed.push_back(pareto_win_rate(records, random_records));
            const auto c = action_counts(records);
            for (int k = 0; k < kActionCount; ++k) counts[s][static_cast<std::size_t>(k)] += c[static_cast<std::size_t>(k)];
        }
    }
    const double runs = static_cast<double>(seeds.size() * scenes.size());
    for (std::size_t s = 0; s < strategies.size(); ++s) {
        auto& r = reports[s];
        r.strategy = std::string(policy_name(strategies[s]));
        r.topk_mean = mean(r.topk_per_seed);
        r.topk_std = sample_std(r.topk_per_seed);
        r.pwr = mean(r.pwr_per_seed);
        std::uint64_t total = 0;
        for (auto c : counts[s]) total += c;
        r.entropy = total ? action_entropy(counts[s]) : 0.0;
        r.budget_mean = budgets[s] / runs;
    }
    return reports;
}

std::string format_report_table(std::span<const StrategyReport> reports) {
    std::string out = "strategy    topk_mean  topk_std   pwr(%)  entropy  budget\n";
    char line[160];
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-10s  %9.4f  %8.4f  %7.2f  %7.4f  %6.2f\n", r.strategy.c_str(), r.topk_mean,
                      r.topk_std, r.pwr, r.entropy, r.budget_mean);
        out += line;
    }
    return out;
}

json report_to_json(std::span<const StrategyReport> reports) {
    json arr = json::array();
    for (const auto& r : reports)
        arr.push_back({{"strategy", r.strategy},
                       {"topk_mean", r.topk_mean},
                       {"topk_std", r.topk_std},
                       {"pwr", r.pwr},
                       {"entropy", r.entropy},
                       {"budget_mean", r.budget_mean},
                       {"topk_per_seed", r.topk_per_seed},
                       {"pwr_per_seed", r.pwr_per_seed}});
    return arr;
}

std::vector<SceneSpec> make_scenes(std::size_t count, std::uint64_t seed, const std::vector<std::string>& nouns,
                                   int width, int height) {
    std::vector<SceneSpec> out;
    out.reserve(count);
    char id[32];
    for (std::size_t i = 0; i < count; ++i) {
        std::snprintf(id, sizeof id, "scene_%04zu", i);
        out.push_back(random_scene_spec(id, nouns, seed, width, height));
    }
    return out;
}

}  // namespace ovod

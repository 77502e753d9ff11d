#include "ovod/cli.hpp"

#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "ovod/metrics.hpp"
#include "ovod/persistence.hpp"
#include "ovod/pipeline.hpp"

namespace ovod {

namespace {

struct Common {
    std::string scenes;
    std::string lexicon;
    double w_gt = 0.5;
    std::uint64_t seed = 0;
    int jobs = 1;
};

Lexicon lexicon_or_empty(const std::string& path) { return path.empty() ? Lexicon{} : Lexicon::load(path); }

std::vector<std::uint64_t> parse_seeds(const std::vector<std::string>& items) {
    std::vector<std::uint64_t> out;
    for (const auto& s : items) {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
            throw ValidationError("bad seed '" + s + "'");
        out.push_back(std::stoull(s));
    }
    return out;
}

int run_sample(const Common& c, const std::string& policy, double lambda, double epsilon, const std::string& out_path,
               std::ostream& out) {
    const auto scenes = load_scenes(c.scenes);
    const auto lex = Lexicon::load(c.lexicon);
    SamplerConfig cfg;
    cfg.policy = parse_policy(policy);
    cfg.lambda = lambda;
    cfg.epsilon = epsilon;
    cfg.w_gt = c.w_gt;
    cfg.seed = c.seed;
    const auto records = sample_scenes(scenes, lex, cfg, c.jobs);
    save_dataset(out_path, records);
    std::size_t trajs = 0, steps = 0;
    for (const auto& r : records) {
        trajs += r.trajectories.size();
        steps += r.step_count();
    }
    out << "sampled " << records.size() << " images, " << trajs << " trajectories, " << steps << " steps -> "
        << out_path << "\n";
    return 0;
}

int run_train(const std::string& data, const TrainConfig& cfg, const std::string& out_path,
              const std::string& history_path, std::ostream& out) {
    const auto dataset = load_dataset(data);
    const auto res = train_rm(dataset, cfg);
    save_weights(out_path, res.weights);
    if (!history_path.empty()) {
        nlohmann::json j = {{"loss_history", res.loss_history}};
        if (res.loss_history.size() >= 2) j["loss_std"] = rm_loss_std(res.loss_history);
        write_file(history_path, j.dump(2) + "\n");
    }
    out << "trained on " << build_samples(dataset).size() << " transitions, final loss "
        << res.loss_history.back() << " -> " << out_path << "\n";
    return 0;
}

int run_infer(const Common& c, const std::string& rm, const std::string& mode, double alpha,
              const std::string& trace_out, std::ostream& out) {
    const auto scenes = load_scenes(c.scenes);
    const auto lex = lexicon_or_empty(c.lexicon);
    const auto weights = load_weights(rm);
    InferenceRule rule{parse_mode(mode), alpha};
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("--alpha must lie in [0,1]");
    RolloutConfig cfg;
    cfg.w_gt = c.w_gt;
    cfg.seed = c.seed;
    const auto traces = infer_scenes(scenes, lex, weights, rule, cfg, c.jobs);
    const auto j = traces_to_json(traces, mode);
    if (trace_out.empty()) out << j.dump(2) << "\n";
    else write_file(trace_out, j.dump(2) + "\n");
    const auto s = summarize_traces(traces);
    out << "inferred " << traces.size() << " scenes: mean final reward " << s.mean_final_reward << ", mean iou "
        << s.mean_baseline_iou << " -> " << s.mean_final_iou << ", action entropy " << s.action_entropy << "\n";
    return 0;
}

int run_eval(const Common& c, const std::vector<std::string>& strategies, const std::vector<std::string>& seeds,
             double lambda, const std::string& report, const std::string& table, std::ostream& out) {
    const auto scenes = load_scenes(c.scenes);
    const auto lex = lexicon_or_empty(c.lexicon);
    std::vector<PolicyKind> kinds;
    for (const auto& s : strategies) kinds.push_back(parse_policy(s));
    const auto seed_list = parse_seeds(seeds);
    SamplerConfig base;
    base.lambda = lambda;
    base.w_gt = c.w_gt;
    const auto reports = evaluate_exploration(scenes, lex, kinds, seed_list, base, c.jobs);
    const auto text = format_report_table(reports);
    out << text;
    if (!report.empty()) write_file(report, report_to_json(reports).dump(2) + "\n");
    if (!table.empty()) write_file(table, text);
    return 0;
}

int run_inspect(const std::string& data, std::ostream& out) {
    const auto dataset = load_dataset(data);
    out << dataset.size() << " image records\n";
    char buf[64];
    for (const auto& r : dataset) {
        out << "\n== " << r.image_id << ": " << r.trajectories.size() << " trajectories, " << r.step_count()
            << " steps\n";
        for (std::size_t i = 0; i < r.trajectories.size(); ++i) {
            const auto& t = r.trajectories[i];
            out << "  [" << i << "]";
            for (const auto& s : t.steps) {
                std::snprintf(buf, sizeof buf, " %s(%.3f)", action_label(s.action).c_str(), s.reward);
                out << buf;
            }
            std::snprintf(buf, sizeof buf, "  mean %.4f", t.mean_reward());
            out << buf << (t.aborted ? "  ABORTED" : "") << "\n";
        }
        out << "  posterior (rows: from-state 0..7, cols: successor 1..7)\n";
        for (int i = 0; i < kStateCount; ++i) {
            out << "   " << i << ":";
            for (int j = 1; j < kStateCount; ++j) {
                std::snprintf(buf, sizeof buf, " %.3f", r.transition_posterior[i][j]);
                out << buf;
            }
            out << "\n";
        }
        std::snprintf(buf, sizeof buf, "  top-k@stop %.4f\n", topk_at_stop(r));
        if (!r.trajectories.empty()) out << buf;
    }
    return 0;
}

int run_make_scenes(std::size_t count, std::uint64_t seed, const std::string& lexicon, int size,
                    const std::string& out_path, std::ostream& out) {
    std::vector<std::string> nouns;
    if (lexicon.empty()) {
        nouns = {"apricot", "mug", "sedan", "puppy", "widget"};
    } else {
        const auto lex = Lexicon::load(lexicon);
        for (const auto& [term, entry] : lex.entries()) nouns.push_back(term);
    }
    const auto scenes = make_scenes(count, seed, nouns, size, size);
    save_scenes(out_path, scenes);
    out << "wrote " << scenes.size() << " scenes -> " << out_path << "\n";
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Visual-action prompt refinement agent: bandit sampling, reward-model training and inference."};
    app.name("ovod");
    app.require_subcommand(1);
    app.set_config("--config", "", "INI defaults file with one [section] per subcommand; flags take precedence");

    Common common;
    auto add_common = [&](CLI::App* sub, bool scenes_required) {
        auto* o = sub->add_option("--scenes", common.scenes, "SceneSpec JSONL file");
        if (scenes_required) o->required()->check(CLI::ExistingFile);
        sub->add_option("--w-gt", common.w_gt, "weight of the ground-truth IoU term in the step reward")
            ->check(CLI::Range(0.0, 1.0));
        sub->add_option("--seed", common.seed, "random seed");
        sub->add_option("--jobs", common.jobs, "worker threads (output does not depend on it)")
            ->check(CLI::PositiveNumber);
    };

    // sample
    std::string policy = "ucb", out_path;
    double lambda = SamplerConfig{}.lambda, epsilon = 0.1;
    auto* sample = app.add_subcommand("sample", "run bandit exploration on scenes and write trajectories");
    add_common(sample, true);
    sample->add_option("--lexicon", common.lexicon, "lexicon TSV")->required()->check(CLI::ExistingFile);
    sample->add_option("--policy", policy, "exploration policy")
        ->check(CLI::IsMember({"ucb", "random", "greedy", "eps"}));
    sample->add_option("--lambda", lambda, "UCB exploration weight")->check(CLI::NonNegativeNumber);
    sample->add_option("--epsilon", epsilon, "epsilon-greedy exploration rate")->check(CLI::Range(0.0, 1.0));
    sample->add_option("--out", out_path, "output dataset (JSONL)")->required();

    // train-rm
    std::string data, history_path;
    TrainConfig tcfg;
    auto* train = app.add_subcommand("train-rm", "train the reward-policy model on a trajectory dataset");
    train->add_option("--data", data, "dataset JSONL")->required()->check(CLI::ExistingFile);
    train->add_option("--beta", tcfg.loss.beta, "reward reconstruction weight")->check(CLI::NonNegativeNumber);
    train->add_option("--gamma", tcfg.loss.gamma, "transition KL weight")->check(CLI::NonNegativeNumber);
    train->add_option("--epochs", tcfg.epochs, "training epochs")->check(CLI::PositiveNumber);
    train->add_option("--lr", tcfg.lr, "SGD learning rate")->check(CLI::PositiveNumber);
    train->add_option("--batch", tcfg.batch_size, "mini-batch size")->check(CLI::PositiveNumber);
    train->add_option("--seed", tcfg.seed, "initialisation and shuffling seed");
    train->add_option("--out", out_path, "weights file")->required();
    train->add_option("--history-out", history_path, "write per-epoch losses as JSON");

    // infer
    std::string rm, mode = "policy", trace_out;
    double alpha = 0.5;
    auto* infer = app.add_subcommand("infer", "run RM-guided refinement on scenes");
    add_common(infer, true);
    infer->add_option("--lexicon", common.lexicon, "lexicon TSV")->check(CLI::ExistingFile);
    infer->add_option("--rm", rm, "weights file")->required()->check(CLI::ExistingFile);
    infer->add_option("--mode", mode, "decision rule")->check(CLI::IsMember({"policy", "reward", "hybrid"}));
    infer->add_option("--alpha", alpha, "hybrid blend weight on log-policy")->check(CLI::Range(0.0, 1.0));
    infer->add_option("--trace-out", trace_out, "write per-scene traces as JSON (stdout if omitted)");

    // eval-exploration
    std::vector<std::string> strategies = {"ucb", "eps", "greedy", "random"}, seeds = {"0", "1", "2", "3", "4"};
    std::string report, table;
    auto* eval = app.add_subcommand("eval-exploration", "compare exploration strategies on scenes");
    add_common(eval, true);
    eval->add_option("--lexicon", common.lexicon, "lexicon TSV")->check(CLI::ExistingFile);
    eval->add_option("--strategies", strategies, "comma-separated policies")->delimiter(',');
    eval->add_option("--seeds", seeds, "comma-separated seeds")->delimiter(',');
    eval->add_option("--lambda", lambda, "UCB exploration weight")->check(CLI::NonNegativeNumber);
    eval->add_option("--report", report, "JSON summary file");
    eval->add_option("--table", table, "text table file");

    // inspect
    auto* inspect = app.add_subcommand("inspect", "pretty-print a trajectory dataset");
    inspect->add_option("--data", data, "dataset JSONL")->required()->check(CLI::ExistingFile);

    // make-scenes
    std::size_t count = 100;
    int size = 96;
    auto* make = app.add_subcommand("make-scenes", "generate a random SceneSpec batch");
    make->add_option("--count", count, "number of scenes")->check(CLI::PositiveNumber);
    make->add_option("--seed", common.seed, "random seed");
    make->add_option("--lexicon", common.lexicon, "draw nouns from this lexicon")->check(CLI::ExistingFile);
    make->add_option("--size", size, "canvas width and height")->check(CLI::Range(48, 1024));
    make->add_option("--out", out_path, "output SceneSpec JSONL")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        CLI::App* active = &app;
        for (auto* sub : app.get_subcommands()) active = sub;
        err << active->help();
        return 1;
    }

    try {
        if (*sample) return run_sample(common, policy, lambda, epsilon, out_path, out);
        if (*train) return run_train(data, tcfg, out_path, history_path, out);
        if (*infer) return run_infer(common, rm, mode, alpha, trace_out, out);
        if (*eval) return run_eval(common, strategies, seeds, lambda, report, table, out);
        if (*inspect) return run_inspect(data, out);
        if (*make) return run_make_scenes(count, common.seed, common.lexicon, size, out_path, out);
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int cli_main(int argc, const char* const* argv) { return cli_main(argc, argv, std::cout, std::cerr); }

}  // namespace ovod

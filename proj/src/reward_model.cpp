#include "ovod/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "ovod/random.hpp"

namespace ovod {

namespace {

using MatrixXd = Eigen::MatrixXd;
using VectorXd = Eigen::VectorXd;

struct Activations {
    MatrixXd x;       // B x input
    MatrixXd h1;      // B x hidden
    MatrixXd h2;      // B x hidden
    MatrixXd logits;  // B x actions
    MatrixXd log_pi;  // B x actions
    MatrixXd pi;      // B x actions
    VectorXd reward;  // B
};

Activations forward_batch(const RmParams64& w, const MatrixXd& x) {
    Activations a;
    a.x = x;
    a.h1 = ((x * w.w1.transpose()).rowwise() + w.b1.transpose()).array().tanh().matrix();
    a.h2 = ((a.h1 * w.w2.transpose()).rowwise() + w.b2.transpose()).array().tanh().matrix();
    a.logits = (a.h2 * w.wp.transpose()).rowwise() + w.bp.transpose();
    a.log_pi.resize(a.logits.rows(), a.logits.cols());
    for (Eigen::Index i = 0; i < a.logits.rows(); ++i) {
        const double mx = a.logits.row(i).maxCoeff();
        const double lse = mx + std::log((a.logits.row(i).array() - mx).exp().sum());
        a.log_pi.row(i) = a.logits.row(i).array() - lse;
    }
    a.pi = a.log_pi.array().exp().matrix();
    const VectorXd s = (a.h2 * w.wr.transpose()).col(0).array() + w.br(0);
    a.reward = (1.0 / (1.0 + (-s.array()).exp())).matrix();
    return a;
}

MatrixXd features_matrix(std::span<const RmSample> batch) {
    MatrixXd x(static_cast<Eigen::Index>(batch.size()), kFeatureDim);
    for (std::size_t i = 0; i < batch.size(); ++i)
        for (int j = 0; j < kFeatureDim; ++j) {
            const double f = batch[i].features[static_cast<std::size_t>(j)];
            if (!std::isfinite(f)) throw ValidationError("rm: non-finite feature");
            x(static_cast<Eigen::Index>(i), j) = f;
        }
    return x;
}

void check_batch(std::span<const RmSample> batch) {
    if (batch.empty()) throw ValidationError("rm: empty batch");
    for (const auto& s : batch) {
        if (s.successor < 0 || s.successor >= kActionCount) throw ValidationError("rm: successor out of range");
        for (double p : s.prior)
            if (!(p > 0.0)) throw ValidationError("rm: transition prior must be strictly positive");
    }
}

/// Per-sample KL(pi || prior) given log pi row.
double kl_row(const Eigen::Ref<const Eigen::RowVectorXd>& log_pi, const std::array<double, kActionCount>& prior) {
    double kl = 0.0;
    for (int k = 0; k < kActionCount; ++k) {
        const double lp = log_pi(k);
        kl += std::exp(lp) * (lp - std::log(prior[static_cast<std::size_t>(k)]));
    }
    return kl;
}

LossBreakdown loss_from(const Activations& a, std::span<const RmSample> batch, const LossWeights& lw) {
    LossBreakdown out;
    const double n = static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        const auto& s = batch[i];
        out.distillation -= s.weight * a.log_pi(row, s.successor);
        const double e = a.reward(row) - s.reward;
        out.reward += e * e;
        out.kl += kl_row(a.log_pi.row(row), s.prior);
    }
    out.distillation /= n;
    out.reward /= n;
    out.kl /= n;
    out.total = out.distillation + lw.beta * out.reward + lw.gamma * out.kl;
    return out;
}

RmOutput output_row(const Activations& a, Eigen::Index row) {
    RmOutput out;
    for (int k = 0; k < kActionCount; ++k) {
        out.policy[static_cast<std::size_t>(k)] = a.pi(row, k);
        out.logits[static_cast<std::size_t>(k)] = a.logits(row, k);
    }
    out.reward = a.reward(row);
    return out;
}

void add_scaled(RmParams64& p, double scale, const RmParams64& g) {
    p.w1 += scale * g.w1;
    p.b1 += scale * g.b1;
    p.w2 += scale * g.w2;
    p.b2 += scale * g.b2;
    p.wp += scale * g.wp;
    p.bp += scale * g.bp;
    p.wr += scale * g.wr;
    p.br += scale * g.br;
}

}  // namespace

RmOutput rm_forward(const RmParams64& w, const FeatureVector& features) {
    MatrixXd x(1, kFeatureDim);
    for (int j = 0; j < kFeatureDim; ++j) {
        const double f = features[static_cast<std::size_t>(j)];
        if (!std::isfinite(f)) throw ValidationError("rm_forward: non-finite feature");
        x(0, j) = f;
    }
    return output_row(forward_batch(w, x), 0);
}

RmOutput rm_forward(const RmWeights& w, const WeakUnit& z) { return rm_forward(w.cast<double>(), z.features); }

std::vector<RmSample> build_samples(std::span<const ImageRecord> records) {
    std::vector<RmSample> out;
    for (const auto& rec : records) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& t : rec.trajectories)
            for (const auto& s : t.steps) {
                lo = std::min(lo, s.reward);
                hi = std::max(hi, s.reward);
            }
        for (const auto& t : rec.trajectories)
            for (const auto& s : t.steps) {
                RmSample smp;
                smp.features = s.z_from.features;
                smp.successor = s.z_to.state.value() - 1;
                smp.reward = s.reward;
                smp.weight = hi > lo ? 0.1 + 0.9 * (s.reward - lo) / (hi - lo) : 1.0;
                const auto& row = rec.transition_posterior[static_cast<std::size_t>(s.z_from.state.value())];
                for (int k = 0; k < kActionCount; ++k)
                    smp.prior[static_cast<std::size_t>(k)] = row[static_cast<std::size_t>(k + 1)];
                out.push_back(smp);
            }
    }
    return out;
}

LossBreakdown rm_loss(const RmParams64& w, std::span<const RmSample> batch, const LossWeights& lw) {
    check_batch(batch);
    return loss_from(forward_batch(w, features_matrix(batch)), batch, lw);
}

LossBreakdown rm_loss(const RmWeights& w, std::span<const RmSample> batch, const LossWeights& lw) {
    return rm_loss(w.cast<double>(), batch, lw);
}

RmParams64 rm_grad(const RmParams64& w, std::span<const RmSample> batch, const LossWeights& lw,
                   LossBreakdown* loss) {
    check_batch(batch);
    const Activations a = forward_batch(w, features_matrix(batch));
    if (loss) *loss = loss_from(a, batch, lw);

    const auto rows = static_cast<Eigen::Index>(batch.size());
    const double inv_n = 1.0 / static_cast<double>(batch.size());

    // d loss / d logits and d loss / d reward pre-activation
    MatrixXd d_logits(rows, kActionCount);
    VectorXd d_score(rows);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& s = batch[static_cast<std::size_t>(i)];
        const double kl = kl_row(a.log_pi.row(i), s.prior);
        for (int k = 0; k < kActionCount; ++k) {
            const double pi = a.pi(i, k);
            const double target = k == s.successor ? 1.0 : 0.0;
            const double f = a.log_pi(i, k) - std::log(s.prior[static_cast<std::size_t>(k)]);
            d_logits(i, k) = inv_n * (s.weight * (pi - target) + lw.gamma * pi * (f - kl));
        }
        const double r_hat = a.reward(i);
        d_score(i) = inv_n * lw.beta * 2.0 * (r_hat - s.reward) * r_hat * (1.0 - r_hat);
    }

    RmParams64 g = RmParams64::zeros(w.dims);
    g.wp = d_logits.transpose() * a.h2;
    g.bp = d_logits.colwise().sum().transpose();
    g.wr = d_score.transpose() * a.h2;
    g.br(0) = d_score.sum();

    const MatrixXd d_h2 = d_logits * w.wp + d_score * w.wr;
    const MatrixXd d_a2 = (d_h2.array() * (1.0 - a.h2.array().square())).matrix();
    g.w2 = d_a2.transpose() * a.h1;
    g.b2 = d_a2.colwise().sum().transpose();

    const MatrixXd d_h1 = d_a2 * w.w2;
    const MatrixXd d_a1 = (d_h1.array() * (1.0 - a.h1.array().square())).matrix();
    g.w1 = d_a1.transpose() * a.x;
    g.b1 = d_a1.colwise().sum().transpose();
    return g;
}

TrainResult train_rm_samples(std::span<const RmSample> samples, const TrainConfig& cfg) {
    if (samples.empty()) throw ValidationError("train_rm: empty dataset");
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.lr > 0.0))
        throw ValidationError("train_rm: epochs, batch size and learning rate must be positive");
    check_batch(samples);

    Rng rng(cfg.seed);
    RmParams64 p = RmParams64::zeros({kFeatureDim, cfg.hidden, kActionCount});
    p.for_each([&](double& x) { x = rng.uniform(-cfg.init_scale, cfg.init_scale); });

    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<RmSample> batch;
    batch.reserve(static_cast<std::size_t>(cfg.batch_size));

    TrainResult out;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
        double acc = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);
            LossBreakdown loss;
            const RmParams64 g = rm_grad(p, batch, cfg.loss, &loss);
            add_scaled(p, -cfg.lr, g);
            acc += loss.total * static_cast<double>(batch.size());
        }
        out.loss_history.push_back(acc / static_cast<double>(samples.size()));
    }
    if (!p.all_finite()) throw ValidationError("train_rm: training diverged");
    out.weights = p.cast<float>();
    return out;
}

TrainResult train_rm(std::span<const ImageRecord> dataset, const TrainConfig& cfg) {
    if (dataset.empty()) throw ValidationError("train_rm: empty dataset");
    const auto samples = build_samples(dataset);
    return train_rm_samples(samples, cfg);
}

std::string_view mode_name(InferenceMode m) {
    switch (m) {
        case InferenceMode::Policy: return "policy";
        case InferenceMode::Reward: return "reward";
        case InferenceMode::Hybrid: return "hybrid";
    }
    return "?";
}

InferenceMode parse_mode(std::string_view name) {
    if (name == "policy") return InferenceMode::Policy;
    if (name == "reward") return InferenceMode::Reward;
    if (name == "hybrid") return InferenceMode::Hybrid;
    throw ValidationError("unknown inference mode '" + std::string(name) + "'");
}

std::array<double, kActionCount> infer_scores(const RmWeights& w, const WeakUnit& z,
                                              std::span<const WeakUnit, kActionCount> candidates,
                                              const InferenceRule& rule) {
    const RmParams64 w64 = w.cast<double>();
    std::array<double, kActionCount> scores{};
    if (rule.mode == InferenceMode::Policy) return rm_forward(w64, z.features).policy;

    std::array<double, kActionCount> rewards{};
    for (int k = 0; k < kActionCount; ++k)
        rewards[static_cast<std::size_t>(k)] = rm_forward(w64, candidates[static_cast<std::size_t>(k)].features).reward;
    if (rule.mode == InferenceMode::Reward) return rewards;

    if (!(rule.alpha >= 0.0 && rule.alpha <= 1.0)) throw ValidationError("infer: alpha must lie in [0,1]");
    const auto pi = rm_forward(w64, z.features).policy;
    const auto [lo_it, hi_it] = std::minmax_element(rewards.begin(), rewards.end());
    const double lo = *lo_it, hi = *hi_it;
    for (std::size_t k = 0; k < scores.size(); ++k) {
        const double norm = hi > lo ? (rewards[k] - lo) / (hi - lo) : 0.5;
        scores[k] = rule.alpha * std::log(pi[k]) + (1.0 - rule.alpha) * norm;
    }
    return scores;
}

ActionId infer_select(const RmWeights& w, const WeakUnit& z, std::span<const WeakUnit, kActionCount> candidates,
                      const InferenceRule& rule) {
    const auto scores = infer_scores(w, z, candidates, rule);
    std::size_t best = 0;
    for (std::size_t k = 1; k < scores.size(); ++k)
        if (scores[k] > scores[best]) best = k;
    return action_from_index(static_cast<int>(best));
}

InferenceResult run_rollout(const std::string& image_id, const RasterImage& image, const PromptState& prompt,
                            const DetectorPort& detector, const Lexicon& lex, const ActionChooser& chooser,
                            const StopThresholds& thr, const std::optional<BoundingBox>& gt, double w_gt,
                            const ActionConfig& actions) {
    thr.validate();
    prompt.validate();
    InferenceResult res;
    res.baseline = detector.detect(image, prompt);
    res.final_detection = res.baseline;
    res.final_prompt = prompt;
    const auto base_top = res.baseline.top_index();
    if (!base_top) throw DetectorError("inference: initial detection returned no boxes");

    VisualContext c{image_id, res.baseline.boxes[*base_top], prompt, 0, summarize(res.baseline)};
    PhraseCache phrases(image, lex, actions);

    WeakUnit z = make_weak_unit(c, std::nullopt, thr.h_max);
    std::vector<double> scores_prev = res.baseline.scores[*base_top];
    double r_prev = 0.0;
    while (c.step < thr.h_max) {
        std::array<WeakUnit, kActionCount> candidates;
        for (ActionId a : kAllActions) {
            const auto k = static_cast<std::size_t>(action_index(a));
            candidates[k] = make_weak_unit(apply_phrase(c, a, phrases.get(a, c)), a, thr.h_max);
        }
        const ActionId a = chooser(c, z, candidates);
        VisualContext next = apply_phrase(c, a, phrases.get(a, c));
        DetectionResult det = detector.detect(image, next.prompt);
        const auto top = det.top_index();
        if (!top) throw DetectorError("inference: detection returned no boxes");
        next.detection = summarize(det);
        next.roi = det.boxes[*top];
        const WeakUnit z_next = make_weak_unit(next, a, thr.h_max);
        const double r = step_reward(det.boxes[*top], gt, scores_prev, det.scores[*top], w_gt);

        res.actions.push_back(a);
        res.rewards.push_back(r);
        const bool stop = traj_stop(z, z_next, r_prev, r, next.step, thr);
        scores_prev = det.scores[*top];
        res.final_detection = std::move(det);
        res.final_prompt = next.prompt;
        c = std::move(next);
        z = z_next;
        r_prev = r;
        if (stop) break;
    }
    return res;
}

InferenceResult run_inference(const std::string& image_id, const RasterImage& image, const PromptState& prompt,
                              const DetectorPort& detector, const Lexicon& lex, const RmWeights& w,
                              const InferenceRule& rule, const StopThresholds& thr,
                              const std::optional<BoundingBox>& gt, double w_gt, const ActionConfig& actions) {
    auto chooser = [&](const VisualContext&, const WeakUnit& z, std::span<const WeakUnit, kActionCount> cands) {
        return infer_select(w, z, cands, rule);
    };
    return run_rollout(image_id, image, prompt, detector, lex, chooser, thr, gt, w_gt, actions);
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> in, std::size_t& pos) {
    if (pos + 4 > in.size()) throw ValidationError("weights: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + static_cast<std::size_t>(i)]) << (8 * i);
    pos += 4;
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const RmWeights& w) {
    std::vector<std::uint8_t> out = {'O', 'V', 'R', 'M'};
    put_u32(out, kWeightFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(w.dims.input));
    put_u32(out, static_cast<std::uint32_t>(w.dims.hidden));
    put_u32(out, static_cast<std::uint32_t>(w.dims.actions));
    w.for_each([&](const float& x) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        put_u32(out, bits);
    });
    return out;
}

RmWeights decode_weights(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), "OVRM", 4) != 0)
        throw ValidationError("weights: bad magic");
    std::size_t pos = 4;
    const auto version = get_u32(bytes, pos);
    if (version != kWeightFormatVersion) throw ValidationError("weights: unsupported format version");
    RmDims d;
    d.input = static_cast<int>(get_u32(bytes, pos));
    d.hidden = static_cast<int>(get_u32(bytes, pos));
    d.actions = static_cast<int>(get_u32(bytes, pos));
    if (d.hidden < 1 || d.hidden > 1 << 16) throw ValidationError("weights: implausible hidden width");
    RmWeights w = RmWeights::zeros(d);
    w.for_each([&](float& x) {
        const std::uint32_t bits = get_u32(bytes, pos);
        std::memcpy(&x, &bits, sizeof x);
    });
    if (pos != bytes.size()) throw ValidationError("weights: trailing bytes");
    if (!w.all_finite()) throw ValidationError("weights: non-finite parameter");
    return w;
}

void save_weights(const std::string& path, const RmWeights& w) {
    const auto bytes = encode_weights(w);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write weights: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write weights: " + path);
}

RmWeights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weights: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_weights(bytes);
}

}  // namespace ovod

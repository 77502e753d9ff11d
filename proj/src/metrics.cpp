#include "ovod/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

namespace ovod {

double topk_at_stop(const ImageRecord& record) {
    std::vector<double> rewards;
    for (const auto& t : record.trajectories)
        if (!t.steps.empty()) rewards.push_back(t.mean_reward());
    if (rewards.empty()) throw ValidationError("topk_at_stop: record has no trajectories");
    const std::size_t k =
        std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(rewards.size()))));
    std::partial_sort(rewards.begin(), rewards.begin() + static_cast<std::ptrdiff_t>(k), rewards.end(),
                      std::greater<>());
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += rewards[i];
    return s / static_cast<double>(k);
}

double pareto_win_rate(std::span<const ImageRecord> a, std::span<const ImageRecord> b) {
    std::map<std::string, const ImageRecord*> by_id;
    for (const auto& r : b) by_id[r.image_id] = &r;
    if (by_id.size() != b.size() || a.size() != b.size())
        throw ValidationError("pareto_win_rate: image sets differ");
    if (a.empty()) throw ValidationError("pareto_win_rate: no images");
    std::size_t wins = 0;
    for (const auto& ra : a) {
        auto it = by_id.find(ra.image_id);
        if (it == by_id.end()) throw ValidationError("pareto_win_rate: image sets differ");
        const auto& rb = *it->second;
        if (topk_at_stop(ra) > topk_at_stop(rb) && ra.trajectories.size() <= rb.trajectories.size()) ++wins;
    }
    return 100.0 * static_cast<double>(wins) / static_cast<double>(a.size());
}

double action_entropy(const std::array<std::uint64_t, kActionCount>& counts) {
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    if (total <= 0.0) throw ValidationError("action_entropy: no selections");
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / total;
        h -= p * std::log(p);
    }
    return h;
}

std::array<std::uint64_t, kActionCount> action_counts(std::span<const ImageRecord> records) {
    std::array<std::uint64_t, kActionCount> counts{};
    for (const auto& r : records)
        for (const auto& t : r.trajectories)
            for (const auto& s : t.steps) ++counts[static_cast<std::size_t>(action_index(s.action))];
    return counts;
}

double rm_loss_std(std::span<const double> history) {
    if (history.size() < 2) throw ValidationError("rm_loss_std: need at least two epochs");
    const auto n = history.size();
    const auto tail = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(0.2 * static_cast<double>(n))), 2, n);
    return sample_std(history.subspan(n - tail));
}

double frobenius_delta(const TransitionMatrix& a, const TransitionMatrix& b) {
    double sq = 0.0;
    for (int i = 0; i < kStateCount; ++i)
        for (int j = 0; j < kStateCount; ++j) {
            const double d = a[i][j] - b[i][j];
            sq += d * d;
        }
    return std::sqrt(sq);
}

double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double sq = 0.0;
    for (double x : xs) sq += (x - m) * (x - m);
    return std::sqrt(sq / static_cast<double>(xs.size() - 1));
}

}  // namespace ovod

#pragma once

// Exploration and reward-model diagnostics.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ovod/core.hpp"

namespace ovod {

/// Mean reward of the best K = max(1, floor(0.1 n)) trajectories, where a
/// trajectory's reward is its mean step reward.
double topk_at_stop(const ImageRecord& record);

/// Percentage of images where A has strictly higher Top-K than B using no
/// more trajectories. Both sets must cover the same image ids.
double pareto_win_rate(std::span<const ImageRecord> a, std::span<const ImageRecord> b);

/// Shannon entropy (nats) of the empirical action distribution.
double action_entropy(const std::array<std::uint64_t, kActionCount>& counts);

/// Action selection counts over every step of every trajectory.
std::array<std::uint64_t, kActionCount> action_counts(std::span<const ImageRecord> records);

/// Sample standard deviation over the last 20% (at least 2) of the history.
double rm_loss_std(std::span<const double> history);

double frobenius_delta(const TransitionMatrix& a, const TransitionMatrix& b);

double mean(std::span<const double> xs);
/// Sample standard deviation; 0 for fewer than two values.
double sample_std(std::span<const double> xs);

}  // namespace ovod

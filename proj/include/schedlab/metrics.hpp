// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "schedlab/core.hpp"

namespace schedlab {

/// Sliding-window goodput estimator. Delivered bytes are binned into frames of
/// `frame_slots` slots; the estimate is the byte sum of the most recent
/// `window_frames` complete frames divided by their duration. Reads as zero
/// until one frame completes.
class goodput_window {
public:
  goodput_window(int frame_slots, int window_frames, double slot_duration_us)
      : frame_slots_(frame_slots), window_frames_(window_frames),
        slot_duration_us_(slot_duration_us) {
    if (frame_slots <= 0 || window_frames <= 0 || slot_duration_us <= 0.0)
      throw input_error("goodput_window: frame, window and slot duration must be positive");
  }

  /// Records one slot worth of successfully delivered bytes.
  void on_slot(uint64_t delivered_bytes) {
    frame_bytes_ += delivered_bytes;
    if (++slot_in_frame_ == frame_slots_) {
      frames_.push_back(frame_bytes_);
      if (frames_.size() > static_cast<size_t>(window_frames_)) {
        window_sum_ -= frames_.front();
        frames_.pop_front();
      }
      window_sum_ += frame_bytes_;
      frame_bytes_ = 0;
      slot_in_frame_ = 0;
    }
  }

  /// Windowed goodput in Mbps.
  double mbps() const {
    if (frames_.empty())
      return 0.0;
    double window_us = static_cast<double>(frames_.size()) * frame_slots_ * slot_duration_us_;
    return static_cast<double>(window_sum_) * 8.0 / window_us;
  }

private:
  int frame_slots_;
  int window_frames_;
  double slot_duration_us_;
  int slot_in_frame_ = 0;
  uint64_t frame_bytes_ = 0;
  uint64_t window_sum_ = 0;
  std::deque<uint64_t> frames_;
};

/// Jain fairness index (sum x)^2 / (N * sum x^2) over non-negative rates.
/// All-zero or empty input has no defined value and raises input_error.
inline double jain_index(const std::vector<double>& x) {
  if (x.empty())
    throw input_error("jain_index: empty input");
  double sum = 0.0, sum_sq = 0.0;
  for (double v : x) {
    if (v < 0.0)
      throw input_error("jain_index: negative rate");
    sum += v;
    sum_sq += v * v;
  }
  if (sum == 0.0)
    throw input_error("jain_index: all rates are zero");
  return (sum * sum) / (static_cast<double>(x.size()) * sum_sq);
}

/// Gini coefficient sum_ij |x_i - x_j| / (2 N sum x) over non-negative rates.
/// All-zero or empty input has no defined value and raises input_error.
inline double gini_coefficient(const std::vector<double>& x) {
  if (x.empty())
    throw input_error("gini_coefficient: empty input");
  double sum = 0.0;
  for (double v : x) {
    if (v < 0.0)
      throw input_error("gini_coefficient: negative rate");
    sum += v;
  }
  if (sum == 0.0)
    throw input_error("gini_coefficient: all rates are zero");
  double abs_diff = 0.0;
  for (double a : x)
    for (double b : x)
      abs_diff += std::abs(a - b);
  return abs_diff / (2.0 * static_cast<double>(x.size()) * sum);
}

/// Nearest-rank percentile: the ceil(q*N)-th smallest sample (1-based).
/// Requires a non-empty sample set and q in (0, 1].
template <typename T>
T percentile_nearest_rank(std::vector<T> samples, double q) {
  if (samples.empty())
    throw input_error("percentile: empty sample set");
  if (q <= 0.0 || q > 1.0)
    throw input_error("percentile: q outside (0, 1]");
  std::sort(samples.begin(), samples.end());
  size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(samples.size())));
  if (rank == 0)
    rank = 1;
  return samples[rank - 1];
}

/// Summary of a delay sample set. `empty` marks a run with no delivered PDUs;
/// all other fields are meaningless in that case.
struct delay_summary {
  bool empty = true;
  size_t count = 0;
  uint64_t p50_us = 0;
  uint64_t p95_us = 0;
  uint64_t p99_us = 0;
  uint64_t max_us = 0;
  /// (delay, cumulative fraction) pairs on a 0.5% quantile grid plus the max.
  std::vector<std::pair<uint64_t, double>> cdf;
};

inline delay_summary summarize_delays(std::vector<uint64_t> samples) {
  delay_summary out;
  if (samples.empty())
    return out;
  std::sort(samples.begin(), samples.end());
  out.empty = false;
  out.count = samples.size();
  auto at = [&](double q) {
    size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(samples.size())));
    if (rank == 0)
      rank = 1;
    return samples[rank - 1];
  };
  out.p50_us = at(0.50);
  out.p95_us = at(0.95);
  out.p99_us = at(0.99);
  out.max_us = samples.back();
  for (int step = 1; step <= 200; ++step) {
    double q = static_cast<double>(step) / 200.0;
    out.cdf.emplace_back(at(q), q);
  }
  return out;
}

/// Tracks delivery gaps per UE. The gap clock runs only while data is queued
/// (traffic has been offered and not yet served), resets on any delivery and
/// whenever the queue drains, so idle periods of the source do not count.
class starvation_tracker {
public:
  explicit starvation_tracker(double threshold_s = 30.0) : threshold_s_(threshold_s) {}

  void on_slot(bool queue_nonempty, bool delivered, double slot_duration_s) {
    if (delivered || !queue_nonempty)
      gap_s_ = 0.0;
    else
      gap_s_ += slot_duration_s;
    longest_gap_s_ = std::max(longest_gap_s_, gap_s_);
  }

  bool starved() const { return longest_gap_s_ > threshold_s_; }
  double longest_gap_s() const { return longest_gap_s_; }

private:
  double threshold_s_;
  double gap_s_ = 0.0;
  double longest_gap_s_ = 0.0;
};

/// Root-mean-square distance between two equally long rate vectors.
inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw input_error("rmse: vectors must be non-empty and equally long");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.size()));
}

/// Pairwise RMSE matrix across per-scheduler rate vectors. Symmetric with an
/// exactly zero diagonal.
inline std::vector<std::vector<double>>
similarity_rmse(const std::vector<std::vector<double>>& rows) {
  size_t n = rows.size();
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      double v = rmse(rows[i], rows[j]);
      m[i][j] = v;
      m[j][i] = v;
    }
  }
  return m;
}

/// Per-UE outcome of one simulated run.
struct ue_series {
  rnti_t rnti = 0;
  uint64_t five_qi = 9;
  /// Per-second bins, Mbps. Throughput counts every transmitted byte,
  /// goodput only bytes of transport blocks that decoded successfully.
  std::vector<double> throughput_mbps;
  std::vector<double> goodput_mbps;
  std::vector<uint64_t> delay_samples_us;
  bool starved = false;
  double longest_gap_s = 0.0;
  uint64_t arrived_bytes = 0;
  uint64_t transmitted_bytes = 0;
  uint64_t delivered_bytes = 0;
  uint64_t dropped_bytes = 0;
  uint64_t queued_bytes_end = 0;
  uint64_t arrived_pdus = 0;
  uint64_t delivered_pdus = 0;
  uint64_t dropped_pdus = 0;
  double avg_throughput_mbps = 0.0;
  double avg_goodput_mbps = 0.0;
};

/// Complete outcome of one (scenario, scheduler, seed) run.
struct metrics_report {
  int format_version = 1;
  std::string scenario;
  std::string scheduler;
  uint64_t seed = 0;
  double duration_s = 0.0;
  std::vector<ue_series> ues;
  /// Fairness over per-UE average goodput; unset when nothing was delivered.
  std::optional<double> jain;
  std::optional<double> gini;
  /// Slots where a scheduler grant broke the budget or sign invariants.
  /// Always zero for the shipped schedulers; recorded, not silently fixed.
  uint64_t grant_violations = 0;
  /// Scheduler wall-clock samples, microseconds. Empty unless timing was
  /// requested; excluded from report serialization so repeated runs stay
  /// byte-identical.
  std::vector<double> sched_time_us;

  uint64_t total_transmitted_bytes() const {
    uint64_t v = 0;
    for (const auto& u : ues)
      v += u.transmitted_bytes;
    return v;
  }
  uint64_t total_delivered_bytes() const {
    uint64_t v = 0;
    for (const auto& u : ues)
      v += u.delivered_bytes;
    return v;
  }
};

} // namespace schedlab

// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "schedlab/core.hpp"

namespace schedlab {

/// One uniform-weight linear knapsack round: maximize sum(v_i * theta_i)
/// subject to lower_i <= theta_i <= upper_i and sum(theta_i) <= budget, with
/// integral theta. Entries must be ordered by ascending rnti; ties in value
/// are broken by position.
struct knapsack_round {
  std::vector<double> values;
  std::vector<int> lower;
  std::vector<int> upper;
  int budget = 0;

  void validate() const {
    if (values.size() != lower.size() || values.size() != upper.size())
      throw input_error("knapsack: values and bounds must be equally long");
    if (budget < 0)
      throw input_error("knapsack: negative budget");
    for (size_t i = 0; i < values.size(); ++i) {
      if (lower[i] < 0 || upper[i] < lower[i])
        throw input_error("knapsack: bounds must satisfy 0 <= lower <= upper");
      if (std::isnan(values[i]))
        throw input_error("knapsack: NaN value");
    }
  }
};

struct knapsack_result {
  std::vector<int> granted;
  /// Set when the lower bounds alone exceeded the budget and were served
  /// partially in descending value order.
  bool lower_bounds_degraded = false;
};

/// Greedy exact solver. With uniform unit weights the linear program is
/// solved by filling lower bounds first and then granting the remaining
/// budget in descending value order, one bound gap at a time; grants above
/// the lower bound happen only for strictly positive values, which matches
/// the optimum for any value signs.
inline knapsack_result solve_knapsack_round(const knapsack_round& round) {
  round.validate();
  const size_t n = round.values.size();
  knapsack_result res;
  res.granted.assign(n, 0);

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return round.values[a] > round.values[b];
  });

  long lower_sum = 0;
  for (int l : round.lower)
    lower_sum += l;

  int remaining = round.budget;
  if (lower_sum > round.budget) {
    res.lower_bounds_degraded = true;
    for (size_t i : order) {
      if (remaining <= 0)
        break;
      int grant = std::min(round.lower[i], remaining);
      res.granted[i] = grant;
      remaining -= grant;
    }
    return res;
  }

  for (size_t i = 0; i < n; ++i) {
    res.granted[i] = round.lower[i];
    remaining -= round.lower[i];
  }
  for (size_t i : order) {
    if (remaining <= 0)
      break;
    if (round.values[i] <= 0.0)
      break;  // descending order: nothing further improves the objective
    int grant = std::min(round.upper[i] - res.granted[i], remaining);
    res.granted[i] += grant;
    remaining -= grant;
  }
  return res;
}

} // namespace schedlab

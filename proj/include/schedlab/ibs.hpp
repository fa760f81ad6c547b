// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "schedlab/core.hpp"
#include "schedlab/knapsack.hpp"
#include "schedlab/policies.hpp"

namespace schedlab {

// Intent-composition engine: a grouping function splits the UEs and the PRB
// budget, each group runs an ordered sequence of knapsack rounds (a limit
// function producing per-UE bounds plus a value function producing per-UE
// utilities), unspent budget carries to the next round and finally to an
// optional leftover round across all UEs. Without a leftover round the
// unspent PRBs stay unused.

/// Partition of the snapshot plus per-group PRB budgets. `budgets` may be
/// empty when the grouping carries no share information of its own; the
/// composition file must then provide explicit shares.
struct grouping_outcome {
  std::vector<std::vector<size_t>> groups;
  std::vector<int> budgets;
};

using grouping_fn = std::function<grouping_outcome(const sched_context&, policy_state&)>;
using value_fn = std::function<std::vector<double>(const std::vector<size_t>&,
                                                   const sched_context&, policy_state&)>;

struct limit_bounds {
  std::vector<int> lower;
  std::vector<int> upper;
};

using limit_fn = std::function<limit_bounds(const std::vector<size_t>&, const sched_context&,
                                            policy_state&, int)>;

struct round_spec {
  std::string limit_name;
  std::string value_name;
  limit_fn limit;
  value_fn value;
};

struct composition_spec {
  std::string name = "composition";
  std::string grouping_name;
  grouping_fn grouping;
  /// Number of groups the grouping emits; rounds are declared per group.
  size_t group_count = 0;
  /// Optional explicit budget shares, one per group, sum <= 1. When present
  /// they replace the grouping's own budget arithmetic.
  std::vector<double> explicit_shares;
  std::vector<std::vector<round_spec>> group_rounds;
  std::optional<round_spec> leftover;
};

/// Per-slot trace of the composition engine, for tests and debugging.
struct compose_debug {
  std::vector<int> group_budgets;
  std::vector<std::vector<int>> round_budget_before;
  std::vector<std::vector<int>> round_granted;
  std::vector<std::vector<bool>> round_degraded;
  int leftover_pool = 0;
  int leftover_granted = 0;
};

// ---------------------------------------------------------------------------
// Grouping functions
// ---------------------------------------------------------------------------

/// Single group holding every UE and the whole budget.
inline grouping_fn make_group_all() {
  return [](const sched_context& ctx, policy_state&) {
    grouping_outcome out;
    out.groups.emplace_back();
    for (size_t i = 0; i < ctx.ues.size(); ++i)
      out.groups[0].push_back(i);
    out.budgets = {ctx.budget};
    return out;
  };
}

/// Two groups by channel quality: the top ceil(split_fraction * N) UEs by CQI
/// form the high group with floor(share_high * budget) PRBs plus the rounding
/// remainder; the rest form the low group with floor((1 - share_high) *
/// budget).
inline grouping_fn make_group_by_cqi(double split_fraction, double share_high) {
  if (split_fraction <= 0.0 || split_fraction > 1.0)
    throw config_error("grouping cqi: split_fraction must lie in (0, 1]");
  if (share_high < 0.0 || share_high > 1.0)
    throw config_error("grouping cqi: share_high must lie in [0, 1]");
  return [=](const sched_context& ctx, policy_state&) {
    const size_t n = ctx.ues.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i)
      order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (ctx.ues[a].cqi != ctx.ues[b].cqi)
        return ctx.ues[a].cqi > ctx.ues[b].cqi;
      return ctx.ues[a].rnti < ctx.ues[b].rnti;
    });
    size_t n_high = std::min(
        n, static_cast<size_t>(std::ceil(split_fraction * static_cast<double>(n))));
    grouping_outcome out;
    out.groups.assign(2, {});
    for (size_t k = 0; k < n; ++k)
      out.groups[k < n_high ? 0 : 1].push_back(order[k]);
    for (auto& g : out.groups)
      std::sort(g.begin(), g.end());
    int b_high = static_cast<int>(std::floor(share_high * ctx.budget));
    int b_low = static_cast<int>(std::floor((1.0 - share_high) * ctx.budget));
    b_high += ctx.budget - b_high - b_low;
    out.budgets = {b_high, b_low};
    return out;
  };
}

/// Two groups by traffic shape: UEs whose QoS profile is marked bursty form
/// the first group with floor(share * budget) PRBs; the complement group
/// takes every remaining PRB.
inline grouping_fn make_group_by_burstiness(double share) {
  if (share < 0.0 || share > 1.0)
    throw config_error("grouping burstiness: share must lie in [0, 1]");
  return [=](const sched_context& ctx, policy_state&) {
    grouping_outcome out;
    out.groups.assign(2, {});
    for (size_t i = 0; i < ctx.ues.size(); ++i) {
      const qos_profile& q = qos_for(ctx.qos, ctx.ues[i].five_qi);
      out.groups[q.bursty ? 0 : 1].push_back(i);
    }
    int b_bursty = static_cast<int>(std::floor(share * ctx.budget));
    out.budgets = {b_bursty, ctx.budget - b_bursty};
    return out;
  };
}

/// Two groups by average rate: the bottom ceil(bottom_fraction * N) UEs by
/// r_ave form the edge group, re-evaluated every slot. Carries no budget
/// shares; the composition file must provide them.
inline grouping_fn make_group_by_rank(double bottom_fraction) {
  if (bottom_fraction <= 0.0 || bottom_fraction > 1.0)
    throw config_error("grouping rank: bottom_fraction must lie in (0, 1]");
  return [=](const sched_context& ctx, policy_state& st) {
    const size_t n = ctx.ues.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i)
      order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      double ra = st.ensure(ctx.ues[a].rnti).r_ave_mbps;
      double rb = st.ensure(ctx.ues[b].rnti).r_ave_mbps;
      if (ra != rb)
        return ra < rb;
      return ctx.ues[a].rnti < ctx.ues[b].rnti;
    });
    size_t n_edge = std::min(
        n, static_cast<size_t>(std::ceil(bottom_fraction * static_cast<double>(n))));
    grouping_outcome out;
    out.groups.assign(2, {});
    for (size_t k = 0; k < n; ++k)
      out.groups[k < n_edge ? 0 : 1].push_back(order[k]);
    for (auto& g : out.groups)
      std::sort(g.begin(), g.end());
    return out;
  };
}

// ---------------------------------------------------------------------------
// Limit functions
// ---------------------------------------------------------------------------

/// No lower bound, upper bound equal to the round budget.
inline limit_fn make_limit_default() {
  return [](const std::vector<size_t>& group, const sched_context&, policy_state&,
            int round_budget) {
    limit_bounds b;
    b.lower.assign(group.size(), 0);
    b.upper.assign(group.size(), round_budget);
    return b;
  };
}

/// Throughput throttle: a UE whose average rate exceeds the cap gets an upper
/// bound of zero this round; everyone else may take the whole round budget.
inline limit_fn make_limit_target_throughput(double cap_mbps) {
  if (cap_mbps <= 0.0)
    throw config_error("limit target_throughput: cap_mbps must be positive");
  return [=](const std::vector<size_t>& group, const sched_context& ctx, policy_state& st,
             int round_budget) {
    limit_bounds b;
    b.lower.assign(group.size(), 0);
    b.upper.assign(group.size(), 0);
    for (size_t k = 0; k < group.size(); ++k) {
      double r_ave = st.ensure(ctx.ues[group[k]].rnti).r_ave_mbps;
      b.upper[k] = r_ave > cap_mbps ? 0 : round_budget;
    }
    return b;
  };
}

// ---------------------------------------------------------------------------
// Value functions
// ---------------------------------------------------------------------------

namespace detail {

inline double ltti_value(const ue_metrics& m, const ue_policy_state& s, double delta_us,
                         double pdb) {
  double delta_s = delta_us * 1e-6;
  double hol_s = static_cast<double>(m.hol_delay_us) * 1e-6;
  double urgency = -std::log(pdb) / delta_s;
  double arg = hol_s >= delta_s ? exp_arg_cap : delta_s / (delta_s - hol_s);
  return urgency * pf_ratio(m, s) * capped_exp(arg);
}

} // namespace detail

inline value_fn make_value_pf() {
  return [](const std::vector<size_t>& group, const sched_context& ctx, policy_state& st) {
    std::vector<double> v(group.size(), neg_inf);
    for (size_t k = 0; k < group.size(); ++k) {
      const ue_metrics& m = ctx.ues[group[k]];
      if (m.buffer_length == 0)
        continue;
      v[k] = detail::pf_ratio(m, st.ensure(m.rnti));
    }
    return v;
  };
}

inline value_fn make_value_gpf(double beta, double gamma, bool use_buffer) {
  if (beta <= 0.0 || gamma <= 0.0)
    throw config_error("value gpf: beta and gamma must be positive");
  return [=](const std::vector<size_t>& group, const sched_context& ctx, policy_state& st) {
    std::vector<double> v(group.size(), neg_inf);
    for (size_t k = 0; k < group.size(); ++k) {
      const ue_metrics& m = ctx.ues[group[k]];
      if (m.buffer_length == 0)
        continue;
      const ue_policy_state& s = st.ensure(m.rnti);
      double base = detail::pow1(m.tbs_per_prb, beta) /
                    detail::pow1(std::max(s.r_ave_mbps, r_ave_floor_mbps), gamma);
      v[k] = use_buffer ? base * static_cast<double>(m.buffer_length) : base;
    }
    return v;
  };
}

/// Deadline value with explicit target and budget-violation probability,
/// independent of the UE's QoS profile.
inline value_fn make_value_ltti(double delta_us, double pdb) {
  if (delta_us <= 0.0 || pdb <= 0.0 || pdb >= 1.0)
    throw config_error("value ltti: need delta_us > 0 and pdb in (0, 1)");
  return [=](const std::vector<size_t>& group, const sched_context& ctx, policy_state& st) {
    std::vector<double> v(group.size(), neg_inf);
    for (size_t k = 0; k < group.size(); ++k) {
      const ue_metrics& m = ctx.ues[group[k]];
      if (m.buffer_length == 0)
        continue;
      v[k] = detail::ltti_value(m, st.ensure(m.rnti), delta_us, pdb);
    }
    return v;
  };
}

struct ltti_tier {
  /// UEs taken by this tier, in descending dl_rsrp order; the last tier has
  /// no count and takes the rest.
  std::optional<int> count;
  double delta_us = 0.0;
  double pdb = 0.0;
};

/// Deadline value with per-subgroup targets: group members are ranked by
/// dl_rsrp (ties by ascending rnti) and tiers claim them in declaration
/// order.
inline value_fn make_value_ltti_multi(std::vector<ltti_tier> tiers) {
  if (tiers.empty())
    throw config_error("value ltti_multi: needs at least one tier");
  for (size_t t = 0; t < tiers.size(); ++t) {
    if (t + 1 < tiers.size() && !tiers[t].count.has_value())
      throw config_error("value ltti_multi: only the last tier may omit count");
    if (t + 1 == tiers.size() && tiers[t].count.has_value())
      throw config_error("value ltti_multi: the last tier takes the rest, omit count");
    if (tiers[t].delta_us <= 0.0 || tiers[t].pdb <= 0.0 || tiers[t].pdb >= 1.0)
      throw config_error("value ltti_multi: need delta_us > 0 and pdb in (0, 1)");
    if (tiers[t].count.has_value() && *tiers[t].count < 0)
      throw config_error("value ltti_multi: count must be non-negative");
  }
  return [tiers](const std::vector<size_t>& group, const sched_context& ctx,
                 policy_state& st) {
    std::vector<size_t> order(group.size());
    for (size_t k = 0; k < group.size(); ++k)
      order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      const ue_metrics& ma = ctx.ues[group[a]];
      const ue_metrics& mb = ctx.ues[group[b]];
      if (ma.dl_rsrp != mb.dl_rsrp)
        return ma.dl_rsrp > mb.dl_rsrp;
      return ma.rnti < mb.rnti;
    });
    std::vector<size_t> tier_of(group.size(), tiers.size() - 1);
    size_t pos = 0;
    for (size_t t = 0; t + 1 < tiers.size(); ++t) {
      for (int c = 0; c < *tiers[t].count && pos < order.size(); ++c, ++pos)
        tier_of[order[pos]] = t;
    }
    std::vector<double> v(group.size(), neg_inf);
    for (size_t k = 0; k < group.size(); ++k) {
      const ue_metrics& m = ctx.ues[group[k]];
      if (m.buffer_length == 0)
        continue;
      const ltti_tier& tier = tiers[tier_of[k]];
      v[k] = detail::ltti_value(m, st.ensure(m.rnti), tier.delta_us, tier.pdb);
    }
    return v;
  };
}

/// Token-queue deadline value exp((6/delta) * V / (1 + sqrt(mean group HoL)))
/// * PF. V is the virtual token delay maintained from the profile GBR.
inline value_fn make_value_vtsh(double delta_us) {
  if (delta_us <= 0.0)
    throw config_error("value vtsh: delta_us must be positive");
  return [=](const std::vector<size_t>& group, const sched_context& ctx, policy_state& st) {
    double mean_hol_s = 0.0;
    for (size_t k : group)
      mean_hol_s += static_cast<double>(ctx.ues[k].hol_delay_us) * 1e-6;
    if (!group.empty())
      mean_hol_s /= static_cast<double>(group.size());
    double delta_s = delta_us * 1e-6;
    std::vector<double> v(group.size(), neg_inf);
    for (size_t k = 0; k < group.size(); ++k) {
      const ue_metrics& m = ctx.ues[group[k]];
      if (m.buffer_length == 0)
        continue;
      const ue_policy_state& s = st.ensure(m.rnti);
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      double v_s = 0.0;
      if (q.gbr_mbps > 0.0)
        v_s = s.vt_bytes / (q.gbr_mbps * 1e6 / 8.0);
      double arg = 6.0 / delta_s * v_s / (1.0 + std::sqrt(mean_hol_s));
      v[k] = detail::capped_exp(arg) * detail::pf_ratio(m, s);
    }
    return v;
  };
}

struct conditional_case {
  /// Case applies when the group holds at most this many UEs; the final case
  /// omits it and always applies.
  std::optional<int> max_ues;
  value_fn value;
};

/// Per-slot selector over value functions, keyed on the group size. Cases are
/// checked in order; the last case is unconditional.
inline value_fn make_value_conditional(std::vector<conditional_case> cases) {
  if (cases.empty())
    throw config_error("value conditional: needs at least one case");
  for (size_t i = 0; i < cases.size(); ++i) {
    if (i + 1 < cases.size() && !cases[i].max_ues.has_value())
      throw config_error("value conditional: only the last case may omit max_ues");
    if (i + 1 == cases.size() && cases[i].max_ues.has_value())
      throw config_error("value conditional: the last case must be unconditional");
  }
  return [cases](const std::vector<size_t>& group, const sched_context& ctx,
                 policy_state& st) {
    for (const auto& c : cases) {
      if (!c.max_ues.has_value() || static_cast<int>(group.size()) <= *c.max_ues)
        return c.value(group, ctx, st);
    }
    return cases.back().value(group, ctx, st);
  };
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

namespace detail {

/// Explicit shares to integer budgets: floor each, then hand the remainder
/// PRBs (up to floor(sum * pool)) out one by one in declaration order.
inline std::vector<int> budgets_from_shares(const std::vector<double>& shares, int pool) {
  std::vector<int> budgets(shares.size(), 0);
  double share_sum = 0.0;
  for (size_t i = 0; i < shares.size(); ++i) {
    budgets[i] = static_cast<int>(std::floor(shares[i] * pool));
    share_sum += shares[i];
  }
  int target = static_cast<int>(std::floor(std::min(share_sum, 1.0) * pool));
  int assigned = std::accumulate(budgets.begin(), budgets.end(), 0);
  for (size_t i = 0; i < budgets.size() && assigned < target; ++i, ++assigned)
    budgets[i] += 1;
  return budgets;
}

} // namespace detail

/// Runs one composed scheduling decision. Bounds of every round are capped by
/// each UE's remaining PRB need so a grant never exceeds what the buffer can
/// use; unused group budget flows to the leftover round.
inline allocation compose_schedule(const composition_spec& spec, policy_state& st,
                                   const sched_context& ctx,
                                   compose_debug* debug = nullptr) {
  grouping_outcome grouping = spec.grouping(ctx, st);
  if (grouping.groups.size() != spec.group_count)
    throw input_error("compose: grouping emitted an unexpected group count");

  std::vector<int> budgets;
  if (!spec.explicit_shares.empty())
    budgets = detail::budgets_from_shares(spec.explicit_shares, ctx.budget);
  else if (!grouping.budgets.empty())
    budgets = grouping.budgets;
  else
    throw input_error("compose: grouping carries no shares and none were configured");

  allocation alloc;
  alloc.prbs.assign(ctx.ues.size(), 0);
  std::vector<int64_t> remaining_need(ctx.ues.size(), 0);
  for (size_t i = 0; i < ctx.ues.size(); ++i)
    remaining_need[i] = ctx.ues[i].num_rbs_required;

  int budget_sum = std::accumulate(budgets.begin(), budgets.end(), 0);
  int leftover_pool = ctx.budget - budget_sum;

  if (debug != nullptr) {
    debug->group_budgets = budgets;
    debug->round_budget_before.assign(grouping.groups.size(), {});
    debug->round_granted.assign(grouping.groups.size(), {});
    debug->round_degraded.assign(grouping.groups.size(), {});
  }

  auto run_round = [&](const round_spec& round, const std::vector<size_t>& members,
                       int round_budget, bool* degraded) -> int {
    knapsack_round kr;
    kr.budget = round_budget;
    limit_bounds bounds = round.limit(members, ctx, st, round_budget);
    kr.values = round.value(members, ctx, st);
    if (bounds.lower.size() != members.size() || bounds.upper.size() != members.size() ||
        kr.values.size() != members.size())
      throw input_error("compose: limit or value output does not match the group size");
    kr.lower.resize(members.size());
    kr.upper.resize(members.size());
    for (size_t k = 0; k < members.size(); ++k) {
      int64_t need = remaining_need[members[k]];
      kr.upper[k] = static_cast<int>(std::min<int64_t>(bounds.upper[k], need));
      kr.lower[k] = std::min(bounds.lower[k], kr.upper[k]);
    }
    knapsack_result res = solve_knapsack_round(kr);
    if (degraded != nullptr)
      *degraded = res.lower_bounds_degraded;
    int granted_total = 0;
    for (size_t k = 0; k < members.size(); ++k) {
      alloc.prbs[members[k]] += res.granted[k];
      remaining_need[members[k]] -= res.granted[k];
      granted_total += res.granted[k];
    }
    return granted_total;
  };

  for (size_t g = 0; g < grouping.groups.size(); ++g) {
    const auto& members = grouping.groups[g];
    int group_budget = budgets[g];
    if (members.empty()) {
      leftover_pool += group_budget;
      continue;
    }
    for (const auto& round : spec.group_rounds[g]) {
      if (group_budget <= 0)
        break;
      bool degraded = false;
      int before = group_budget;
      int granted = run_round(round, members, group_budget, &degraded);
      group_budget -= granted;
      if (debug != nullptr) {
        debug->round_budget_before[g].push_back(before);
        debug->round_granted[g].push_back(granted);
        debug->round_degraded[g].push_back(degraded);
      }
    }
    leftover_pool += group_budget;
  }

  if (debug != nullptr)
    debug->leftover_pool = leftover_pool;

  if (spec.leftover.has_value() && leftover_pool > 0) {
    std::vector<size_t> everyone(ctx.ues.size());
    for (size_t i = 0; i < everyone.size(); ++i)
      everyone[i] = i;
    int granted = run_round(*spec.leftover, everyone, leftover_pool, nullptr);
    if (debug != nullptr)
      debug->leftover_granted = granted;
  }
  return alloc;
}

// ---------------------------------------------------------------------------
// Declarative configuration
// ---------------------------------------------------------------------------

namespace detail {

using json = nlohmann::json;

inline const json& json_need(const json& j, const char* key, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end())
    throw config_error("composition: missing field " + path + "." + key);
  return *it;
}

inline double json_num(const json& j, const char* key, const std::string& path) {
  const json& v = json_need(j, key, path);
  if (!v.is_number())
    throw config_error("composition: field " + path + "." + key + " must be a number");
  return v.get<double>();
}

inline double json_num_or(const json& j, const char* key, double fallback) {
  auto it = j.find(key);
  if (it == j.end())
    return fallback;
  if (!it->is_number())
    throw config_error(std::string("composition: field ") + key + " must be a number");
  return it->get<double>();
}

inline value_fn parse_value_spec(const json& j, const std::string& path);

inline limit_fn parse_limit_spec(const json& j, const std::string& path) {
  if (!j.is_object())
    throw config_error("composition: " + path + " must be an object");
  std::string name = json_need(j, "name", path).get<std::string>();
  json params = j.contains("params") ? j["params"] : json::object();
  if (name == "default")
    return make_limit_default();
  if (name == "target_throughput")
    return make_limit_target_throughput(json_num(params, "cap_mbps", path + ".params"));
  throw config_error("composition: unknown limit function '" + name + "' at " + path);
}

inline value_fn parse_value_spec(const json& j, const std::string& path) {
  if (!j.is_object())
    throw config_error("composition: " + path + " must be an object");
  std::string name = json_need(j, "name", path).get<std::string>();
  json params = j.contains("params") ? j["params"] : json::object();
  if (name == "pf")
    return make_value_pf();
  if (name == "gpf")
    return make_value_gpf(json_num_or(params, "beta", 0.6), json_num_or(params, "gamma", 0.7),
                          false);
  if (name == "gpfb")
    return make_value_gpf(json_num_or(params, "beta", 0.6), json_num_or(params, "gamma", 0.7),
                          json_num_or(params, "use_buffer", 1.0) != 0.0);
  if (name == "ltti")
    return make_value_ltti(json_num(params, "delta_us", path + ".params"),
                           json_num(params, "pdb", path + ".params"));
  if (name == "ltti_multi") {
    const json& tiers_j = json_need(params, "tiers", path + ".params");
    if (!tiers_j.is_array() || tiers_j.empty())
      throw config_error("composition: " + path + ".params.tiers must be a non-empty array");
    std::vector<ltti_tier> tiers;
    for (size_t t = 0; t < tiers_j.size(); ++t) {
      std::string tpath = path + ".params.tiers[" + std::to_string(t) + "]";
      ltti_tier tier;
      if (tiers_j[t].contains("count"))
        tier.count = tiers_j[t]["count"].get<int>();
      tier.delta_us = json_num(tiers_j[t], "delta_us", tpath);
      tier.pdb = json_num(tiers_j[t], "pdb", tpath);
      tiers.push_back(tier);
    }
    return make_value_ltti_multi(std::move(tiers));
  }
  if (name == "vtsh")
    return make_value_vtsh(json_num(params, "delta_us", path + ".params"));
  if (name == "conditional") {
    const json& cases_j = json_need(params, "cases", path + ".params");
    if (!cases_j.is_array() || cases_j.empty())
      throw config_error("composition: " + path + ".params.cases must be a non-empty array");
    std::vector<conditional_case> cases;
    for (size_t c = 0; c < cases_j.size(); ++c) {
      std::string cpath = path + ".params.cases[" + std::to_string(c) + "]";
      conditional_case cc;
      if (cases_j[c].contains("max_ues"))
        cc.max_ues = cases_j[c]["max_ues"].get<int>();
      cc.value = parse_value_spec(json_need(cases_j[c], "value", cpath), cpath + ".value");
      cases.push_back(std::move(cc));
    }
    return make_value_conditional(std::move(cases));
  }
  throw config_error("composition: unknown value function '" + name + "' at " + path);
}

inline round_spec parse_round_spec(const json& j, const std::string& path) {
  round_spec r;
  const json& limit_j = json_need(j, "limit", path);
  const json& value_j = json_need(j, "value", path);
  r.limit_name = json_need(limit_j, "name", path + ".limit").get<std::string>();
  r.value_name = json_need(value_j, "name", path + ".value").get<std::string>();
  r.limit = parse_limit_spec(limit_j, path + ".limit");
  r.value = parse_value_spec(value_j, path + ".value");
  return r;
}

} // namespace detail

/// Parses a composition from its JSON document. Unknown function names,
/// missing fields and inconsistent group counts fail here, at load time.
inline composition_spec parse_composition(const nlohmann::json& j) {
  using detail::json_need;
  using detail::json_num;
  if (!j.is_object())
    throw config_error("composition: document root must be an object");
  composition_spec spec;
  if (j.contains("name"))
    spec.name = j["name"].get<std::string>();

  const auto& grouping_j = json_need(j, "grouping", "$");
  spec.grouping_name = json_need(grouping_j, "name", "$.grouping").get<std::string>();
  nlohmann::json gparams =
      grouping_j.contains("params") ? grouping_j["params"] : nlohmann::json::object();
  bool shares_required = false;
  if (spec.grouping_name == "all") {
    spec.grouping = make_group_all();
    spec.group_count = 1;
  } else if (spec.grouping_name == "cqi") {
    spec.grouping =
        make_group_by_cqi(json_num(gparams, "split_fraction", "$.grouping.params"),
                          json_num(gparams, "share_high", "$.grouping.params"));
    spec.group_count = 2;
  } else if (spec.grouping_name == "burstiness") {
    spec.grouping =
        make_group_by_burstiness(json_num(gparams, "share", "$.grouping.params"));
    spec.group_count = 2;
  } else if (spec.grouping_name == "rank") {
    spec.grouping =
        make_group_by_rank(json_num(gparams, "bottom_fraction", "$.grouping.params"));
    spec.group_count = 2;
    shares_required = true;
  } else {
    throw config_error("composition: unknown grouping function '" + spec.grouping_name + "'");
  }

  const auto& groups_j = json_need(j, "groups", "$");
  if (!groups_j.is_array() || groups_j.size() != spec.group_count)
    throw config_error("composition: expected " + std::to_string(spec.group_count) +
                       " groups for grouping '" + spec.grouping_name + "'");

  size_t with_share = 0;
  double share_sum = 0.0;
  for (size_t g = 0; g < groups_j.size(); ++g) {
    std::string gpath = "$.groups[" + std::to_string(g) + "]";
    if (groups_j[g].contains("share")) {
      double share = json_num(groups_j[g], "share", gpath);
      if (share < 0.0 || share > 1.0)
        throw config_error("composition: " + gpath + ".share must lie in [0, 1]");
      spec.explicit_shares.push_back(share);
      share_sum += share;
      ++with_share;
    }
    const auto& rounds_j = json_need(groups_j[g], "rounds", gpath);
    if (!rounds_j.is_array() || rounds_j.empty())
      throw config_error("composition: " + gpath + ".rounds must be a non-empty array");
    std::vector<round_spec> rounds;
    for (size_t r = 0; r < rounds_j.size(); ++r)
      rounds.push_back(detail::parse_round_spec(
          rounds_j[r], gpath + ".rounds[" + std::to_string(r) + "]"));
    spec.group_rounds.push_back(std::move(rounds));
  }
  if (with_share != 0 && with_share != groups_j.size())
    throw config_error("composition: either every group or no group declares a share");
  if (with_share == 0)
    spec.explicit_shares.clear();
  if (share_sum > 1.0 + 1e-9)
    throw config_error("composition: group shares must sum to at most 1");
  if (shares_required && spec.explicit_shares.empty())
    throw config_error("composition: grouping '" + spec.grouping_name +
                       "' requires explicit group shares");

  if (j.contains("leftover"))
    spec.leftover = detail::parse_round_spec(j["leftover"], "$.leftover");
  return spec;
}

/// Parses a composition from raw JSON text, mapping parse errors to
/// configuration errors with the reported position.
inline composition_spec parse_composition_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw config_error(std::string("composition: ") + e.what());
  }
  try {
    return parse_composition(j);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("composition: malformed field: ") + e.what());
  }
}

} // namespace schedlab

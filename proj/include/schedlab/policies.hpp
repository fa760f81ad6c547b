// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "schedlab/core.hpp"
#include "schedlab/rng.hpp"

namespace schedlab {

// Unit conventions used by every value formula: delays are converted to
// seconds, rates to Mbps, buffers stay in bytes, PRB counts stay integral.

enum class policy_id {
  rr,
  bcqi,
  ft,
  pf,
  lean,
  log_rule,
  pfb,
  gpf,
  gpfb,
  eufs,
  qos_log_rule,
  rad_ds,
  qos_fk,
  vt_sh,
  exp_pf,
  a_exp_pf,
  two_level_fls,
  ltti,
  wd_ps,
};

/// Tunables shared across the policy family. Negative sentinel values mean
/// "derive the coefficient from state" where a formula defines a default.
struct policy_params {
  double beta = 0.6;
  double gamma = 0.7;
  bool use_buffer = true;
  double s_lean = 1.0;
  /// Log-rule constants. c is the additive constant; a < 0 derives
  /// 10 / max_buff_bytes, b < 0 derives 1 / r_inst_avg.
  double log_c = 1.1;
  double log_a = -1.0;
  double log_b = -1.0;
  double p_pf = 0.8;
  int eufs_k = 1;
  double edge_fraction = 0.4;
  double fu_step = 0.1;
  double eps = 0.01;
  double w_min = 1e-3;
  double w_max = 1e3;
  /// Delay threshold of the adaptive exponential rule, milliseconds.
  double c_ms = 10.0;
  /// Quota recursion coefficients c[n] = fls_base^(n-1).
  double fls_base = 0.5;
};

struct policy_config {
  policy_id id = policy_id::pf;
  policy_params params;
};

inline constexpr double r_ave_floor_mbps = 1e-3;
inline constexpr double ewma_alpha = 0.01;
inline constexpr double lean_log_floor = 1e-6;
/// Every exp() argument in a value formula is clamped here so diverging
/// delays or token levels rank at a finite maximum instead of overflowing.
inline constexpr double exp_arg_cap = 50.0;
inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Per-UE scheduler memory carried across slots.
struct ue_policy_state {
  /// EWMA of delivered goodput, Mbps, floored at r_ave_floor_mbps.
  double r_ave_mbps = r_ave_floor_mbps;
  /// EWMA of the per-PRB transport block size, bytes.
  double r_inst_avg = r_ave_floor_mbps;
  long last_served_slot = 0;
  /// Slots since last service; reset to zero whenever PRBs are granted.
  long phi = 0;
  /// Preemption control variable of the cell-edge scheduler.
  double fu_c = 1.0;
  /// Virtual token queue level, bytes.
  double vt_bytes = 0.0;
  /// Buffer and served-byte history per downlink slot, newest at the back.
  std::deque<uint32_t> buffer_history;
  std::deque<uint64_t> served_history;
};

struct policy_state {
  std::map<rnti_t, ue_policy_state> ue;
  /// Non-real-time weights of the exponential rules.
  double w_exp_pf = 1.0;
  double w_a_exp_pf = 1.0;

  ue_policy_state& ensure(rnti_t rnti) { return ue[rnti]; }
};

/// Everything a scheduler may consult for one slot. The metrics snapshot is
/// ordered by ascending rnti; allocations are index-aligned with it.
struct sched_context {
  const std::vector<ue_metrics>& ues;
  const cell_config& cell;
  const qos_map& qos;
  long slot = 0;
  int budget = 0;
  uint64_t max_buff_bytes = 10000000;
  /// Stream for randomized schedulers. Required by eufs.
  rng* policy_rng = nullptr;
};

namespace detail {

inline double pow1(double x, double e) { return e == 1.0 ? x : std::pow(x, e); }

inline double capped_exp(double arg) { return std::exp(std::min(arg, exp_arg_cap)); }

inline double pf_ratio(const ue_metrics& m, const ue_policy_state& s) {
  return m.tbs_per_prb / std::max(s.r_ave_mbps, r_ave_floor_mbps);
}

inline double hol_seconds(const ue_metrics& m) {
  return static_cast<double>(m.hol_delay_us) * 1e-6;
}

} // namespace detail

/// Log-rule utility b * log(c + a * queue) * rate, spelled out over reals so
/// the closed-form checks are exact.
inline double log_rule_value(double b, double c, double a, double queue, double rate) {
  return b * std::log(c + a * queue) * rate;
}

/// Quota recursion of the frame-level scheduler: bytes owed to a UE given its
/// buffer level now, buffer history and served history over the last M
/// downlink slots, and coefficients c[n]. History indices run newest-last;
/// terms falling off the recorded history read as zero. The result is clamped
/// to [0, current buffer].
inline double fls_quota_bytes(uint32_t buffer_now, const std::deque<uint32_t>& buf_hist,
                              const std::deque<uint64_t>& served_hist, int m_slots,
                              double coeff_base) {
  double quota = static_cast<double>(buffer_now);
  auto buf_at = [&](int back) -> double {
    // back = 1 means the most recent recorded downlink slot.
    if (back < 1 || back > static_cast<int>(buf_hist.size()))
      return 0.0;
    return static_cast<double>(buf_hist[buf_hist.size() - static_cast<size_t>(back)]);
  };
  auto served_at = [&](int back) -> double {
    if (back < 1 || back > static_cast<int>(served_hist.size()))
      return 0.0;
    return static_cast<double>(served_hist[served_hist.size() - static_cast<size_t>(back)]);
  };
  double coeff = 1.0;
  for (int n = 2; n <= m_slots; ++n) {
    coeff *= coeff_base;
    // Slot t-n+1 is (n-1) recorded slots back; slot t-n+2 is (n-2) back,
    // where zero back means the current buffer level.
    double newer = (n == 2) ? static_cast<double>(buffer_now) : buf_at(n - 2);
    quota += (buf_at(n - 1) - newer - served_at(n - 1)) * coeff;
  }
  quota = std::max(quota, 0.0);
  return std::min(quota, static_cast<double>(buffer_now));
}

/// Downlink slots spanned by a delay target, counting only the DL share of
/// the TDD period.
inline int fls_history_slots(double delta_us, const cell_config& cell) {
  return static_cast<int>(std::floor(delta_us / cell.slot_duration_us * cell.dl_fraction()));
}

namespace detail {

inline std::vector<size_t> order_by_value_desc(const std::vector<double>& values,
                                               const std::vector<ue_metrics>& ues) {
  std::vector<size_t> order(values.size());
  for (size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (values[a] != values[b])
      return values[a] > values[b];
    return ues[a].rnti < ues[b].rnti;
  });
  return order;
}

inline void grant_in_order(allocation& alloc, const std::vector<size_t>& order,
                           const std::vector<double>& values, const sched_context& ctx,
                           int& remaining) {
  for (size_t i : order) {
    if (remaining <= 0)
      break;
    if (values[i] == neg_inf)
      continue;
    uint32_t need = ctx.ues[i].num_rbs_required;
    if (need == 0)
      continue;
    uint32_t already = static_cast<uint32_t>(alloc.prbs[i]);
    if (already >= need)
      continue;
    int grant = static_cast<int>(std::min<uint64_t>(need - already,
                                                    static_cast<uint64_t>(remaining)));
    alloc.prbs[i] += grant;
    remaining -= grant;
  }
}

} // namespace detail

/// Greedy grant loop shared by the single-stage policies: UEs in descending
/// value order (ties broken by ascending rnti) receive min(need, remaining)
/// PRBs. Empty-buffer UEs carry a -inf value and are skipped.
inline allocation allocate_by_values(const std::vector<double>& values,
                                     const sched_context& ctx) {
  if (values.size() != ctx.ues.size())
    throw input_error("allocate_by_values: value count does not match UE count");
  for (double v : values)
    if (std::isnan(v))
      throw input_error("allocate_by_values: NaN value");
  allocation alloc;
  alloc.prbs.assign(values.size(), 0);
  int remaining = ctx.budget;
  auto order = detail::order_by_value_desc(values, ctx.ues);
  detail::grant_in_order(alloc, order, values, ctx, remaining);
  return alloc;
}

namespace detail {

/// Mean head-of-line delay in seconds over the RT UEs of the snapshot.
inline double mean_rt_hol_seconds(const sched_context& ctx) {
  double sum = 0.0;
  int count = 0;
  for (const auto& m : ctx.ues) {
    const qos_profile& q = qos_for(ctx.qos, m.five_qi);
    if (!q.is_rt)
      continue;
    sum += hol_seconds(m);
    ++count;
  }
  return count > 0 ? sum / count : 0.0;
}

struct exp_rule_terms {
  std::vector<double> a;       // per-UE delay weight, 1/s; zero for NRT UEs
  double weighted_mean = 0.0;  // mean of a_i * D_i over RT UEs
  double rt_buffer_bytes = 0.0;
  double nrt_buffer_bytes = 0.0;
};

inline exp_rule_terms exp_rule_prepare(const sched_context& ctx, bool adaptive, double c_s) {
  exp_rule_terms t;
  t.a.assign(ctx.ues.size(), 0.0);
  double sum = 0.0;
  int rt_count = 0;
  for (size_t i = 0; i < ctx.ues.size(); ++i) {
    const ue_metrics& m = ctx.ues[i];
    const qos_profile& q = qos_for(ctx.qos, m.five_qi);
    if (q.is_rt) {
      double delta_s = q.delta_us * 1e-6;
      t.a[i] = adaptive ? c_s / delta_s : -std::log(q.pdb) / delta_s;
      sum += t.a[i] * hol_seconds(m);
      ++rt_count;
      t.rt_buffer_bytes += m.buffer_length;
    } else {
      t.nrt_buffer_bytes += m.buffer_length;
    }
  }
  t.weighted_mean = rt_count > 0 ? sum / rt_count : 0.0;
  return t;
}

} // namespace detail

/// Adjusts the non-real-time weight of the exponential rules once per slot.
/// When the plain mean RT head-of-line delay exceeds the threshold (largest
/// per-UE delay target for the base rule, the constant c for the adaptive
/// rule) the weight shrinks by (1 - eps), otherwise it grows by (1 + eps),
/// clamped to [w_min, w_max].
inline void exp_pf_update_w(policy_state& st, const sched_context& ctx, bool adaptive,
                            const policy_params& p) {
  double mean_hol_s = detail::mean_rt_hol_seconds(ctx);
  double threshold_s;
  if (adaptive) {
    threshold_s = p.c_ms * 1e-3;
  } else {
    threshold_s = 0.0;
    for (const auto& m : ctx.ues) {
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      if (q.is_rt)
        threshold_s = std::max(threshold_s, q.delta_us * 1e-6);
    }
  }
  double& w = adaptive ? st.w_a_exp_pf : st.w_exp_pf;
  w *= (mean_hol_s > threshold_s) ? (1.0 - p.eps) : (1.0 + p.eps);
  w = std::clamp(w, p.w_min, p.w_max);
}

/// Value vector for the single-stage policies. Multi-stage schedulers (eufs,
/// rad-ds, vt-sh, 2l-fls) do not reduce to one value vector and raise
/// input_error here; use schedule() for them.
inline std::vector<double> compute_values(const policy_config& cfg, policy_state& st,
                                          const sched_context& ctx) {
  const size_t n = ctx.ues.size();
  std::vector<double> values(n, neg_inf);

  detail::exp_rule_terms exp_terms;
  if (cfg.id == policy_id::exp_pf)
    exp_terms = detail::exp_rule_prepare(ctx, false, 0.0);
  else if (cfg.id == policy_id::a_exp_pf)
    exp_terms = detail::exp_rule_prepare(ctx, true, cfg.params.c_ms * 1e-3);

  for (size_t i = 0; i < n; ++i) {
    const ue_metrics& m = ctx.ues[i];
    if (m.buffer_length == 0)
      continue;
    ue_policy_state& s = st.ensure(m.rnti);
    double pf = detail::pf_ratio(m, s);
    switch (cfg.id) {
    case policy_id::rr:
      values[i] = static_cast<double>(ctx.slot - s.last_served_slot);
      break;
    case policy_id::bcqi:
      values[i] = static_cast<double>(m.cqi);
      break;
    case policy_id::ft:
      values[i] = -s.r_ave_mbps;
      break;
    case policy_id::pf:
      values[i] = pf;
      break;
    case policy_id::lean: {
      double alpha = 1.0 / (1.0 + cfg.params.s_lean);
      double mcs_max = std::max<double>(m.max_mcs, 1.0);
      values[i] = alpha * std::log(std::max(pf, lean_log_floor)) +
                  alpha * std::log(std::max(m.cqi / mcs_max, lean_log_floor));
      break;
    }
    case policy_id::log_rule: {
      double a = cfg.params.log_a >= 0.0 ? cfg.params.log_a
                                         : 10.0 / static_cast<double>(ctx.max_buff_bytes);
      double b = cfg.params.log_b >= 0.0
                     ? cfg.params.log_b
                     : 1.0 / std::max(s.r_inst_avg, r_ave_floor_mbps);
      values[i] = log_rule_value(b, cfg.params.log_c, a, m.buffer_length, m.tbs_per_prb);
      break;
    }
    case policy_id::pfb:
      values[i] = pf * static_cast<double>(m.buffer_length);
      break;
    case policy_id::gpf:
      values[i] = detail::pow1(m.tbs_per_prb, cfg.params.beta) /
                  detail::pow1(std::max(s.r_ave_mbps, r_ave_floor_mbps), cfg.params.gamma);
      break;
    case policy_id::gpfb: {
      double base = detail::pow1(m.tbs_per_prb, cfg.params.beta) /
                    detail::pow1(std::max(s.r_ave_mbps, r_ave_floor_mbps), cfg.params.gamma);
      values[i] = cfg.params.use_buffer ? base * static_cast<double>(m.buffer_length) : base;
      break;
    }
    case policy_id::qos_log_rule: {
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      (void)q;
      double b = cfg.params.log_b >= 0.0
                     ? cfg.params.log_b
                     : 1.0 / std::max(s.r_inst_avg, r_ave_floor_mbps);
      double a = 5.0 / std::max(s.r_ave_mbps, r_ave_floor_mbps);
      values[i] = log_rule_value(b, cfg.params.log_c, a, detail::hol_seconds(m), m.tbs_per_prb);
      break;
    }
    case policy_id::qos_fk: {
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      double loss = 0.0;  // packet loss is not observable at this layer
      values[i] = 16.0 * std::tanh(static_cast<double>(m.hol_delay_us) / q.delta_us) +
                  2.0 * std::tanh(static_cast<double>(m.buffer_length) /
                                  static_cast<double>(ctx.max_buff_bytes)) +
                  4.0 * std::tanh(q.priority) + 4.0 * std::tanh(loss);
      break;
    }
    case policy_id::exp_pf: {
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      double xbar = exp_terms.weighted_mean;
      if (q.is_rt) {
        double x = exp_terms.a[i] * detail::hol_seconds(m);
        values[i] = detail::capped_exp((x - xbar) / (1.0 + std::sqrt(xbar))) * pf;
      } else {
        values[i] = st.w_exp_pf / std::max(exp_terms.rt_buffer_bytes, 1.0) * pf;
      }
      break;
    }
    case policy_id::a_exp_pf: {
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      double xbar = exp_terms.weighted_mean;
      if (q.is_rt) {
        double x = exp_terms.a[i] * detail::hol_seconds(m);
        values[i] =
            exp_terms.a[i] * detail::capped_exp((x - xbar) / (1.0 + std::sqrt(xbar))) * pf;
      } else {
        values[i] = st.w_a_exp_pf / std::max(exp_terms.nrt_buffer_bytes, 1.0) * pf;
      }
      break;
    }
    case policy_id::ltti: {
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      double delta_s = q.delta_us * 1e-6;
      double hol_s = detail::hol_seconds(m);
      double urgency = -std::log(q.pdb) / delta_s;
      double arg = hol_s >= delta_s ? exp_arg_cap : delta_s / (delta_s - hol_s);
      values[i] = urgency * pf * detail::capped_exp(arg);
      break;
    }
    case policy_id::wd_ps: {
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      double weighted_delay = -std::log(q.pdb) / (q.delta_us * 1e-6) * detail::hol_seconds(m);
      values[i] = std::log1p(weighted_delay) * weighted_delay * pf;
      break;
    }
    case policy_id::eufs:
    case policy_id::rad_ds:
    case policy_id::vt_sh:
    case policy_id::two_level_fls:
      throw input_error("compute_values: scheduler is multi-stage, use schedule()");
    }
  }
  return values;
}

namespace detail {

inline std::vector<double> pf_values(policy_state& st, const sched_context& ctx) {
  policy_config pf_cfg;
  pf_cfg.id = policy_id::pf;
  return compute_values(pf_cfg, st, ctx);
}

} // namespace detail

/// Cell-edge upgrade scheduler: a PF round, then with probability
/// PF_C / (PF_C + sum of FU_C over edge UEs) the bottom-fraction UEs by
/// average rate preempt and are served first. FU_C of every UE steps up after
/// a slot without preemption and down after one with, clamped at zero.
inline allocation eufs_schedule(const policy_config& cfg, policy_state& st,
                                const sched_context& ctx) {
  if (ctx.policy_rng == nullptr)
    throw input_error("eufs_schedule: requires a policy rng stream");
  const auto& p = cfg.params;
  std::vector<double> pf = detail::pf_values(st, ctx);

  size_t n_fus = static_cast<size_t>(std::floor(p.edge_fraction * ctx.ues.size()));
  std::vector<size_t> by_rate(ctx.ues.size());
  for (size_t i = 0; i < by_rate.size(); ++i)
    by_rate[i] = i;
  std::stable_sort(by_rate.begin(), by_rate.end(), [&](size_t a, size_t b) {
    double ra = st.ensure(ctx.ues[a].rnti).r_ave_mbps;
    double rb = st.ensure(ctx.ues[b].rnti).r_ave_mbps;
    if (ra != rb)
      return ra < rb;
    return ctx.ues[a].rnti < ctx.ues[b].rnti;
  });
  std::vector<bool> is_edge(ctx.ues.size(), false);
  double edge_fu_sum = 0.0;
  for (size_t k = 0; k < n_fus && k < by_rate.size(); ++k) {
    is_edge[by_rate[k]] = true;
    edge_fu_sum += st.ensure(ctx.ues[by_rate[k]].rnti).fu_c;
  }

  double pf_c = n_fus == 0 ? 0.0
                           : p.p_pf * static_cast<double>(n_fus) * p.eufs_k / (1.0 - p.p_pf);
  double p_sched = pf_c <= 0.0 ? 0.0 : pf_c / (pf_c + edge_fu_sum);
  bool preempt = p_sched > 0.0 && ctx.policy_rng->bernoulli(p_sched);

  allocation alloc;
  if (preempt) {
    alloc.prbs.assign(ctx.ues.size(), 0);
    int remaining = ctx.budget;
    auto order = detail::order_by_value_desc(pf, ctx.ues);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return is_edge[a] && !is_edge[b]; });
    detail::grant_in_order(alloc, order, pf, ctx, remaining);
  } else {
    alloc = allocate_by_values(pf, ctx);
  }

  for (const auto& m : ctx.ues) {
    double& fu = st.ensure(m.rnti).fu_c;
    fu = preempt ? std::max(0.0, fu - p.fu_step) : fu + p.fu_step;
  }
  return alloc;
}

/// Per-UE admission gate of the required-activity scheduler: phi * RA * DS.
/// RA of an RT UE is the PRB count needed to sustain its GBR at the current
/// per-PRB rate; NRT UEs share the residual printed form
/// max(0, n_prbs - sum(RA_RT) / #NRT). DS is 1 + D_hol/delta for RT, 1 for
/// NRT. Empty-buffer UEs gate at -inf.
inline std::vector<double> rad_ds_gate(policy_state& st, const sched_context& ctx,
                                       std::vector<double>* activity_out = nullptr) {
  const size_t n = ctx.ues.size();
  std::vector<double> gate(n, neg_inf);
  std::vector<double> activity(n, 0.0);

  double sum_ra_rt = 0.0;
  int nrt_count = 0;
  for (size_t i = 0; i < n; ++i) {
    const ue_metrics& m = ctx.ues[i];
    if (m.buffer_length == 0)
      continue;
    const qos_profile& q = qos_for(ctx.qos, m.five_qi);
    if (q.is_rt) {
      double prb_rate_mbps = m.tbs_per_prb * 8.0 / ctx.cell.slot_duration_us;
      double ra = prb_rate_mbps > 0.0 ? q.gbr_mbps / prb_rate_mbps : 0.0;
      activity[i] = ra;
      sum_ra_rt += ra;
    } else {
      ++nrt_count;
    }
  }
  double ra_nrt = 0.0;
  if (nrt_count > 0)
    ra_nrt = std::max(0.0, static_cast<double>(ctx.cell.n_prbs) - sum_ra_rt / nrt_count);

  for (size_t i = 0; i < n; ++i) {
    const ue_metrics& m = ctx.ues[i];
    if (m.buffer_length == 0)
      continue;
    const qos_profile& q = qos_for(ctx.qos, m.five_qi);
    double ds = 1.0;
    if (q.is_rt)
      ds = 1.0 + static_cast<double>(m.hol_delay_us) / q.delta_us;
    else
      activity[i] = ra_nrt;
    gate[i] = static_cast<double>(st.ensure(m.rnti).phi) * activity[i] * ds;
  }
  if (activity_out != nullptr)
    *activity_out = activity;
  return gate;
}

/// Required-activity scheduler: ranks backlogged UEs by the gate, admits them
/// while their summed PRB activity (clamped to [1, budget]) fits the budget
/// (the top-ranked UE is always admitted), then runs a PF round over the
/// admitted set.
inline allocation rad_ds_schedule(policy_state& st, const sched_context& ctx) {
  std::vector<double> activity;
  std::vector<double> gate = rad_ds_gate(st, ctx, &activity);
  auto order = detail::order_by_value_desc(gate, ctx.ues);

  std::vector<bool> admitted(ctx.ues.size(), false);
  double used = 0.0;
  bool any = false;
  for (size_t i : order) {
    if (gate[i] == neg_inf)
      continue;
    double act = std::clamp(activity[i], 1.0, static_cast<double>(ctx.budget));
    if (!any || used + act <= static_cast<double>(ctx.budget)) {
      admitted[i] = true;
      used += act;
      any = true;
    }
  }

  std::vector<double> pf = detail::pf_values(st, ctx);
  for (size_t i = 0; i < pf.size(); ++i)
    if (!admitted[i])
      pf[i] = neg_inf;
  return allocate_by_values(pf, ctx);
}

/// Budget split of the token-bucket Shapley scheduler for the two-player game
/// over {RT, NRT} with v(S) = min(PRB demand of S, budget). Returns the RT
/// and NRT integer budgets; the rounding remainder PRB goes to RT.
inline std::pair<int, int> vt_sh_split(int rt_demand, int nrt_demand, int budget) {
  auto v = [&](int demand) { return std::min(demand, budget); };
  int v_rt = v(rt_demand);
  int v_nrt = v(nrt_demand);
  int v_both = v(rt_demand + nrt_demand);
  double shap_rt = 0.5 * v_rt + 0.5 * (v_both - v_nrt);
  double shap_nrt = 0.5 * v_nrt + 0.5 * (v_both - v_rt);
  int b_rt = static_cast<int>(std::floor(shap_rt));
  int b_nrt = static_cast<int>(std::floor(shap_nrt));
  b_rt += v_both - b_rt - b_nrt;  // remainder, 0 or 1
  return {b_rt, b_nrt};
}

/// Token-bucket Shapley scheduler: splits the budget between the RT and NRT
/// groups by the two-player Shapley value, then serves the RT group by
/// exp((6/delta) * V / (1 + sqrt(mean RT HoL))) * PF and the NRT group by
/// plain PF within their budgets.
inline allocation vt_sh_schedule(policy_state& st, const sched_context& ctx) {
  const size_t n = ctx.ues.size();
  std::vector<double> pf = detail::pf_values(st, ctx);
  double mean_hol_s = detail::mean_rt_hol_seconds(ctx);

  int rt_demand = 0, nrt_demand = 0;
  std::vector<bool> is_rt(n, false);
  for (size_t i = 0; i < n; ++i) {
    const ue_metrics& m = ctx.ues[i];
    const qos_profile& q = qos_for(ctx.qos, m.five_qi);
    is_rt[i] = q.is_rt;
    if (m.buffer_length == 0)
      continue;
    int need = static_cast<int>(std::min<uint64_t>(m.num_rbs_required,
                                                   static_cast<uint64_t>(ctx.budget)));
    (q.is_rt ? rt_demand : nrt_demand) += need;
  }
  auto [b_rt, b_nrt] = vt_sh_split(rt_demand, nrt_demand, ctx.budget);

  std::vector<double> rt_values(n, neg_inf), nrt_values(n, neg_inf);
  for (size_t i = 0; i < n; ++i) {
    const ue_metrics& m = ctx.ues[i];
    if (m.buffer_length == 0)
      continue;
    if (is_rt[i]) {
      const qos_profile& q = qos_for(ctx.qos, m.five_qi);
      double delta_s = q.delta_us * 1e-6;
      double v_s = 0.0;
      if (q.gbr_mbps > 0.0) {
        double gbr_bytes_per_s = q.gbr_mbps * 1e6 / 8.0;
        v_s = st.ensure(m.rnti).vt_bytes / gbr_bytes_per_s;
      }
      double arg = 6.0 / delta_s * v_s / (1.0 + std::sqrt(mean_hol_s));
      rt_values[i] = detail::capped_exp(arg) * pf[i];
    } else {
      nrt_values[i] = pf[i];
    }
  }

  allocation alloc;
  alloc.prbs.assign(n, 0);
  int rem_rt = b_rt;
  detail::grant_in_order(alloc, detail::order_by_value_desc(rt_values, ctx.ues), rt_values,
                         ctx, rem_rt);
  int rem_nrt = b_nrt;
  detail::grant_in_order(alloc, detail::order_by_value_desc(nrt_values, ctx.ues), nrt_values,
                         ctx, rem_nrt);
  return alloc;
}

/// Per-UE byte quotas of the frame-level scheduler, one entry per snapshot
/// index. NRT UEs and empty buffers owe zero.
inline std::vector<double> fls_lower_bounds(const policy_config& cfg, policy_state& st,
                                            const sched_context& ctx) {
  std::vector<double> quotas(ctx.ues.size(), 0.0);
  for (size_t i = 0; i < ctx.ues.size(); ++i) {
    const ue_metrics& m = ctx.ues[i];
    if (m.buffer_length == 0)
      continue;
    const qos_profile& q = qos_for(ctx.qos, m.five_qi);
    if (!q.is_rt)
      continue;
    ue_policy_state& s = st.ensure(m.rnti);
    int m_slots = fls_history_slots(q.delta_us, ctx.cell);
    quotas[i] = fls_quota_bytes(m.buffer_length, s.buffer_history, s.served_history, m_slots,
                                cfg.params.fls_base);
  }
  return quotas;
}

/// Frame-level scheduler: byte quotas become PRB lower bounds, satisfied in
/// descending PF order (all of them when the budget suffices), then the
/// remaining budget is distributed by plain PF.
inline allocation two_level_fls_schedule(const policy_config& cfg, policy_state& st,
                                         const sched_context& ctx) {
  std::vector<double> quotas = fls_lower_bounds(cfg, st, ctx);
  std::vector<double> pf = detail::pf_values(st, ctx);

  allocation alloc;
  alloc.prbs.assign(ctx.ues.size(), 0);
  int remaining = ctx.budget;

  std::vector<size_t> order = detail::order_by_value_desc(pf, ctx.ues);
  for (size_t i : order) {
    if (remaining <= 0)
      break;
    if (quotas[i] <= 0.0)
      continue;
    const ue_metrics& m = ctx.ues[i];
    uint32_t lower = required_prbs(static_cast<uint64_t>(std::ceil(quotas[i])), m.tbs_per_prb,
                                   ctx.cell.control_overhead_frac);
    lower = std::min(lower, m.num_rbs_required);
    int grant = static_cast<int>(std::min<uint64_t>(lower, static_cast<uint64_t>(remaining)));
    alloc.prbs[i] = grant;
    remaining -= grant;
  }
  detail::grant_in_order(alloc, order, pf, ctx, remaining);
  return alloc;
}

/// Runs one scheduling decision for any policy. Single-stage policies reduce
/// to compute_values + allocate_by_values; multi-stage ones run their own
/// rounds. The exponential rules fold their per-slot weight update in here.
inline allocation schedule(const policy_config& cfg, policy_state& st,
                           const sched_context& ctx) {
  switch (cfg.id) {
  case policy_id::eufs:
    return eufs_schedule(cfg, st, ctx);
  case policy_id::rad_ds:
    return rad_ds_schedule(st, ctx);
  case policy_id::vt_sh:
    return vt_sh_schedule(st, ctx);
  case policy_id::two_level_fls:
    return two_level_fls_schedule(cfg, st, ctx);
  case policy_id::exp_pf:
  case policy_id::a_exp_pf:
    exp_pf_update_w(st, ctx, cfg.id == policy_id::a_exp_pf, cfg.params);
    return allocate_by_values(compute_values(cfg, st, ctx), ctx);
  default:
    return allocate_by_values(compute_values(cfg, st, ctx), ctx);
  }
}

/// End-of-slot state update, run on every slot (uplink and special slots pass
/// a null allocation and zero feedback). r_ave tracks delivered goodput so a
/// slot without service decays it; phi counts slots since service; the
/// virtual token queue fills at the GBR and drains by transmitted bytes;
/// buffer/served histories record downlink slots only.
inline void update_policy_state(policy_state& st, const sched_context& ctx,
                                const allocation* alloc,
                                const std::vector<uint64_t>* transmitted_bytes,
                                const std::vector<uint64_t>* delivered_bytes) {
  double slot_s = ctx.cell.slot_duration_us * 1e-6;
  bool dl = alloc != nullptr;
  for (size_t i = 0; i < ctx.ues.size(); ++i) {
    const ue_metrics& m = ctx.ues[i];
    ue_policy_state& s = st.ensure(m.rnti);
    uint64_t tx = (dl && transmitted_bytes != nullptr) ? (*transmitted_bytes)[i] : 0;
    uint64_t good = (dl && delivered_bytes != nullptr) ? (*delivered_bytes)[i] : 0;

    double goodput_mbps = static_cast<double>(good) * 8.0 / ctx.cell.slot_duration_us;
    s.r_ave_mbps =
        std::max((1.0 - ewma_alpha) * s.r_ave_mbps + ewma_alpha * goodput_mbps,
                 r_ave_floor_mbps);
    s.r_inst_avg = (1.0 - ewma_alpha) * s.r_inst_avg + ewma_alpha * m.tbs_per_prb;

    if (dl && alloc->prbs[i] > 0) {
      s.last_served_slot = ctx.slot;
      s.phi = 0;
    } else {
      s.phi += 1;
    }

    const qos_profile& q = qos_for(ctx.qos, m.five_qi);
    if (q.gbr_mbps > 0.0) {
      double gbr_bytes_per_slot = q.gbr_mbps * 1e6 / 8.0 * slot_s;
      s.vt_bytes = std::max(0.0, s.vt_bytes + gbr_bytes_per_slot - static_cast<double>(tx));
    }

    if (dl) {
      s.buffer_history.push_back(m.buffer_length);
      s.served_history.push_back(tx);
      constexpr size_t history_cap = 4096;
      if (s.buffer_history.size() > history_cap)
        s.buffer_history.pop_front();
      if (s.served_history.size() > history_cap)
        s.served_history.pop_front();
    }
  }
}

// ---------------------------------------------------------------------------
// Registry: names, parsing, canonical spec strings
// ---------------------------------------------------------------------------

struct policy_name_entry {
  const char* name;
  policy_id id;
};

inline const std::vector<policy_name_entry>& policy_names() {
  static const std::vector<policy_name_entry> entries = {
      {"rr", policy_id::rr},
      {"bcqi", policy_id::bcqi},
      {"ft", policy_id::ft},
      {"pf", policy_id::pf},
      {"lean", policy_id::lean},
      {"log-rule", policy_id::log_rule},
      {"pfb", policy_id::pfb},
      {"gpf", policy_id::gpf},
      {"gpfb", policy_id::gpfb},
      {"eufs", policy_id::eufs},
      {"qos-log-rule", policy_id::qos_log_rule},
      {"rad-ds", policy_id::rad_ds},
      {"qos-fk", policy_id::qos_fk},
      {"vt-sh", policy_id::vt_sh},
      {"exp-pf", policy_id::exp_pf},
      {"a-exp-pf", policy_id::a_exp_pf},
      {"2l-fls", policy_id::two_level_fls},
      {"ltti", policy_id::ltti},
      {"wd-ps", policy_id::wd_ps},
  };
  return entries;
}

inline const char* policy_name(policy_id id) {
  for (const auto& e : policy_names())
    if (e.id == id)
      return e.name;
  throw input_error("policy_name: unknown id");
}

/// Validates parameter ranges for the given policy.
inline void validate_policy(const policy_config& cfg) {
  const auto& p = cfg.params;
  if ((cfg.id == policy_id::gpf || cfg.id == policy_id::gpfb) &&
      (p.beta <= 0.0 || p.gamma <= 0.0))
    throw config_error("policy: beta and gamma must be positive");
  if (cfg.id == policy_id::lean && p.s_lean < 0.0)
    throw config_error("policy: s_lean must be non-negative");
  if ((cfg.id == policy_id::log_rule || cfg.id == policy_id::qos_log_rule) && p.log_c < 1.0)
    throw config_error("policy: log-rule c must be >= 1");
  if (cfg.id == policy_id::eufs) {
    if (p.p_pf <= 0.0 || p.p_pf >= 1.0)
      throw config_error("policy: p_pf must lie in (0, 1)");
    if (p.edge_fraction < 0.0 || p.edge_fraction > 1.0)
      throw config_error("policy: edge_fraction must lie in [0, 1]");
    if (p.eufs_k < 1)
      throw config_error("policy: k must be >= 1");
    if (p.fu_step <= 0.0)
      throw config_error("policy: fu_step must be positive");
  }
  if (cfg.id == policy_id::exp_pf || cfg.id == policy_id::a_exp_pf) {
    if (p.eps <= 0.0 || p.eps >= 1.0)
      throw config_error("policy: eps must lie in (0, 1)");
    if (p.w_min <= 0.0 || p.w_min >= p.w_max)
      throw config_error("policy: weight clamp must satisfy 0 < w_min < w_max");
    if (cfg.id == policy_id::a_exp_pf && p.c_ms <= 0.0)
      throw config_error("policy: c_ms must be positive");
  }
  if (cfg.id == policy_id::two_level_fls && p.fls_base < 0.0)
    throw config_error("policy: fls_base must be non-negative");
}

/// Parses "name" or "name:key=value,key=value". Unknown names or keys and
/// malformed numbers are configuration errors.
inline policy_config parse_policy_spec(const std::string& spec) {
  std::string name = spec;
  std::string args;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    name = spec.substr(0, colon);
    args = spec.substr(colon + 1);
  }

  policy_config cfg;
  bool found = false;
  for (const auto& e : policy_names()) {
    if (name == e.name) {
      cfg.id = e.id;
      found = true;
      break;
    }
  }
  if (!found)
    throw config_error("policy: unknown scheduler '" + name + "'");

  std::stringstream ss(args);
  std::string kv;
  while (std::getline(ss, kv, ',')) {
    if (kv.empty())
      continue;
    auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw config_error("policy: expected key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    std::string val = kv.substr(eq + 1);
    auto num = [&]() {
      size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(val, &used);
      } catch (const std::exception&) {
        throw config_error("policy: bad number for '" + key + "'");
      }
      if (used != val.size())
        throw config_error("policy: bad number for '" + key + "'");
      return v;
    };
    auto& p = cfg.params;
    if (key == "beta")
      p.beta = num();
    else if (key == "gamma")
      p.gamma = num();
    else if (key == "use_buffer")
      p.use_buffer = num() != 0.0;
    else if (key == "s_lean")
      p.s_lean = num();
    else if (key == "c")
      p.log_c = num();
    else if (key == "a")
      p.log_a = num();
    else if (key == "b")
      p.log_b = num();
    else if (key == "p_pf")
      p.p_pf = num();
    else if (key == "k")
      p.eufs_k = static_cast<int>(num());
    else if (key == "edge_fraction")
      p.edge_fraction = num();
    else if (key == "fu_step")
      p.fu_step = num();
    else if (key == "eps")
      p.eps = num();
    else if (key == "w_min")
      p.w_min = num();
    else if (key == "w_max")
      p.w_max = num();
    else if (key == "c_ms")
      p.c_ms = num();
    else if (key == "fls_base")
      p.fls_base = num();
    else
      throw config_error("policy: unknown parameter '" + key + "'");
  }
  validate_policy(cfg);
  return cfg;
}

/// Canonical spec string: the policy name plus any parameter that differs
/// from its default, in a fixed order. Parse of the result round-trips.
inline std::string policy_spec_string(const policy_config& cfg) {
  const policy_params defaults;
  const auto& p = cfg.params;
  std::vector<std::string> parts;
  auto add = [&](const char* key, double have, double def) {
    if (have != def) {
      std::ostringstream os;
      os << key << '=' << have;
      parts.push_back(os.str());
    }
  };
  add("beta", p.beta, defaults.beta);
  add("gamma", p.gamma, defaults.gamma);
  if (p.use_buffer != defaults.use_buffer)
    parts.push_back("use_buffer=0");
  add("s_lean", p.s_lean, defaults.s_lean);
  add("c", p.log_c, defaults.log_c);
  add("a", p.log_a, defaults.log_a);
  add("b", p.log_b, defaults.log_b);
  add("p_pf", p.p_pf, defaults.p_pf);
  add("k", p.eufs_k, defaults.eufs_k);
  add("edge_fraction", p.edge_fraction, defaults.edge_fraction);
  add("fu_step", p.fu_step, defaults.fu_step);
  add("eps", p.eps, defaults.eps);
  add("w_min", p.w_min, defaults.w_min);
  add("w_max", p.w_max, defaults.w_max);
  add("c_ms", p.c_ms, defaults.c_ms);
  add("fls_base", p.fls_base, defaults.fls_base);

  std::string out = policy_name(cfg.id);
  for (size_t i = 0; i < parts.size(); ++i)
    out += (i == 0 ? ":" : ",") + parts[i];
  return out;
}

} // namespace schedlab

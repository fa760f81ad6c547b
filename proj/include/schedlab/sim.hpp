// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "schedlab/core.hpp"
#include "schedlab/ibs.hpp"
#include "schedlab/metrics.hpp"
#include "schedlab/policies.hpp"
#include "schedlab/rng.hpp"
#include "schedlab/traffic.hpp"

namespace schedlab {

/// Radio abstraction of one UE: a mean CQI, an AR(1) jitter process around it
/// (amplitude zero freezes the channel), and a flat transport block error
/// probability.
struct channel_spec {
  double mean_cqi = 10.0;
  double jitter_rho = 0.9;
  double jitter_amp = 0.0;
  double bler = 0.0;

  void validate() const {
    if (mean_cqi < 1.0 || mean_cqi > 15.0)
      throw config_error("channel: mean_cqi must lie in [1, 15]");
    if (jitter_rho < 0.0 || jitter_rho >= 1.0)
      throw config_error("channel: jitter_rho must lie in [0, 1)");
    if (jitter_amp < 0.0)
      throw config_error("channel: jitter_amp must be non-negative");
    if (bler < 0.0 || bler >= 1.0)
      throw config_error("channel: bler must lie in [0, 1)");
  }
};

struct ue_config {
  rnti_t rnti = 0;
  uint64_t five_qi = 9;
  channel_spec channel;
  traffic_spec traffic;
};

/// A full runnable scenario: cell, QoS catalog, UEs, duration, and exactly
/// one scheduler (a plain policy or a composition).
struct scenario_config {
  std::string name = "scenario";
  cell_config cell;
  qos_map qos;
  std::vector<ue_config> ues;
  double duration_s = 60.0;
  uint64_t max_buff_bytes = 10000000;
  std::optional<policy_config> policy;
  std::optional<composition_spec> composition;

  std::string scheduler_label() const {
    if (composition.has_value())
      return composition->name;
    if (policy.has_value())
      return policy_spec_string(*policy);
    return "unset";
  }

  void validate() const {
    cell.validate();
    if (ues.empty())
      throw config_error("scenario: needs at least one UE");
    if (duration_s < 0.0)
      throw config_error("scenario: duration_s must be non-negative");
    if (max_buff_bytes == 0)
      throw config_error("scenario: max_buff_bytes must be positive");
    for (const auto& [id, profile] : qos) {
      if (id != profile.five_qi)
        throw config_error("scenario: qos map key does not match profile 5QI");
      profile.validate();
    }
    for (size_t i = 0; i < ues.size(); ++i) {
      const auto& ue = ues[i];
      if (i > 0 && ues[i - 1].rnti >= ue.rnti)
        throw config_error("scenario: UEs must be sorted by rnti without duplicates");
      ue.channel.validate();
      ue.traffic.validate();
      qos_for(qos, ue.five_qi);
    }
    if (policy.has_value())
      validate_policy(*policy);
  }
};

/// Everything an observer may inspect after one slot. Pointers are null on
/// slots without a downlink opportunity. Byte totals are cumulative and
/// satisfy arrived == delivered + queued + dropped at every slot.
struct slot_view {
  long slot = 0;
  bool dl = false;
  const std::vector<ue_metrics>* snapshot = nullptr;
  const allocation* alloc = nullptr;
  const std::vector<uint64_t>* transmitted_bytes = nullptr;
  const std::vector<uint64_t>* delivered_bytes = nullptr;
  const compose_debug* compose = nullptr;
  const std::vector<uint64_t>* arrived_total = nullptr;
  const std::vector<uint64_t>* delivered_total = nullptr;
  const std::vector<uint64_t>* dropped_total = nullptr;
  const std::vector<uint64_t>* queued_now = nullptr;
};

using slot_observer = std::function<void(const slot_view&)>;

namespace detail {

/// FIFO byte queue with tail drop and partial service of the head PDU.
class pdu_queue {
public:
  explicit pdu_queue(uint64_t cap_bytes) : cap_(cap_bytes) {}

  bool push(uint32_t bytes, long slot) {
    if (bytes_ + bytes > cap_)
      return false;
    q_.push_back({bytes, slot});
    bytes_ += bytes;
    return true;
  }

  /// Removes `n` bytes from the front (n <= bytes()); appends the arrival
  /// slot of every PDU whose last byte was removed.
  void advance(uint64_t n, std::vector<long>& delivered_arrivals) {
    bytes_ -= n;
    while (n > 0) {
      uint32_t head_remaining = q_.front().bytes - head_sent_;
      if (n >= head_remaining) {
        n -= head_remaining;
        delivered_arrivals.push_back(q_.front().arrival_slot);
        q_.pop_front();
        head_sent_ = 0;
      } else {
        head_sent_ += static_cast<uint32_t>(n);
        n = 0;
      }
    }
  }

  uint64_t bytes() const { return bytes_; }
  bool empty() const { return q_.empty(); }
  long head_arrival_slot() const { return q_.front().arrival_slot; }

private:
  struct pdu {
    uint32_t bytes;
    long arrival_slot;
  };
  std::deque<pdu> q_;
  uint64_t bytes_ = 0;
  uint64_t cap_;
  uint32_t head_sent_ = 0;
};

/// AR(1) CQI around the mean plus indicator fields synthesized as affine
/// functions of the realized CQI with seeded noise. Consumes exactly two
/// draws per slot so the channel trajectory is scheduler-independent.
struct channel_state {
  double jitter = 0.0;
  int cqi = 1;
  uint8_t dl_rsrp = 0;
  int rssi = 0;
  double rsrq = 0.0;
  int pusch_snr_x10 = 0;
  int pucch_snr_x10 = 0;
  uint8_t current_mcs = 0;

  void advance(const channel_spec& spec, rng& g) {
    jitter = spec.jitter_rho * jitter + spec.jitter_amp * g.uniform(-1.0, 1.0);
    double noise = g.uniform(-1.0, 1.0);
    cqi = std::clamp(static_cast<int>(std::llround(spec.mean_cqi + jitter)), 1, max_cqi);
    dl_rsrp = static_cast<uint8_t>(std::clamp<long>(40 + 3 * cqi + std::llround(2.0 * noise), 0, 255));
    rssi = -95 + 2 * cqi + static_cast<int>(std::llround(2.0 * noise));
    rsrq = -15.0 + 0.5 * cqi + noise;
    pusch_snr_x10 = 10 * (2 * cqi - 6) + static_cast<int>(std::llround(10.0 * noise));
    pucch_snr_x10 = pusch_snr_x10 - 15;
    current_mcs = static_cast<uint8_t>(std::clamp(2 * cqi - 2, 0, 28));
  }
};

} // namespace detail

/// Runs one scenario for one seed. Per-slot order: traffic arrivals, channel
/// advance, scheduling and transmission when the slot has a downlink
/// opportunity, transport-block error draws, delivery and delay recording,
/// then metric and scheduler-state updates. Identical (config, seed) pairs
/// produce identical reports; wall-clock time is observed only when `timing`
/// is set and never influences behavior.
inline metrics_report run_scenario(const scenario_config& sc, uint64_t seed,
                                   const slot_observer& observer = {}, bool timing = false) {
  sc.validate();
  if (!sc.policy.has_value() && !sc.composition.has_value())
    throw config_error("scenario: no scheduler configured");

  const size_t n = sc.ues.size();
  const double slot_us = sc.cell.slot_duration_us;
  const double slot_s = slot_us * 1e-6;
  const long total_slots = std::llround(sc.duration_s * 1e6 / slot_us);
  const long slots_per_second = std::max<long>(1, std::llround(1e6 / slot_us));
  const size_t bins = static_cast<size_t>((total_slots + slots_per_second - 1) /
                                          std::max<long>(slots_per_second, 1));

  struct sim_ue {
    traffic_source src;
    detail::channel_state ch;
    rng channel_rng;
    rng harq_rng;
    detail::pdu_queue queue;
    goodput_window window;
    starvation_tracker starv;
    bool head_retx = false;
    uint64_t arrived_bytes = 0;
    uint64_t transmitted_bytes = 0;
    uint64_t delivered_bytes = 0;
    uint64_t dropped_bytes = 0;
    uint64_t arrived_pdus = 0;
    uint64_t delivered_pdus = 0;
    uint64_t dropped_pdus = 0;
    std::vector<uint64_t> tx_bins;
    std::vector<uint64_t> good_bins;
    std::vector<uint64_t> delays_us;

    sim_ue(const ue_config& cfg, uint64_t run_seed, uint64_t max_buff, double slot_dur_us)
        : src(cfg.traffic, derive_seed(run_seed, 1, cfg.rnti)),
          channel_rng(derive_seed(run_seed, 2, cfg.rnti)),
          harq_rng(derive_seed(run_seed, 3, cfg.rnti)), queue(max_buff),
          window(20, 100, slot_dur_us) {}
  };

  std::vector<sim_ue> sim;
  sim.reserve(n);
  for (const auto& cfg : sc.ues) {
    sim.emplace_back(cfg, seed, sc.max_buff_bytes, slot_us);
    sim.back().tx_bins.assign(bins, 0);
    sim.back().good_bins.assign(bins, 0);
  }

  policy_state st;
  for (const auto& cfg : sc.ues)
    st.ensure(cfg.rnti);
  rng policy_rng(derive_seed(seed, 4));

  metrics_report report;
  report.scenario = sc.name;
  report.scheduler = sc.scheduler_label();
  report.seed = seed;
  report.duration_s = sc.duration_s;

  std::vector<ue_metrics> snapshot(n);
  std::vector<uint64_t> tx_slot(n), good_slot(n);
  std::vector<uint64_t> arrived_total(n, 0), delivered_total(n, 0), dropped_total(n, 0),
      queued_now(n, 0);
  std::vector<long> delivered_arrivals;
  allocation alloc;
  compose_debug dbg;

  for (long slot = 0; slot < total_slots; ++slot) {
    for (size_t i = 0; i < n; ++i) {
      sim_ue& u = sim[i];
      int pdus = u.src.pdus_in_slot(static_cast<double>(slot) * slot_s, slot_s);
      uint32_t size = static_cast<uint32_t>(u.src.pdu_bytes());
      for (int p = 0; p < pdus; ++p) {
        u.arrived_bytes += size;
        u.arrived_pdus += 1;
        if (!u.queue.push(size, slot)) {
          u.dropped_bytes += size;
          u.dropped_pdus += 1;
        }
      }
      u.ch.advance(sc.ues[i].channel, u.channel_rng);
    }

    for (size_t i = 0; i < n; ++i) {
      const sim_ue& u = sim[i];
      const detail::channel_state& ch = u.ch;
      ue_metrics& m = snapshot[i];
      m.rnti = sc.ues[i].rnti;
      m.five_qi = sc.ues[i].five_qi;
      m.cqi = ch.cqi;
      m.tbs_per_prb = static_cast<double>(tbs_per_prb(ch.cqi, sc.cell));
      m.throughput = u.window.mbps();
      m.buffer_length = static_cast<uint32_t>(u.queue.bytes());
      m.total_pdus = u.delivered_pdus;
      m.bler = sc.ues[i].channel.bler;
      m.max_mcs = 28;
      m.current_mcs = ch.current_mcs;
      m.dl_rsrp = ch.dl_rsrp;
      m.rssi = ch.rssi;
      m.rsrq = ch.rsrq;
      m.pusch_snr_x10 = ch.pusch_snr_x10;
      m.pucch_snr_x10 = ch.pucch_snr_x10;
      m.ta_apply = false;
      m.ta_update = 0;
      m.hol_delay_us = u.queue.empty()
                           ? 0
                           : static_cast<uint64_t>(slot - u.queue.head_arrival_slot()) *
                                 static_cast<uint64_t>(slot_us);
      m.hol_is_retransmission = !u.queue.empty() && u.head_retx;
      m.num_rbs_required =
          required_prbs(u.queue.bytes(), m.tbs_per_prb, sc.cell.control_overhead_frac);
    }

    bool dl = is_dl_slot(slot, sc.cell);
    sched_context ctx{snapshot, sc.cell, sc.qos,         slot,
                      dl ? sc.cell.n_prbs : 0,           sc.max_buff_bytes, &policy_rng};
    std::fill(tx_slot.begin(), tx_slot.end(), 0);
    std::fill(good_slot.begin(), good_slot.end(), 0);

    if (dl) {
      auto t0 = std::chrono::steady_clock::now();
      if (sc.composition.has_value())
        alloc = compose_schedule(*sc.composition, st, ctx, &dbg);
      else
        alloc = schedule(*sc.policy, st, ctx);
      if (timing) {
        auto t1 = std::chrono::steady_clock::now();
        report.sched_time_us.push_back(
            std::chrono::duration<double, std::micro>(t1 - t0).count());
      }

      if (alloc.prbs.size() != n)
        throw input_error("simulator: allocation size does not match UE count");
      bool violated = alloc.total() > sc.cell.n_prbs;
      for (int& g : alloc.prbs) {
        if (g < 0) {
          violated = true;
          g = 0;
        }
      }
      if (violated)
        report.grant_violations += 1;

      for (size_t i = 0; i < n; ++i) {
        sim_ue& u = sim[i];
        if (alloc.prbs[i] <= 0)
          continue;
        uint64_t capacity = static_cast<uint64_t>(alloc.prbs[i]) *
                            static_cast<uint64_t>(snapshot[i].tbs_per_prb);
        uint64_t send = std::min<uint64_t>(capacity, u.queue.bytes());
        if (send == 0)
          continue;
        u.transmitted_bytes += send;
        tx_slot[i] = send;
        if (u.harq_rng.bernoulli(sc.ues[i].channel.bler)) {
          u.head_retx = true;
          continue;
        }
        delivered_arrivals.clear();
        u.queue.advance(send, delivered_arrivals);
        u.head_retx = false;
        u.delivered_bytes += send;
        good_slot[i] = send;
        for (long arrival : delivered_arrivals) {
          u.delays_us.push_back(static_cast<uint64_t>(slot - arrival + 1) *
                                static_cast<uint64_t>(slot_us));
          u.delivered_pdus += 1;
        }
      }
    }

    size_t bin = static_cast<size_t>(slot / slots_per_second);
    for (size_t i = 0; i < n; ++i) {
      sim_ue& u = sim[i];
      u.window.on_slot(good_slot[i]);
      u.starv.on_slot(!u.queue.empty(), good_slot[i] > 0, slot_s);
      u.tx_bins[bin] += tx_slot[i];
      u.good_bins[bin] += good_slot[i];
      arrived_total[i] = u.arrived_bytes;
      delivered_total[i] = u.delivered_bytes;
      dropped_total[i] = u.dropped_bytes;
      queued_now[i] = u.queue.bytes();
    }

    update_policy_state(st, ctx, dl ? &alloc : nullptr, dl ? &tx_slot : nullptr,
                        dl ? &good_slot : nullptr);

    if (observer) {
      slot_view view;
      view.slot = slot;
      view.dl = dl;
      view.snapshot = &snapshot;
      view.alloc = dl ? &alloc : nullptr;
      view.transmitted_bytes = dl ? &tx_slot : nullptr;
      view.delivered_bytes = dl ? &good_slot : nullptr;
      view.compose = (dl && sc.composition.has_value()) ? &dbg : nullptr;
      view.arrived_total = &arrived_total;
      view.delivered_total = &delivered_total;
      view.dropped_total = &dropped_total;
      view.queued_now = &queued_now;
      observer(view);
    }
  }

  const double duration_us = static_cast<double>(total_slots) * slot_us;
  std::vector<double> avg_goodput;
  for (size_t i = 0; i < n; ++i) {
    sim_ue& u = sim[i];
    ue_series series;
    series.rnti = sc.ues[i].rnti;
    series.five_qi = sc.ues[i].five_qi;
    for (size_t b = 0; b < bins; ++b) {
      long bin_slots = std::min<long>(slots_per_second,
                                      total_slots - static_cast<long>(b) * slots_per_second);
      double bin_us = static_cast<double>(bin_slots) * slot_us;
      series.throughput_mbps.push_back(static_cast<double>(u.tx_bins[b]) * 8.0 / bin_us);
      series.goodput_mbps.push_back(static_cast<double>(u.good_bins[b]) * 8.0 / bin_us);
    }
    series.delay_samples_us = std::move(u.delays_us);
    series.starved = u.starv.starved();
    series.longest_gap_s = u.starv.longest_gap_s();
    series.arrived_bytes = u.arrived_bytes;
    series.transmitted_bytes = u.transmitted_bytes;
    series.delivered_bytes = u.delivered_bytes;
    series.dropped_bytes = u.dropped_bytes;
    series.queued_bytes_end = u.queue.bytes();
    series.arrived_pdus = u.arrived_pdus;
    series.delivered_pdus = u.delivered_pdus;
    series.dropped_pdus = u.dropped_pdus;
    if (duration_us > 0.0) {
      series.avg_throughput_mbps = static_cast<double>(u.transmitted_bytes) * 8.0 / duration_us;
      series.avg_goodput_mbps = static_cast<double>(u.delivered_bytes) * 8.0 / duration_us;
    }
    avg_goodput.push_back(series.avg_goodput_mbps);
    report.ues.push_back(std::move(series));
  }

  bool any_goodput = false;
  for (double v : avg_goodput)
    any_goodput = any_goodput || v > 0.0;
  if (any_goodput) {
    report.jain = jain_index(avg_goodput);
    report.gini = gini_coefficient(avg_goodput);
  }
  return report;
}

} // namespace schedlab

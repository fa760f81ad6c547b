// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace schedlab {

using rnti_t = uint16_t;

/// Malformed configuration: unknown names, bad ranges, schema violations.
/// The CLI maps this to exit code 1.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid runtime input: out-of-range metric values, dimension mismatches,
/// statistics over undefined inputs. The CLI maps this to exit code 2.
struct input_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Scheduler-visible per-UE state for one downlink slot. Rates are bytes or
/// Mbps as noted; delays are microseconds.
struct ue_metrics {
  rnti_t rnti = 0;
  /// Transport block size estimate for one PRB in this slot, bytes.
  double tbs_per_prb = 0.0;
  /// Recent average goodput over a sliding one-second window, Mbps.
  double throughput = 0.0;
  int pusch_snr_x10 = 0;
  int pucch_snr_x10 = 0;
  uint8_t dl_rsrp = 0;
  /// Queued bytes awaiting transmission.
  uint32_t buffer_length = 0;
  /// PDUs delivered so far.
  uint64_t total_pdus = 0;
  double bler = 0.0;
  uint8_t max_mcs = 28;
  uint8_t current_mcs = 0;
  bool ta_apply = false;
  int16_t ta_update = 0;
  int cqi = 0;
  int rssi = 0;
  double rsrq = 0.0;
  /// Age of the oldest queued PDU, microseconds. Zero when the queue is empty.
  uint64_t hol_delay_us = 0;
  bool hol_is_retransmission = false;
  /// PRBs needed to drain the queue at tbs_per_prb, including overhead.
  uint32_t num_rbs_required = 0;
  uint64_t five_qi = 9;
};

/// Static cell parameters. The defaults model a 20 MHz TDD carrier with
/// numerology 1 and a 7 DL / 1 special / 2 UL slot pattern.
struct cell_config {
  int n_prbs = 51;
  double slot_duration_us = 500.0;
  int tdd_period_slots = 10;
  int tdd_dl_slots = 7;
  int tdd_special_slots = 1;
  int tdd_ul_slots = 2;
  /// Resource elements per PRB usable for data after reference signals.
  int usable_res_per_prb = 120;
  /// Fraction of a transport block consumed by headers and control.
  double control_overhead_frac = 0.08;

  double dl_fraction() const {
    return static_cast<double>(tdd_dl_slots) / static_cast<double>(tdd_period_slots);
  }

  void validate() const {
    if (n_prbs <= 0)
      throw config_error("cell: n_prbs must be positive");
    if (slot_duration_us <= 0.0)
      throw config_error("cell: slot_duration_us must be positive");
    if (tdd_period_slots <= 0 || tdd_dl_slots < 0 || tdd_special_slots < 0 || tdd_ul_slots < 0)
      throw config_error("cell: tdd slot counts must be non-negative with a positive period");
    if (tdd_dl_slots + tdd_special_slots + tdd_ul_slots != tdd_period_slots)
      throw config_error("cell: tdd pattern must sum to the period");
    if (usable_res_per_prb <= 0)
      throw config_error("cell: usable_res_per_prb must be positive");
    if (control_overhead_frac < 0.0 || control_overhead_frac >= 1.0)
      throw config_error("cell: control_overhead_frac must lie in [0, 1)");
  }
};

/// Per-5QI scheduling parameters.
struct qos_profile {
  uint64_t five_qi = 9;
  /// Scheduling delay target, microseconds.
  double delta_us = 500000.0;
  /// Acceptable probability of exceeding the delay budget, in (0, 1).
  double pdb = 0.03;
  /// Guaranteed bit rate, Mbps. Zero for best-effort flows.
  double gbr_mbps = 0.0;
  bool is_rt = false;
  /// Priority level, larger means more important.
  double priority = 0.0;
  /// Marks flows with on/off traffic; used by burstiness grouping.
  bool bursty = false;

  void validate() const {
    if (delta_us <= 0.0)
      throw config_error("qos: delta_us must be positive");
    if (pdb <= 0.0 || pdb >= 1.0)
      throw config_error("qos: pdb must lie in (0, 1)");
    if (gbr_mbps < 0.0)
      throw config_error("qos: gbr_mbps must be non-negative");
  }
};

using qos_map = std::map<uint64_t, qos_profile>;

/// Looks up a profile; a UE referencing an unknown 5QI is a configuration
/// error, never a silent default.
inline const qos_profile& qos_for(const qos_map& map, uint64_t five_qi) {
  auto it = map.find(five_qi);
  if (it == map.end())
    throw config_error("qos: no profile for 5QI " + std::to_string(five_qi));
  return it->second;
}

/// PRB grant per UE for one slot, aligned with the metrics snapshot (which is
/// always ordered by ascending rnti).
struct allocation {
  std::vector<int> prbs;

  int total() const { return std::accumulate(prbs.begin(), prbs.end(), 0); }
};

inline constexpr int max_cqi = 15;

/// Spectral efficiency (bits per resource element) for each 4-bit CQI value.
inline constexpr std::array<double, 16> cqi_efficiency = {
    0.0,    0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766,
    1.9141, 2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547};

/// Bytes one PRB carries in one slot at the given CQI. Zero at CQI 0 (no
/// transmission possible); strictly increasing from CQI 1 upward.
inline int tbs_per_prb(int cqi, const cell_config& cell) {
  if (cqi < 0 || cqi > max_cqi)
    throw input_error("tbs_per_prb: cqi " + std::to_string(cqi) + " outside [0, 15]");
  return static_cast<int>(std::floor(cqi_efficiency[static_cast<size_t>(cqi)] *
                                     cell.usable_res_per_prb / 8.0));
}

/// True when the slot index falls in the downlink part of the TDD period.
inline bool is_dl_slot(long slot, const cell_config& cell) {
  long pos = slot % cell.tdd_period_slots;
  return pos < cell.tdd_dl_slots;
}

/// PRBs needed to drain `buffer_bytes` at `tbs` bytes per PRB, inflating the
/// payload by the control overhead fraction. Zero when nothing is queued or
/// nothing can be sent.
inline uint32_t required_prbs(uint64_t buffer_bytes, double tbs, double overhead_frac) {
  if (buffer_bytes == 0 || tbs <= 0.0)
    return 0;
  double prbs = std::ceil(static_cast<double>(buffer_bytes) * (1.0 + overhead_frac) / tbs);
  return static_cast<uint32_t>(prbs);
}

} // namespace schedlab

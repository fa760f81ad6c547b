// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "schedlab/core.hpp"
#include "schedlab/rng.hpp"

namespace schedlab {

/// Downlink traffic shape of one UE. Either constant bitrate with fixed-size
/// PDUs at a fixed spacing, or an on/off source with exponential phase
/// durations and Poisson packet arrivals during the on phase.
struct traffic_spec {
  enum class kind { cbr, onoff };
  kind type = kind::cbr;

  // cbr
  double rate_mbps = 24.0;
  // onoff
  double mean_on_s = 2.0;
  double mean_off_s = 2.0;
  double pkts_per_s = 2000.0;

  int pdu_bytes = 1250;

  void validate() const {
    if (pdu_bytes <= 0)
      throw config_error("traffic: pdu_bytes must be positive");
    if (type == kind::cbr) {
      if (rate_mbps <= 0.0)
        throw config_error("traffic: rate_mbps must be positive");
    } else {
      if (mean_on_s <= 0.0 || mean_off_s <= 0.0)
        throw config_error("traffic: on/off phase means must be positive");
      if (pkts_per_s <= 0.0)
        throw config_error("traffic: pkts_per_s must be positive");
    }
  }
};

/// Stateful arrival generator. CBR places PDUs on a fixed grid with a seeded
/// phase offset; the on/off source alternates exponential phases (the initial
/// phase is drawn with probability proportional to the mean durations) and
/// spaces packets exponentially while on. All draws come from the generator's
/// own stream, so arrivals do not depend on scheduler behavior.
class traffic_source {
public:
  traffic_source(const traffic_spec& spec, uint64_t seed) : spec_(spec), rng_(seed) {
    spec_.validate();
    if (spec_.type == traffic_spec::kind::cbr) {
      interval_s_ = static_cast<double>(spec_.pdu_bytes) * 8.0 / (spec_.rate_mbps * 1e6);
      next_arrival_s_ = rng_.next_double() * interval_s_;
    } else {
      double duty = spec_.mean_on_s / (spec_.mean_on_s + spec_.mean_off_s);
      on_ = rng_.next_double() < duty;
      phase_end_s_ = rng_.exponential(on_ ? spec_.mean_on_s : spec_.mean_off_s);
      cursor_s_ = 0.0;
      next_arrival_s_ = compute_next_onoff();
    }
  }

  /// Number of PDUs (each pdu_bytes long) arriving in [start, start + dur).
  int pdus_in_slot(double slot_start_s, double slot_dur_s) {
    double end = slot_start_s + slot_dur_s;
    int count = 0;
    while (next_arrival_s_ < end) {
      ++count;
      next_arrival_s_ = spec_.type == traffic_spec::kind::cbr
                            ? next_arrival_s_ + interval_s_
                            : compute_next_onoff();
    }
    return count;
  }

  int pdu_bytes() const { return spec_.pdu_bytes; }

private:
  double compute_next_onoff() {
    while (true) {
      if (on_) {
        double candidate = cursor_s_ + rng_.exponential(1.0 / spec_.pkts_per_s);
        if (candidate <= phase_end_s_) {
          cursor_s_ = candidate;
          return candidate;
        }
        cursor_s_ = phase_end_s_;
        on_ = false;
        phase_end_s_ = cursor_s_ + rng_.exponential(spec_.mean_off_s);
      } else {
        cursor_s_ = phase_end_s_;
        on_ = true;
        phase_end_s_ = cursor_s_ + rng_.exponential(spec_.mean_on_s);
      }
    }
  }

  traffic_spec spec_;
  rng rng_;
  double interval_s_ = 0.0;
  double next_arrival_s_ = 0.0;
  bool on_ = false;
  double phase_end_s_ = 0.0;
  double cursor_s_ = 0.0;
};

} // namespace schedlab

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <vector>

#include "unitsa/common.hpp"
#include "unitsa/sim/config.hpp"

namespace unitsa::sim {

enum class Action { Keep = 0, Change = 1 };

/// Per-movement traffic readings over the last action interval.
struct MovementSensors {
  /// Departures during the interval divided by lanes.
  double flow = 0.0;
  double occupancy_max = 0.0;
  double occupancy_mean = 0.0;
};

/// State of the junction at the end of one 1 s sub-step.
struct SubstepSample {
  double start_s = 0.0;
  bool in_yellow = false;
  MovementMask green;
  MovementArray<int> arrivals{};
  MovementArray<int> departures{};
  MovementArray<int> queue{};
};

struct StepOutcome {
  double clock_s = 0.0;
  MovementArray<MovementSensors> sensors{};
  /// Movements green at the end of the interval (I_cg).
  MovementMask green_now;
  /// Movements green in the cyclic successor phase (I_ng).
  MovementMask green_next;
  /// Green movements whose phase has run at least min_green_s (I_mg).
  MovementMask min_green_reached;
  MovementArray<int> queue{};
  MovementArray<int> arrivals{};
  MovementArray<int> departures{};
  std::size_t phase_index = 0;
  double phase_elapsed_s = 0.0;
  bool phase_changed = false;
  /// A change was requested before min green elapsed and treated as keep.
  bool change_ignored = false;
  bool done = false;
  std::vector<SubstepSample> substeps;

  int total_queue() const {
    int total = 0;
    for (int q : queue) total += q;
    return total;
  }
};

/// Point-queue single-intersection simulator. Each movement is a FIFO of
/// vehicles served at saturation flow x lanes while green; a change passes
/// through yellow_s seconds of all-red before the successor phase starts.
class Environment {
 public:
  Environment(IntersectionConfig config, DemandSchedule demand)
      : config_(std::move(config)), demand_(std::move(demand)) {
    validate(config_, demand_);
    for (std::size_t i = 0; i < kMovements; ++i) arrivals_[i] = generate_arrivals(demand_, i);
    activated_phases_.push_back(0);
    last_ = snapshot_outcome();
  }

  const IntersectionConfig& config() const { return config_; }
  const DemandSchedule& demand() const { return demand_; }

  double clock() const { return clock_; }
  std::size_t phase_index() const { return phase_; }
  double phase_elapsed() const { return phase_elapsed_; }
  bool done() const { return clock_ >= demand_.horizon_s; }

  /// Latest readings; before the first step this is an all-zero traffic
  /// reading carrying the signal flags of the initial phase.
  const StepOutcome& sense() const { return last_; }

  std::size_t queue_length(std::size_t movement) const { return queues_[movement].size(); }
  long long arrived(std::size_t movement) const { return arrived_[movement]; }
  long long departed(std::size_t movement) const { return departed_[movement]; }

  /// Every phase activation in order, starting with phase 0 at clock 0.
  const std::vector<std::size_t>& activated_phases() const { return activated_phases_; }

  /// Realized arrival times, for oracles.
  const std::vector<double>& arrival_times(std::size_t movement) const { return arrivals_[movement]; }

  const StepOutcome& step(Action action) {
    if (done()) throw StateError("step called on a finished episode ('" + config_.name + "')");
    const bool requested = action == Action::Change;
    const bool change = requested && phase_elapsed_ >= config_.min_green_s;

    StepOutcome out;
    out.change_ignored = requested && !change;
    const int substeps = static_cast<int>(config_.action_interval_s);
    const int yellow = static_cast<int>(config_.yellow_s);
    out.substeps.reserve(static_cast<std::size_t>(substeps));
    MovementArray<double> occ_sum{};
    MovementArray<double> occ_max{};

    for (int s = 0; s < substeps; ++s) {
      if (change && s == yellow) activate_next_phase();
      const bool in_yellow = change && s < yellow;
      SubstepSample sample;
      sample.start_s = clock_;
      sample.in_yellow = in_yellow;
      sample.green = in_yellow ? MovementMask{} : config_.phases[phase_].green;
      const double end = clock_ + 1.0;

      for (std::size_t i = 0; i < kMovements; ++i) {
        const auto& times = arrivals_[i];
        std::size_t& next = next_arrival_[i];
        while (next < times.size() && times[next] < end) {
          queues_[i].push_back(times[next]);
          ++next;
          ++sample.arrivals[i];
        }
        arrived_[i] += sample.arrivals[i];

        if (sample.green.test(i)) {
          service_residual_[i] += config_.saturation_flow_vps * config_.lanes[i];
          const double capacity = std::floor(service_residual_[i] + 1e-9);
          service_residual_[i] -= capacity;
          const auto served = std::min<std::size_t>(static_cast<std::size_t>(capacity), queues_[i].size());
          for (std::size_t k = 0; k < served; ++k) {
            total_wait_departed_ += end - queues_[i].front();
            queues_[i].pop_front();
          }
          sample.departures[i] = static_cast<int>(served);
          departed_[i] += static_cast<long long>(served);
        } else {
          service_residual_[i] = 0.0;
        }
        sample.queue[i] = static_cast<int>(queues_[i].size());
        const double occ = occupancy(i, queues_[i].size());
        occ_sum[i] += occ;
        occ_max[i] = std::max(occ_max[i], occ);
        out.arrivals[i] += sample.arrivals[i];
        out.departures[i] += sample.departures[i];
      }

      clock_ = end;
      if (!in_yellow) phase_elapsed_ += 1.0;
      out.substeps.push_back(sample);
    }

    StepOutcome base = snapshot_outcome();
    base.substeps = std::move(out.substeps);
    base.arrivals = out.arrivals;
    base.departures = out.departures;
    base.change_ignored = out.change_ignored;
    base.phase_changed = change;
    for (std::size_t i = 0; i < kMovements; ++i) {
      if (!config_.active(i)) continue;
      base.sensors[i].flow = static_cast<double>(base.departures[i]) / config_.lanes[i];
      base.sensors[i].occupancy_max = occ_max[i];
      base.sensors[i].occupancy_mean = occ_sum[i] / substeps;
    }
    last_ = std::move(base);
    return last_;
  }

  /// Mean waiting time over every vehicle that has entered the junction:
  /// departed vehicles count their full queue dwell, vehicles still queued
  /// count the time waited so far. Absent when no vehicle has arrived.
  std::optional<double> avg_waiting_time() const {
    double total = total_wait_departed_;
    long long count = 0;
    for (std::size_t i = 0; i < kMovements; ++i) {
      count += arrived_[i];
      for (double t : queues_[i]) total += clock_ - t;
    }
    if (count == 0) return std::nullopt;
    return total / static_cast<double>(count);
  }

  /// Mean queue dwell of departed vehicles only. Absent with no departures.
  std::optional<double> avg_waiting_time_departed() const {
    long long count = 0;
    for (long long d : departed_) count += d;
    if (count == 0) return std::nullopt;
    return total_wait_departed_ / static_cast<double>(count);
  }

 private:
  double occupancy(std::size_t i, std::size_t queued) const {
    if (!config_.active(i)) return 0.0;
    const double footprint = static_cast<double>(queued) * config_.vehicle_length_m;
    return std::min(1.0, footprint / (config_.detection_range_m * config_.lanes[i]));
  }

  void activate_next_phase() {
    phase_ = config_.next_phase(phase_);
    phase_elapsed_ = 0.0;
    service_residual_.fill(0.0);
    activated_phases_.push_back(phase_);
  }

  StepOutcome snapshot_outcome() const {
    StepOutcome out;
    out.clock_s = clock_;
    out.phase_index = phase_;
    out.phase_elapsed_s = phase_elapsed_;
    out.green_now = config_.phases[phase_].green;
    out.green_next = config_.phases[config_.next_phase(phase_)].green;
    if (phase_elapsed_ >= config_.min_green_s) out.min_green_reached = out.green_now;
    for (std::size_t i = 0; i < kMovements; ++i) {
      out.queue[i] = static_cast<int>(queues_[i].size());
    }
    out.done = done();
    return out;
  }

  IntersectionConfig config_;
  DemandSchedule demand_;
  MovementArray<std::vector<double>> arrivals_;
  MovementArray<std::size_t> next_arrival_{};
  MovementArray<std::deque<double>> queues_;
  MovementArray<double> service_residual_{};
  MovementArray<long long> arrived_{};
  MovementArray<long long> departed_{};
  double total_wait_departed_ = 0.0;
  double clock_ = 0.0;
  std::size_t phase_ = 0;
  double phase_elapsed_ = 0.0;
  std::vector<std::size_t> activated_phases_;
  StepOutcome last_;
};

}  // namespace unitsa::sim

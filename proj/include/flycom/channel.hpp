#pragma once

#include "flycom/types.hpp"

namespace flycom {

struct AirCompConfig {
  int num_antennas = 8;    // M
  int num_sensors = 8;     // K
  int symbols_per_slot = 100;  // I
  double power_budget = 1.0;   // P
  double noise_var = 0.0;      // sigma^2

  double snr() const { return power_budget / noise_var; }
  void validate() const;
};

/// One coherence block of the SIMO multi-access channel. Columns of H are
/// the per-sensor channel vectors; b is the receive combiner (set by
/// centroid_receiver before aggregation).
struct SlotChannel {
  CMatX H;   // M x K
  CVecX b;   // M
  uint64_t seed = 0;
};

struct AggregatedObservation {
  VecX values;
  double noise_power = 0.0;  // per-entry variance of the effective real noise
};

/// i.i.d. CN(0,1) entries (Rayleigh fading), deterministic under seed.
SlotChannel sample_channel(const AirCompConfig& cfg, uint64_t seed);

/// Dominant eigenvector of H H^H by power iteration with a deterministic
/// start; phase fixed so the largest-magnitude entry is real positive.
CVecX dominant_eigvec(const CMatX& H, double tol = 1e-12);

struct ReceiverDesign {
  CVecX b_star;
  double noise_power = 0.0;
  int binding_sensor = 0;
};

/// Centroid receiver: b* = sqrt(max_k Tr(Psi_k) / (N P)) * v with v the
/// dominant eigenvector of H H^H. per_sensor_power holds Tr(Psi_k) values
/// (already divided by |v^H h_k|^2); slot_samples is the binding sensor's
/// per-slot sample count N.
ReceiverDesign centroid_receiver(const CMatX& H, const VecX& per_sensor_power,
                                 const AirCompConfig& cfg,
                                 Eigen::Index slot_samples);

/// Effective real-valued AirComp model: element sum of the local vectors
/// plus i.i.d. N(0, 1/2 sigma^2 ||b||^2) noise. When per_sensor_symbol_var
/// is nonempty, the zero-forcing transmit power rho_k^2 nu_k^2 of each
/// sensor is checked against the budget.
AggregatedObservation aircomp_aggregate(const std::vector<VecX>& locals,
                                        const SlotChannel& chan,
                                        const AirCompConfig& cfg,
                                        uint64_t noise_seed,
                                        const VecX& per_sensor_symbol_var = VecX());

}  // namespace flycom

#pragma once

#include "flycom/channel.hpp"
#include "flycom/gp.hpp"
#include "flycom/observer.hpp"

namespace flycom {

/// Accumulated server-side regression state. R is the covariance of all
/// received observations (noise included), R_inv its tracked inverse, J
/// the projected query-correlation matrix, and U the per-query loading
/// matrix over the frozen query set (so J = U^T U).
struct FusionState {
  GpModel model;
  PointList query_set;

  std::vector<PointList> slot_positions;  // one entry per non-empty slot
  std::vector<MatX> W_hist;
  std::vector<double> noise_hist;
  VecX received;
  MatX R;
  MatX R_inv;
  MatX J;
  MatX U;
  int slot_count = 0;

  Eigen::Index dim() const { return received.size(); }

  /// Condition estimate of the recursion pivot above which the update
  /// falls back to a direct factorization of the full R.
  double recursion_cond_limit = 1e12;
};

FusionState make_fusion_state(const GpModel& model, const PointList& query_set);

/// Absorb one slot's aggregated observation. The inverse is extended by
/// the block recursion; near-singular pivots fall back to a direct
/// dense factorization. Empty observation matrices advance the slot
/// counter only.
void state_update(FusionState& state, const AggregatedObservation& obs,
                  const ObservationMatrix& W_t, const PointList& slot_positions);

struct PredictionReport {
  VecX means;
  VecX variances;
  double mse = 0.0;
  double bound_lo = 0.0;
  double bound_hi = 0.0;
};

/// Prediction over an arbitrary query list. An empty state returns the
/// prior (mean 0, variance beta, mse beta).
PredictionReport predict(const FusionState& state, const PointList& queries);

/// Fast path over the frozen query set using the cached loading matrix.
PredictionReport predict_cached(const FusionState& state);

/// Monotone error bounds from the per-slot eigenvalue traces recorded at
/// the two surrogate endpoints (alpha = 2K upper, alpha = 2 kappa lower).
std::pair<double, double> error_bounds(const FusionState& state,
                                       const std::vector<double>& lambda_hist_up,
                                       const std::vector<double>& lambda_hist_lo);

/// Fires once the slot design has retained zero columns for `patience`
/// consecutive slots.
struct TerminationTracker {
  int patience = 2;
  int consecutive_empty = 0;
  bool terminated = false;

  bool observe(const ObservationMatrix& W_t) {
    if (W_t.empty())
      ++consecutive_empty;
    else
      consecutive_empty = 0;
    if (consecutive_empty >= patience) terminated = true;
    return terminated;
  }
};

}  // namespace flycom

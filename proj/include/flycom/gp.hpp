#pragma once

#include "flycom/types.hpp"

namespace flycom {

enum class KernelFamily { SquaredExponential, OrnsteinUhlenbeck };

/// Stationary kernel model for the attribute field. beta is the signal
/// variance (kernel value at zero distance), theta the length scale /
/// decay base, sigma_e the observation noise standard deviation.
struct GpModel {
  KernelFamily kernel_family = KernelFamily::SquaredExponential;
  double beta = 0.03;
  double theta = 0.95;
  double sigma_e = 0.0;

  /// Diagonal jitter added when a noiseless Gram matrix fails to factor.
  double jitter() const { return 1e-10 * beta; }
  /// Tolerance on negative eigenvalues of assembled covariances.
  double psd_tol() const { return 1e-9 * beta; }

  void validate() const;
};

double kernel_eval(const GpModel& model, const Vec3& s, const Vec3& s_prime);

/// Dense Gram matrix, entry (n,n') = kernel(points[n], points[n']).
MatX assemble_cov(const GpModel& model, const PointList& points);

/// Kernel vector between a query and each point.
VecX assemble_cross_cov(const GpModel& model, const PointList& points,
                        const Vec3& query);

/// Covariance block between two point sets (rows index `a`, cols `b`).
MatX assemble_cross_cov_block(const GpModel& model, const PointList& a,
                              const PointList& b);

struct GpPrediction {
  VecX means;
  VecX variances;
};

/// Batch conditional prediction. Empty training set falls back to the
/// prior (mean 0, variance beta).
GpPrediction gp_predict_batch(const GpModel& model,
                              const PointList& train_points,
                              const VecX& train_values,
                              const PointList& queries);

/// LLT solve of (S + jitter escalation) * X = B for symmetric S expected
/// to be PSD. Shared policy: jitter starts at model-level default and
/// escalates x10 up to a cap before raising NumericalError.
MatX spd_solve(const MatX& S, const MatX& B, double base_jitter);

/// Same escalation policy, returns the (jittered) Cholesky factor L.
Eigen::LLT<MatX> spd_factor(MatX S, double base_jitter);

}  // namespace flycom

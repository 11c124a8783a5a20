#include "flycom/gp.hpp"

#include <cmath>

namespace flycom {

void GpModel::validate() const {
  require(beta > 0.0, "GpModel: beta must be positive");
  require(theta > 0.0, "GpModel: theta must be positive");
  require(sigma_e >= 0.0, "GpModel: sigma_e must be nonnegative");
}

double kernel_eval(const GpModel& model, const Vec3& s, const Vec3& s_prime) {
  if (!s.allFinite() || !s_prime.allFinite())
    throw ConfigError("kernel_eval: non-finite coordinates");
  const double d = (s - s_prime).norm();
  switch (model.kernel_family) {
    case KernelFamily::SquaredExponential:
      return model.beta * std::exp(-d * d / (2.0 * model.theta * model.theta));
    case KernelFamily::OrnsteinUhlenbeck:
      return model.beta * std::pow(model.theta, d);
  }
  throw ConfigError("kernel_eval: unknown kernel family");
}

MatX assemble_cov(const GpModel& model, const PointList& points) {
  require(!points.empty(), "assemble_cov: empty point list");
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  MatX cov(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    cov(i, i) = model.beta;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = kernel_eval(model, points[i], points[j]);
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }
  return cov;
}

VecX assemble_cross_cov(const GpModel& model, const PointList& points,
                        const Vec3& query) {
  require(!points.empty(), "assemble_cross_cov: empty point list");
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  VecX phi(n);
  for (Eigen::Index i = 0; i < n; ++i)
    phi[i] = kernel_eval(model, query, points[i]);
  return phi;
}

MatX assemble_cross_cov_block(const GpModel& model, const PointList& a,
                              const PointList& b) {
  MatX block(static_cast<Eigen::Index>(a.size()),
             static_cast<Eigen::Index>(b.size()));
  for (Eigen::Index i = 0; i < block.rows(); ++i)
    for (Eigen::Index j = 0; j < block.cols(); ++j)
      block(i, j) = kernel_eval(model, a[i], b[j]);
  return block;
}

Eigen::LLT<MatX> spd_factor(MatX S, double base_jitter) {
  Eigen::LLT<MatX> llt(S);
  if (llt.info() == Eigen::Success) return llt;
  double jit = base_jitter;
  const double cap = base_jitter * 1e8 + 1e-6;
  while (jit <= cap) {
    llt.compute(S + jit * MatX::Identity(S.rows(), S.cols()));
    if (llt.info() == Eigen::Success) return llt;
    jit *= 10.0;
  }
  throw NumericalError(
      "spd_factor: Cholesky failed even after jitter escalation; "
      "matrix is far from positive definite");
}

MatX spd_solve(const MatX& S, const MatX& B, double base_jitter) {
  return spd_factor(S, base_jitter).solve(B);
}

GpPrediction gp_predict_batch(const GpModel& model,
                              const PointList& train_points,
                              const VecX& train_values,
                              const PointList& queries) {
  model.validate();
  require(static_cast<Eigen::Index>(train_points.size()) == train_values.size(),
          "gp_predict_batch: points/values length mismatch");
  const Eigen::Index nq = static_cast<Eigen::Index>(queries.size());
  GpPrediction out;
  out.means = VecX::Zero(nq);
  out.variances = VecX::Constant(nq, model.beta);
  if (train_points.empty()) return out;

  MatX gram = assemble_cov(model, train_points);
  gram.diagonal().array() += model.sigma_e * model.sigma_e;
  Eigen::LLT<MatX> llt;
  try {
    llt = spd_factor(gram, model.jitter());
  } catch (const NumericalError&) {
    throw NumericalError(
        "gp_predict_batch: (Phi + sigma_e^2 I) is singular; with sigma_e = 0 "
        "this is caused by duplicate training points");
  }
  const VecX alpha = llt.solve(train_values);
  for (Eigen::Index q = 0; q < nq; ++q) {
    const VecX phi = assemble_cross_cov(model, train_points, queries[q]);
    out.means[q] = phi.dot(alpha);
    out.variances[q] = model.beta - phi.dot(llt.solve(phi));
  }
  return out;
}

}  // namespace flycom

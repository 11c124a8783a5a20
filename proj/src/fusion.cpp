#include "flycom/fusion.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

namespace flycom {

FusionState make_fusion_state(const GpModel& model, const PointList& query_set) {
  model.validate();
  FusionState state;
  state.model = model;
  state.query_set = query_set;
  state.received = VecX();
  state.R = MatX();
  state.R_inv = MatX();
  state.J = MatX();
  state.U = MatX(static_cast<Eigen::Index>(query_set.size()), 0);
  return state;
}

namespace {

MatX direct_inverse(const MatX& R, double jitter) {
  return spd_solve(R, MatX::Identity(R.rows(), R.cols()), jitter);
}

}  // namespace

void state_update(FusionState& state, const AggregatedObservation& obs,
                  const ObservationMatrix& W_t,
                  const PointList& slot_positions) {
  ++state.slot_count;
  if (W_t.empty()) return;
  require(obs.values.size() == W_t.cols(),
          "state_update: observation length must match W_t columns");
  require(static_cast<Eigen::Index>(slot_positions.size()) ==
              W_t.stacked.rows(),
          "state_update: slot position count must match W_t rows");
  require(obs.noise_power >= 0.0, "state_update: negative noise power");

  const Eigen::Index m = state.dim();
  const Eigen::Index it = W_t.cols();

  // New blocks of R.
  MatX B(m, it);
  Eigen::Index row = 0;
  for (std::size_t l = 0; l < state.slot_positions.size(); ++l) {
    const MatX cross = assemble_cross_cov_block(
        state.model, state.slot_positions[l], slot_positions);
    const Eigen::Index il = state.W_hist[l].cols();
    B.middleRows(row, il) =
        state.W_hist[l].transpose() * cross * W_t.stacked;
    row += il;
  }
  const MatX Phi_tt = assemble_cov(state.model, slot_positions);
  MatX C = W_t.stacked.transpose() * Phi_tt * W_t.stacked;
  C = 0.5 * (C + C.transpose()).eval();
  C.diagonal().array() += obs.noise_power;

  // Extend R.
  MatX R_new(m + it, m + it);
  R_new.topLeftCorner(m, m) = state.R;
  R_new.topRightCorner(m, it) = B;
  R_new.bottomLeftCorner(it, m) = B.transpose();
  R_new.bottomRightCorner(it, it) = C;

  // Block recursion for the inverse, with a conditioning fallback.
  bool fell_back = false;
  MatX Rinv_new(m + it, m + it);
  if (m == 0) {
    try {
      Rinv_new = direct_inverse(C, state.model.jitter());
    } catch (const NumericalError&) {
      throw NumericalError("state_update: first-slot covariance is singular");
    }
  } else {
    const MatX A = C - B.transpose() * state.R_inv * B;
    Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (A + A.transpose()));
    const double lam_max = es.eigenvalues().cwiseAbs().maxCoeff();
    const double lam_min = es.eigenvalues().minCoeff();
    const bool healthy =
        lam_min > 0.0 && lam_max / lam_min < state.recursion_cond_limit;
    if (healthy) {
      const MatX A_inv = es.eigenvectors() *
                         es.eigenvalues().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose();
      const MatX RB = state.R_inv * B;
      Rinv_new.topLeftCorner(m, m) =
          state.R_inv + RB * A_inv * RB.transpose();
      Rinv_new.topRightCorner(m, it) = -RB * A_inv;
      Rinv_new.bottomLeftCorner(it, m) =
          Rinv_new.topRightCorner(m, it).transpose();
      Rinv_new.bottomRightCorner(it, it) = A_inv;
    } else {
      fell_back = true;
    }
    if (fell_back) {
      try {
        Rinv_new = direct_inverse(R_new, state.model.jitter());
      } catch (const NumericalError&) {
        throw NumericalError(
            "state_update: both the block recursion and the direct "
            "factorization of R failed; observations are too ill-conditioned");
      }
    }
  }

  // Query loading and projected correlation.
  PointList slot_copy = slot_positions;
  const MatX Phi_C = assemble_cross_cov_block(state.model, state.query_set,
                                              slot_positions);
  const MatX U_t = Phi_C * W_t.stacked;
  MatX U_new(state.U.rows(), m + it);
  U_new.leftCols(m) = state.U;
  U_new.rightCols(it) = U_t;

  VecX received_new(m + it);
  received_new.head(m) = state.received;
  received_new.tail(it) = obs.values;

  state.slot_positions.push_back(std::move(slot_copy));
  state.W_hist.push_back(W_t.stacked);
  state.noise_hist.push_back(obs.noise_power);
  state.received = std::move(received_new);
  state.R = std::move(R_new);
  state.R_inv = std::move(Rinv_new);
  state.U = std::move(U_new);
  state.J = state.U.transpose() * state.U;
}

namespace {

PredictionReport report_from_loading(const FusionState& state, const MatX& Uq) {
  const double beta = state.model.beta;
  PredictionReport rep;
  const Eigen::Index nq = Uq.rows();
  if (state.dim() == 0) {
    rep.means = VecX::Zero(nq);
    rep.variances = VecX::Constant(nq, beta);
    rep.mse = beta;
    rep.bound_lo = beta;
    rep.bound_hi = beta;
    return rep;
  }
  rep.means = Uq * (state.R_inv * state.received);
  const MatX RU = state.R_inv * Uq.transpose();
  rep.variances = VecX(nq);
  double acc = 0.0;
  for (Eigen::Index q = 0; q < nq; ++q) {
    const double red = Uq.row(q).dot(RU.col(q));
    rep.variances[q] = beta - red;
    acc += red;
  }
  rep.mse = nq > 0 ? beta - acc / static_cast<double>(nq) : beta;
  rep.bound_lo = 0.0;
  rep.bound_hi = beta;
  return rep;
}

}  // namespace

PredictionReport predict(const FusionState& state, const PointList& queries) {
  for (const Vec3& q : queries)
    require(q.allFinite(), "predict: non-finite query");
  MatX Uq(static_cast<Eigen::Index>(queries.size()), state.dim());
  Eigen::Index col = 0;
  for (std::size_t l = 0; l < state.slot_positions.size(); ++l) {
    const MatX cross =
        assemble_cross_cov_block(state.model, queries, state.slot_positions[l]);
    Uq.middleCols(col, state.W_hist[l].cols()) = cross * state.W_hist[l];
    col += state.W_hist[l].cols();
  }
  return report_from_loading(state, Uq);
}

PredictionReport predict_cached(const FusionState& state) {
  return report_from_loading(state, state.U);
}

std::pair<double, double> error_bounds(
    const FusionState& state, const std::vector<double>& lambda_hist_up,
    const std::vector<double>& lambda_hist_lo) {
  const double beta = state.model.beta;
  const double c = std::max<double>(1.0, static_cast<double>(state.query_set.size()));
  double up = 0.0, lw = 0.0;
  for (double v : lambda_hist_up) up += v;
  for (double v : lambda_hist_lo) lw += v;
  return {beta - up / c, beta - lw / c};
}

}  // namespace flycom

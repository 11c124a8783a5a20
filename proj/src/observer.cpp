#include "flycom/observer.hpp"

#include "flycom/fusion.hpp"
#include "flycom/gp.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace flycom {

namespace {

MatX jittered(const MatX& S) {
  const double jit = 1e-10 * std::max(S.diagonal().cwiseAbs().maxCoeff(), 1.0);
  return S + jit * MatX::Identity(S.rows(), S.cols());
}

std::vector<MatX> split_blocks(const MatX& stacked,
                               const std::vector<Eigen::Index>& block_sizes) {
  std::vector<MatX> blocks;
  if (block_sizes.empty()) {
    blocks.push_back(stacked);
    return blocks;
  }
  Eigen::Index row = 0;
  for (Eigen::Index n : block_sizes) {
    blocks.push_back(stacked.middleRows(row, n));
    row += n;
  }
  require(row == stacked.rows(),
          "split_blocks: block sizes do not sum to the stacked dimension");
  return blocks;
}

ObservationMatrix pack(const MatX& stacked, const VecX& eigvals,
                       const std::vector<Eigen::Index>& block_sizes,
                       bool truncated) {
  ObservationMatrix out;
  out.stacked = stacked;
  out.eigenvalues = eigvals;
  out.truncated = truncated;
  out.blocks = split_blocks(stacked, block_sizes);
  return out;
}

}  // namespace

GedResult generalized_eig(const MatX& Qm, const MatX& Pm) {
  require(Qm.rows() == Qm.cols() && Pm.rows() == Pm.cols() &&
              Qm.rows() == Pm.rows(),
          "generalized_eig: matrices must be square and equally sized");
  const Eigen::Index n = Qm.rows();

  // Fast path: Pm positive definite, Cholesky whitening keeps everything
  // real and symmetric.
  Eigen::LLT<MatX> llt(Pm);
  if (llt.info() == Eigen::Success) {
    const MatX L = llt.matrixL();
    const MatX white = L.triangularView<Eigen::Lower>().solve(
        MatX(L.triangularView<Eigen::Lower>()
                 .solve(0.5 * (Qm + Qm.transpose()))
                 .transpose()));
    Eigen::SelfAdjointEigenSolver<MatX> es(white);
    if (es.info() != Eigen::Success)
      throw NumericalError("generalized_eig: symmetric eigensolver failed");
    GedResult out;
    out.eigvals = VecX(n);
    out.eigvecs = MatX(n, n);
    out.complex_flags.assign(static_cast<std::size_t>(n), false);
    // SelfAdjointEigenSolver sorts ascending; flip to descending.
    const MatX back = L.transpose()
                          .triangularView<Eigen::Upper>()
                          .solve(es.eigenvectors());
    for (Eigen::Index i = 0; i < n; ++i) {
      out.eigvals[i] = es.eigenvalues()[n - 1 - i];
      out.eigvecs.col(i) = back.col(n - 1 - i);
    }
    return out;
  }

  // General pencil: real QZ, complex or infinite pairs flagged.
  Eigen::GeneralizedEigenSolver<MatX> ges;
  ges.compute(0.5 * (Qm + Qm.transpose()), 0.5 * (Pm + Pm.transpose()), true);
  if (ges.info() != Eigen::Success) {
    Eigen::JacobiSVD<MatX> svd(Pm);
    std::ostringstream msg;
    msg << "generalized_eig: QZ decomposition failed; cond(Pm) ~ "
        << svd.singularValues()[0] /
               std::max(svd.singularValues()[n - 1], 1e-300);
    throw NumericalError(msg.str());
  }

  const double beta_scale =
      std::max(ges.betas().cwiseAbs().maxCoeff(), 1e-300);
  struct Pair {
    double lam;
    VecX vec;
    bool bad;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> a = ges.alphas()[i];
    const double b = ges.betas()[i];
    Pair p;
    p.bad = std::abs(b) <= 1e-12 * beta_scale;
    const std::complex<double> lam = p.bad ? a : a / b;
    const CVecX cv = ges.eigenvectors().col(i);
    const double im_rel = cv.imag().norm() / std::max(cv.norm(), 1e-300);
    // Conjugate pairs with negligible imaginary parts are realified.
    p.bad = p.bad || std::abs(lam.imag()) > 1e-10 * (std::abs(lam.real()) + 1.0) ||
            im_rel > 1e-10;
    p.lam = lam.real();
    p.vec = cv.real();
    if (p.vec.norm() > 0.0) p.vec.normalize();
    if (!p.bad) {
      const double d = p.vec.dot(Pm * p.vec);
      if (std::abs(d) > 1e-12 * std::max(Pm.norm(), 1.0))
        p.vec /= std::sqrt(std::abs(d));
    }
    pairs.push_back(std::move(p));
  }
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
    if (x.bad != y.bad) return !x.bad;
    return x.lam > y.lam;
  });

  GedResult out;
  out.eigvals = VecX(n);
  out.eigvecs = MatX(n, n);
  out.complex_flags.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    out.eigvals[i] = pairs[static_cast<std::size_t>(i)].lam;
    out.eigvecs.col(i) = pairs[static_cast<std::size_t>(i)].vec;
    out.complex_flags[static_cast<std::size_t>(i)] =
        pairs[static_cast<std::size_t>(i)].bad;
  }
  return out;
}

ObservationMatrix design_case1(const MatX& Phi, const MatX& Qm, Eigen::Index I,
                               const std::vector<Eigen::Index>& block_sizes) {
  require(I >= 1 && I <= Phi.rows(), "design_case1: invalid column count");
  const GedResult ged = generalized_eig(Qm, jittered(Phi));
  Eigen::Index keep = 0;
  while (keep < I && keep < ged.eigvals.size() &&
         !ged.complex_flags[static_cast<std::size_t>(keep)])
    ++keep;
  return pack(ged.eigvecs.leftCols(keep), ged.eigvals.head(keep), block_sizes,
              keep < I);
}

ObservationMatrix design_case2(const DesignInputs& inputs) {
  require(inputs.alpha > 0.0, "design_case2: alpha must be positive");
  require(inputs.gamma > 0.0, "design_case2: gamma must be positive");
  const MatX Pm =
      inputs.Phi_tt + inputs.Psi_t / (inputs.alpha * inputs.gamma);
  return design_case1(Pm, inputs.Q_tt, inputs.max_cols, inputs.block_sizes);
}

CorrectionPair compute_corrections(const FusionState& state,
                                   const DesignInputs& inputs) {
  const Eigen::Index nt = inputs.Phi_tt.rows();
  CorrectionPair out;
  if (state.dim() == 0 || inputs.P2.size() == 0) {
    out.Upsilon = MatX::Zero(nt, nt);
    out.Xi = MatX::Zero(nt, nt);
    return out;
  }
  require(inputs.P2.rows() == state.dim() && inputs.Q2.rows() == state.dim(),
          "compute_corrections: cross-block rows must match the state");
  require(inputs.P2.cols() == nt && inputs.Q2.cols() == nt,
          "compute_corrections: cross-block cols must match the slot");
  const MatX RinvP2 = state.R_inv * inputs.P2;
  out.Upsilon = inputs.P2.transpose() * RinvP2;
  out.Xi = inputs.Q2.transpose() * RinvP2 + RinvP2.transpose() * inputs.Q2 -
           RinvP2.transpose() * state.J * RinvP2;
  out.Upsilon = 0.5 * (out.Upsilon + out.Upsilon.transpose()).eval();
  out.Xi = 0.5 * (out.Xi + out.Xi.transpose()).eval();
  return out;
}

double positive_eig_threshold(const VecX& eigvals) {
  if (eigvals.size() == 0) return 0.0;
  return 1e-8 * eigvals.cwiseAbs().maxCoeff();
}

ObservationMatrix design_case3(const FusionState& state,
                               const DesignInputs& inputs) {
  require(inputs.max_cols >= 1, "design_case3: max_cols must be >= 1");
  const CorrectionPair corr = compute_corrections(state, inputs);
  const MatX Qm = inputs.Q_tt - corr.Xi;
  const MatX Pm = inputs.Phi_tt +
                  inputs.Psi_t / (inputs.alpha * inputs.gamma) - corr.Upsilon;
  const GedResult ged = generalized_eig(Qm, jittered(Pm));

  VecX usable_vals(ged.eigvals.size());
  MatX usable_vecs(ged.eigvecs.rows(), ged.eigvecs.cols());
  Eigen::Index m = 0;
  for (Eigen::Index i = 0; i < ged.eigvals.size(); ++i)
    if (!ged.complex_flags[static_cast<std::size_t>(i)]) {
      usable_vals[m] = ged.eigvals[i];
      usable_vecs.col(m) = ged.eigvecs.col(i);
      ++m;
    }
  const double tol = positive_eig_threshold(usable_vals.head(m));
  Eigen::Index keep = 0;
  while (keep < m && keep < inputs.max_cols && usable_vals[keep] > tol) ++keep;
  return pack(usable_vecs.leftCols(keep), usable_vals.head(keep),
              inputs.block_sizes, false);
}

namespace {

ObservationMatrix per_sensor_eig_baseline(const std::vector<MatX>& Phi_k_blocks,
                                          Eigen::Index I, bool principal) {
  require(!Phi_k_blocks.empty(), "baseline: no sensor blocks");
  require(I >= 1, "baseline: invalid column count");
  std::vector<MatX> blocks;
  std::vector<Eigen::Index> sizes;
  Eigen::Index total = 0;
  for (const MatX& Phi : Phi_k_blocks) {
    const Eigen::Index n = Phi.rows();
    if (n == 0) {  // sensor already exhausted its batches this slot
      blocks.push_back(MatX::Zero(0, I));
      sizes.push_back(0);
      continue;
    }
    Eigen::SelfAdjointEigenSolver<MatX> es(Phi);
    if (es.info() != Eigen::Success)
      throw NumericalError("baseline: eigendecomposition failed");
    const Eigen::Index take = std::min(I, n);
    MatX W = MatX::Zero(n, I);
    for (Eigen::Index j = 0; j < take; ++j)
      // SelfAdjointEigenSolver sorts ascending.
      W.col(j) = principal ? es.eigenvectors().col(n - 1 - j)
                           : es.eigenvectors().col(j);
    blocks.push_back(std::move(W));
    sizes.push_back(n);
    total += n;
  }
  ObservationMatrix out;
  out.blocks = std::move(blocks);
  out.stacked = MatX::Zero(total, I);
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < out.blocks.size(); ++k) {
    out.stacked.middleRows(row, sizes[k]) = out.blocks[k];
    row += sizes[k];
  }
  return out;
}

}  // namespace

ObservationMatrix baseline_pca(const std::vector<MatX>& Phi_k_blocks,
                               Eigen::Index I) {
  return per_sensor_eig_baseline(Phi_k_blocks, I, true);
}

ObservationMatrix baseline_aem(const std::vector<MatX>& Phi_k_blocks,
                               Eigen::Index I) {
  return per_sensor_eig_baseline(Phi_k_blocks, I, false);
}

KappaResult lemma3_kappa(const std::vector<MatX>& Psi_blocks) {
  require(!Psi_blocks.empty(), "lemma3_kappa: no blocks");
  std::size_t kstar = 0;
  double best = -1.0;
  for (std::size_t k = 0; k < Psi_blocks.size(); ++k) {
    const double tr = Psi_blocks[k].trace();
    if (tr > best) {
      best = tr;
      kstar = k;
    }
  }
  Eigen::SelfAdjointEigenSolver<MatX> es(Psi_blocks[kstar]);
  const double lam_min = es.eigenvalues().minCoeff();
  KappaResult out;
  if (lam_min <= 0.0 || best <= 0.0) {
    out.degenerate = true;
    return out;
  }
  out.kappa = lam_min / best;
  return out;
}

VecX per_sensor_psi_trace(const std::vector<MatX>& W_blocks,
                          const std::vector<MatX>& Phi_k_blocks,
                          const CMatX& H, const CVecX& v) {
  require(W_blocks.size() == Phi_k_blocks.size() &&
              static_cast<Eigen::Index>(W_blocks.size()) == H.cols(),
          "per_sensor_psi_trace: block/channel count mismatch");
  VecX out(H.cols());
  for (Eigen::Index k = 0; k < H.cols(); ++k) {
    const double gain2 = std::norm(v.dot(H.col(k)));
    if (gain2 < 1e-30)
      throw NumericalError(
          "per_sensor_psi_trace: effective channel gain vanished "
          "(zero-forcing infeasible)");
    const MatX& W = W_blocks[static_cast<std::size_t>(k)];
    const MatX& Phi = Phi_k_blocks[static_cast<std::size_t>(k)];
    out[k] = W.size() == 0 ? 0.0 : (W.transpose() * Phi * W).trace() / gain2;
  }
  return out;
}

MatX assemble_psi(const std::vector<MatX>& Phi_k_blocks, const CMatX& H,
                  const CVecX& v, Eigen::Index slot_samples) {
  require(static_cast<Eigen::Index>(Phi_k_blocks.size()) == H.cols(),
          "assemble_psi: block/channel count mismatch");
  require(slot_samples >= 1, "assemble_psi: slot_samples must be >= 1");
  Eigen::Index total = 0;
  for (const MatX& Phi : Phi_k_blocks) total += Phi.rows();
  MatX Psi = MatX::Zero(total, total);
  Eigen::Index row = 0;
  for (Eigen::Index k = 0; k < H.cols(); ++k) {
    const double gain2 = std::norm(v.dot(H.col(k)));
    if (gain2 < 1e-30)
      throw NumericalError("assemble_psi: effective channel gain vanished");
    const MatX& Phi = Phi_k_blocks[static_cast<std::size_t>(k)];
    Psi.block(row, row, Phi.rows(), Phi.rows()) =
        Phi / (static_cast<double>(slot_samples) * gain2);
    row += Phi.rows();
  }
  return Psi;
}

}  // namespace flycom

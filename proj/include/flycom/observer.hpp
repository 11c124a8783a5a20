#pragma once

#include "flycom/channel.hpp"
#include "flycom/types.hpp"

namespace flycom {

struct FusionState;  // fusion.hpp

/// Per-slot observation matrix. blocks[k] is sensor k's local projection
/// (rows = that sensor's slot sample count); stacked is their vertical
/// concatenation. eigenvalues holds the retained generalized eigenvalues.
struct ObservationMatrix {
  std::vector<MatX> blocks;
  MatX stacked;
  VecX eigenvalues;
  bool truncated = false;  // fewer usable real eigenpairs than requested

  Eigen::Index cols() const { return stacked.cols(); }
  bool empty() const { return stacked.cols() == 0; }
};

/// Inputs of the per-slot design problem. Cross blocks are stored already
/// projected through the accumulated observation matrices: P2 = W_hist^T
/// PhiBar_{<t,t} and Q2 = W_hist^T Q_{<t,t}; both are empty on slot 1.
struct DesignInputs {
  MatX Phi_tt;   // raw slot covariance, stacked over sensors
  MatX Q_tt;     // sum over queries of phi_t(s) phi_t(s)^T
  MatX Psi_t;    // blockdiag(Phi_k / (N |v^H h_k|^2))
  MatX P2;
  MatX Q2;
  double gamma = 1.0;   // transmit SNR
  double alpha = 16.0;  // surrogate bound parameter
  Eigen::Index max_cols = 0;  // I_t
  std::vector<Eigen::Index> block_sizes;  // per-sensor row counts
};

struct CorrectionPair {
  MatX Upsilon;
  MatX Xi;
};

struct GedResult {
  VecX eigvals;                     // descending; flagged pairs last
  MatX eigvecs;                     // real parts, columns match eigvals
  std::vector<bool> complex_flags;  // true: pair unusable (complex/infinite)
};

/// Generalized eigenpairs of Qm w = lambda Pm w. Positive-definite Pm is
/// handled by Cholesky whitening; otherwise the real QZ path is used and
/// genuinely complex or infinite pairs are flagged. Eigenvectors are
/// scaled so |w^T Pm w| = 1 where that is numerically meaningful.
GedResult generalized_eig(const MatX& Qm, const MatX& Pm);

ObservationMatrix design_case1(const MatX& Phi, const MatX& Qm, Eigen::Index I,
                               const std::vector<Eigen::Index>& block_sizes = {});

ObservationMatrix design_case2(const DesignInputs& inputs);

CorrectionPair compute_corrections(const FusionState& state,
                                   const DesignInputs& inputs);

/// Streaming design: GED of (Q_tt - Xi, Phi_tt + Psi/(alpha gamma) -
/// Upsilon), retaining real eigenvectors with strictly positive
/// eigenvalues, capped at max_cols. May legitimately return an empty
/// matrix, which drives termination.
ObservationMatrix design_case3(const FusionState& state,
                               const DesignInputs& inputs);

/// Relative tolerance below which a positive eigenvalue is treated as zero.
double positive_eig_threshold(const VecX& eigvals);

ObservationMatrix baseline_pca(const std::vector<MatX>& Phi_k_blocks,
                               Eigen::Index I);

/// AirComp-error-minimized baseline: bottom eigenvectors per sensor.
ObservationMatrix baseline_aem(const std::vector<MatX>& Phi_k_blocks,
                               Eigen::Index I);

struct KappaResult {
  double kappa = 0.0;
  bool degenerate = false;  // binding Psi block singular
};

/// Maximal admissible kappa: lambda_min(Psi_{k*}) / Tr(Psi_{k*}) at the
/// binding sensor k* = argmax_k Tr(Psi_k).
KappaResult lemma3_kappa(const std::vector<MatX>& Psi_blocks);

/// Tr(Psi_k) = Tr(W_k^T Phi_k W_k) / |v^H h_k|^2 for every sensor.
VecX per_sensor_psi_trace(const std::vector<MatX>& W_blocks,
                          const std::vector<MatX>& Phi_k_blocks,
                          const CMatX& H, const CVecX& v);

/// blockdiag(Phi_k / (N |v^H h_k|^2)).
MatX assemble_psi(const std::vector<MatX>& Phi_k_blocks, const CMatX& H,
                  const CVecX& v, Eigen::Index slot_samples);

}  // namespace flycom

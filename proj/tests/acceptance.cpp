// Acceptance gate: one pass/fail line per criterion, exit code equals the
// number of failures.

#include "flycom/experiment.hpp"
#include "flycom/octree.hpp"

#include <Eigen/Eigenvalues>
#include <iostream>
#include <random>

using namespace flycom;

namespace {

std::mt19937_64 g_rng(20260824);

MatX random_mat(Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  MatX A(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) A(i, j) = gauss(g_rng);
  return A;
}

MatX random_pd(Eigen::Index n, double ridge = 0.1) {
  const MatX A = random_mat(n, n);
  return A * A.transpose() / static_cast<double>(n) +
         ridge * MatX::Identity(n, n);
}

MatX random_psd(Eigen::Index n) {
  const MatX A = random_mat(n, n);
  return A * A.transpose() / static_cast<double>(n);
}

MatX random_orthonormal(Eigen::Index n, Eigen::Index k) {
  return Eigen::HouseholderQR<MatX>(random_mat(n, k)).householderQ() *
         MatX::Identity(n, k);
}

PointList random_points(int n, double scale = 1.0) {
  std::uniform_real_distribution<double> uni(0.0, scale);
  PointList pts;
  for (int i = 0; i < n; ++i)
    pts.push_back(Vec3(uni(g_rng), uni(g_rng), uni(g_rng)));
  return pts;
}

double min_eig(const MatX& S) {
  return Eigen::SelfAdjointEigenSolver<MatX>(0.5 * (S + S.transpose()))
      .eigenvalues()
      .minCoeff();
}

// 1. Partitioned trace identity with the correction matrices.
bool criterion_trace_identity() {
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index n1 = 2 + static_cast<Eigen::Index>(g_rng() % 11);
    const Eigen::Index n2 = 2 + static_cast<Eigen::Index>(g_rng() % 11);
    const MatX M = random_pd(n1 + n2, 0.5);
    const MatX N = random_psd(n1 + n2);
    const MatX P1 = M.topLeftCorner(n1, n1);
    const MatX P2 = M.topRightCorner(n1, n2);
    const MatX P3 = M.bottomRightCorner(n2, n2);
    const MatX Q1 = N.topLeftCorner(n1, n1);
    const MatX Q2 = N.topRightCorner(n1, n2);
    const MatX Q3 = N.bottomRightCorner(n2, n2);
    const MatX P1i = P1.inverse();
    const MatX Upsilon = P2.transpose() * P1i * P2;
    const MatX Xi = Q2.transpose() * P1i * P2 + P2.transpose() * P1i * Q2 -
                    P2.transpose() * P1i * Q1 * P1i * P2;
    const double lhs = (M.inverse() * N).trace();
    const double rhs = (P1i * Q1).trace() +
                       ((P3 - Upsilon).inverse() * (Q3 - Xi)).trace();
    if (std::abs(lhs - rhs) > 1e-9 * std::max(1.0, std::abs(lhs))) return false;
  }
  return true;
}

// 2. Block-recursive inverse against direct dense inversion.
bool criterion_block_recursion() {
  for (uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    GpModel model;
    FusionState state = make_fusion_state(model, random_points(6));
    for (int t = 0; t < 4; ++t) {
      const int n = 3 + static_cast<int>(rng() % 8);
      const int cols = 1 + static_cast<int>(rng() % 3);
      ObservationMatrix W;
      W.stacked = random_mat(n, cols);
      W.blocks = {W.stacked};
      AggregatedObservation obs;
      obs.values = VecX::Zero(cols);
      obs.noise_power = 1e-4;
      state_update(state, obs, W, random_points(n, 2.0));
      if ((state.R_inv - state.R.inverse()).cwiseAbs().maxCoeff() > 1e-8)
        return false;
    }
  }
  return true;
}

// 3. Trace monotonicity and the blockwise noise sandwich.
bool criterion_monotonicity_sandwich() {
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(g_rng() % 7);
    const MatX M0 = random_psd(n);
    const MatX M2 = random_pd(n);
    const MatX M1 = M2 + random_psd(n);
    const double t1 = M1.ldlt().solve(M0).trace();
    const double t2 = M2.ldlt().solve(M0).trace();
    if (t1 > t2 + 1e-9 * (1.0 + std::abs(t2))) return false;
  }
  for (int trial = 0; trial < 200; ++trial) {
    const int K = 2 + static_cast<int>(g_rng() % 4);
    const Eigen::Index I = 2;
    const double N = 4.0 + static_cast<double>(g_rng() % 4);
    std::vector<MatX> psi;
    std::vector<MatX> w;
    for (int k = 0; k < K; ++k) {
      const Eigen::Index nk = I + static_cast<Eigen::Index>(g_rng() % 4);
      psi.push_back(random_pd(nk));
      w.push_back(random_orthonormal(nk, I));
    }
    double max_tr = 0.0;
    for (const MatX& P : psi) max_tr = std::max(max_tr, P.trace());
    const KappaResult kr = lemma3_kappa(psi);
    if (kr.degenerate) return false;
    MatX WtPsiW = MatX::Zero(I, I);
    for (int k = 0; k < K; ++k)
      WtPsiW += w[static_cast<std::size_t>(k)].transpose() *
                psi[static_cast<std::size_t>(k)] *
                w[static_cast<std::size_t>(k)];
    WtPsiW /= N;
    const MatX mid = max_tr / N * MatX::Identity(I, I);
    if (min_eig(WtPsiW / kr.kappa - mid) < -1e-9) return false;
    if (min_eig(mid - WtPsiW / static_cast<double>(K)) < -1e-9) return false;
  }
  return true;
}

// 4. Designed observation matrices beat random orthonormal candidates.
bool criterion_ged_optimality() {
  const auto ratio_trace = [](const MatX& W, const MatX& Q, const MatX& P) {
    return ((W.transpose() * P * W).ldlt().solve(W.transpose() * Q * W))
        .trace();
  };
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index n = 4 + static_cast<Eigen::Index>(g_rng() % 9);
    const Eigen::Index I =
        1 + static_cast<Eigen::Index>(g_rng() % std::min<Eigen::Index>(4, n));
    const MatX Phi = random_pd(n);
    const MatX Q = random_psd(n);
    const ObservationMatrix W = design_case1(Phi, Q, I);
    const double designed = ratio_trace(W.stacked, Q, Phi);
    for (int cand = 0; cand < 1000; ++cand)
      if (ratio_trace(random_orthonormal(n, I), Q, Phi) > designed + 1e-9)
        return false;
  }
  return true;
}

// 5. Noiseless full-rank end-to-end run reaches machine-level nmse.
bool criterion_noiseless_exactness() {
  ExperimentConfig cfg;
  cfg.design = DesignScheme::Case1;
  cfg.snr_db = 200.0;
  cfg.slots = 4;
  cfg.octree_depth = 3;
  cfg.num_points = 200;
  cfg.scene.ground_truth.kernel_family = KernelFamily::OrnsteinUhlenbeck;
  cfg.scene.ground_truth.theta = 0.7;
  cfg.scene.num_sensors = 1;
  cfg.scene.per_slot_budget = 500;
  cfg.channel.num_sensors = 1;
  cfg.channel.num_antennas = 4;
  cfg.channel.symbols_per_slot = 500;
  cfg.compute_bounds = false;
  const RunRecord rec = run_experiment(cfg, 1);
  return !rec.rows.empty() && rec.final_nmse() <= 1e-6;
}

ExperimentConfig suite_config() {
  ExperimentConfig cfg;
  cfg.snr_db = 5.0;
  cfg.slots = 20;
  cfg.octree_depth = 4;
  cfg.num_points = 400;
  cfg.scene.num_sensors = 8;
  cfg.scene.per_slot_budget = 12;
  cfg.channel.num_sensors = 8;
  cfg.channel.num_antennas = 8;
  cfg.channel.symbols_per_slot = 8;
  cfg.compute_bounds = false;
  return cfg;
}

// 6. Per-slot prediction error is nonincreasing on every seeded run.
bool criterion_progressive_improvement() {
  ExperimentConfig cfg = suite_config();
  cfg.design = DesignScheme::Case3;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const RunRecord rec = run_experiment(cfg, seed);
    double prev = cfg.scene.ground_truth.beta;
    for (const TraceRow& r : rec.rows) {
      if (r.mse > prev + 1e-9) return false;
      prev = r.mse;
    }
  }
  return true;
}

// 7. Design ordering at matched symbol budget, mean and per-seed.
bool criterion_baseline_ordering() {
  ExperimentConfig cfg = suite_config();
  cfg.snr_db = 10.0;
  cfg.slots = 4;
  cfg.num_points = 600;
  cfg.scene.per_slot_budget = 24;
  const std::vector<DesignScheme> designs = {
      DesignScheme::Case3, DesignScheme::Noncausal, DesignScheme::PcaBaseline,
      DesignScheme::AemBaseline};
  const int seeds = 20;
  MatX finals(4, seeds);
  for (int d = 0; d < 4; ++d) {
    cfg.design = designs[static_cast<std::size_t>(d)];
    for (int s = 0; s < seeds; ++s)
      finals(d, s) = run_experiment(cfg, static_cast<uint64_t>(s + 1))
                         .final_nmse();
  }
  const VecX mean = finals.rowwise().mean();
  if (!(mean[0] <= mean[1] && mean[1] <= mean[2])) return false;
  if (!(mean[3] >= mean[0] && mean[3] >= mean[1] && mean[3] >= mean[2]))
    return false;
  // 95% of seeds respect each pairwise ordering (tolerate 1 of 20).
  const auto violations = [&](int a, int b) {
    int v = 0;
    for (int s = 0; s < seeds; ++s)
      if (finals(a, s) > finals(b, s) + 1e-12) ++v;
    return v;
  };
  if (violations(0, 1) > 1 || violations(1, 2) > 1) return false;
  if (violations(0, 3) > 1 || violations(1, 3) > 1 || violations(2, 3) > 1)
    return false;
  // Reported, not asserted: relative improvement of the streaming design
  // over the slot-independent one.
  std::cout << "     (case3 vs noncausal mean improvement: "
            << 100.0 * (mean[1] - mean[0]) / mean[1] << "%)\n";
  return true;
}

// 8. Per-slot voxel budgets beyond the symbol budget hurt the AEM baseline.
bool criterion_aem_budget_knee() {
  ExperimentConfig cfg;
  cfg.design = DesignScheme::AemBaseline;
  cfg.snr_db = 15.0;
  cfg.slots = 12;
  cfg.octree_depth = 4;
  cfg.num_points = 600;
  cfg.scene.num_sensors = 1;
  cfg.channel.num_sensors = 1;
  cfg.channel.num_antennas = 4;
  cfg.channel.symbols_per_slot = 100;
  cfg.compute_bounds = false;
  const auto mean_final = [&](int budget) {
    cfg.scene.per_slot_budget = budget;
    double acc = 0.0;
    for (uint64_t seed = 1; seed <= 10; ++seed)
      acc += run_experiment(cfg, seed).final_nmse();
    return acc / 10.0;
  };
  const double at100 = mean_final(100);
  const double at150 = mean_final(150);
  mean_final(50);  // part of the sweep axis; trend not asserted at 50
  return at150 > at100;
}

// 9. Termination fires and later slots change nothing.
bool criterion_termination() {
  ExperimentConfig cfg;
  cfg.design = DesignScheme::Case3;
  cfg.snr_db = 200.0;
  cfg.slots = 30;
  cfg.octree_depth = 3;
  cfg.num_points = 200;
  cfg.scene.num_sensors = 4;
  cfg.scene.per_slot_budget = 20;
  cfg.channel.num_sensors = 4;
  cfg.channel.num_antennas = 6;
  cfg.channel.symbols_per_slot = 20;
  cfg.compute_bounds = false;

  cfg.termination_patience = 1000;  // observe the tail
  const RunRecord full = run_experiment(cfg, 3);
  int first_zero = -1;
  for (std::size_t i = 1; i < full.rows.size(); ++i)
    if (full.rows[i].retained_dim == 0 && full.rows[i - 1].retained_dim == 0) {
      first_zero = static_cast<int>(i);
      break;
    }
  if (first_zero < 0) return false;
  const double at_stop = full.rows[static_cast<std::size_t>(first_zero)].nmse;
  if (std::abs(full.final_nmse() - at_stop) >= 1e-6) return false;

  cfg.termination_patience = 2;
  const RunRecord cut = run_experiment(cfg, 3);
  return cut.termination_slot >= 0 && cut.rows.back().terminated;
}

// 10. Quadtree fixture sequence plus a 50-cloud round-trip suite.
bool criterion_octree() {
  OccupancyCode expected;
  expected.dim = 2;
  expected.depth_sequences = {
      {1}, {1, 1, 1, 0}, {0, 1, 1, 1, 0, 1, 1, 1, 1, 1, 0, 1}};
  const Aabb unit{Vec3(0, 0, 0), Vec3(1, 1, 1)};
  const VoxelGrid grid = decode_occupancy(expected, unit);
  if (grid.size() != 9) return false;
  const OccupancyCode built = build_occupancy(grid.occupied_centers, unit, 3, 2);
  if (built.depth_sequences != expected.depth_sequences) return false;

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(g_rng() % 200);
    const int depth = 2 + static_cast<int>(g_rng() % 4);
    const PointList pts = random_points(n);
    const OccupancyCode code = build_occupancy(pts, unit, depth);
    const VoxelGrid g = decode_occupancy(code, unit);
    // Recoding the decoded centers must reproduce the code, and every
    // input point must land in some decoded cell.
    const OccupancyCode again =
        build_occupancy(g.occupied_centers, unit, depth);
    if (again.depth_sequences != code.depth_sequences) return false;
    const double cs = g.cell_size;
    for (const Vec3& p : pts) {
      bool found = false;
      for (const Vec3& c : g.occupied_centers)
        if (((p - c).cwiseAbs().array() <= 0.5 * cs + 1e-12).all()) {
          found = true;
          break;
        }
      if (!found) return false;
    }
  }
  return true;
}

// 11. Monte-Carlo AirComp noise statistics and zero-forcing exactness.
bool criterion_channel_statistics() {
  AirCompConfig cfg;
  cfg.num_antennas = 4;
  cfg.num_sensors = 2;
  cfg.symbols_per_slot = 1;
  cfg.noise_var = 0.3;
  SlotChannel chan = sample_channel(cfg, 2);
  chan.b = CVecX::Ones(4) * std::complex<double>(0.6, -0.2);
  const double predicted = 0.5 * cfg.noise_var * chan.b.squaredNorm();
  const VecX zero = VecX::Zero(1);
  double acc = 0.0;
  const int slots = 100000;
  for (int s = 0; s < slots; ++s)
    acc += std::pow(
        aircomp_aggregate({zero, zero}, chan, cfg, static_cast<uint64_t>(s))
            .values[0],
        2.0);
  if (std::abs(acc / slots - predicted) > 0.02 * predicted) return false;

  cfg.noise_var = 0.0;
  cfg.symbols_per_slot = 3;
  const VecX f1 = (VecX(3) << 0.5, -1.5, 2.0).finished();
  const VecX f2 = (VecX(3) << 1.0, 0.25, -0.75).finished();
  const AggregatedObservation obs = aircomp_aggregate({f1, f2}, chan, cfg, 0);
  return (obs.values - (f1 + f2)).cwiseAbs().maxCoeff() <= 1e-10;
}

struct Criterion {
  const char* name;
  bool (*fn)();
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"partitioned trace identity (100 random instances)",
       criterion_trace_identity},
      {"block-recursive inverse matches direct inversion (50 runs)",
       criterion_block_recursion},
      {"trace monotonicity and noise sandwich (200 instances each)",
       criterion_monotonicity_sandwich},
      {"ratio-trace optimality over random candidates (20 x 1000)",
       criterion_ged_optimality},
      {"noiseless full-rank run reaches nmse <= 1e-6",
       criterion_noiseless_exactness},
      {"prediction error nonincreasing on 10 seeded runs",
       criterion_progressive_improvement},
      {"design ordering case3 <= noncausal <= pca, aem worst (20 seeds)",
       criterion_baseline_ordering},
      {"aem error grows when voxel budget exceeds the symbol budget",
       criterion_aem_budget_knee},
      {"positive eigenvalues vanish and termination fires",
       criterion_termination},
      {"quadtree fixture sequence and 50-cloud round trips",
       criterion_octree},
      {"aircomp noise variance and zero-forcing exactness",
       criterion_channel_statistics},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    bool ok = false;
    std::string note;
    try {
      ok = criteria[i].fn();
    } catch (const std::exception& e) {
      note = std::string(" (exception: ") + e.what() + ")";
    }
    std::cout << (ok ? "PASS" : "FAIL") << " " << i + 1 << ". "
              << criteria[i].name << note << "\n";
    if (!ok) ++failures;
  }
  return failures;
}

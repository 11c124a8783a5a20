#include <doctest.h>

#include "flycom/gp.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

using namespace flycom;

namespace {

PointList random_points(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> uni(0.0, scale);
  PointList pts;
  for (int i = 0; i < n; ++i) pts.push_back(Vec3(uni(rng), uni(rng), uni(rng)));
  return pts;
}

}  // namespace

TEST_CASE("kernel_eval closed-form values") {
  GpModel se;  // defaults: SE, beta 0.03, theta 0.95
  const Vec3 a(0.1, 0.2, 0.3);
  CHECK(kernel_eval(se, a, a) == doctest::Approx(0.03).epsilon(1e-14));

  GpModel ou;
  ou.kernel_family = KernelFamily::OrnsteinUhlenbeck;
  ou.beta = 1.0;
  ou.theta = 0.5;
  const Vec3 b = a + Vec3(2.0, 0.0, 0.0);
  CHECK(kernel_eval(ou, a, b) == doctest::Approx(0.25).epsilon(1e-14));

  // Frozen oracle: 0.03 * exp(-1 / (2 * 0.9025)) at unit distance.
  const Vec3 c = a + Vec3(0.0, 1.0, 0.0);
  CHECK(kernel_eval(se, a, c) ==
        doctest::Approx(0.017239112092664224).epsilon(1e-12));
}

TEST_CASE("kernel_eval rejects non-finite coordinates") {
  GpModel m;
  const Vec3 a(0, 0, 0);
  const Vec3 bad(std::numeric_limits<double>::quiet_NaN(), 0, 0);
  CHECK_THROWS_AS(kernel_eval(m, a, bad), ConfigError);
}

TEST_CASE("kernel symmetry") {
  std::mt19937_64 rng(11);
  GpModel se;
  GpModel ou;
  ou.kernel_family = KernelFamily::OrnsteinUhlenbeck;
  const PointList pts = random_points(rng, 40);
  for (int i = 0; i + 1 < 40; i += 2) {
    CHECK(kernel_eval(se, pts[i], pts[i + 1]) ==
          doctest::Approx(kernel_eval(se, pts[i + 1], pts[i])).epsilon(1e-14));
    CHECK(kernel_eval(ou, pts[i], pts[i + 1]) ==
          doctest::Approx(kernel_eval(ou, pts[i + 1], pts[i])).epsilon(1e-14));
  }
}

TEST_CASE("assemble_cov matches elementwise oracle and is PSD") {
  std::mt19937_64 rng(12);
  GpModel m;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 49);
    const PointList pts = random_points(rng, n);
    const MatX Phi = assemble_cov(m, pts);
    CHECK(Phi.rows() == n);
    for (int i = 0; i < n; ++i) {
      CHECK(Phi(i, i) == doctest::Approx(m.beta).epsilon(1e-14));
      for (int j = 0; j < n; ++j)
        CHECK(Phi(i, j) ==
              doctest::Approx(kernel_eval(m, pts[i], pts[j])).epsilon(1e-13));
    }
    CHECK((Phi - Phi.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    Eigen::SelfAdjointEigenSolver<MatX> es(Phi);
    CHECK(es.eigenvalues().minCoeff() > -1e-9 * m.beta);
  }
}

TEST_CASE("assemble_cov corner cases") {
  GpModel m;
  CHECK_THROWS_AS(assemble_cov(m, {}), ConfigError);

  const MatX one = assemble_cov(m, {Vec3(0.5, 0.5, 0.5)});
  CHECK(one.rows() == 1);
  CHECK(one(0, 0) == doctest::Approx(m.beta));

  const Vec3 p(0.1, 0.1, 0.1);
  const MatX twin = assemble_cov(m, {p, p});
  CHECK(twin(0, 1) == doctest::Approx(m.beta));
  Eigen::FullPivLU<MatX> lu(twin);
  CHECK(lu.rank() == 1);
}

TEST_CASE("assemble_cross_cov oracle") {
  std::mt19937_64 rng(13);
  GpModel m;
  const PointList pts = random_points(rng, 4);
  const Vec3 q(0.3, 0.7, 0.2);
  const VecX v = assemble_cross_cov(m, pts, q);
  for (int i = 0; i < 4; ++i)
    CHECK(v[i] == doctest::Approx(kernel_eval(m, q, pts[i])).epsilon(1e-13));

  const VecX at0 = assemble_cross_cov(m, pts, pts[0]);
  CHECK(at0[0] == doctest::Approx(m.beta));

  const VecX far = assemble_cross_cov(m, pts, Vec3(100, 100, 100));
  CHECK(far.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("gp_predict_batch interpolates noiselessly") {
  std::mt19937_64 rng(14);
  GpModel m;
  const PointList train = random_points(rng, 8, 2.5);
  VecX g(8);
  std::normal_distribution<double> gauss(0.0, 0.1);
  for (int i = 0; i < 8; ++i) g[i] = gauss(rng);
  const GpPrediction pred = gp_predict_batch(m, train, g, train);
  for (int i = 0; i < 8; ++i) {
    CHECK(pred.means[i] == doctest::Approx(g[i]).epsilon(1e-8));
    CHECK(std::abs(pred.variances[i]) < 1e-8);
  }
}

TEST_CASE("gp_predict_batch prior and dense-solve oracle") {
  GpModel m;
  const PointList queries = {Vec3(0, 0, 0), Vec3(1, 1, 1)};
  const GpPrediction prior = gp_predict_batch(m, {}, VecX(), queries);
  CHECK(prior.means.cwiseAbs().maxCoeff() == 0.0);
  CHECK(prior.variances[0] == doctest::Approx(m.beta));

  std::mt19937_64 rng(15);
  const PointList train = random_points(rng, 6, 2.0);
  VecX g(6);
  for (int i = 0; i < 6; ++i) g[i] = std::sin(static_cast<double>(i));
  const GpPrediction pred = gp_predict_batch(m, train, g, queries);

  // Independent dense solve via LDLT on the raw system.
  const MatX Phi = assemble_cov(m, train) +
                   m.sigma_e * m.sigma_e * MatX::Identity(6, 6);
  const VecX w = Phi.ldlt().solve(g);
  for (int q = 0; q < 2; ++q) {
    const VecX phi = assemble_cross_cov(m, train, queries[q]);
    CHECK(pred.means[q] == doctest::Approx(phi.dot(w)).epsilon(1e-7));
    const double var = m.beta - phi.dot(VecX(Phi.ldlt().solve(phi)));
    CHECK(pred.variances[q] == doctest::Approx(var).epsilon(1e-6));
    CHECK(pred.variances[q] > -1e-9);
    CHECK(pred.variances[q] < m.beta + 1e-9);
  }
}

TEST_CASE("gp_predict_batch flags duplicate-point singularity") {
  GpModel m;
  const Vec3 p(0.2, 0.2, 0.2);
  // Duplicates at sigma_e = 0 leave the system singular even after the
  // jitter escalation unless the solver gives up; either a clean error or
  // a consistent interpolation is acceptable, but never garbage.
  try {
    const GpPrediction pred =
        gp_predict_batch(m, {p, p}, (VecX(2) << 1.0, 1.0).finished(), {p});
    CHECK(pred.means[0] == doctest::Approx(1.0).epsilon(1e-4));
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("duplicate") != std::string::npos);
  }
}

TEST_CASE("predictor optimality spot check") {
  // The conditional-mean weights beat random linear predictors in
  // empirical MSE on data drawn from the prior.
  std::mt19937_64 rng(16);
  GpModel m;
  const PointList train = random_points(rng, 6, 0.5);
  const Vec3 query(0.25, 0.25, 0.25);

  PointList all = train;
  all.push_back(query);
  const MatX Sigma = assemble_cov(m, all);
  const Eigen::LLT<MatX> llt(Sigma + 1e-12 * MatX::Identity(7, 7));
  const MatX L = llt.matrixL();

  const int draws = 4000;
  MatX G(7, draws);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int d = 0; d < draws; ++d) {
    VecX z(7);
    for (int i = 0; i < 7; ++i) z[i] = gauss(rng);
    G.col(d) = L * z;
  }

  const MatX Phi = Sigma.topLeftCorner(6, 6);
  const VecX phi = Sigma.topRightCorner(6, 1);
  const VecX w_opt = Phi.ldlt().solve(phi);
  const auto emp_mse = [&](const VecX& w) {
    double acc = 0.0;
    for (int d = 0; d < draws; ++d) {
      const double err = G(6, d) - w.dot(G.col(d).head(6));
      acc += err * err;
    }
    return acc / draws;
  };
  const double opt = emp_mse(w_opt);
  int beaten = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    VecX w(6);
    for (int i = 0; i < 6; ++i) w[i] = gauss(rng);
    if (emp_mse(w) < opt) ++beaten;
  }
  CHECK(beaten <= 50);  // 95% of trials must not beat the optimum
}

TEST_CASE("spd_solve recovers identity and escalates jitter") {
  GpModel m;
  std::mt19937_64 rng(17);
  const PointList pts = random_points(rng, 10, 3.0);
  const MatX Phi = assemble_cov(m, pts);
  const MatX X = spd_solve(Phi, MatX::Identity(10, 10), m.jitter());
  CHECK((Phi * X - MatX::Identity(10, 10)).cwiseAbs().maxCoeff() < 1e-6);

  // Rank-deficient input still factors once jitter escalates.
  const Vec3 p(0.1, 0.1, 0.1);
  const MatX twin = assemble_cov(m, {p, p});
  const MatX Y = spd_solve(twin, MatX::Identity(2, 2), m.jitter());
  CHECK(Y.allFinite());
}

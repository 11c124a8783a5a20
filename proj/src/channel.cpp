#include "flycom/channel.hpp"

#include <cmath>
#include <complex>
#include <random>
#include <sstream>

namespace flycom {

void AirCompConfig::validate() const {
  require(num_antennas >= 1, "AirCompConfig: num_antennas must be >= 1");
  require(num_sensors >= 1, "AirCompConfig: num_sensors must be >= 1");
  require(symbols_per_slot >= 1, "AirCompConfig: symbols_per_slot must be >= 1");
  require(power_budget > 0.0, "AirCompConfig: power_budget must be positive");
  require(noise_var >= 0.0, "AirCompConfig: noise_var must be nonnegative");
}

SlotChannel sample_channel(const AirCompConfig& cfg, uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  SlotChannel chan;
  chan.seed = seed;
  chan.H.resize(cfg.num_antennas, cfg.num_sensors);
  for (Eigen::Index j = 0; j < chan.H.cols(); ++j)
    for (Eigen::Index i = 0; i < chan.H.rows(); ++i) {
      const double re = gauss(rng), im = gauss(rng);
      chan.H(i, j) = std::complex<double>(re, im);
    }
  return chan;
}

CVecX dominant_eigvec(const CMatX& H, double tol) {
  if (H.norm() == 0.0)
    throw NumericalError("dominant_eigvec: all-zero channel matrix");
  const CMatX G = H * H.adjoint();
  // Deterministic start: normalized row sums, falling back to e1.
  CVecX v = G.rowwise().sum();
  if (v.norm() < 1e-30) {
    v = CVecX::Zero(G.rows());
    v[0] = 1.0;
  }
  v.normalize();
  for (int it = 0; it < 10000; ++it) {
    CVecX w = G * v;
    const double n = w.norm();
    if (n < 1e-300)
      throw NumericalError("dominant_eigvec: power iteration collapsed");
    w /= n;
    // Align phase before the convergence check.
    std::complex<double> phase = v.dot(w);
    if (std::abs(phase) > 0.0) w *= std::conj(phase) / std::abs(phase);
    const double delta = (w - v).norm();
    v = w;
    if (delta < tol) break;
  }
  // Phase convention: largest-magnitude entry real positive; ties go to
  // the first index.
  Eigen::Index imax = 0;
  double best = -1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (std::abs(v[i]) > best + 1e-15) {
      best = std::abs(v[i]);
      imax = i;
    }
  if (best > 0.0) v *= std::conj(v[imax]) / std::abs(v[imax]);
  return v;
}

ReceiverDesign centroid_receiver(const CMatX& H, const VecX& per_sensor_power,
                                 const AirCompConfig& cfg,
                                 Eigen::Index slot_samples) {
  cfg.validate();
  require(per_sensor_power.size() == H.cols(),
          "centroid_receiver: per_sensor_power size must match sensor count");
  require((per_sensor_power.array() >= 0.0).all(),
          "centroid_receiver: negative per-sensor power");
  require(slot_samples >= 1, "centroid_receiver: slot_samples must be >= 1");

  const CVecX v = dominant_eigvec(H);
  ReceiverDesign out;
  Eigen::Index kstar;
  const double max_power = per_sensor_power.maxCoeff(&kstar);
  out.binding_sensor = static_cast<int>(kstar);
  const double np = static_cast<double>(slot_samples) * cfg.power_budget;
  out.b_star = std::sqrt(max_power / np) * v;
  out.noise_power =
      cfg.noise_var > 0.0
          ? max_power / (2.0 * static_cast<double>(slot_samples) * cfg.snr())
          : 0.0;
  return out;
}

AggregatedObservation aircomp_aggregate(const std::vector<VecX>& locals,
                                        const SlotChannel& chan,
                                        const AirCompConfig& cfg,
                                        uint64_t noise_seed,
                                        const VecX& per_sensor_symbol_var) {
  cfg.validate();
  require(!locals.empty(), "aircomp_aggregate: no local observations");
  require(chan.b.size() == chan.H.rows(),
          "aircomp_aggregate: receiver not set on the slot channel");
  const Eigen::Index len = locals.front().size();
  for (const VecX& f : locals)
    if (f.size() != len)
      throw ConfigError("aircomp_aggregate: local observation length mismatch");
  require(len <= cfg.symbols_per_slot,
          "aircomp_aggregate: observation longer than symbols_per_slot");

  if (per_sensor_symbol_var.size() > 0) {
    require(per_sensor_symbol_var.size() ==
                static_cast<Eigen::Index>(locals.size()),
            "aircomp_aggregate: per_sensor_symbol_var size mismatch");
    require(per_sensor_symbol_var.size() == chan.H.cols(),
            "aircomp_aggregate: sensor count must match channel columns");
    for (Eigen::Index k = 0; k < per_sensor_symbol_var.size(); ++k) {
      const double gain2 = std::norm(chan.b.dot(chan.H.col(k)));
      const double tx_power = per_sensor_symbol_var[k] / gain2;
      if (tx_power > cfg.power_budget * (1.0 + 1e-9)) {
        std::ostringstream msg;
        msg << "aircomp_aggregate: sensor " << k
            << " violates the power budget (rho^2 nu^2 = " << tx_power
            << " > P = " << cfg.power_budget << ")";
        throw ConfigError(msg.str());
      }
    }
  }

  AggregatedObservation out;
  out.values = VecX::Zero(len);
  for (const VecX& f : locals) out.values += f;
  out.noise_power = 0.5 * cfg.noise_var * chan.b.squaredNorm();
  if (out.noise_power > 0.0) {
    std::mt19937_64 rng(noise_seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(out.noise_power));
    for (Eigen::Index i = 0; i < len; ++i) out.values[i] += gauss(rng);
  }
  return out;
}

}  // namespace flycom

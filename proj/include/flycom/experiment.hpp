#pragma once

#include "flycom/fusion.hpp"
#include "flycom/sensing.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace flycom {

enum class DesignScheme {
  Case1,        // ideal one-shot fusion (no channel penalty in the design)
  Case2,        // one-shot AirComp-aware design
  Case3,        // streaming design with temporal corrections
  PcaBaseline,
  AemBaseline,
  Noncausal,    // Case2 design per slot, history still accumulated
};

std::string to_string(DesignScheme d);
DesignScheme design_from_string(const std::string& s);

struct ExperimentConfig {
  SceneSpec scene;
  AirCompConfig channel;
  DesignScheme design = DesignScheme::Case3;
  double snr_db = 5.0;
  int slots = 20;
  int octree_depth = 4;
  int num_points = 600;
  int num_blobs = 4;
  double alpha = 0.0;       // 0 = default 2K
  double kappa_floor = 1e-9;
  bool compute_bounds = true;
  int termination_patience = 2;
  std::vector<uint64_t> seeds{1};
  std::string output_path;

  void validate() const;
  double gamma() const;  // linear transmit SNR from snr_db

  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_canonical_json() const;
  /// FNV-1a over the canonical dump; seeds and output_path excluded so
  /// replicate runs of one physical setup share a hash.
  uint64_t config_hash() const;
};

struct TraceRow {
  int slot = 0;
  Eigen::Index symbols_used = 0;  // cumulative
  Eigen::Index retained_dim = 0;
  int positive_eigs = 0;
  double mse = 0.0;
  double nmse = 0.0;
  double bound_lo = 0.0;
  double bound_hi = 0.0;
  double noise_power = 0.0;
  bool terminated = false;
};

struct RunRecord {
  std::vector<TraceRow> rows;
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  std::string version;
  int termination_slot = -1;  // first slot at which the rule fired

  double final_nmse() const { return rows.empty() ? 1.0 : rows.back().nmse; }
};

RunRecord run_experiment(const ExperimentConfig& cfg, uint64_t seed);

void write_trace_csv(std::ostream& out, const ExperimentConfig& cfg,
                     const RunRecord& rec, bool header = true);

/// Runs every config x seed, merging traces with config columns. Partial
/// failures are recorded as error rows and the sweep continues.
void sweep(const std::vector<ExperimentConfig>& cfgs, std::ostream& out);

/// Randomized matrix property suites (trace monotonicity, sandwich bound,
/// trace identity, block-inverse recursion). Returns the failure count.
int run_selftest(std::ostream& out);

}  // namespace flycom

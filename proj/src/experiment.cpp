#include "flycom/experiment.hpp"

#include "flycom/octree.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace flycom {

namespace {

constexpr const char* kVersion = "flycom 1.0.0";

using json = nlohmann::json;

}  // namespace

std::string to_string(DesignScheme d) {
  switch (d) {
    case DesignScheme::Case1: return "case1";
    case DesignScheme::Case2: return "case2";
    case DesignScheme::Case3: return "case3";
    case DesignScheme::PcaBaseline: return "pca";
    case DesignScheme::AemBaseline: return "aem";
    case DesignScheme::Noncausal: return "noncausal";
  }
  throw ConfigError("to_string: unknown design scheme");
}

DesignScheme design_from_string(const std::string& s) {
  if (s == "case1") return DesignScheme::Case1;
  if (s == "case2") return DesignScheme::Case2;
  if (s == "case3") return DesignScheme::Case3;
  if (s == "pca") return DesignScheme::PcaBaseline;
  if (s == "aem") return DesignScheme::AemBaseline;
  if (s == "noncausal") return DesignScheme::Noncausal;
  throw ConfigError("unknown design scheme '" + s +
                    "' (expected case1|case2|case3|pca|aem|noncausal)");
}

void ExperimentConfig::validate() const {
  scene.validate();
  channel.validate();
  require(scene.num_sensors == channel.num_sensors,
          "config: scene and channel sensor counts differ");
  require(slots >= 1, "config: slots must be >= 1");
  require(octree_depth >= 1 && octree_depth <= 12,
          "config: octree_depth out of range [1, 12]");
  require(num_points >= 1, "config: num_points must be >= 1");
  require(num_blobs >= 1, "config: num_blobs must be >= 1");
  require(alpha >= 0.0, "config: alpha must be nonnegative");
  require(kappa_floor > 0.0, "config: kappa_floor must be positive");
  require(termination_patience >= 1,
          "config: termination_patience must be >= 1");
  require(!seeds.empty(), "config: seeds must be nonempty");
  require(std::isfinite(snr_db), "config: snr_db must be finite");
}

double ExperimentConfig::gamma() const { return std::pow(10.0, snr_db / 10.0); }

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");

  static const std::vector<std::string> known = {
      "kernel",        "beta",        "theta",
      "sigma_e",       "num_sensors", "per_slot_budget",
      "overlap_deg",   "max_range",   "num_antennas",
      "symbols_per_slot", "power_budget", "design",
      "snr_db",        "slots",       "octree_depth",
      "num_points",    "num_blobs",   "alpha",
      "kappa_floor",   "compute_bounds", "termination_patience",
      "seeds",         "output_path"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ConfigError("config: unknown key '" + it.key() + "'");
  }

  ExperimentConfig cfg;
  try {
    if (j.contains("kernel")) {
      const std::string k = j["kernel"].get<std::string>();
      if (k == "se")
        cfg.scene.ground_truth.kernel_family = KernelFamily::SquaredExponential;
      else if (k == "ou")
        cfg.scene.ground_truth.kernel_family = KernelFamily::OrnsteinUhlenbeck;
      else
        throw ConfigError("config: kernel must be 'se' or 'ou'");
    }
    if (j.contains("beta")) cfg.scene.ground_truth.beta = j["beta"].get<double>();
    if (j.contains("theta"))
      cfg.scene.ground_truth.theta = j["theta"].get<double>();
    if (j.contains("sigma_e"))
      cfg.scene.ground_truth.sigma_e = j["sigma_e"].get<double>();
    if (j.contains("num_sensors")) {
      cfg.scene.num_sensors = j["num_sensors"].get<int>();
      cfg.channel.num_sensors = cfg.scene.num_sensors;
    }
    if (j.contains("per_slot_budget"))
      cfg.scene.per_slot_budget = j["per_slot_budget"].get<int>();
    if (j.contains("overlap_deg"))
      cfg.scene.view.overlap_deg = j["overlap_deg"].get<double>();
    if (j.contains("max_range"))
      cfg.scene.view.max_range = j["max_range"].get<double>();
    if (j.contains("num_antennas"))
      cfg.channel.num_antennas = j["num_antennas"].get<int>();
    if (j.contains("symbols_per_slot"))
      cfg.channel.symbols_per_slot = j["symbols_per_slot"].get<int>();
    if (j.contains("power_budget"))
      cfg.channel.power_budget = j["power_budget"].get<double>();
    if (j.contains("design"))
      cfg.design = design_from_string(j["design"].get<std::string>());
    if (j.contains("snr_db")) cfg.snr_db = j["snr_db"].get<double>();
    if (j.contains("slots")) cfg.slots = j["slots"].get<int>();
    if (j.contains("octree_depth"))
      cfg.octree_depth = j["octree_depth"].get<int>();
    if (j.contains("num_points")) cfg.num_points = j["num_points"].get<int>();
    if (j.contains("num_blobs")) cfg.num_blobs = j["num_blobs"].get<int>();
    if (j.contains("alpha")) cfg.alpha = j["alpha"].get<double>();
    if (j.contains("kappa_floor"))
      cfg.kappa_floor = j["kappa_floor"].get<double>();
    if (j.contains("compute_bounds"))
      cfg.compute_bounds = j["compute_bounds"].get<bool>();
    if (j.contains("termination_patience"))
      cfg.termination_patience = j["termination_patience"].get<int>();
    if (j.contains("seeds"))
      cfg.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (j.contains("output_path"))
      cfg.output_path = j["output_path"].get<std::string>();
  } catch (const json::type_error& e) {
    throw ConfigError(std::string("config: wrong value type: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ExperimentConfig::to_canonical_json() const {
  json j;
  j["kernel"] = scene.ground_truth.kernel_family ==
                        KernelFamily::SquaredExponential
                    ? "se"
                    : "ou";
  j["beta"] = scene.ground_truth.beta;
  j["theta"] = scene.ground_truth.theta;
  j["sigma_e"] = scene.ground_truth.sigma_e;
  j["num_sensors"] = scene.num_sensors;
  j["per_slot_budget"] = scene.per_slot_budget;
  j["overlap_deg"] = scene.view.overlap_deg;
  j["max_range"] = std::isfinite(scene.view.max_range)
                       ? json(scene.view.max_range)
                       : json("inf");
  j["num_antennas"] = channel.num_antennas;
  j["symbols_per_slot"] = channel.symbols_per_slot;
  j["power_budget"] = channel.power_budget;
  j["design"] = to_string(design);
  j["snr_db"] = snr_db;
  j["slots"] = slots;
  j["octree_depth"] = octree_depth;
  j["num_points"] = num_points;
  j["num_blobs"] = num_blobs;
  j["alpha"] = alpha;
  j["kappa_floor"] = kappa_floor;
  j["compute_bounds"] = compute_bounds;
  j["termination_patience"] = termination_patience;
  return j.dump();
}

uint64_t ExperimentConfig::config_hash() const {
  const std::string dump = to_canonical_json();
  uint64_t h = 14695981039346656037ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace {

struct SlotContext {
  PointList positions;
  std::vector<Eigen::Index> block_sizes;
  std::vector<VecX> values;  // per-sensor attribute batches
  Eigen::Index total = 0;
  Eigen::Index max_batch = 0;
};

SlotContext gather_slot(const std::vector<SensorCloud>& sensors, int t) {
  SlotContext ctx;
  for (const SensorCloud& s : sensors) {
    Eigen::Index n = 0;
    const bool has = t < static_cast<int>(s.slot_batches.size());
    if (has) n = static_cast<Eigen::Index>(s.slot_batches[t].size());
    ctx.block_sizes.push_back(n);
    VecX g(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index local = s.slot_batches[t][static_cast<std::size_t>(i)];
      ctx.positions.push_back(s.positions[static_cast<std::size_t>(local)]);
      g[i] = s.attributes[local];
    }
    ctx.values.push_back(std::move(g));
    ctx.total += n;
    ctx.max_batch = std::max(ctx.max_batch, n);
  }
  return ctx;
}

std::vector<MatX> diagonal_blocks(const MatX& Phi,
                                  const std::vector<Eigen::Index>& sizes) {
  std::vector<MatX> blocks;
  Eigen::Index row = 0;
  for (Eigen::Index n : sizes) {
    blocks.push_back(Phi.block(row, row, n, n));
    row += n;
  }
  return blocks;
}

MatX history_cross(const FusionState& state, const GpModel& model,
                   const PointList& slot_positions) {
  MatX P2(state.dim(), static_cast<Eigen::Index>(slot_positions.size()));
  Eigen::Index row = 0;
  for (std::size_t l = 0; l < state.slot_positions.size(); ++l) {
    const MatX cross = assemble_cross_cov_block(model, state.slot_positions[l],
                                                slot_positions);
    P2.middleRows(row, state.W_hist[l].cols()) =
        state.W_hist[l].transpose() * cross;
    row += state.W_hist[l].cols();
  }
  return P2;
}

double retained_eig_sum(const ObservationMatrix& W) {
  return W.eigenvalues.size() == 0 ? 0.0 : W.eigenvalues.sum();
}

}  // namespace

RunRecord run_experiment(const ExperimentConfig& cfg, uint64_t seed) {
  cfg.validate();
  RunRecord rec;
  rec.config_hash = cfg.config_hash();
  rec.seed = seed;
  rec.version = kVersion;

  const GpModel& model = cfg.scene.ground_truth;
  const double gamma = cfg.gamma();
  AirCompConfig cc = cfg.channel;
  cc.noise_var = cc.power_budget / gamma;
  const int K = cc.num_sensors;
  const double alpha_dep = cfg.alpha > 0.0 ? cfg.alpha : 2.0 * K;
  const double alpha_up = 2.0 * K;

  // Scene: blob cloud, occupancy coding, GP draw at the voxel centers.
  const PointList points = make_blob_cloud(seed, cfg.num_points, cfg.num_blobs);
  const Aabb root = Aabb::bounding_cube(points);
  const OccupancyCode code = build_occupancy(points, root, cfg.octree_depth);
  const VoxelGrid grid = decode_occupancy(code, root);
  SceneSpec spec = cfg.scene;
  spec.seed = seed;
  const VecX attrs = sample_scene(spec, grid.occupied_centers);
  std::vector<SensorCloud> sensors = partition_views(grid, attrs, spec);
  assign_slot_batches(sensors, spec.per_slot_budget);

  FusionState state = make_fusion_state(model, grid.occupied_centers);
  TerminationTracker tracker;
  tracker.patience = cfg.termination_patience;
  std::vector<double> lam_up, lam_lo;
  Eigen::Index symbols = 0;

  // Per-slot derived streams keep channel and noise draws decoupled.
  std::mt19937_64 seeder(seed ^ 0xa24baed4963ee407ull);

  for (int t = 0; t < cfg.slots; ++t) {
    const uint64_t chan_seed = seeder();
    const uint64_t noise_seed = seeder();
    const SlotContext ctx = gather_slot(sensors, t);

    ObservationMatrix W;
    AggregatedObservation obs;
    double up_t = 0.0, lo_t = 0.0;

    if (ctx.total > 0) {
      const Eigen::Index I_t =
          std::min<Eigen::Index>(cc.symbols_per_slot, ctx.total);
      const MatX Phi_tt = assemble_cov(model, ctx.positions);
      const std::vector<MatX> Phi_k = diagonal_blocks(Phi_tt, ctx.block_sizes);
      const MatX Phi_Ct =
          assemble_cross_cov_block(model, state.query_set, ctx.positions);
      const MatX Q_tt = Phi_Ct.transpose() * Phi_Ct;

      const SlotChannel raw_chan = sample_channel(cc, chan_seed);
      const CVecX v = dominant_eigvec(raw_chan.H);
      const Eigen::Index N_slot = ctx.max_batch;

      DesignInputs in;
      in.Phi_tt = Phi_tt;
      in.Q_tt = Q_tt;
      in.Psi_t = assemble_psi(Phi_k, raw_chan.H, v, N_slot);
      in.P2 = history_cross(state, model, ctx.positions);
      in.Q2 = state.U.transpose() * Phi_Ct;
      in.gamma = gamma;
      in.alpha = alpha_dep;
      in.max_cols = I_t;
      in.block_sizes = ctx.block_sizes;

      switch (cfg.design) {
        case DesignScheme::Case1:
          W = design_case1(in.Phi_tt, in.Q_tt, I_t, in.block_sizes);
          break;
        case DesignScheme::Case2:
        case DesignScheme::Noncausal:
          W = design_case2(in);
          break;
        case DesignScheme::Case3:
          W = design_case3(state, in);
          break;
        case DesignScheme::PcaBaseline:
          W = baseline_pca(Phi_k, I_t);
          break;
        case DesignScheme::AemBaseline:
          W = baseline_aem(Phi_k, I_t);
          break;
      }

      if (cfg.compute_bounds) {
        DesignInputs in_up = in;
        in_up.alpha = alpha_up;
        const ObservationMatrix W_up =
            (cfg.design == DesignScheme::Case3 && alpha_dep == alpha_up)
                ? W
                : design_case3(state, in_up);
        up_t = retained_eig_sum(W_up);

        std::vector<MatX> psi_blocks;
        Eigen::Index row = 0;
        for (const Eigen::Index n : ctx.block_sizes) {
          if (n > 0) psi_blocks.push_back(in.Psi_t.block(row, row, n, n));
          row += n;
        }
        const KappaResult kr = lemma3_kappa(psi_blocks);
        const double kappa = kr.degenerate ? cfg.kappa_floor : kr.kappa;
        DesignInputs in_lo = in;
        in_lo.alpha = 2.0 * kappa;
        lo_t = retained_eig_sum(design_case3(state, in_lo));
      }

      if (!W.empty()) {
        const VecX psi_tr =
            per_sensor_psi_trace(W.blocks, Phi_k, raw_chan.H, v);
        const ReceiverDesign recv = centroid_receiver(raw_chan.H, psi_tr, cc,
                                                      N_slot);
        SlotChannel chan = raw_chan;
        chan.b = recv.b_star;

        std::vector<VecX> locals;
        VecX nu2(K);
        for (int k = 0; k < K; ++k) {
          const MatX& Wk = W.blocks[static_cast<std::size_t>(k)];
          const VecX& g = ctx.values[static_cast<std::size_t>(k)];
          locals.push_back(Wk.rows() > 0 ? VecX(Wk.transpose() * g)
                                         : VecX(VecX::Zero(W.cols())));
          const MatX& Pk = Phi_k[static_cast<std::size_t>(k)];
          nu2[k] = Wk.rows() > 0
                       ? (Wk.transpose() * Pk * Wk).trace() /
                             static_cast<double>(N_slot)
                       : 0.0;
        }
        obs = aircomp_aggregate(locals, chan, cc, noise_seed, nu2);
        symbols += W.cols();
      }
    }

    tracker.observe(W);
    state_update(state, obs, W, ctx.positions);
    lam_up.push_back(up_t);
    lam_lo.push_back(lo_t);

    const PredictionReport rep = predict_cached(state);
    const auto [blo, bhi] = error_bounds(state, lam_up, lam_lo);

    TraceRow row;
    row.slot = t;
    row.symbols_used = symbols;
    row.retained_dim = W.cols();
    row.positive_eigs = static_cast<int>(W.eigenvalues.size());
    row.mse = rep.mse;
    row.nmse = model.beta > 0.0 ? rep.mse / model.beta : rep.mse;
    row.bound_lo = cfg.compute_bounds ? blo : 0.0;
    row.bound_hi = cfg.compute_bounds ? bhi : model.beta;
    row.noise_power = obs.noise_power;
    row.terminated = tracker.terminated;
    rec.rows.push_back(row);

    if (tracker.terminated) {
      if (rec.termination_slot < 0) rec.termination_slot = t;
      break;
    }
  }
  return rec;
}

namespace {

void csv_header(std::ostream& out) {
  out << "design,snr_db,config_hash,seed,slot,symbols,retained_dim,"
         "positive_eigs,mse,nmse,bound_lo,bound_hi,noise_power,terminated\n";
}

void csv_rows(std::ostream& out, const ExperimentConfig& cfg,
              const RunRecord& rec) {
  out << std::setprecision(12);
  for (const TraceRow& r : rec.rows) {
    out << to_string(cfg.design) << ',' << cfg.snr_db << ','
        << rec.config_hash << ',' << rec.seed << ',' << r.slot << ','
        << r.symbols_used << ',' << r.retained_dim << ',' << r.positive_eigs
        << ',' << r.mse << ',' << r.nmse << ',' << r.bound_lo << ','
        << r.bound_hi << ',' << r.noise_power << ',' << (r.terminated ? 1 : 0)
        << '\n';
  }
}

}  // namespace

void write_trace_csv(std::ostream& out, const ExperimentConfig& cfg,
                     const RunRecord& rec, bool header) {
  if (header) csv_header(out);
  csv_rows(out, cfg, rec);
}

void sweep(const std::vector<ExperimentConfig>& cfgs, std::ostream& out) {
  csv_header(out);
  for (const ExperimentConfig& cfg : cfgs) {
    for (uint64_t seed : cfg.seeds) {
      try {
        const RunRecord rec = run_experiment(cfg, seed);
        csv_rows(out, cfg, rec);
      } catch (const std::exception& e) {
        out << "# error design=" << to_string(cfg.design)
            << " config_hash=" << cfg.config_hash() << " seed=" << seed
            << " what=" << e.what() << '\n';
      }
    }
  }
}

namespace {

bool check(std::ostream& out, const char* name, bool ok) {
  out << (ok ? "pass" : "FAIL") << "  " << name << '\n';
  return ok;
}

}  // namespace

int run_selftest(std::ostream& out) {
  int failures = 0;
  std::mt19937_64 rng(20260824);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const auto rand_mat = [&](Eigen::Index n) {
    MatX A(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i) A(i, j) = gauss(rng);
    return A;
  };

  {
    // Generalized eigenpairs satisfy the pencil equation.
    const Eigen::Index n = 12;
    const MatX S = rand_mat(n);
    const MatX Qm = S * S.transpose();
    const MatX T = rand_mat(n);
    const MatX Pm =
        T * T.transpose() + 0.1 * MatX::Identity(n, n);
    const GedResult ged = generalized_eig(Qm, Pm);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const VecX r = Qm * ged.eigvecs.col(i) -
                     ged.eigvals[i] * (Pm * ged.eigvecs.col(i));
      worst = std::max(worst, r.norm() / std::max(1.0, ged.eigvals[i]));
    }
    if (!check(out, "generalized eigenpair residual", worst < 1e-8)) ++failures;
  }

  {
    // Block-extended inverse agrees with a direct inverse.
    GpModel model;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    FusionState state = make_fusion_state(model, {});
    for (int t = 0; t < 3; ++t) {
      PointList pts;
      for (int i = 0; i < 6; ++i)
        pts.push_back(Vec3(uni(rng), uni(rng), uni(rng)));
      ObservationMatrix W;
      W.stacked = rand_mat(6).leftCols(3);
      W.blocks = {W.stacked};
      AggregatedObservation obs;
      obs.values = VecX::Zero(3);
      obs.noise_power = 1e-4;
      state_update(state, obs, W, pts);
    }
    const MatX direct =
        spd_solve(state.R, MatX::Identity(state.R.rows(), state.R.cols()),
                  model.jitter());
    const double err = (state.R_inv - direct).norm() / direct.norm();
    if (!check(out, "block inverse recursion", err < 1e-6)) ++failures;
  }

  {
    // Retained eigenvalue sums grow with alpha (weaker channel penalty).
    GpModel model;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    PointList pts, queries;
    for (int i = 0; i < 10; ++i)
      pts.push_back(Vec3(uni(rng), uni(rng), uni(rng)));
    for (int i = 0; i < 25; ++i)
      queries.push_back(Vec3(uni(rng), uni(rng), uni(rng)));
    const MatX Phi = assemble_cov(model, pts);
    const MatX cross = assemble_cross_cov_block(model, queries, pts);
    FusionState state = make_fusion_state(model, queries);
    DesignInputs in;
    in.Phi_tt = Phi;
    in.Q_tt = cross.transpose() * cross;
    in.Psi_t = Phi / 4.0;
    in.gamma = 2.0;
    in.max_cols = 6;
    bool monotone = true;
    double prev = -1.0;
    for (double a : {0.05, 0.5, 4.0, 32.0}) {
      in.alpha = a;
      const double s = design_case3(state, in).eigenvalues.sum();
      if (s < prev - 1e-9) monotone = false;
      prev = s;
    }
    if (!check(out, "eigenvalue sum monotone in alpha", monotone)) ++failures;
  }

  {
    // Posterior mse equals the trace identity over the frozen queries.
    ExperimentConfig cfg;
    cfg.slots = 4;
    cfg.num_points = 200;
    cfg.octree_depth = 3;
    cfg.scene.per_slot_budget = 12;
    cfg.channel.symbols_per_slot = 6;
    cfg.compute_bounds = false;
    const RunRecord rec = run_experiment(cfg, 7);
    const bool shrinking =
        !rec.rows.empty() &&
        rec.rows.back().mse <= cfg.scene.ground_truth.beta + 1e-12;
    if (!check(out, "experiment mse stays below the prior", shrinking))
      ++failures;
  }

  out << (failures == 0 ? "selftest ok\n" : "selftest FAILED\n");
  return failures;
}

}  // namespace flycom

#include "flycom/sensing.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace flycom {

void SceneSpec::validate() const {
  ground_truth.validate();
  require(num_sensors >= 1, "SceneSpec: num_sensors must be >= 1");
  require(per_slot_budget >= 1, "SceneSpec: per_slot_budget must be >= 1");
}

VecX sample_scene(const SceneSpec& spec, const PointList& positions) {
  spec.validate();
  for (const Vec3& p : positions)
    require(p.allFinite(), "sample_scene: non-finite position");
  const Eigen::Index n = static_cast<Eigen::Index>(positions.size());
  if (n == 0) return VecX();

  const MatX cov = assemble_cov(spec.ground_truth, positions);
  const Eigen::LLT<MatX> llt = spd_factor(cov, spec.ground_truth.jitter());

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  VecX z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = gauss(rng);
  VecX f = llt.matrixL() * z;
  if (spec.ground_truth.sigma_e > 0.0)
    for (Eigen::Index i = 0; i < n; ++i)
      f[i] += spec.ground_truth.sigma_e * gauss(rng);
  return f;
}

std::vector<SensorCloud> partition_views(const VoxelGrid& grid,
                                         const VecX& attributes,
                                         const SceneSpec& spec) {
  spec.validate();
  require(attributes.size() == grid.size(),
          "partition_views: attribute count must match grid size");
  const int K = spec.num_sensors;

  Vec3 centroid = Vec3::Zero();
  for (const Vec3& c : grid.occupied_centers) centroid += c;
  if (grid.size() > 0) centroid /= static_cast<double>(grid.size());

  const double two_pi = 2.0 * std::numbers::pi;
  const double half_sector = std::numbers::pi / K;
  const double overlap = spec.view.overlap_deg * std::numbers::pi / 180.0;

  std::vector<SensorCloud> sensors(K);
  for (int k = 0; k < K; ++k) sensors[k].sensor_id = k;

  std::vector<Eigen::Index> orphans;
  for (Eigen::Index v = 0; v < grid.size(); ++v) {
    const Vec3 d = grid.occupied_centers[v] - centroid;
    const double az = std::atan2(d.y(), d.x());
    const double range = d.norm();
    bool seen = false;
    for (int k = 0; k < K; ++k) {
      bool visible;
      if (K == 1) {
        visible = true;
      } else {
        const double center = two_pi * k / K;
        double delta = std::fmod(std::abs(az - center), two_pi);
        delta = std::min(delta, two_pi - delta);
        visible = delta <= half_sector + overlap;
      }
      visible = visible && range <= spec.view.max_range;
      if (visible) {
        sensors[k].voxel_indices.push_back(v);
        seen = true;
      }
    }
    if (!seen) orphans.push_back(v);
  }
  if (!orphans.empty()) {
    std::ostringstream msg;
    msg << "partition_views: " << orphans.size()
        << " voxel(s) visible to no sensor (first indices:";
    for (std::size_t i = 0; i < std::min<std::size_t>(orphans.size(), 8); ++i)
      msg << ' ' << orphans[i];
    msg << "); widen the view geometry";
    throw ConfigError(msg.str());
  }

  for (SensorCloud& s : sensors) {
    s.positions.reserve(s.voxel_indices.size());
    s.attributes.resize(static_cast<Eigen::Index>(s.voxel_indices.size()));
    Eigen::Index i = 0;
    for (Eigen::Index v : s.voxel_indices) {
      s.positions.push_back(grid.occupied_centers[v]);
      s.attributes[i++] = attributes[v];
    }
  }
  assign_slot_batches(sensors, spec.per_slot_budget);
  return sensors;
}

void assign_slot_batches(std::vector<SensorCloud>& sensors, int budget) {
  require(budget >= 1, "assign_slot_batches: budget must be >= 1");
  for (SensorCloud& s : sensors) {
    s.slot_batches.clear();
    const Eigen::Index n = static_cast<Eigen::Index>(s.voxel_indices.size());
    for (Eigen::Index start = 0; start < n; start += budget) {
      std::vector<Eigen::Index> batch;
      for (Eigen::Index i = start; i < std::min(n, start + budget); ++i)
        batch.push_back(i);
      s.slot_batches.push_back(std::move(batch));
    }
  }
}

Normalization normalize_attributes(const VecX& attributes) {
  require(attributes.size() >= 2, "normalize_attributes: need >= 2 values");
  Normalization out;
  out.mean = attributes.mean();
  const VecX centered = attributes.array() - out.mean;
  const double var = centered.squaredNorm() / attributes.size();
  if (var <= 0.0)
    throw ConfigError("normalize_attributes: zero variance input");
  out.std = std::sqrt(var);
  out.values = centered / out.std;
  return out;
}

double rgb_to_grayscale(double r, double g, double b) {
  for (double c : {r, g, b})
    require(c >= 0.0 && c <= 255.0,
            "rgb_to_grayscale: channel outside [0, 255]");
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
};

std::size_t type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "int32" || t == "uint32" ||
      t == "float" || t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  throw ConfigError("ingest_ply: unsupported property type " + t);
}

double read_scalar(const char* p, const std::string& t) {
  if (t == "float" || t == "float32") {
    float v;
    std::memcpy(&v, p, 4);
    return v;
  }
  if (t == "double" || t == "float64") {
    double v;
    std::memcpy(&v, p, 8);
    return v;
  }
  if (t == "uchar" || t == "uint8") return static_cast<unsigned char>(*p);
  if (t == "char" || t == "int8") return static_cast<signed char>(*p);
  if (t == "ushort" || t == "uint16") {
    uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
  }
  if (t == "short" || t == "int16") {
    int16_t v;
    std::memcpy(&v, p, 2);
    return v;
  }
  if (t == "uint" || t == "uint32") {
    uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
  }
  if (t == "int" || t == "int32") {
    int32_t v;
    std::memcpy(&v, p, 4);
    return v;
  }
  throw ConfigError("ingest_ply: unsupported property type " + t);
}

}  // namespace

PlyData ingest_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("ingest_ply: cannot open " + path);

  std::string line;
  std::getline(in, line);
  if (line.size() && line.back() == '\r') line.pop_back();
  require(line == "ply", "ingest_ply: missing 'ply' magic");

  std::string format;
  std::size_t vertex_count = 0;
  std::vector<PlyProperty> props;
  bool in_vertex_element = false;
  while (std::getline(in, line)) {
    if (line.size() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment") continue;
    if (tok == "format") {
      ls >> format;
    } else if (tok == "element") {
      std::string name;
      std::size_t count;
      ls >> name >> count;
      in_vertex_element = (name == "vertex");
      if (in_vertex_element) vertex_count = count;
    } else if (tok == "property" && in_vertex_element) {
      PlyProperty p;
      ls >> p.type >> p.name;
      require(p.type != "list", "ingest_ply: list properties unsupported");
      props.push_back(p);
    } else if (tok == "end_header") {
      break;
    }
  }
  require(format == "ascii" || format == "binary_little_endian",
          "ingest_ply: format must be ascii or binary_little_endian");

  auto find_prop = [&](const std::string& name) {
    for (std::size_t i = 0; i < props.size(); ++i)
      if (props[i].name == name) return i;
    throw ConfigError("ingest_ply: missing required property '" + name + "'");
  };
  const std::size_t ix = find_prop("x"), iy = find_prop("y"),
                    iz = find_prop("z"), ir = find_prop("red"),
                    ig = find_prop("green"), ib = find_prop("blue");

  PlyData out;
  out.positions.reserve(vertex_count);
  out.rgb.reserve(vertex_count);

  if (format == "ascii") {
    for (std::size_t v = 0; v < vertex_count; ++v) {
      std::vector<double> row(props.size());
      for (std::size_t i = 0; i < props.size(); ++i)
        if (!(in >> row[i]))
          throw ConfigError("ingest_ply: truncated ASCII payload at vertex " +
                            std::to_string(v));
      out.positions.push_back(Vec3(row[ix], row[iy], row[iz]));
      out.rgb.push_back({row[ir], row[ig], row[ib]});
    }
  } else {
    std::size_t stride = 0;
    std::vector<std::size_t> offset(props.size());
    for (std::size_t i = 0; i < props.size(); ++i) {
      offset[i] = stride;
      stride += type_size(props[i].type);
    }
    std::vector<char> buf(stride);
    for (std::size_t v = 0; v < vertex_count; ++v) {
      in.read(buf.data(), static_cast<std::streamsize>(stride));
      if (static_cast<std::size_t>(in.gcount()) != stride) {
        std::ostringstream msg;
        msg << "ingest_ply: truncated binary payload at vertex " << v
            << " (byte offset " << in.tellg() << ")";
        throw ConfigError(msg.str());
      }
      auto get = [&](std::size_t i) {
        return read_scalar(buf.data() + offset[i], props[i].type);
      };
      out.positions.push_back(Vec3(get(ix), get(iy), get(iz)));
      out.rgb.push_back({get(ir), get(ig), get(ib)});
    }
  }
  return out;
}

PointList make_blob_cloud(uint64_t seed, int num_points, int num_blobs) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> uni(0.2, 0.8);
  std::normal_distribution<double> gauss(0.0, 0.08);
  std::vector<Vec3> centers;
  for (int b = 0; b < num_blobs; ++b)
    centers.push_back(Vec3(uni(rng), uni(rng), uni(rng)));
  PointList pts;
  pts.reserve(num_points);
  for (int i = 0; i < num_points; ++i) {
    const Vec3& c = centers[static_cast<std::size_t>(i) % centers.size()];
    Vec3 p = c + Vec3(gauss(rng), gauss(rng), gauss(rng));
    for (int a = 0; a < 3; ++a) p[a] = std::clamp(p[a], 0.0, 1.0);
    pts.push_back(p);
  }
  return pts;
}

}  // namespace flycom

#include "hipart/posegen.hpp"

#include <algorithm>
#include <cmath>

#include "hipart/binio.hpp"

namespace hipart {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Rest offsets (mm) of the canonical 16-joint skeleton, child minus parent.
std::vector<Eigen::Vector3d> human16_offsets() {
  return {
      {0, 0, 0},       // pelvis (root)
      {0, 250, 0},     // spine
      {0, 250, 0},     // neck
      {0, 150, 0},     // head
      {-100, 0, 0},    // l hip
      {0, -420, 0},    // l knee
      {0, -400, 0},    // l ankle
      {100, 0, 0},     // r hip
      {0, -420, 0},    // r knee
      {0, -400, 0},    // r ankle
      {-160, 0, 0},    // l shoulder
      {0, -280, 0},    // l elbow
      {0, -250, 0},    // l wrist
      {160, 0, 0},     // r shoulder
      {0, -280, 0},    // r elbow
      {0, -250, 0},    // r wrist
  };
}

Eigen::Matrix3d euler_xyz(const Eigen::Vector3d& a) {
  return (Eigen::AngleAxisd(a.x(), Eigen::Vector3d::UnitX()) *
          Eigen::AngleAxisd(a.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(a.z(), Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

// Orthonormal frame (u, v, w) with u along the bone.
void bone_frame(const Eigen::Vector3d& b, Eigen::Vector3d& u, Eigen::Vector3d& v,
                Eigen::Vector3d& w) {
  u = b.normalized();
  Eigen::Vector3d axis = std::abs(u.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  v = (axis - axis.dot(u) * u).normalized();
  w = u.cross(v);
}

struct FkState {
  std::vector<Eigen::Vector3d> pos;       // sparse joint positions
  std::vector<Eigen::Matrix3d> rot;       // accumulated rotations
};

FkState run_fk(const FkSpec& spec, const std::vector<Eigen::Vector3d>& angles) {
  const auto& h = spec.hierarchy;
  FkState st;
  st.pos.resize(h.j_sparse);
  st.rot.resize(h.j_sparse);
  for (int i : h.gen_order) {
    int p = h.parents_sparse[i];
    Eigen::Matrix3d local = euler_xyz(angles[i]);
    if (p < 0) {
      st.pos[i] = Eigen::Vector3d::Zero();
      st.rot[i] = local;
    } else {
      st.pos[i] = st.pos[p] + st.rot[p] * spec.rest_offsets[i];
      st.rot[i] = st.rot[p] * local;
    }
  }
  return st;
}

// Part anchor frame: parent joint position and orientation (root part uses
// the root itself). Attachment points move rigidly with this frame.
void part_frame(const FkSpec& spec, const FkState& st, int i, Eigen::Vector3d& origin,
                Eigen::Matrix3d& frame) {
  int p = spec.hierarchy.parents_sparse[i];
  if (p < 0) {
    origin = st.pos[i];
    frame = st.rot[i];
  } else {
    origin = st.pos[p];
    frame = st.rot[p];
  }
}

}  // namespace

FkSpec make_fk_spec(const SkeletonHierarchy& h, int num_actions) {
  FkSpec spec;
  spec.hierarchy = h;
  spec.num_actions = num_actions;

  if (h.j_sparse == 16 && h.parents_sparse == canonical_parents16()) {
    spec.rest_offsets = human16_offsets();
  } else {
    spec.rest_offsets.resize(h.j_sparse, Eigen::Vector3d::Zero());
    const Eigen::Vector3d dirs[3] = {{0, -1, 0}, {1, 0, 0}, {0, 0, 1}};
    for (int i = 0; i < h.j_sparse; ++i)
      if (h.parents_sparse[i] >= 0) spec.rest_offsets[i] = 300.0 * dirs[i % 3];
  }

  spec.angle_ranges.resize(h.j_sparse);
  for (int i = 0; i < h.j_sparse; ++i) {
    if (h.parents_sparse[i] < 0)
      spec.angle_ranges[i] = {0.25, kPi, 0.25};  // whole-body orientation at the root
    else
      spec.angle_ranges[i] = {0.7, 0.5, 0.7};
  }

  spec.dense_local.resize(h.j_dense);
  spec.fine_local.resize(h.j_fine);
  for (int i = 0; i < h.j_sparse; ++i) {
    Eigen::Vector3d b = spec.rest_offsets[i];
    double L = b.norm();
    Eigen::Vector3d u, v, w;
    if (L < 1e-9) {  // root part: a small cross around the pelvis
      u = Eigen::Vector3d::UnitY();
      v = Eigen::Vector3d::UnitX();
      w = Eigen::Vector3d::UnitZ();
      b = 140.0 * u;
      L = 140.0;
    } else {
      bone_frame(b, u, v, w);
    }
    for (int k = 0; k < h.r; ++k) {
      int d = h.part_map_sd[i][k];
      double f = (k + 0.5) / h.r;
      double side = (k % 2 == 0) ? 1.0 : -1.0;
      spec.dense_local[d] = b * f + v * (0.10 * L * side);
      spec.fine_local[h.part_map_df[d][0]] =
          spec.dense_local[d] - u * (0.10 * L) + w * (0.08 * L);
      spec.fine_local[h.part_map_df[d][1]] =
          spec.dense_local[d] + u * (0.10 * L) - w * (0.08 * L);
    }
  }
  return spec;
}

std::vector<Eigen::Vector3d> action_template(const FkSpec& spec, int a) {
  if (a < 0 || a >= spec.num_actions) throw DomainError("action index out of range");
  std::vector<Eigen::Vector3d> angles(spec.hierarchy.j_sparse);
  for (int j = 0; j < spec.hierarchy.j_sparse; ++j) {
    Rng r = Rng::derive(0xAC710Aull, static_cast<uint64_t>(a), static_cast<uint64_t>(j));
    for (int ax = 0; ax < 3; ++ax)
      angles[j][ax] = spec.angle_ranges[j][ax] * r.uniform(-0.6, 0.6);
  }
  return angles;
}

Mat fk_fine_pose(const FkSpec& spec, const std::vector<Eigen::Vector3d>& angles) {
  const auto& h = spec.hierarchy;
  FkState st = run_fk(spec, angles);
  Mat fine(h.j_fine, 3);
  for (int i = 0; i < h.j_sparse; ++i) {
    Eigen::Vector3d origin;
    Eigen::Matrix3d frame;
    part_frame(spec, st, i, origin, frame);
    for (int d : h.part_map_sd[i])
      for (int f : h.part_map_df[d])
        fine.row(f) = (origin + frame * spec.fine_local[f]).transpose();
  }
  return fine;
}

Mat fk_sparse_joints(const FkSpec& spec, const std::vector<Eigen::Vector3d>& angles) {
  FkState st = run_fk(spec, angles);
  Mat out(spec.hierarchy.j_sparse, 3);
  for (int i = 0; i < spec.hierarchy.j_sparse; ++i) out.row(i) = st.pos[i].transpose();
  return out;
}

Mat sample_pose3d(const FkSpec& spec, Rng& rng, int* action_out) {
  int a = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(spec.num_actions)));
  auto angles = action_template(spec, a);
  for (int j = 0; j < spec.hierarchy.j_sparse; ++j)
    for (int ax = 0; ax < 3; ++ax) {
      double range = spec.angle_ranges[j][ax];
      angles[j][ax] = std::clamp(angles[j][ax] + range * rng.uniform(-0.35, 0.35), -range, range);
    }
  if (action_out) *action_out = a;
  return fk_fine_pose(spec, angles);
}

MeshGraph fine_rest_graph(const FkSpec& spec) {
  const auto& h = spec.hierarchy;
  std::vector<Eigen::Vector3d> zero(h.j_sparse, Eigen::Vector3d::Zero());
  MeshGraph g;
  g.vertices = fk_fine_pose(spec, zero);
  auto add_edge = [&](int a, int b) {
    g.edges.emplace_back(a, b);
    g.edge_weights.push_back(1.0);
  };
  for (int i = 0; i < h.j_sparse; ++i) {
    std::vector<int> part;
    for (int d : h.part_map_sd[i])
      for (int f : h.part_map_df[d]) part.push_back(f);
    std::sort(part.begin(), part.end());
    for (size_t k = 1; k < part.size(); ++k) add_edge(part[k - 1], part[k]);
    int p = h.parents_sparse[i];
    if (p >= 0) {
      int parent_last = h.part_map_df[h.part_map_sd[p].back()].back();
      add_edge(parent_last, part.front());
    }
  }
  return g;
}

OccludeResult occlude(const Mat& x, OccludeMode mode, double ratio, Rng& rng) {
  if (ratio < 0.0 || ratio > 1.0) throw DomainError("occlusion ratio out of [0,1]");
  int J = static_cast<int>(x.rows());
  OccludeResult res;
  res.pose = x;
  res.visibility.assign(J, 1);
  if (ratio <= 0.0 || J == 0) return res;

  double x0 = x.col(0).minCoeff(), x1 = x.col(0).maxCoeff();
  double y0 = x.col(1).minCoeff(), y1 = x.col(1).maxCoeff();
  double bw = x1 - x0, bh = y1 - y0;
  double diag = std::sqrt(bw * bw + bh * bh);
  if (diag <= 0.0) return res;

  if (mode == OccludeMode::kMask) {
    double s = std::sqrt(ratio);
    double w = bw * s, hgt = bh * s;
    double bx = x0 + rng.uniform() * (bw - w);
    double by = y0 + rng.uniform() * (bh - hgt);
    double sigma = 0.25 * diag;
    for (int j = 0; j < J; ++j) {
      bool inside = x(j, 0) >= bx && x(j, 0) <= bx + w && x(j, 1) >= by && x(j, 1) <= by + hgt;
      if (inside) {
        res.pose(j, 0) += sigma * rng.normal();
        res.pose(j, 1) += sigma * rng.normal();
        res.visibility[j] = 0;
      }
    }
  } else {
    double mx = 0.5 * ratio * bw, my = 0.5 * ratio * bh;
    double cx0 = x0 + mx, cx1 = x1 - mx, cy0 = y0 + my, cy1 = y1 - my;
    for (int j = 0; j < J; ++j) {
      double px = std::clamp(x(j, 0), cx0, cx1);
      double py = std::clamp(x(j, 1), cy0, cy1);
      if (px != x(j, 0) || py != x(j, 1)) {
        res.pose(j, 0) = px;
        res.pose(j, 1) = py;
        res.visibility[j] = 0;
      }
    }
  }
  return res;
}

// ---------------------------------------------------------------------------

namespace {

Mat group_average(const Mat& fine, const std::vector<std::vector<int>>& groups) {
  Mat out(static_cast<int>(groups.size()), fine.cols());
  for (size_t g = 0; g < groups.size(); ++g) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(fine.cols());
    for (int idx : groups[g]) acc += fine.row(idx);
    out.row(static_cast<int>(g)) = acc / static_cast<double>(groups[g].size());
  }
  return out;
}

}  // namespace

HierPoseSample make_sample(const FkSpec& spec, const DatasetGenConfig& cfg, uint64_t seed,
                           uint64_t index) {
  const auto& h = spec.hierarchy;
  Rng rng = Rng::derive(seed, 0xDA7A, index);
  HierPoseSample s;
  Mat fine3d = sample_pose3d(spec, rng, &s.action);

  Mat dense3d = group_average(fine3d, h.part_map_df);
  Mat sparse3d = group_average(dense3d, h.part_map_sd);

  Eigen::Vector3d center = fine3d.colwise().mean().transpose();
  double az = rng.uniform(-0.6, 0.6);
  double el = rng.uniform(-0.1, 0.25);
  Eigen::Vector3d dir(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  Eigen::Vector3d eye = center + cfg.camera_distance_mm * dir;
  s.camera = look_at_camera(eye, center, cfg.focal_px, cfg.focal_px, cfg.principal_px,
                            cfg.principal_px);

  s.x_f = project(fine3d, s.camera);
  s.x_d = group_average(s.x_f, h.part_map_df);
  s.x_s = group_average(s.x_d, h.part_map_sd);
  Mat rel = sparse3d.rowwise() - sparse3d.row(0);
  s.y3d = rel * s.camera.rotation.transpose();  // camera-frame targets
  return s;
}

void validate_sample(const HierPoseSample& s, const SkeletonHierarchy& h) {
  auto finite = [](const Mat& m) { return m.allFinite(); };
  if (s.x_f.rows() != h.j_fine || s.x_d.rows() != h.j_dense || s.x_s.rows() != h.j_sparse ||
      s.y3d.rows() != h.j_sparse)
    throw DomainError("sample level shapes do not match the hierarchy");
  if (!finite(s.x_f) || !finite(s.x_d) || !finite(s.x_s) || !finite(s.y3d))
    throw DomainError("sample has non-finite coordinates");
  if (s.y3d.row(0).norm() > 1e-9) throw DomainError("y3d root is not at the origin");
}

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<HierPoseSample>& samples, uint64_t config_hash,
                   uint64_t seed) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path);
  os.write("HPD1", 4);
  binio::put_u32(os, header.version);
  binio::put_u32(os, header.n);
  binio::put_u32(os, header.j_sparse);
  binio::put_u32(os, header.j_dense);
  binio::put_u32(os, header.j_fine);
  binio::put_u32(os, header.num_actions);
  for (const auto& s : samples) {
    binio::put_mat_f32(os, s.x_f);
    binio::put_mat_f32(os, s.x_d);
    binio::put_mat_f32(os, s.x_s);
    binio::put_mat_f32(os, s.y3d);
    binio::put_u32(os, static_cast<uint32_t>(s.action));
    binio::put_f32(os, static_cast<float>(s.camera.fx));
    binio::put_f32(os, static_cast<float>(s.camera.fy));
    binio::put_f32(os, static_cast<float>(s.camera.cx));
    binio::put_f32(os, static_cast<float>(s.camera.cy));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) binio::put_f32(os, static_cast<float>(s.camera.rotation(i, j)));
    for (int i = 0; i < 3; ++i) binio::put_f32(os, static_cast<float>(s.camera.translation(i)));
  }
  if (!os) throw IoError("write failed: " + path);
  os.close();

  std::ofstream mf(path + ".manifest");
  if (!mf) throw IoError("cannot open manifest for " + path);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(config_hash));
  mf << "config_hash = " << buf << "\n";
  mf << "seed = " << seed << "\n";
  mf << "records = " << header.n << "\n";
}

std::pair<DatasetHeader, std::vector<HierPoseSample>> read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "HPD1") throw IoError("bad dataset magic in " + path);
  DatasetHeader h;
  h.version = binio::get_u32(is);
  if (h.version != 1) throw IoError("unsupported dataset version");
  h.n = binio::get_u32(is);
  h.j_sparse = binio::get_u32(is);
  h.j_dense = binio::get_u32(is);
  h.j_fine = binio::get_u32(is);
  h.num_actions = binio::get_u32(is);

  std::vector<HierPoseSample> samples(h.n);
  for (auto& s : samples) {
    s.x_f = binio::get_mat_f32(is, static_cast<int>(h.j_fine), 2);
    s.x_d = binio::get_mat_f32(is, static_cast<int>(h.j_dense), 2);
    s.x_s = binio::get_mat_f32(is, static_cast<int>(h.j_sparse), 2);
    s.y3d = binio::get_mat_f32(is, static_cast<int>(h.j_sparse), 3);
    s.action = static_cast<int>(binio::get_u32(is));
    s.camera.fx = binio::get_f32(is);
    s.camera.fy = binio::get_f32(is);
    s.camera.cx = binio::get_f32(is);
    s.camera.cy = binio::get_f32(is);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) s.camera.rotation(i, j) = binio::get_f32(is);
    for (int i = 0; i < 3; ++i) s.camera.translation(i) = binio::get_f32(is);
  }
  return {h, samples};
}

void make_dataset(const std::string& path, int n, const DatasetGenConfig& cfg,
                  uint64_t seed, uint64_t config_hash) {
  SkeletonHierarchy h = build_hierarchy(cfg.hierarchy);
  FkSpec spec = make_fk_spec(h, cfg.num_actions);
  DatasetHeader header;
  header.n = static_cast<uint32_t>(n);
  header.j_sparse = static_cast<uint32_t>(h.j_sparse);
  header.j_dense = static_cast<uint32_t>(h.j_dense);
  header.j_fine = static_cast<uint32_t>(h.j_fine);
  header.num_actions = static_cast<uint32_t>(cfg.num_actions);

  std::vector<HierPoseSample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    samples.push_back(make_sample(spec, cfg, seed, static_cast<uint64_t>(i)));
    validate_sample(samples.back(), h);
  }
  write_dataset(path, header, samples, config_hash, seed);
}

}  // namespace hipart

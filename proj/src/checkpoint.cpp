#include "hipart/checkpoint.hpp"

#include <cstdio>
#include <fstream>

#include "hipart/binio.hpp"

namespace hipart {

namespace {
constexpr char kMagic[4] = {'H', 'P', 'C', 'K'};
}

const Mat* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

const Mat& Checkpoint::get(const std::string& name) const {
  const Mat* m = find(name);
  if (!m) throw IoError("checkpoint missing tensor: " + name);
  return *m;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  binio::put_u32(os, Checkpoint::kVersion);
  binio::put_string(os, cp.tag);
  binio::put_u64(os, cp.config_hash);
  binio::put_u32(os, static_cast<uint32_t>(cp.tensors.size()));
  for (const auto& [name, m] : cp.tensors) {
    binio::put_string(os, name);
    binio::put_u32(os, static_cast<uint32_t>(m.rows()));
    binio::put_u32(os, static_cast<uint32_t>(m.cols()));
    binio::put_mat_f32(os, m);
  }
  if (!os) throw IoError("write failure on checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path);
  uint32_t version = binio::get_u32(is);
  if (version != Checkpoint::kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  Checkpoint cp;
  cp.tag = binio::get_string(is);
  cp.config_hash = binio::get_u64(is);
  uint32_t n = binio::get_u32(is);
  cp.tensors.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = binio::get_string(is);
    int rows = static_cast<int>(binio::get_u32(is));
    int cols = static_cast<int>(binio::get_u32(is));
    cp.tensors.emplace_back(std::move(name), binio::get_mat_f32(is, rows, cols));
  }
  return cp;
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_tag,
                           uint64_t expected_hash) {
  Checkpoint cp = load_checkpoint(path);
  if (cp.tag != expected_tag)
    throw IoError("checkpoint " + path + " has tag '" + cp.tag + "', expected '" + expected_tag +
                  "'");
  if (cp.config_hash != expected_hash) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx vs expected %016llx",
                  static_cast<unsigned long long>(cp.config_hash),
                  static_cast<unsigned long long>(expected_hash));
    throw IoError("checkpoint " + path + " config hash mismatch: " + buf);
  }
  return cp;
}

void pack_params(Checkpoint& cp, const nn::ParamStore& ps) {
  for (int i = 0; i < ps.size(); ++i) cp.add("param." + ps.name(i), ps.value(i));
}

void pack_optimizer(Checkpoint& cp, nn::AdamW& opt, const nn::ParamStore& ps) {
  Mat t(1, 1);
  t(0, 0) = static_cast<double>(opt.iteration());
  cp.add("opt.t", t);
  if (opt.moment1().empty()) return;
  for (int i = 0; i < ps.size(); ++i) {
    cp.add("opt.m." + ps.name(i), opt.moment1()[i]);
    cp.add("opt.v." + ps.name(i), opt.moment2()[i]);
  }
}

void unpack_params(const Checkpoint& cp, nn::ParamStore& ps) {
  for (int i = 0; i < ps.size(); ++i) {
    const Mat& m = cp.get("param." + ps.name(i));
    if (m.rows() != ps.value(i).rows() || m.cols() != ps.value(i).cols())
      throw IoError("checkpoint tensor shape mismatch for " + ps.name(i));
    ps.value(i) = m;
  }
}

void unpack_optimizer(const Checkpoint& cp, nn::AdamW& opt, const nn::ParamStore& ps) {
  opt.set_iteration(static_cast<int>(cp.get("opt.t")(0, 0)));
  opt.moment1().resize(ps.size());
  opt.moment2().resize(ps.size());
  for (int i = 0; i < ps.size(); ++i) {
    opt.moment1()[i] = cp.get("opt.m." + ps.name(i));
    opt.moment2()[i] = cp.get("opt.v." + ps.name(i));
  }
}

bool has_optimizer(const Checkpoint& cp) { return cp.find("opt.t") != nullptr; }

uint64_t file_digest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open file for digest: " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
    h = fnv1a(buf, static_cast<size_t>(is.gcount()), h);
  return h;
}

}  // namespace hipart

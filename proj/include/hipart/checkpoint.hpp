#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hipart/blocks.hpp"
#include "hipart/optim.hpp"

namespace hipart {

// Named f32 tensor blob with a component tag and the producing config hash.
// Parameters are f32-rounded after every optimizer step, so the round trip
// through this format is lossless and training resumes exactly.
struct Checkpoint {
  static constexpr uint32_t kVersion = 1;

  std::string tag;  // msst | hiarm | lifter
  uint64_t config_hash = 0;
  std::vector<std::pair<std::string, Mat>> tensors;

  void add(const std::string& name, const Mat& m) { tensors.emplace_back(name, m); }
  const Mat* find(const std::string& name) const;
  const Mat& get(const std::string& name) const;  // throws IoError when absent
};

void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// As above, but also enforces the expected component tag and config hash.
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_tag,
                           uint64_t expected_hash);

// Parameter/optimizer plumbing shared by the three training loops.
void pack_params(Checkpoint& cp, const nn::ParamStore& ps);
void pack_optimizer(Checkpoint& cp, nn::AdamW& opt, const nn::ParamStore& ps);
void unpack_params(const Checkpoint& cp, nn::ParamStore& ps);  // names must all match
void unpack_optimizer(const Checkpoint& cp, nn::AdamW& opt, const nn::ParamStore& ps);
bool has_optimizer(const Checkpoint& cp);

uint64_t file_digest(const std::string& path);  // FNV over raw bytes

}  // namespace hipart

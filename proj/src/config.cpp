#include "hipart/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <variant>
#include <vector>

namespace hipart {

namespace {

using FieldPtr = std::variant<int RunConfig::*, double RunConfig::*, bool RunConfig::*>;

struct FieldDef {
  const char* section;
  const char* key;
  FieldPtr ptr;
};

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> f = {
      {"hierarchy", "j_sparse", &RunConfig::j_sparse},
      {"hierarchy", "j_dense", &RunConfig::j_dense},
      {"hierarchy", "j_fine", &RunConfig::j_fine},
      {"data", "n", &RunConfig::data_n},
      {"data", "seed", &RunConfig::data_seed},
      {"data", "actions", &RunConfig::num_actions},
      {"data", "noise_px", &RunConfig::noise_px},
      {"data", "occlude_prob", &RunConfig::occlude_prob},
      {"data", "occlude_max_ratio", &RunConfig::occlude_max_ratio},
      {"data", "train_fraction", &RunConfig::train_fraction},
      {"msst", "dim", &RunConfig::msst_dim},
      {"msst", "ed_dim", &RunConfig::msst_ed_dim},
      {"msst", "k_sparse", &RunConfig::codebook_k_sparse},
      {"msst", "k_dense", &RunConfig::codebook_k_dense},
      {"msst", "codebook_dim", &RunConfig::codebook_dim},
      {"msst", "enc_blocks", &RunConfig::msst_enc_blocks},
      {"msst", "dec_blocks", &RunConfig::msst_dec_blocks},
      {"msst", "batch", &RunConfig::msst_batch},
      {"msst", "epochs", &RunConfig::msst_epochs},
      {"msst", "lr", &RunConfig::msst_lr},
      {"msst", "weight_decay", &RunConfig::msst_weight_decay},
      {"msst", "warmup_iters", &RunConfig::msst_warmup_iters},
      {"msst", "beta", &RunConfig::beta_commit},
      {"msst", "lambda_local", &RunConfig::lambda_local},
      {"msst", "lambda_global", &RunConfig::lambda_global},
      {"msst", "tau", &RunConfig::tau},
      {"msst", "ema_gamma", &RunConfig::ema_gamma},
      {"hiarm", "dim", &RunConfig::hiarm_dim},
      {"hiarm", "heads", &RunConfig::hiarm_heads},
      {"hiarm", "lsab_blocks", &RunConfig::lsab_blocks},
      {"hiarm", "gcsab_blocks", &RunConfig::gcsab_blocks},
      {"hiarm", "ph_blocks", &RunConfig::ph_blocks},
      {"hiarm", "batch", &RunConfig::hiarm_batch},
      {"hiarm", "epochs", &RunConfig::hiarm_epochs},
      {"hiarm", "lr", &RunConfig::hiarm_lr},
      {"hiarm", "weight_decay", &RunConfig::hiarm_weight_decay},
      {"hiarm", "dropout", &RunConfig::hiarm_dropout},
      {"hiarm", "lambda_d", &RunConfig::lambda_d},
      {"hiarm", "single_pass", &RunConfig::hiarm_single_pass},
      {"hiarm", "cond_occlude_prob", &RunConfig::cond_occlude_prob},
      {"hiarm", "cond_occlude_max_ratio", &RunConfig::cond_occlude_max_ratio},
      {"lift", "dim", &RunConfig::lift_dim},
      {"lift", "heads", &RunConfig::lift_heads},
      {"lift", "blocks", &RunConfig::lift_blocks},
      {"lift", "batch", &RunConfig::lift_batch},
      {"lift", "epochs", &RunConfig::lift_epochs},
      {"lift", "lr", &RunConfig::lift_lr},
      {"lift", "decay_factor", &RunConfig::lift_decay_factor},
      {"lift", "decay_epochs", &RunConfig::lift_decay_epochs},
      {"train", "seed", &RunConfig::train_seed},
  };
  return f;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::validate() const {
  if (j_sparse < 1) throw ConfigError("j_sparse must be >= 1");
  if (j_dense % j_sparse != 0) throw ConfigError("j_dense must be a multiple of j_sparse");
  if (j_fine != 2 * j_dense) throw ConfigError("j_fine must equal 2 * j_dense");
  if (data_n < 1) throw ConfigError("dataset size must be >= 1");
  if (num_actions < 1) throw ConfigError("action count must be >= 1");
  if (train_fraction <= 0.0 || train_fraction > 1.0)
    throw ConfigError("train_fraction must be in (0, 1]");
  if (codebook_k_sparse < 1 || codebook_k_dense < 1) throw ConfigError("codebook sizes must be >= 1");
  if (beta_commit <= 0 || lambda_local <= 0 || lambda_global <= 0 || tau <= 0)
    throw ConfigError("stage-1 loss weights must be positive");
  if (ema_gamma <= 0.0 || ema_gamma >= 1.0) throw ConfigError("ema_gamma must be in (0, 1)");
  if (hiarm_dim % hiarm_heads != 0) throw ConfigError("hiarm dim must be divisible by heads");
  if (lift_dim % lift_heads != 0) throw ConfigError("lifter dim must be divisible by heads");
  if (hiarm_dropout < 0.0 || hiarm_dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (lambda_d < 0.0) throw ConfigError("lambda_d must be >= 0");
  if (msst_lr <= 0 || hiarm_lr <= 0 || lift_lr <= 0) throw ConfigError("learning rates must be positive");
  if (cond_occlude_prob < 0.0 || cond_occlude_prob > 1.0)
    throw ConfigError("cond_occlude_prob must be in [0, 1]");
  if (occlude_prob < 0.0 || occlude_prob > 1.0)
    throw ConfigError("occlude_prob must be in [0, 1]");
  if (occlude_max_ratio < 0.0 || occlude_max_ratio > 1.0)
    throw ConfigError("occlude_max_ratio must be in [0, 1]");
}

std::string RunConfig::canonical() const {
  std::ostringstream out;
  const char* cur = "";
  for (const auto& f : fields()) {
    if (std::string(cur) != f.section) {
      cur = f.section;
      out << "[" << cur << "]\n";
    }
    out << f.key << " = ";
    if (auto pi = std::get_if<int RunConfig::*>(&f.ptr))
      out << this->**pi;
    else if (auto pd = std::get_if<double RunConfig::*>(&f.ptr))
      out << format_double(this->**pd);
    else
      out << (this->*std::get<bool RunConfig::*>(f.ptr) ? "true" : "false");
    out << "\n";
  }
  return out.str();
}

uint64_t RunConfig::hash() const {
  std::string c = canonical();
  return fnv1a(c.data(), c.size());
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    bool matched = false;
    for (const auto& f : fields()) {
      if (section != f.section || key != f.key) continue;
      matched = true;
      try {
        if (auto pi = std::get_if<int RunConfig::*>(&f.ptr))
          cfg.**pi = std::stoi(val);
        else if (auto pd = std::get_if<double RunConfig::*>(&f.ptr))
          cfg.**pd = std::stod(val);
        else
          cfg.*std::get<bool RunConfig::*>(f.ptr) = (val == "true" || val == "1");
      } catch (const std::exception&) {
        throw ConfigError("config line " + std::to_string(lineno) + ": bad value '" + val + "'");
      }
      break;
    }
    if (!matched)
      throw ConfigError("config line " + std::to_string(lineno) + ": unknown key [" + section +
                        "] " + key);
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void save_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config file: " + path);
  out << cfg.canonical();
}

}  // namespace hipart

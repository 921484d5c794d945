#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "hipart/pipeline.hpp"
#include "hipart/probes.hpp"

using namespace hipart;

int main(int argc, char** argv) {
  CLI::App app{"hipart: hierarchical pose densification pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  if (const char* env = std::getenv("HIPART_OUT")) out_dir = env;
  if (out_dir.empty()) out_dir = ".";
  app.add_option("-c,--config", config_path, "run configuration file");
  app.add_option("-o,--out", out_dir, "output directory (default: $HIPART_OUT or .)");

  auto* cmd_gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  int gen_n = -1;
  int gen_seed = -1;
  cmd_gen->add_option("--n", gen_n, "override dataset size");
  cmd_gen->add_option("--seed", gen_seed, "override dataset seed");

  app.add_subcommand("train-msst", "train the stage-1 tokenizer");
  app.add_subcommand("train-hiarm", "train the stage-2 generator");

  auto* cmd_lift = app.add_subcommand("train-lifter", "train a 2D-to-3D lifter");
  std::string lift_mode = "gen";
  cmd_lift->add_option("--mode", lift_mode, "input mode: sparse | gt | gen");

  app.add_subcommand("densify", "generate dense/fine poses for every record");

  auto* cmd_eval = app.add_subcommand("evaluate", "evaluate trained lifters");
  bool occlusion = false;
  cmd_eval->add_flag("--occlusion", occlusion, "also emit occlusion degradation curves");

  auto* cmd_pcb = app.add_subcommand("probe-codebook", "codebook cosine-similarity matrices");
  int probe_k = 100;
  uint64_t probe_seed = 0;
  cmd_pcb->add_option("--k", probe_k, "number of tokens per matrix");
  cmd_pcb->add_option("--seed", probe_seed, "seed for the random-token variant");

  auto* cmd_ptk = app.add_subcommand("probe-tokens", "token-perturbation displacement report");
  int probe_part = 0;
  int probe_index = 0;
  uint64_t ptk_seed = 0;
  cmd_ptk->add_option("--part", probe_part, "sparse part to perturb");
  cmd_ptk->add_option("--index", probe_index, "dataset record to probe");
  cmd_ptk->add_option("--seed", ptk_seed, "replacement-token seed");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    cfg.validate();
    StagePaths paths{out_dir};

    if (cmd_gen->parsed()) {
      if (gen_n > 0) cfg.data_n = gen_n;
      if (gen_seed >= 0) cfg.data_seed = gen_seed;
      run_gen_data(cfg, paths);
    } else if (app.get_subcommand("train-msst")->parsed()) {
      run_train_msst(cfg, paths);
    } else if (app.get_subcommand("train-hiarm")->parsed()) {
      run_train_hiarm(cfg, paths);
    } else if (cmd_lift->parsed()) {
      run_train_lifter(cfg, paths, lift_mode);
    } else if (app.get_subcommand("densify")->parsed()) {
      run_densify(cfg, paths);
    } else if (cmd_eval->parsed()) {
      run_evaluate(cfg, paths, occlusion);
    } else if (cmd_pcb->parsed()) {
      SkeletonHierarchy h = build_hierarchy({cfg.j_sparse, cfg.j_dense, cfg.j_fine, {}});
      MsstModel msst(cfg, h, static_cast<uint64_t>(cfg.train_seed));
      msst_from_checkpoint(load_checkpoint(paths.msst_ckpt(), "msst", cfg.hash()), msst,
                           nullptr);
      CodebookProbe p = probe_codebook(msst, probe_k, probe_seed);
      write_matrix_csv(p.ss, out_dir + "/codebook_ss.csv");
      write_matrix_csv(p.dd, out_dir + "/codebook_dd.csv");
      write_matrix_csv(p.sd_first, out_dir + "/codebook_sd_first.csv");
      write_matrix_csv(p.sd_rand, out_dir + "/codebook_sd_rand.csv");
    } else if (cmd_ptk->parsed()) {
      PipelineData data = prepare_data(cfg, read_dataset(paths.dataset()).second);
      if (probe_index < 0 || probe_index >= static_cast<int>(data.norm.size()))
        throw DomainError("record index out of range");
      MsstModel msst(cfg, data.h, static_cast<uint64_t>(cfg.train_seed));
      msst_from_checkpoint(load_checkpoint(paths.msst_ckpt(), "msst", cfg.hash()), msst,
                           nullptr);
      TokenProbe p = probe_tokens(msst, data.norm[probe_index].x_f, probe_part, ptk_seed);
      write_token_probe(p, out_dir + "/token_probe.txt");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

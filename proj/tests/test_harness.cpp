#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "hipart/checkpoint.hpp"
#include "hipart/config.hpp"

using namespace hipart;

TEST_CASE("config parse, canonical form, and hash stability") {
  std::string text =
      "[hierarchy]\n"
      "j_sparse = 4\n"
      "j_dense = 12\n"
      "j_fine = 24\n"
      "\n"
      "[msst]\n"
      "dim = 16\n"
      "lr = 2.5e-4\n"
      "\n"
      "[hiarm]\n"
      "single_pass = true\n";
  RunConfig cfg = parse_config(text);
  CHECK(cfg.j_sparse == 4);
  CHECK(cfg.msst_dim == 16);
  CHECK(cfg.msst_lr == doctest::Approx(2.5e-4));
  CHECK(cfg.hiarm_single_pass);
  CHECK(cfg.data_n == 10000);  // untouched default

  RunConfig again = parse_config(cfg.canonical());
  CHECK(again.canonical() == cfg.canonical());
  CHECK(again.hash() == cfg.hash());
  CHECK(parse_config("").hash() != cfg.hash());
}

TEST_CASE("config changes move the hash") {
  RunConfig a = parse_config("");
  RunConfig b = a;
  b.msst_lr *= 2;
  CHECK(a.hash() != b.hash());
  RunConfig c = a;
  c.train_seed += 1;
  CHECK(a.hash() != c.hash());
}

TEST_CASE("config errors carry line numbers") {
  CHECK_THROWS_AS(parse_config("[msst]\nnope = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[nosuch]\ndim = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("[msst]\ndim = banana\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("dim = 3\n"), ConfigError);  // key before any section
  try {
    parse_config("[msst]\n\nnope = 3\n");
    CHECK(false);
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
}

TEST_CASE("config validation rejects inconsistent settings") {
  RunConfig cfg = parse_config("");
  cfg.validate();
  RunConfig bad = cfg;
  bad.j_dense = 50;  // not a multiple of 16
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.hiarm_dim = 30;  // not divisible by heads
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.train_fraction = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("config file round trip") {
  RunConfig cfg = parse_config("");
  cfg.data_n = 321;
  cfg.tau = 0.123;
  std::string path = "tmp_cfg_rt.cfg";
  save_config(cfg, path);
  RunConfig back = load_config(path);
  CHECK(back.hash() == cfg.hash());
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_config("no_such_file.cfg"), IoError);
}

TEST_CASE("checkpoint round trip with params and optimizer") {
  Rng init(17);
  nn::ParamStore ps;
  ps.add("layer.w", 3, 4, 0.5, init);
  ps.add("layer.b", 1, 4, 0.5, init);
  ps.round_to_f32();

  nn::AdamW opt;
  std::vector<Mat> grads = {Mat::Constant(3, 4, 0.1), Mat::Constant(1, 4, -0.2)};
  nn::TrainSchedule sched;
  sched.peak_lr = 1e-3;
  sched.total_iters = 10;
  opt.step(ps, grads, sched);
  opt.step(ps, grads, sched);

  Checkpoint cp;
  cp.tag = "msst";
  cp.config_hash = 0xdeadbeefull;
  pack_params(cp, ps);
  pack_optimizer(cp, opt, ps);
  cp.add("meta.next_epoch", Mat::Constant(1, 1, 5.0));
  std::string path = "tmp_ckpt_rt.bin";
  save_checkpoint(cp, path);

  Checkpoint back = load_checkpoint(path, "msst", 0xdeadbeefull);
  CHECK(has_optimizer(back));
  CHECK(back.get("meta.next_epoch")(0, 0) == 5.0);

  nn::ParamStore ps2;
  Rng init2(99);
  ps2.add("layer.w", 3, 4, 0.5, init2);
  ps2.add("layer.b", 1, 4, 0.5, init2);
  unpack_params(back, ps2);
  CHECK((ps2.value(0) - ps.value(0)).norm() == 0.0);
  CHECK((ps2.value(1) - ps.value(1)).norm() == 0.0);

  nn::AdamW opt2;
  unpack_optimizer(back, opt2, ps2);
  CHECK(opt2.iteration() == 2);
  CHECK((opt2.moment1()[0] - opt.moment1()[0]).norm() == 0.0);
  CHECK((opt2.moment2()[1] - opt.moment2()[1]).norm() == 0.0);

  // resuming from the file and from memory produce bitwise-equal params
  opt.step(ps, grads, sched);
  opt2.set_iteration(opt2.iteration());
  opt2.step(ps2, grads, sched);
  CHECK((ps2.value(0) - ps.value(0)).norm() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint guards reject a wrong tag, hash, or magic") {
  Checkpoint cp;
  cp.tag = "hiarm";
  cp.config_hash = 42;
  cp.add("param.x", Mat::Zero(2, 2));
  std::string path = "tmp_ckpt_guard.bin";
  save_checkpoint(cp, path);
  CHECK_THROWS_AS(load_checkpoint(path, "msst", 42), IoError);
  CHECK_THROWS_AS(load_checkpoint(path, "hiarm", 43), IoError);
  CHECK(load_checkpoint(path, "hiarm", 42).tensors.size() == 1);
  CHECK_FALSE(has_optimizer(load_checkpoint(path)));

  std::ofstream os(path, std::ios::binary);
  os << "NOTACHECKPOINT";
  os.close();
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_checkpoint("missing_ckpt.bin"), IoError);
}

TEST_CASE("checkpoint tensor lookup") {
  Checkpoint cp;
  cp.add("a", Mat::Ones(1, 1));
  CHECK(cp.find("a") != nullptr);
  CHECK(cp.find("b") == nullptr);
  CHECK_THROWS_AS(cp.get("b"), IoError);
}

TEST_CASE("file digest distinguishes contents and is stable") {
  std::string p1 = "tmp_digest_a.bin", p2 = "tmp_digest_b.bin";
  {
    std::ofstream a(p1, std::ios::binary), b(p2, std::ios::binary);
    for (int i = 0; i < 100000; ++i) {
      char c = static_cast<char>(i * 31);
      a.put(c);
      b.put(c);
    }
    b.put('x');
  }
  CHECK(file_digest(p1) == file_digest(p1));
  CHECK(file_digest(p1) != file_digest(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  CHECK_THROWS_AS(file_digest("missing_file.bin"), IoError);
}

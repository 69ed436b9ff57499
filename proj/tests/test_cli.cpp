#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "test_support.hpp"
#include "unicorn/byte_io.hpp"
#include "unicorn/checkpoint.hpp"

using unicorn::testing::TempDir;

namespace {

struct Result {
  int code = -1;
  std::string err;
};

Result run(const std::string& args, const TempDir& dir) {
  const std::string err_path = dir / "stderr.txt";
  const std::string cmd = std::string(UNICORN_BIN) + " " + args + " >/dev/null 2>" + err_path;
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err_path);
  std::stringstream ss;
  ss << in.rdbuf();
  r.err = ss.str();
  return r;
}

void write_text(const std::string& path, const std::string& text) { std::ofstream(path) << text; }

// Small dataset plus splits under `dir`.
void prepare(const TempDir& dir, const std::string& feat_dim = "8") {
  write_text(dir / "spec.txt", "n_individuals=5\nsegments_per_individual=2\nfeat_dim=" + feat_dim +
                                   "\npatches_min=2\npatches_max=3\n");
  REQUIRE(run("synth --spec " + (dir / "spec.txt") + " --out " + (dir / "data"), dir).code == 0);
  REQUIRE(run("split --manifest " + (dir / "data/manifest.tsv") + " --seed 1 --out " + (dir / "splits.tsv"), dir)
              .code == 0);
  write_text(dir / "run.txt", "feat_dim=" + feat_dim + "\nmodel_dim=8\nn_heads=2\nepochs=1\naccum_steps=2\n");
}

std::string train_args(const TempDir& dir, const std::string& out, const std::string& extra = "") {
  return "train --config " + (dir / "run.txt") + " --manifest " + (dir / "data/manifest.tsv") + " --splits " +
         (dir / "splits.tsv") + " --fold 0 --out " + (dir / out) + extra;
}

}  // namespace

TEST_CASE("help lists subcommands") {
  TempDir dir("cli_help");
  CHECK(run("--help", dir).code == 0);
  for (const char* sub : {"synth", "split", "train", "cv", "eval", "ablate", "explain", "export"})
    CHECK(run(std::string(sub) + " --help", dir).code == 0);
}

TEST_CASE("train with zero epochs writes the initial checkpoint") {
  TempDir dir("cli_train0");
  prepare(dir);
  const Result r = run(train_args(dir, "t0", " --set epochs=0"), dir);
  INFO(r.err);
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "t0/checkpoint.bin"));
  const auto model = unicorn::load_checkpoint(dir / "t0/checkpoint.bin");
  CHECK(model->config().model_dim == 8);
  const std::string meta = unicorn::read_file(dir / "t0/run_meta.txt");
  CHECK(meta.find("epochs=0") != std::string::npos);
  CHECK(meta.find("mt19937_64") != std::string::npos);
}

TEST_CASE("eval with mismatched feat_dim reports a config mismatch") {
  TempDir dir("cli_mismatch");
  prepare(dir);
  REQUIRE(run(train_args(dir, "t"), dir).code == 0);
  write_text(dir / "spec16.txt", "n_individuals=5\nsegments_per_individual=1\nfeat_dim=16\npatches_min=2\npatches_max=2\n");
  REQUIRE(run("synth --spec " + (dir / "spec16.txt") + " --out " + (dir / "wide"), dir).code == 0);
  const Result r = run("eval --checkpoint " + (dir / "t/checkpoint.bin") + " --manifest " +
                           (dir / "wide/manifest.tsv") + " --out " + (dir / "m.tsv"),
                       dir);
  CHECK(r.code == 5);
  CHECK(r.err.rfind("error[config_mismatch]", 0) == 0);
  CHECK(r.err.find("config mismatch") != std::string::npos);

  const Result ok = run("eval --checkpoint " + (dir / "t/checkpoint.bin") + " --manifest " +
                            (dir / "data/manifest.tsv") + " --splits " + (dir / "splits.tsv") +
                            " --fold 0 --part test --out " + (dir / "m.tsv"),
                        dir);
  INFO(ok.err);
  CHECK(ok.code == 0);
  CHECK(unicorn::read_file(dir / "m.tsv").find("accuracy") != std::string::npos);
}

TEST_CASE("configuration errors exit with code 2") {
  TempDir dir("cli_config");
  prepare(dir);
  Result r = run(train_args(dir, "x", " --set bogus_key=1"), dir);
  CHECK(r.code == 2);
  CHECK(r.err.rfind("error[config]", 0) == 0);
  r = run(train_args(dir, "x", " --set n_heads=3"), dir);
  CHECK(r.code == 2);
  CHECK(run("train --nonsense", dir).code == 2);
}

TEST_CASE("data errors exit with code 3") {
  TempDir dir("cli_data");
  prepare(dir);
  std::string bag = unicorn::read_file(dir / "data/bags/s0000_0.HE.bag");
  bag[0] = 'Z';
  unicorn::write_file_atomic(dir / "data/bags/s0000_0.HE.bag", bag);
  const Result r = run(train_args(dir, "x"), dir);
  CHECK(r.code == 3);
  CHECK(r.err.rfind("error[bad_magic]", 0) == 0);
  CHECK(run("split --manifest " + (dir / "missing.tsv") + " --seed 1 --out " + (dir / "s.tsv"), dir).code != 0);
}

TEST_CASE("the remaining subcommands produce their outputs deterministically") {
  TempDir dir("cli_all");
  prepare(dir);
  REQUIRE(run(train_args(dir, "t"), dir).code == 0);
  const std::string ckpt = dir / "t/checkpoint.bin";
  const std::string data = " --manifest " + (dir / "data/manifest.tsv");
  const std::string split = " --splits " + (dir / "splits.tsv") + " --fold 0 --part test";

  Result r = run("ablate --checkpoint " + ckpt + data + split + " --out " + (dir / "abl"), dir);
  INFO(r.err);
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir / "abl/ablation.tsv"));
  CHECK(std::filesystem::exists(dir / "abl/ablation.json"));

  r = run("export --checkpoint " + ckpt + data + split + " --per-modality --out " + (dir / "f.tsv"), dir);
  CHECK(r.code == 0);

  for (const char* out : {"e1", "e2"}) {
    r = run("explain --checkpoint " + ckpt + data + " --sample s0001_0 --out " + (dir / out), dir);
    INFO(r.err);
    CHECK(r.code == 0);
  }
  CHECK(unicorn::read_file(dir / "e1/scores.tsv") == unicorn::read_file(dir / "e2/scores.tsv"));
  CHECK(unicorn::read_file(dir / "e1/HE.attention.pgm") == unicorn::read_file(dir / "e2/HE.attention.pgm"));
  CHECK(std::filesystem::exists(dir / "e1/vK.p_CFA.pgm"));

  r = run("cv --config " + (dir / "run.txt") + data + " --splits " + (dir / "splits.tsv") + " --threads 2 --out " +
              (dir / "cv"),
          dir);
  INFO(r.err);
  CHECK(r.code == 0);
  CHECK(std::filesystem::exists(dir / "cv/summary.json"));
  CHECK(std::filesystem::exists(dir / "cv/fold4/checkpoint.bin"));
}

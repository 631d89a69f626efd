#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "invlab/checkpoint.hpp"
#include "invlab/error.hpp"
#include "invlab/training.hpp"
#include "support.hpp"

using namespace invlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("invlab_ckpt_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

ModelMeta small_meta(Objective obj) {
  TrainConfig tc;
  tc.objective = obj;
  tc.hidden = {9, 7};
  tc.embed_dim = 5;
  return make_meta(tc, GmmSpec::toy_default());
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

void spit(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  os << s;
}

}  // namespace

TEST_CASE("checkpoint round trip keeps the forward pass bit-identical") {
  TempDir dir;
  const ModelMeta meta = small_meta(Objective::EpsilonPrediction);
  Rng rng(21);
  const ModelParams params = ModelParams::init(meta, rng);
  AdamState opt = AdamState::for_params(meta);
  opt.step = 17;
  opt.m.class_table.setConstant(0.25);
  const fs::path path = dir.path / "m.ckpt";
  save_checkpoint(path, meta, params, &opt, nlohmann::json{{"note", "x"}});

  const Checkpoint ck = load_checkpoint(path);
  CHECK(ck.meta.objective == Objective::EpsilonPrediction);
  CHECK(ck.meta.hidden == meta.hidden);
  CHECK(ck.config["note"] == "x");
  REQUIRE(ck.optimizer);
  CHECK(ck.optimizer->step == 17);
  CHECK(ck.optimizer->m.class_table == opt.m.class_table);

  const MlpModel before(meta, params);
  const MlpModel after = ck.model();
  for (int i = 0; i < 100; ++i) {
    const Vector x = 6.0 * sample_standard_normal(rng, 2);
    const double t = rng.uniform();
    const Condition c = i % 3 == 0 ? Condition::null()
                        : i % 3 == 1 ? Condition::of_class(1 + i % 5)
                                     : Condition::tight(x, 0.5);
    CHECK(before.predict(x, t, c) == after.predict(x, t, c));
  }
  CHECK(file_hash(path) == file_hash(path));
  CHECK(file_hash(path).size() == 16);
}

TEST_CASE("checkpoint loading rejects damaged files") {
  TempDir dir;
  const ModelMeta meta = small_meta(Objective::FlowMatching);
  const ModelParams params = ModelParams::zeros(meta);
  const fs::path good = dir.path / "good.ckpt";
  save_checkpoint(good, meta, params, nullptr, {});
  const std::string bytes = slurp(good);
  CHECK_FALSE(load_checkpoint(good).optimizer);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  spit(dir.path / "magic.ckpt", bad_magic);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "magic.ckpt"), CheckpointError);

  std::string bad_version = bytes;
  bad_version[4] = 9;
  spit(dir.path / "version.ckpt", bad_version);
  CHECK_THROWS_WITH_AS(load_checkpoint(dir.path / "version.ckpt"), doctest::Contains("version"), CheckpointError);

  spit(dir.path / "short.ckpt", bytes.substr(0, bytes.size() - 8));
  CHECK_THROWS_AS(load_checkpoint(dir.path / "short.ckpt"), CheckpointError);

  spit(dir.path / "long.ckpt", bytes + "x");
  CHECK_THROWS_AS(load_checkpoint(dir.path / "long.ckpt"), CheckpointError);

  CHECK_THROWS_AS(load_checkpoint(dir.path / "missing.ckpt"), CheckpointError);
}

TEST_CASE("saving params that do not fit the meta is refused") {
  TempDir dir;
  const ModelParams other = ModelParams::zeros(small_meta(Objective::FlowMatching));
  ModelMeta meta = small_meta(Objective::FlowMatching);
  meta.hidden = {4};
  CHECK_THROWS_AS(save_checkpoint(dir.path / "x.ckpt", meta, other, nullptr, {}), CheckpointError);
}

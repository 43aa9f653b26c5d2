#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "mixmae/error.hpp"
#include "mixmae/pipeline.hpp"

using namespace mixmae;
namespace fs = std::filesystem;

namespace {

RunConfig micro(int k = 2) {
  RunConfig c = RunConfig::for_preset("toy");
  const std::pair<const char*, const char*> kv[] = {
      {"model.img_px", "32"},         {"model.patch_px", "2"},
      {"model.channels", "8,8,16,16"}, {"model.heads", "2,2,2,2"},
      {"model.blocks", "1,1,1,1"},     {"model.windows", "4,4,4,2"},
      {"model.decoder_width", "8"},    {"model.decoder_heads", "2"},
      {"model.decoder_blocks", "1"},   {"train.batch_size", "8"},
      {"train.epochs", "2"},           {"train.warmup_epochs", "1"},
      {"train.probe_epochs", "3"},     {"train.finetune_epochs", "1"},
      {"train.finetune_batch_size", "8"}, {"data.count", "32"}};
  for (const auto& [key, value] : kv) c.set(key, value);
  c.set("mask.k", std::to_string(k));
  c.validate();
  return c;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<float> params_of(const Model& m) {
  std::vector<float> v;
  for (const auto& p : m.store.params()) v.insert(v.end(), p.tensor.data().begin(), p.tensor.data().end());
  return v;
}

}  // namespace

TEST_CASE("network input maps [0, 1] to [-1, 1]") {
  Image img(3, 2, 2, 0.25f);
  img.at(1, 0, 1) = 1.0f;
  const Image imgs[] = {img};
  const Tensor t = to_network_input(imgs);
  CHECK(t.shape() == Shape{1, 3, 2, 2});
  CHECK(t.at(0) == -0.5f);
  CHECK(t.at(5) == 1.0f);
}

TEST_CASE("batches are deterministic and shaped by the mixing factor") {
  const RunConfig c = micro(2);
  const Dataset data = load_dataset(c);
  BatchPlanner planner(c, data, 11);
  CHECK(planner.steps_per_epoch() == 4);
  const Batch a = planner.make(1, 2), b = planner.make(1, 2);
  CHECK(a.pixels.shape() == Shape{4, 3, 32, 32});
  CHECK(std::vector<float>(a.pixels.data().begin(), a.pixels.data().end()) ==
        std::vector<float>(b.pixels.data().begin(), b.pixels.data().end()));
  CHECK(a.masks.size() == 4);
  CHECK(a.targets.size() == 8);
  CHECK(a.sources_per_input == 2);
  CHECK(a.groups == std::vector<int>{0, 1});
  for (const auto& m : a.masks) CHECK(m.count(0) == 2);

  std::vector<int> seen(data.size(), 0);
  for (std::int64_t s = 0; s < planner.steps_per_epoch(); ++s)
    for (auto i : planner.indices(3, s)) ++seen[i];
  for (int s : seen) CHECK(s == 1);
  CHECK(planner.indices(3, 0) != planner.indices(4, 0));
  CHECK(BatchPlanner(c, data, 12).indices(3, 0) != planner.indices(3, 0));
}

TEST_CASE("single-group and corruption batches") {
  RunConfig c = micro(2);
  c.set("mask.dual", "false");
  const Dataset data = load_dataset(c);
  CHECK(BatchPlanner(c, data, 1).make(0, 0).groups == std::vector<int>{0});
  c.set("mask.fill", "zero");
  const Batch z = BatchPlanner(c, data, 1).make(0, 0);
  CHECK(z.sources_per_input == 1);
  CHECK(z.pixels.dim(0) == 8);
  CHECK(z.targets.size() == 8);
}

TEST_CASE("mismatched datasets are rejected") {
  const RunConfig c = micro();
  const Dataset wrong = generate_synthetic(16, 64, 1);
  CHECK_THROWS_AS(BatchPlanner(c, wrong, 1), Error);
  const Dataset tiny = generate_synthetic(4, 32, 1);
  CHECK_THROWS_AS(BatchPlanner(c, tiny, 1), Error);
}

TEST_CASE("a pretraining step yields a finite loss and gradients everywhere it should") {
  const RunConfig c = micro(2);
  const Dataset data = load_dataset(c);
  Model model(c, 3);
  const Batch batch = BatchPlanner(c, data, 3).make(0, 0);
  model.store.zero_grad();
  const StepResult r = pretrain_step(model, batch);
  CHECK(std::isfinite(r.loss));
  REQUIRE(r.group_loss.size() == 2);
  CHECK(r.loss == doctest::Approx(r.group_loss[0] + r.group_loss[1]).epsilon(1e-5));
  for (double g : r.group_loss) {
    CHECK(g > 0.5);
    CHECK(g < 3.0);
  }
  int with_grad = 0;
  for (const auto& p : model.store.params()) {
    double norm = 0;
    for (float v : p.tensor.grad()) norm += v * v;
    with_grad += norm > 0;
  }
  CHECK(with_grad > static_cast<int>(model.store.params().size()) / 2);
}

TEST_CASE("pretraining writes metrics and checkpoints, and resuming replays the run") {
  const RunConfig c = micro(2);
  const Dataset data = load_dataset(c);
  TempDir full("mixmae_test_pretrain_full"), part("mixmae_test_pretrain_part");

  Model a(c, 5);
  PretrainOptions oa;
  oa.out_dir = full.path.string();
  const PretrainResult ra = pretrain(a, data, oa);
  CHECK(ra.steps == 8);
  CHECK(ra.rows.size() == 8);
  CHECK(fs::exists(full.path / "checkpoint_epoch001.mxmm"));
  CHECK(fs::exists(full.path / "checkpoint_epoch002.mxmm"));
  CHECK(read_metrics((full.path / "metrics.csv").string()).size() == 8);

  Model b(c, 5);
  PretrainOptions ob;
  ob.out_dir = part.path.string();
  ob.stop_after_step = 3;
  const PretrainResult rb = pretrain(b, data, ob);
  CHECK(rb.steps == 3);
  CHECK(load_checkpoint(rb.checkpoint).step == 3);

  Model b2(c, 999);  // parameters come from the checkpoint
  PretrainOptions oc;
  oc.out_dir = part.path.string();
  oc.resume = rb.checkpoint;
  const PretrainResult rc = pretrain(b2, data, oc);
  CHECK(rc.steps == 8);
  CHECK(params_of(b2) == params_of(a));
  const auto ma = read_metrics((full.path / "metrics.csv").string());
  const auto mb = read_metrics((part.path / "metrics.csv").string());
  REQUIRE(mb.size() == ma.size());
  for (std::size_t i = 0; i < ma.size(); ++i) {
    CHECK(mb[i].step == ma[i].step);
    CHECK(mb[i].loss == ma[i].loss);
    CHECK(mb[i].lr == ma[i].lr);
  }
  CHECK(encode_checkpoint(load_checkpoint((full.path / "latest.mxmm").string())) ==
        encode_checkpoint(load_checkpoint((part.path / "latest.mxmm").string())));
}

TEST_CASE("resuming under a different model configuration needs force") {
  const RunConfig c = micro(2);
  const Dataset data = load_dataset(c);
  TempDir dir("mixmae_test_pretrain_hash");
  Model a(c, 1);
  PretrainOptions o;
  o.out_dir = dir.path.string();
  o.stop_after_step = 1;
  const auto r = pretrain(a, data, o);
  RunConfig other = c;
  other.set("mask.dual", "false");
  Model b(other, 1);
  PretrainOptions ro;
  ro.resume = r.checkpoint;
  CHECK_THROWS_AS(pretrain(b, data, ro), Error);
}

TEST_CASE("parameter capture and load") {
  const RunConfig c = micro(2);
  Model a(c, 1), b(c, 2);
  CHECK(params_of(a) != params_of(b));
  const Checkpoint ck = capture(c, a.store, nullptr, 1, 0, 0);
  CHECK(ck.moments.empty());
  load_parameters(ck, b.store);
  CHECK(params_of(a) == params_of(b));

  Checkpoint missing = ck;
  missing.tensors.pop_back();
  CHECK_THROWS_AS(load_parameters(missing, b.store), Error);
  CHECK_NOTHROW(load_parameters(missing, b.store, true));
  Checkpoint bad = ck;
  bad.tensors.front().shape.push_back(1);
  CHECK_THROWS_AS(load_parameters(bad, b.store), Error);
}

TEST_CASE("probe split and feature extraction") {
  CHECK(train_split(10) == 8);
  CHECK(train_split(2048) == 1638);
  const RunConfig c = micro(2);
  const Dataset data = load_dataset(c);
  Model m(c, 1);
  const auto f = extract_features(m, data);
  REQUIRE(f.size() == data.size());
  CHECK(f[0].size() == 16);
  const EvalResult r = linear_probe(m, data);
  CHECK(r.train_count == 25);
  CHECK(r.test_count == 7);
  CHECK(r.test_accuracy >= 0.0);
  CHECK(r.test_accuracy <= 1.0);
  CHECK(linear_probe(m, data).test_accuracy == r.test_accuracy);

  Dataset unlabeled = data;
  unlabeled.labels.clear();
  CHECK_THROWS_AS(linear_probe(m, unlabeled), Error);
}

TEST_CASE("finetuning runs end to end") {
  const RunConfig c = micro(2);
  const Dataset data = load_dataset(c);
  Model m(c, 1);
  const EvalResult r = finetune(m, data, 4);
  CHECK(r.test_count == 7);
  CHECK(r.train_accuracy >= 0.0);
}

TEST_CASE("reconstruction panel geometry") {
  const RunConfig c = micro(2);
  const Dataset data = load_dataset(c);
  Model m(c, 1);
  const Image panel = reconstruction_panel(m, data, 3, 1);
  CHECK(panel.height == 96);
  CHECK(panel.width == 96);
  for (float v : panel.pixels) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  CHECK(reconstruction_panel(m, data, 99, 1).height == 4 * 32);
}

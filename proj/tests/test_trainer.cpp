#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sonovote/synthetic.hpp"
#include "sonovote/trainer.hpp"

using sonovote::ClassLabel;
using sonovote::Family;
using sonovote::LabeledImage;
using sonovote::ModelSpec;
using sonovote::OptimizerKind;
using sonovote::Parameters;
using sonovote::TrainConfig;
using sonovote::TrainRecord;
using sonovote::train;

namespace {

ModelSpec tiny_spec(int input = 12) {
  ModelSpec spec;
  spec.family = Family::plain_stack;
  spec.input_hw = {input, input};
  spec.stage_widths = {4};
  return spec;
}

// Trivially separable two-texture set at the network's own resolution.
std::vector<LabeledImage> toy_set(std::size_t per_class, int side,
                                  std::uint64_t seed) {
  return sonovote::synthetic_set(
      {per_class, per_class, per_class}, seed,
      static_cast<std::size_t>(side), "toy");
}

TrainConfig fast_config(const ModelSpec& spec, int epochs, int batch) {
  TrainConfig cfg;
  cfg.spec = spec;
  cfg.epochs = epochs;
  cfg.batch_size = batch;
  cfg.optimizer.learning_rate = 0.01;
  cfg.augment = sonovote::AugmentPolicy{};  // identity
  cfg.augment.seed = 1;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("step count is epochs times ceil(n / batch)", "[trainer]") {
  const ModelSpec spec = tiny_spec();
  const auto set = toy_set(16 / 3 + 1, 12, 3);  // 18 images
  TrainConfig cfg = fast_config(spec, 5, 8);
  const auto [params, record] = train<float>(cfg, set);
  // 18 samples, batch 8 -> 3 steps per epoch (last batch has 2 samples).
  CHECK(record.optimizer_steps == 5 * 3);
  REQUIRE(record.epochs.size() == 5);
  for (int e = 0; e < 5; ++e) CHECK(record.epochs[e].epoch == e);
  CHECK(record.wall_seconds >= 0.0);
}

TEST_CASE("training is bit-identical across reruns in 64-bit mode",
          "[trainer]") {
  const ModelSpec spec = tiny_spec();
  const auto set = toy_set(4, 12, 5);
  TrainConfig cfg = fast_config(spec, 2, 4);
  cfg.augment = sonovote::default_policy(9);
  const auto [p1, r1] = train<double>(cfg, set);
  const auto [p2, r2] = train<double>(cfg, set);
  for (const auto& [name, t] : p1.tensors) {
    const auto& u = p2.tensors.at(name);
    for (std::size_t i = 0; i < t.numel(); ++i) REQUIRE(t[i] == u[i]);
  }
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (std::size_t e = 0; e < r1.epochs.size(); ++e) {
    CHECK(r1.epochs[e].mean_loss == r2.epochs[e].mean_loss);
    CHECK(r1.epochs[e].accuracy == r2.epochs[e].accuracy);
  }

  // A different seed must change the trajectory.
  cfg.seed = 2;
  const auto [p3, r3] = train<double>(cfg, set);
  CHECK(r3.epochs.back().mean_loss != r1.epochs.back().mean_loss);
}

TEST_CASE("a separable toy problem trains to full accuracy", "[trainer]") {
  ModelSpec spec = tiny_spec(16);
  spec.stage_widths = {4, 8};
  const auto set = toy_set(8, 16, 7);
  TrainConfig cfg = fast_config(spec, 40, 6);
  cfg.optimizer.kind = OptimizerKind::adam;
  cfg.optimizer.learning_rate = 0.05;
  const auto [params, record] = train<float>(cfg, set);
  CHECK(record.epochs.back().accuracy == 1.0);
  CHECK(record.epochs.back().mean_loss <
        record.epochs.front().mean_loss);

  // Evaluation on the training set agrees with the recorded accuracy.
  const auto items = sonovote::evaluate(params, spec, set);
  std::size_t correct = 0;
  for (const auto& item : items) {
    correct += item.prediction.predicted == item.truth;
  }
  CHECK(correct == set.size());
}

TEST_CASE("evaluate preserves order and ignores the augment stream",
          "[trainer]") {
  const ModelSpec spec = tiny_spec();
  const auto set = toy_set(3, 12, 11);
  TrainConfig cfg = fast_config(spec, 1, 4);
  const auto [params, record] = train<float>(cfg, set);

  const auto a = sonovote::evaluate(params, spec, set);
  const auto b = sonovote::evaluate(params, spec, set);
  REQUIRE(a.size() == set.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].sample_id == set[i].sample_id);
    CHECK(a[i].truth == set[i].label);
    for (int c = 0; c < 3; ++c) {
      REQUIRE(a[i].prediction.probabilities[c] ==
              b[i].prediction.probabilities[c]);
    }
    double total = 0;
    for (int c = 0; c < 3; ++c) total += a[i].prediction.probabilities[c];
    CHECK(total == Catch::Approx(1.0).margin(1e-9));
  }
  CHECK_THROWS(sonovote::evaluate(params, spec, {}));
}

TEST_CASE("replace_head keeps features and redraws the classifier",
          "[trainer]") {
  const ModelSpec spec = tiny_spec();
  const auto set = toy_set(4, 12, 13);
  TrainConfig cfg = fast_config(spec, 2, 4);
  const auto [trained, record] = train<float>(cfg, set);

  const auto swapped = sonovote::replace_head(trained, spec, 555);
  for (const auto& [name, t] : trained.tensors) {
    const auto& u = swapped.tensors.at(name);
    if (name.rfind("head.", 0) == 0) continue;
    for (std::size_t i = 0; i < t.numel(); ++i) REQUIRE(t[i] == u[i]);
  }
  // The head comes from the fresh draw, not the checkpoint.
  const auto fresh = sonovote::build<float>(spec, 555);
  const auto& new_head = swapped.tensors.at("head.out.weight");
  const auto& ref_head = fresh.tensors.at("head.out.weight");
  for (std::size_t i = 0; i < new_head.numel(); ++i) {
    REQUIRE(new_head[i] == ref_head[i]);
  }
  CHECK(swapped.frozen.empty());
}

TEST_CASE("frozen features stay fixed while the head trains", "[trainer]") {
  const ModelSpec spec = tiny_spec();
  const auto set = toy_set(4, 12, 17);
  TrainConfig cfg = fast_config(spec, 2, 4);
  const auto [trained, r0] = train<float>(cfg, set);

  const auto frozen = sonovote::replace_head(trained, spec, 556, true);
  CHECK_FALSE(frozen.frozen.empty());

  // Retrain starting from the frozen parameters via the optimizer directly:
  // a full epoch of steps must leave every frozen tensor untouched.
  auto params = frozen;
  auto opt_state = sonovote::init_optimizer_state(params, cfg.optimizer);
  std::vector<const LabeledImage*> ptrs;
  for (const auto& img : set) ptrs.push_back(&img);
  const auto batch = sonovote::make_batch<float>(ptrs, spec);
  std::vector<ClassLabel> labels;
  for (const auto& img : set) labels.push_back(img.label);
  for (int step = 0; step < 3; ++step) {
    const auto [logits, cache] = sonovote::forward(params, spec, batch);
    const auto [loss, grad] = sonovote::cross_entropy(logits, labels);
    const auto grads = sonovote::backward(params, cache, grad);
    sonovote::optimizer_step(params, grads, opt_state, cfg.optimizer);
  }
  bool head_moved = false;
  for (const auto& [name, t] : frozen.tensors) {
    const auto& u = params.tensors.at(name);
    if (name.rfind("head.", 0) == 0) {
      for (std::size_t i = 0; i < t.numel(); ++i) {
        head_moved |= (t[i] != u[i]);
      }
    } else {
      for (std::size_t i = 0; i < t.numel(); ++i) REQUIRE(t[i] == u[i]);
    }
  }
  CHECK(head_moved);
}

TEST_CASE("mismatched checkpoint graphs are rejected", "[trainer]") {
  const ModelSpec spec = tiny_spec();
  const auto params = sonovote::build<float>(spec, 1);
  ModelSpec other = spec;
  other.stage_widths = {6};
  CHECK_THROWS(sonovote::replace_head(params, other, 1));
}

TEST_CASE("training validates its configuration", "[trainer]") {
  const ModelSpec spec = tiny_spec();
  const auto set = toy_set(2, 12, 19);
  TrainConfig cfg = fast_config(spec, 0, 4);
  CHECK_THROWS(train<float>(cfg, set));
  cfg = fast_config(spec, 1, 0);
  CHECK_THROWS(train<float>(cfg, set));
  cfg = fast_config(spec, 1, 4);
  CHECK_THROWS(train<float>(cfg, {}));
}

TEST_CASE("train record JSON carries the epoch trace", "[trainer]") {
  TrainRecord rec;
  rec.epochs.push_back({0, 1.5, 0.25});
  rec.epochs.push_back({1, 0.75, 0.5});
  rec.optimizer_steps = 42;
  rec.wall_seconds = 1.25;
  rec.checkpoint = "x/checkpoint.bin";
  const auto j = sonovote::train_record_to_json(rec);
  CHECK(j.at("optimizer_steps") == 42);
  CHECK(j.at("epochs").size() == 2);
  CHECK(j.at("epochs")[1].at("mean_loss") == 0.75);
  CHECK(j.at("checkpoint") == "x/checkpoint.bin");
}

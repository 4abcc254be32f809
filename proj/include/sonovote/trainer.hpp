#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sonovote/augment.hpp"
#include "sonovote/image.hpp"
#include "sonovote/model.hpp"
#include "sonovote/optim.hpp"
#include "sonovote/rng.hpp"

namespace sonovote {

struct TrainConfig {
  int epochs = 15;
  int batch_size = 8;
  OptimizerConfig optimizer;
  AugmentPolicy augment;
  std::uint64_t seed = 0;
  ModelSpec spec;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0;
  double accuracy = 0;
};

struct TrainRecord {
  std::vector<EpochStats> epochs;
  std::int64_t optimizer_steps = 0;
  double wall_seconds = 0;
  std::string checkpoint;  // filled in by the caller once saved
};

inline nlohmann::json train_record_to_json(const TrainRecord& rec) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : rec.epochs) {
    epochs.push_back(nlohmann::json{{"epoch", e.epoch},
                                    {"mean_loss", e.mean_loss},
                                    {"accuracy", e.accuracy}});
  }
  return nlohmann::json{{"epochs", std::move(epochs)},
                        {"optimizer_steps", rec.optimizer_steps},
                        {"wall_seconds", rec.wall_seconds},
                        {"checkpoint", rec.checkpoint}};
}

namespace detail {
inline constexpr std::uint64_t kShuffleTag = 0x45504f4348ull;  // per-epoch
}

// Trains one model on one fold's training images. Each epoch visits every
// sample once in a freshly shuffled order that depends only on (seed,
// epoch); augmentation is sampled by a per-position draw index, so the whole
// run is a pure function of its config. Images are augmented at their
// stored resolution and then resized to the network input.
template <class T>
std::pair<Parameters<T>, TrainRecord> train(
    const TrainConfig& cfg, const std::vector<LabeledImage>& train_set) {
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (train_set.empty()) throw std::invalid_argument("empty training set");
  validate(cfg.optimizer);
  validate(cfg.augment);

  const auto t0 = std::chrono::steady_clock::now();
  Parameters<T> params = build<T>(cfg.spec, cfg.seed);
  OptimizerState<T> state = init_optimizer_state(params, cfg.optimizer);
  TrainRecord record;

  const std::size_t n = train_set.size();
  const std::size_t batches =
      (n + cfg.batch_size - 1) / static_cast<std::size_t>(cfg.batch_size);

  std::vector<std::size_t> order(n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    DetRng shuffle_rng(mix_seed(cfg.seed, detail::kShuffleTag,
                                static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double loss_sum = 0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t end = std::min(begin + cfg.batch_size, n);

      std::vector<LabeledImage> augmented;
      std::vector<const LabeledImage*> items;
      std::vector<ClassLabel> labels;
      augmented.reserve(end - begin);
      for (std::size_t pos = begin; pos < end; ++pos) {
        const LabeledImage& sample = train_set[order[pos]];
        const std::uint64_t draw_index =
            (static_cast<std::uint64_t>(epoch) * batches + b) * cfg.batch_size +
            (pos - begin);
        augmented.push_back(
            apply(sample, sample_transform(cfg.augment, draw_index)));
        labels.push_back(sample.label);
      }
      for (const auto& img : augmented) items.push_back(&img);

      const Tensor<T> batch = make_batch<T>(items, cfg.spec);
      const auto [logits, cache] = forward(params, cfg.spec, batch);
      const auto [loss, loss_grad] = cross_entropy(logits, labels);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("non-finite training loss at epoch " +
                                 std::to_string(epoch) + ", batch " +
                                 std::to_string(b));
      }
      loss_sum += loss * static_cast<double>(end - begin);
      for (std::size_t row = 0; row < labels.size(); ++row) {
        const T* lrow = logits.data() + row * cfg.spec.num_classes;
        int best = 0;
        for (int c = 1; c < cfg.spec.num_classes; ++c) {
          if (lrow[c] > lrow[best]) best = c;
        }
        correct += label_from_index(best) == labels[row];
      }

      const auto grads = backward(params, cache, loss_grad);
      optimizer_step(params, grads, state, cfg.optimizer);
    }
    record.epochs.push_back({epoch, loss_sum / static_cast<double>(n),
                             static_cast<double>(correct) /
                                 static_cast<double>(n)});
  }
  record.optimizer_steps = state.step_count;
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return {std::move(params), std::move(record)};
}

// Copies the feature extractor out of a checkpoint and re-draws the
// classifier head from `seed`; with freeze_features the copied tensors are
// marked non-trainable so later training only moves the head.
template <class T>
Parameters<T> replace_head(const Parameters<T>& checkpoint,
                           const ModelSpec& spec, std::uint64_t seed,
                           bool freeze_features = false) {
  Parameters<T> fresh = build<T>(spec, seed);
  if (checkpoint.tensors.size() != fresh.tensors.size()) {
    throw std::invalid_argument("checkpoint does not match the model graph");
  }
  for (auto& [name, tensor] : fresh.tensors) {
    const auto it = checkpoint.tensors.find(name);
    if (it == checkpoint.tensors.end() ||
        !it->second.same_shape(tensor)) {
      throw std::invalid_argument(
          "checkpoint does not match the model graph at tensor: " + name);
    }
    if (name.rfind("head.", 0) == 0) continue;  // freshly drawn
    tensor = it->second;
    if (freeze_features) fresh.frozen.insert(name);
  }
  return fresh;
}

// Straight inference over the test fold, in order, without touching the
// augmentation stream.
template <class T>
std::vector<EvalItem> evaluate(const Parameters<T>& params,
                               const ModelSpec& spec,
                               const std::vector<LabeledImage>& test_set) {
  if (test_set.empty()) throw std::invalid_argument("empty test set");
  std::vector<EvalItem> results;
  results.reserve(test_set.size());
  constexpr std::size_t kChunk = 32;
  for (std::size_t begin = 0; begin < test_set.size(); begin += kChunk) {
    const std::size_t end = std::min(begin + kChunk, test_set.size());
    std::vector<const LabeledImage*> items;
    items.reserve(end - begin);
    for (std::size_t i = begin; i < end; ++i) items.push_back(&test_set[i]);
    const Tensor<T> batch = make_batch<T>(items, spec);
    const auto [logits, cache] = forward(params, spec, batch);
    for (std::size_t row = 0; row < items.size(); ++row) {
      EvalItem item;
      item.sample_id = items[row]->sample_id;
      item.truth = items[row]->label;
      softmax_row(logits.data() + row * spec.num_classes,
                  static_cast<std::size_t>(spec.num_classes),
                  item.prediction.probabilities.data());
      item.prediction.predicted = argmax_label(item.prediction.probabilities);
      results.push_back(std::move(item));
    }
  }
  return results;
}

inline void write_train_record(const std::filesystem::path& path,
                               const TrainRecord& rec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << train_record_to_json(rec).dump(2) << '\n';
}

}  // namespace sonovote

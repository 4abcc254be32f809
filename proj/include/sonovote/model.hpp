#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sonovote/image.hpp"
#include "sonovote/label.hpp"
#include "sonovote/layers.hpp"
#include "sonovote/rng.hpp"
#include "sonovote/tensor.hpp"

namespace sonovote {

enum class Family { plain_stack, residual, inception_lite };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::plain_stack: return "plain_stack";
    case Family::residual: return "residual";
    case Family::inception_lite: return "inception_lite";
  }
  return "?";
}

inline Family parse_family(const std::string& name) {
  if (name == "plain_stack") return Family::plain_stack;
  if (name == "residual") return Family::residual;
  if (name == "inception_lite") return Family::inception_lite;
  throw std::invalid_argument("unknown model family: " + name);
}

struct HeadSpec {
  int hidden = 0;  // 0 = single linear classifier on pooled features
};

struct ModelSpec {
  Family family = Family::plain_stack;
  std::pair<int, int> input_hw{64, 64};
  int input_channels = 1;
  std::vector<int> stage_widths{8, 16};
  int num_classes = kNumClasses;
  HeadSpec head;
};

inline void validate_spec(const ModelSpec& spec) {
  if (spec.stage_widths.empty()) {
    throw std::invalid_argument("model needs at least one stage");
  }
  for (int w : spec.stage_widths) {
    if (w < 1) throw std::invalid_argument("stage width must be positive");
    if (spec.family == Family::inception_lite && w % 2 != 0) {
      throw std::invalid_argument(
          "inception_lite stage widths must be even (two equal branches)");
    }
  }
  if (spec.num_classes != kNumClasses) {
    throw std::invalid_argument("num_classes must be " +
                                std::to_string(kNumClasses));
  }
  if (spec.input_channels != 1 && spec.input_channels != 3) {
    throw std::invalid_argument("input_channels must be 1 or 3");
  }
  if (spec.head.hidden < 0) {
    throw std::invalid_argument("head hidden units must be >= 0");
  }
  // Every stage ends in a 2x2 pool, so the input must survive that many
  // halvings with at least one pixel left.
  int min_side = 1;
  for (std::size_t i = 0; i < spec.stage_widths.size(); ++i) min_side *= 2;
  if (spec.input_hw.first < min_side || spec.input_hw.second < min_side) {
    throw std::invalid_argument("input " + std::to_string(spec.input_hw.first) +
                                "x" + std::to_string(spec.input_hw.second) +
                                " too small for " +
                                std::to_string(spec.stage_widths.size()) +
                                " pooling stages");
  }
}

inline nlohmann::json model_spec_to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["family"] = family_name(spec.family);
  j["input_hw"] = nlohmann::json::array({spec.input_hw.first, spec.input_hw.second});
  j["input_channels"] = spec.input_channels;
  j["stage_widths"] = spec.stage_widths;
  j["num_classes"] = spec.num_classes;
  j["head"] = nlohmann::json{{"hidden", spec.head.hidden}};
  return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.family = parse_family(j.at("family").get<std::string>());
  spec.input_hw = {j.at("input_hw").at(0).get<int>(),
                   j.at("input_hw").at(1).get<int>()};
  spec.input_channels = j.at("input_channels").get<int>();
  spec.stage_widths = j.at("stage_widths").get<std::vector<int>>();
  spec.num_classes = j.at("num_classes").get<int>();
  if (j.contains("head")) spec.head.hidden = j.at("head").value("hidden", 0);
  validate_spec(spec);
  return spec;
}

// ---------------------------------------------------------------------------
// Computation graph. Each family lowers to a flat node list evaluated in
// order; node 0 is the input placeholder and the last node emits logits.

enum class OpKind { input, conv, relu, pool, gap, dense, add, concat };

struct GraphNode {
  OpKind kind = OpKind::input;
  int in0 = -1;
  int in1 = -1;
  std::string param;  // name prefix for conv/dense nodes
  int kernel = 0;
  int stride = 1;
  int pad = 0;
  std::size_t in_units = 0;   // conv: input channels; dense: input width
  std::size_t out_units = 0;  // conv: output channels; dense: output width
  bool zero_init = false;
};

inline std::string node_desc(const GraphNode& node) {
  switch (node.kind) {
    case OpKind::input: return "input";
    case OpKind::conv: return "conv '" + node.param + "'";
    case OpKind::relu: return "relu";
    case OpKind::pool: return "maxpool";
    case OpKind::gap: return "global-average-pool";
    case OpKind::dense: return "dense '" + node.param + "'";
    case OpKind::add: return "add";
    case OpKind::concat: return "concat";
  }
  return "?";
}

inline std::vector<GraphNode> build_graph(const ModelSpec& spec) {
  validate_spec(spec);
  std::vector<GraphNode> g;
  auto push = [&](GraphNode n) {
    g.push_back(std::move(n));
    return static_cast<int>(g.size()) - 1;
  };
  int cur = push({});  // input
  std::size_t ch = static_cast<std::size_t>(spec.input_channels);

  auto conv = [&](int from, std::size_t width, int kernel, std::string name,
                  bool zero = false) {
    GraphNode n;
    n.kind = OpKind::conv;
    n.in0 = from;
    n.param = std::move(name);
    n.kernel = kernel;
    n.stride = 1;
    n.pad = kernel / 2;  // odd kernels keep spatial size
    n.in_units = ch;
    n.out_units = width;
    n.zero_init = zero;
    int id = push(std::move(n));
    ch = width;
    return id;
  };
  auto relu = [&](int from) {
    GraphNode n;
    n.kind = OpKind::relu;
    n.in0 = from;
    return push(std::move(n));
  };
  auto pool = [&](int from) {
    GraphNode n;
    n.kind = OpKind::pool;
    n.in0 = from;
    return push(std::move(n));
  };

  switch (spec.family) {
    case Family::plain_stack:
      for (std::size_t i = 0; i < spec.stage_widths.size(); ++i) {
        cur = conv(cur, spec.stage_widths[i], 3,
                   "features.s" + std::to_string(i) + ".conv");
        cur = relu(cur);
        cur = pool(cur);
      }
      break;
    case Family::residual: {
      cur = conv(cur, spec.stage_widths[0], 3, "features.stem");
      cur = relu(cur);
      for (std::size_t i = 0; i < spec.stage_widths.size(); ++i) {
        const std::string base = "features.s" + std::to_string(i);
        if (i > 0) {
          cur = conv(cur, spec.stage_widths[i], 3, base + ".entry");
          cur = relu(cur);
        }
        // Zero-initializing c2 makes the block start as the identity map:
        // the skip input is post-relu, so the trailing relu passes it
        // through unchanged.
        const int skip = cur;
        cur = conv(cur, spec.stage_widths[i], 3, base + ".block.c1");
        cur = relu(cur);
        cur = conv(cur, spec.stage_widths[i], 3, base + ".block.c2", true);
        GraphNode n;
        n.kind = OpKind::add;
        n.in0 = cur;
        n.in1 = skip;
        cur = push(std::move(n));
        cur = relu(cur);
        cur = pool(cur);
      }
      break;
    }
    case Family::inception_lite:
      for (std::size_t i = 0; i < spec.stage_widths.size(); ++i) {
        const std::string base = "features.s" + std::to_string(i);
        const std::size_t half = spec.stage_widths[i] / 2;
        const std::size_t entry_ch = ch;
        const int b1 = conv(cur, half, 1, base + ".b1x1");
        ch = entry_ch;
        const int b3 = conv(cur, half, 3, base + ".b3x3");
        GraphNode n;
        n.kind = OpKind::concat;
        n.in0 = b1;
        n.in1 = b3;
        cur = push(std::move(n));
        ch = 2 * half;
        cur = relu(cur);
        cur = pool(cur);
      }
      break;
  }

  {
    GraphNode n;
    n.kind = OpKind::gap;
    n.in0 = cur;
    cur = push(std::move(n));
  }
  auto dense = [&](int from, std::size_t out, std::string name) {
    GraphNode n;
    n.kind = OpKind::dense;
    n.in0 = from;
    n.param = std::move(name);
    n.in_units = ch;
    n.out_units = out;
    int id = push(std::move(n));
    ch = out;
    return id;
  };
  if (spec.head.hidden > 0) {
    cur = dense(cur, spec.head.hidden, "head.fc");
    cur = relu(cur);
  }
  cur = dense(cur, spec.num_classes, "head.out");
  return g;
}

// ---------------------------------------------------------------------------
// Parameters and initialization.

template <class T>
struct Parameters {
  std::map<std::string, Tensor<T>> tensors;
  std::uint64_t init_seed = 0;
  std::set<std::string> frozen;
};

using Gradients64 = std::map<std::string, Tensor<double>>;

// Weights draw from U(-L, L) with L = sqrt(6 / fan_in); biases start at 0.
// Each tensor gets its own stream keyed by name, so initialization does not
// depend on graph traversal order and head tensors can be re-drawn alone.
template <class T>
Parameters<T> build(const ModelSpec& spec, std::uint64_t seed) {
  const auto graph = build_graph(spec);
  Parameters<T> params;
  params.init_seed = seed;
  for (const auto& node : graph) {
    if (node.kind != OpKind::conv && node.kind != OpKind::dense) continue;
    std::vector<std::size_t> wshape;
    std::size_t fan_in = 0;
    if (node.kind == OpKind::conv) {
      const auto k = static_cast<std::size_t>(node.kernel);
      wshape = {node.out_units, node.in_units, k, k};
      fan_in = node.in_units * k * k;
    } else {
      wshape = {node.out_units, node.in_units};
      fan_in = node.in_units;
    }
    Tensor<T> weight(wshape);
    Tensor<T> bias({node.out_units});
    if (!node.zero_init) {
      const std::string wname = node.param + ".weight";
      DetRng rng(mix_seed(seed, fnv1a(wname)));
      const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::size_t i = 0; i < weight.numel(); ++i) {
        weight.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
      }
    }
    params.tensors.emplace(node.param + ".weight", std::move(weight));
    params.tensors.emplace(node.param + ".bias", std::move(bias));
  }
  return params;
}

template <class T>
std::size_t parameter_count(const Parameters<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, tensor] : params.tensors) n += tensor.numel();
  return n;
}

// ---------------------------------------------------------------------------
// Forward / backward.

template <class T>
struct ForwardCache {
  ModelSpec spec;
  std::vector<GraphNode> graph;
  std::vector<Tensor<T>> outs;
  std::map<int, std::vector<std::size_t>> pool_argmax;
  std::map<std::string, std::vector<std::size_t>> param_shapes;
};

template <class T>
const Tensor<T>& param_tensor(const Parameters<T>& params,
                              const std::string& name) {
  const auto it = params.tensors.find(name);
  if (it == params.tensors.end()) {
    throw std::runtime_error("missing parameter tensor: " + name);
  }
  return it->second;
}

template <class T>
std::pair<Tensor<T>, ForwardCache<T>> forward(const Parameters<T>& params,
                                              const ModelSpec& spec,
                                              const Tensor<T>& batch) {
  validate_spec(spec);
  const auto expect_c = static_cast<std::size_t>(spec.input_channels);
  const auto expect_h = static_cast<std::size_t>(spec.input_hw.first);
  const auto expect_w = static_cast<std::size_t>(spec.input_hw.second);
  if (batch.rank() != 4 || batch.shape()[1] != expect_c ||
      batch.shape()[2] != expect_h || batch.shape()[3] != expect_w) {
    throw std::invalid_argument("input: batch shape " + batch.shape_str() +
                                " does not match spec (n," +
                                std::to_string(expect_c) + "," +
                                std::to_string(expect_h) + "," +
                                std::to_string(expect_w) + ")");
  }

  ForwardCache<T> cache;
  cache.spec = spec;
  cache.graph = build_graph(spec);
  cache.outs.reserve(cache.graph.size());
  cache.outs.push_back(batch);

  for (std::size_t id = 1; id < cache.graph.size(); ++id) {
    const GraphNode& node = cache.graph[id];
    const Tensor<T>& a = cache.outs[node.in0];
    try {
      switch (node.kind) {
        case OpKind::conv: {
          const auto& w = param_tensor(params, node.param + ".weight");
          const auto& b = param_tensor(params, node.param + ".bias");
          cache.param_shapes[node.param + ".weight"] = w.shape();
          cache.param_shapes[node.param + ".bias"] = b.shape();
          cache.outs.push_back(conv_forward(a, w, b, node.stride, node.pad));
          break;
        }
        case OpKind::relu:
          cache.outs.push_back(relu_forward(a));
          break;
        case OpKind::pool: {
          std::vector<std::size_t> argmax;
          cache.outs.push_back(maxpool_forward(a, argmax));
          cache.pool_argmax[static_cast<int>(id)] = std::move(argmax);
          break;
        }
        case OpKind::gap:
          cache.outs.push_back(gap_forward(a));
          break;
        case OpKind::dense: {
          const auto& w = param_tensor(params, node.param + ".weight");
          const auto& b = param_tensor(params, node.param + ".bias");
          cache.param_shapes[node.param + ".weight"] = w.shape();
          cache.param_shapes[node.param + ".bias"] = b.shape();
          cache.outs.push_back(dense_forward(a, w, b));
          break;
        }
        case OpKind::add:
          cache.outs.push_back(add_forward(a, cache.outs[node.in1]));
          break;
        case OpKind::concat:
          cache.outs.push_back(
              concat_channels_forward(a, cache.outs[node.in1]));
          break;
        case OpKind::input:
          throw std::logic_error("input node past position 0");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(node_desc(node) + ": " + e.what());
    }
  }
  return {cache.outs.back(), cache};
}

template <class T>
std::map<std::string, Tensor<T>> backward(const Parameters<T>& params,
                                          const ForwardCache<T>& cache,
                                          const Tensor<T>& loss_grad) {
  if (cache.outs.empty() || cache.graph.empty()) {
    throw std::invalid_argument("cache was not produced by forward");
  }
  if (!loss_grad.same_shape(cache.outs.back())) {
    throw std::invalid_argument("loss gradient shape " + loss_grad.shape_str() +
                                " does not match logits " +
                                cache.outs.back().shape_str());
  }
  for (const auto& [name, shape] : cache.param_shapes) {
    if (param_tensor(params, name).shape() != shape) {
      throw std::invalid_argument(
          "stale cache: parameter '" + name + "' changed shape");
    }
  }

  std::map<std::string, Tensor<T>> grads;
  for (const auto& [name, tensor] : params.tensors) {
    grads.emplace(name, Tensor<T>(tensor.shape()));
  }
  std::vector<Tensor<T>> node_grads;
  node_grads.reserve(cache.outs.size());
  for (const auto& out : cache.outs) node_grads.emplace_back(out.shape());
  node_grads.back() = loss_grad;

  for (std::size_t id = cache.graph.size(); id-- > 1;) {
    const GraphNode& node = cache.graph[id];
    const Tensor<T>& gout = node_grads[id];
    const Tensor<T>& a = cache.outs[node.in0];
    Tensor<T>& ga = node_grads[node.in0];
    switch (node.kind) {
      case OpKind::conv:
        conv_backward(a, param_tensor(params, node.param + ".weight"), gout,
                      node.stride, node.pad, ga,
                      grads.at(node.param + ".weight"),
                      grads.at(node.param + ".bias"));
        break;
      case OpKind::relu:
        relu_backward(a, gout, ga);
        break;
      case OpKind::pool:
        maxpool_backward(cache.pool_argmax.at(static_cast<int>(id)), gout, ga);
        break;
      case OpKind::gap:
        gap_backward(a, gout, ga);
        break;
      case OpKind::dense:
        dense_backward(a, param_tensor(params, node.param + ".weight"), gout,
                       ga, grads.at(node.param + ".weight"),
                       grads.at(node.param + ".bias"));
        break;
      case OpKind::add:
        for (std::size_t i = 0; i < gout.numel(); ++i) {
          ga.data()[i] += gout.data()[i];
          node_grads[node.in1].data()[i] += gout.data()[i];
        }
        break;
      case OpKind::concat:
        concat_channels_backward(gout, ga, node_grads[node.in1]);
        break;
      case OpKind::input:
        break;
    }
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Loss and inference.

template <class T>
void softmax_row(const T* logits, std::size_t n, double* probs) {
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, double(logits[i]));
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(double(logits[i]) - mx);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < n; ++i) probs[i] /= sum;
}

// Mean softmax cross-entropy; gradient is (softmax - onehot) / n.
template <class T>
std::pair<double, Tensor<T>> cross_entropy(const Tensor<T>& logits,
                                           const std::vector<ClassLabel>& labels) {
  const std::size_t n = logits.shape()[0], c = logits.shape()[1];
  if (labels.size() != n) {
    throw std::invalid_argument("label count does not match logit rows");
  }
  Tensor<T> grad(logits.shape());
  std::vector<double> probs(c);
  double loss = 0;
  for (std::size_t s = 0; s < n; ++s) {
    const T* row = logits.data() + s * c;
    softmax_row(row, c, probs.data());
    const auto truth = static_cast<std::size_t>(label_index(labels[s]));
    loss -= std::log(std::max(probs[truth], 1e-300));
    for (std::size_t j = 0; j < c; ++j) {
      grad.data()[s * c + j] =
          static_cast<T>((probs[j] - (j == truth ? 1.0 : 0.0)) / double(n));
    }
  }
  return {loss / double(n), std::move(grad)};
}

struct Prediction {
  std::array<double, kNumClasses> probabilities{};
  ClassLabel predicted = ClassLabel::normal;
};

// One evaluated test sample: what the model said and what was true.
struct EvalItem {
  std::string sample_id;
  Prediction prediction;
  ClassLabel truth = ClassLabel::normal;
};

inline ClassLabel argmax_label(const std::array<double, kNumClasses>& probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i) {
    if (probs[i] > probs[best]) best = i;
  }
  return label_from_index(static_cast<int>(best));
}

template <class T>
Tensor<T> make_batch(const std::vector<const LabeledImage*>& items,
                     const ModelSpec& spec) {
  const auto c = static_cast<std::size_t>(spec.input_channels);
  const auto h = static_cast<std::size_t>(spec.input_hw.first);
  const auto w = static_cast<std::size_t>(spec.input_hw.second);
  Tensor<T> batch({items.size(), c, h, w});
  for (std::size_t s = 0; s < items.size(); ++s) {
    const Image& img = items[s]->image;
    const bool fits = img.height == h && img.width == w && img.channels == c;
    const Image resized = fits ? img : resize(img, h, w, c);
    T* dst = batch.data() + s * c * h * w;
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          dst[(ch * h + y) * w + x] = static_cast<T>(resized.at(y, x, ch));
        }
      }
    }
  }
  return batch;
}

template <class T>
Prediction predict(const Parameters<T>& params, const ModelSpec& spec,
                   const LabeledImage& img) {
  const LabeledImage* one[] = {&img};
  const Tensor<T> batch =
      make_batch<T>(std::vector<const LabeledImage*>(one, one + 1), spec);
  const auto [logits, cache] = forward(params, spec, batch);
  Prediction p;
  softmax_row(logits.data(), static_cast<std::size_t>(spec.num_classes),
              p.probabilities.data());
  p.predicted = argmax_label(p.probabilities);
  return p;
}

}  // namespace sonovote

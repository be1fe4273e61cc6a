/*
 * Copyright 2026 The Tailcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// The forecasting network.
//
// A shared recurrent encoder (bidirectional LSTM by default) turns a
// w x |M| window of normalized metrics into an encoding h. Each QoS metric
// has two heads on top of h:
//
//   * a mixture density head emitting C Gaussian components (alpha, mu,
//     sigma) for the metric's value gamma minutes ahead, trained with
//     negative log-likelihood;
//   * a classifier head emitting the probability of an extreme event,
//     trained with extreme value loss (or plain BCE for comparison).
//
// The two are trained jointly; at inference only the mixture is used.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tailcast/autodiff.hpp"
#include "tailcast/error.hpp"
#include "tailcast/rng.hpp"

namespace tailcast {

inline constexpr double kSigmaFloor = 1e-4;
inline constexpr double kProbClamp = 1e-7;

enum class EncoderKind { kBiLstm, kLstm };
enum class ClassifierLoss { kEvl, kBce };
// Which losses drive training. kMdnOnly is the multitask loss with lambda
// forced to 0; kClassifierOnly drops the likelihood term.
enum class TaskMode { kMultitask, kMdnOnly, kClassifierOnly };
enum class Mode { kTrain, kEval };

inline std::string_view encoder_name(EncoderKind e) { return e == EncoderKind::kBiLstm ? "bilstm" : "lstm"; }
inline std::string_view loss_name(ClassifierLoss l) { return l == ClassifierLoss::kEvl ? "evl" : "bce"; }
inline std::string_view task_name(TaskMode t) {
  switch (t) {
    case TaskMode::kMultitask: return "multitask";
    case TaskMode::kMdnOnly: return "mdn_only";
    case TaskMode::kClassifierOnly: return "classifier_only";
  }
  return "multitask";
}

inline EncoderKind parse_encoder(std::string_view s) {
  if (s == "bilstm") return EncoderKind::kBiLstm;
  if (s == "lstm") return EncoderKind::kLstm;
  fail(ErrorCode::kInvalidConfig, "encoder must be bilstm or lstm, got '" + std::string(s) + "'");
}

inline ClassifierLoss parse_loss(std::string_view s) {
  if (s == "evl") return ClassifierLoss::kEvl;
  if (s == "bce") return ClassifierLoss::kBce;
  fail(ErrorCode::kInvalidConfig, "loss must be evl or bce, got '" + std::string(s) + "'");
}

inline TaskMode parse_task(std::string_view s) {
  if (s == "multitask") return TaskMode::kMultitask;
  if (s == "mdn_only") return TaskMode::kMdnOnly;
  if (s == "classifier_only") return TaskMode::kClassifierOnly;
  fail(ErrorCode::kInvalidConfig, "task must be multitask, mdn_only or classifier_only, got '" + std::string(s) + "'");
}

struct ModelConfig {
  std::size_t n_metrics = 0;
  std::vector<std::string> qos;
  std::size_t window = 60;
  std::size_t gamma = 10;
  EncoderKind encoder = EncoderKind::kBiLstm;
  std::size_t hidden_per_direction = 64;
  double dropout = 0.2;
  std::size_t components = 3;
  std::vector<std::size_t> mdn_hidden{200, 200};
  std::vector<std::size_t> clf_hidden{20};
  ClassifierLoss loss = ClassifierLoss::kEvl;
  double delta = 2.0;
  double lambda = 1.0;
  TaskMode task = TaskMode::kMultitask;
  std::uint64_t seed = 0;

  std::size_t encoding_width() const {
    return encoder == EncoderKind::kBiLstm ? 2 * hidden_per_direction : hidden_per_direction;
  }

  void validate() const {
    require(n_metrics >= 1, ErrorCode::kInvalidConfig, "n_metrics must be >= 1");
    require(!qos.empty(), ErrorCode::kInvalidConfig, "at least one QoS metric is required");
    require(window >= 1, ErrorCode::kInvalidConfig, "window must be >= 1");
    require(gamma >= 1, ErrorCode::kInvalidConfig, "gamma must be >= 1");
    require(hidden_per_direction >= 1, ErrorCode::kInvalidConfig, "hidden_per_direction must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::kInvalidConfig, "dropout must lie in [0, 1)");
    require(components >= 1, ErrorCode::kInvalidConfig, "components must be >= 1");
    require(delta > 1.0, ErrorCode::kInvalidConfig, "delta must exceed 1");
    require(loss != ClassifierLoss::kEvl || delta >= 2.0, ErrorCode::kInvalidConfig, "EVL needs delta >= 2");
    require(lambda >= 0.0, ErrorCode::kInvalidConfig, "lambda must be >= 0");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"n_metrics", c.n_metrics},
          {"qos", c.qos},
          {"window", c.window},
          {"gamma", c.gamma},
          {"encoder", encoder_name(c.encoder)},
          {"hidden_per_direction", c.hidden_per_direction},
          {"dropout", c.dropout},
          {"components", c.components},
          {"mdn_hidden", c.mdn_hidden},
          {"clf_hidden", c.clf_hidden},
          {"loss", loss_name(c.loss)},
          {"delta", c.delta},
          {"lambda", c.lambda},
          {"task", task_name(c.task)},
          {"seed", c.seed}};
}

// Missing keys keep the defaults in `base`.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  try {
    base.n_metrics = j.value("n_metrics", base.n_metrics);
    if (j.contains("qos")) base.qos = j["qos"].get<std::vector<std::string>>();
    base.window = j.value("window", base.window);
    base.gamma = j.value("gamma", base.gamma);
    if (j.contains("encoder")) base.encoder = parse_encoder(j["encoder"].get<std::string>());
    base.hidden_per_direction = j.value("hidden_per_direction", base.hidden_per_direction);
    base.dropout = j.value("dropout", base.dropout);
    base.components = j.value("components", base.components);
    if (j.contains("mdn_hidden")) base.mdn_hidden = j["mdn_hidden"].get<std::vector<std::size_t>>();
    if (j.contains("clf_hidden")) base.clf_hidden = j["clf_hidden"].get<std::vector<std::size_t>>();
    if (j.contains("loss")) base.loss = parse_loss(j["loss"].get<std::string>());
    base.delta = j.value("delta", base.delta);
    base.lambda = j.value("lambda", base.lambda);
    if (j.contains("task")) base.task = parse_task(j["task"].get<std::string>());
    base.seed = j.value("seed", base.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("model config: ") + e.what());
  }
  return base;
}

// ---------------------------------------------------------------------------
// Parameters.

struct LstmParams {
  ad::Tensor wx;  // |M| x 4H, gate order i, f, g, o
  ad::Tensor wh;  // H x 4H
  ad::Tensor b;   // 1 x 4H
};

struct DenseParams {
  ad::Tensor w;
  ad::Tensor b;
};

struct ModelParams {
  LstmParams forward;
  LstmParams backward;  // empty for the unidirectional encoder
  std::vector<std::vector<DenseParams>> mdn;  // per QoS metric
  std::vector<std::vector<DenseParams>> clf;  // per QoS metric

  // Stable, deterministic order; names are the checkpoint keys.
  std::vector<std::pair<std::string, ad::Tensor*>> named() {
    std::vector<std::pair<std::string, ad::Tensor*>> out;
    auto lstm = [&out](const std::string& prefix, LstmParams& p) {
      if (p.wx.size() == 0) return;
      out.emplace_back(prefix + ".wx", &p.wx);
      out.emplace_back(prefix + ".wh", &p.wh);
      out.emplace_back(prefix + ".b", &p.b);
    };
    lstm("encoder.forward", forward);
    lstm("encoder.backward", backward);
    auto heads = [&out](const std::string& prefix, std::vector<std::vector<DenseParams>>& hs) {
      for (std::size_t y = 0; y < hs.size(); ++y) {
        for (std::size_t l = 0; l < hs[y].size(); ++l) {
          const std::string base = prefix + "." + std::to_string(y) + ".layer" + std::to_string(l);
          out.emplace_back(base + ".w", &hs[y][l].w);
          out.emplace_back(base + ".b", &hs[y][l].b);
        }
      }
    };
    heads("mdn", mdn);
    heads("clf", clf);
    return out;
  }

  std::vector<ad::Tensor*> tensors() {
    std::vector<ad::Tensor*> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* t : tensors()) n += t->size();
    return n;
  }

  void zero_grad() {
    for (auto* t : tensors()) t->zero_grad();
  }

  void set_requires_grad(bool on) {
    for (auto* t : tensors()) t->requires_grad = on;
  }

  bool operator==(const ModelParams& o) const {
    auto& a = const_cast<ModelParams&>(*this);
    auto& b = const_cast<ModelParams&>(o);
    auto na = a.named(), nb = b.named();
    if (na.size() != nb.size()) return false;
    for (std::size_t i = 0; i < na.size(); ++i) {
      if (na[i].first != nb[i].first || !(*na[i].second == *nb[i].second)) return false;
    }
    return true;
  }
};

namespace detail {

inline ad::Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  ad::Tensor t(in, out);
  for (double& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

inline LstmParams init_lstm(std::size_t inputs, std::size_t hidden, Rng& rng) {
  LstmParams p;
  p.wx = glorot(inputs, 4 * hidden, rng);
  p.wh = glorot(hidden, 4 * hidden, rng);
  p.b = ad::Tensor(1, 4 * hidden);
  // Forget gate starts open.
  for (std::size_t j = hidden; j < 2 * hidden; ++j) p.b[j] = 1.0;
  return p;
}

inline std::vector<DenseParams> init_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                                         Rng& rng) {
  std::vector<DenseParams> layers;
  std::size_t width = in;
  for (std::size_t h : hidden) {
    layers.push_back({glorot(width, h, rng), ad::Tensor(1, h)});
    width = h;
  }
  layers.push_back({glorot(width, out, rng), ad::Tensor(1, out)});
  return layers;
}

}  // namespace detail

inline ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  Rng enc = root.split(1);
  ModelParams p;
  p.forward = detail::init_lstm(cfg.n_metrics, cfg.hidden_per_direction, enc);
  if (cfg.encoder == EncoderKind::kBiLstm) p.backward = detail::init_lstm(cfg.n_metrics, cfg.hidden_per_direction, enc);
  for (std::size_t y = 0; y < cfg.qos.size(); ++y) {
    Rng head = root.split(100 + y);
    p.mdn.push_back(detail::init_mlp(cfg.encoding_width(), cfg.mdn_hidden, 3 * cfg.components, head));
    p.clf.push_back(detail::init_mlp(cfg.encoding_width(), cfg.clf_hidden, 1, head));
  }
  return p;
}

inline nlohmann::json params_to_json(ModelParams& p) {
  nlohmann::json j = nlohmann::json::object();
  for (auto& [name, t] : p.named()) j[name] = ad::tensor_to_json(*t);
  return j;
}

// Fills a parameter set shaped by `cfg` from its serialized form.
inline ModelParams params_from_json(const nlohmann::json& j, const ModelConfig& cfg) {
  ModelParams p = init_params(cfg);
  for (auto& [name, t] : p.named()) {
    if (!j.contains(name)) fail(ErrorCode::kCorruptFile, "checkpoint lacks parameter '" + name + "'");
    ad::Tensor loaded = ad::tensor_from_json(j[name]);
    if (!loaded.same_shape(*t)) fail(ErrorCode::kCorruptFile, "parameter '" + name + "' has the wrong shape");
    *t = std::move(loaded);
  }
  if (j.size() != p.named().size()) fail(ErrorCode::kCorruptFile, "checkpoint has unexpected parameters");
  return p;
}

// ---------------------------------------------------------------------------
// Graph construction.

struct BoundLstm {
  ad::Var wx, wh, b;
};

struct BoundParams {
  BoundLstm forward;
  BoundLstm backward;
  std::vector<std::vector<std::pair<ad::Var, ad::Var>>> mdn;
  std::vector<std::vector<std::pair<ad::Var, ad::Var>>> clf;
};

namespace detail {

template <typename Params, typename Leaf>
BoundParams bind_with(Params& p, Leaf leaf) {
  BoundParams b;
  b.forward = {leaf(p.forward.wx), leaf(p.forward.wh), leaf(p.forward.b)};
  if (p.backward.wx.size() > 0) b.backward = {leaf(p.backward.wx), leaf(p.backward.wh), leaf(p.backward.b)};
  auto heads = [&leaf](auto& hs) {
    std::vector<std::vector<std::pair<ad::Var, ad::Var>>> out;
    for (auto& layers : hs) {
      out.emplace_back();
      for (auto& l : layers) out.back().emplace_back(leaf(l.w), leaf(l.b));
    }
    return out;
  };
  b.mdn = heads(p.mdn);
  b.clf = heads(p.clf);
  return b;
}

}  // namespace detail

// Parameters enter the graph as gradient-tracking leaves.
inline BoundParams bind_trainable(ad::Graph& g, ModelParams& p) {
  return detail::bind_with(p, [&g](ad::Tensor& t) { return g.param(t); });
}

// Parameters enter the graph read-only.
inline BoundParams bind_frozen(ad::Graph& g, const ModelParams& p) {
  return detail::bind_with(p, [&g](const ad::Tensor& t) { return g.frozen(t); });
}

// Runs one LSTM direction over `steps` (each B x |M|) and returns the final
// hidden state (B x H).
inline ad::Var run_lstm(const BoundLstm& p, std::span<const ad::Var> steps, bool reverse, std::size_t hidden) {
  using namespace ad;
  Var h, c;
  const std::size_t n = steps.size();
  for (std::size_t k = 0; k < n; ++k) {
    const Var& x = steps[reverse ? n - 1 - k : k];
    Var z = add_row(matmul(x, p.wx), p.b);
    if (k > 0) z = z + matmul(h, p.wh);
    Var in_gate = sigmoid(slice_cols(z, 0, hidden));
    Var cand = tanh(slice_cols(z, 2 * hidden, hidden));
    Var out_gate = sigmoid(slice_cols(z, 3 * hidden, hidden));
    if (k == 0) {
      c = in_gate * cand;
    } else {
      Var forget = sigmoid(slice_cols(z, hidden, hidden));
      c = forget * c + in_gate * cand;
    }
    h = out_gate * tanh(c);
  }
  return h;
}

// Encodes a batch of windows. `steps[t]` holds row t of every window
// (B x |M|). Dropout is applied to the encoding in train mode only.
inline ad::Var encode(const ModelConfig& cfg, const BoundParams& p, std::span<const ad::Var> steps, Mode mode,
                      Rng& rng) {
  require(steps.size() == cfg.window, ErrorCode::kShapeMismatch,
          "encoder expects " + std::to_string(cfg.window) + " steps, got " + std::to_string(steps.size()));
  for (const auto& s : steps) {
    require(s.cols() == cfg.n_metrics, ErrorCode::kShapeMismatch,
            "encoder expects " + std::to_string(cfg.n_metrics) + " metrics, got " + std::to_string(s.cols()));
  }
  ad::Var h = run_lstm(p.forward, steps, false, cfg.hidden_per_direction);
  if (cfg.encoder == EncoderKind::kBiLstm) {
    ad::Var hb = run_lstm(p.backward, steps, true, cfg.hidden_per_direction);
    h = ad::concat_cols({h, hb});
  }
  return ad::dropout(h, cfg.dropout, mode == Mode::kTrain, rng);
}

struct MixtureVars {
  ad::Var log_alpha;  // B x C
  ad::Var mu;         // B x C
  ad::Var sigma;      // B x C
};

inline ad::Var mlp(ad::Var x, const std::vector<std::pair<ad::Var, ad::Var>>& layers) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = ad::add_row(ad::matmul(x, layers[l].first), layers[l].second);
    if (l + 1 < layers.size()) x = ad::relu(x);
  }
  return x;
}

// Mixture head: ReLU MLP, then 3C outputs split into mixing weights
// (softmax), means (identity) and scales (softplus plus a floor).
inline MixtureVars mdn_head(const ad::Var& h, const std::vector<std::pair<ad::Var, ad::Var>>& layers,
                            std::size_t components) {
  require(!layers.empty() && h.cols() == layers.front().first.rows(), ErrorCode::kShapeMismatch,
          "mdn head input width mismatch");
  ad::Var out = mlp(h, layers);
  require(out.cols() == 3 * components, ErrorCode::kShapeMismatch, "mdn head output width mismatch");
  MixtureVars m;
  m.log_alpha = ad::log_softmax_rows(ad::slice_cols(out, 0, components));
  m.mu = ad::slice_cols(out, components, components);
  m.sigma = ad::affine(ad::softplus(ad::slice_cols(out, 2 * components, components)), 1.0, kSigmaFloor);
  return m;
}

// Classifier head: ReLU MLP and a sigmoid, clamped away from 0 and 1.
inline ad::Var classifier_head(const ad::Var& h, const std::vector<std::pair<ad::Var, ad::Var>>& layers) {
  require(!layers.empty() && h.cols() == layers.front().first.rows(), ErrorCode::kShapeMismatch,
          "classifier head input width mismatch");
  return ad::clamp(ad::sigmoid(mlp(h, layers)), kProbClamp, 1.0 - kProbClamp);
}

// ---------------------------------------------------------------------------
// Losses on the graph.

inline const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Mean over the batch of -log sum_c alpha_c N(y; mu_c, sigma_c), computed
// through logsumexp. `y` holds one target per row.
inline ad::Var nll_loss(const MixtureVars& m, std::span<const double> y) {
  ad::Graph& g = *m.mu.graph();
  const std::size_t b = m.mu.rows(), c = m.mu.cols();
  require(y.size() == b, ErrorCode::kShapeMismatch, "nll_loss: target count != batch size");
  ad::Tensor targets(b, c);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t k = 0; k < c; ++k) targets(r, k) = y[r];
  }
  ad::Var z = ad::div(ad::sub(g.constant(std::move(targets)), m.mu), m.sigma);
  ad::Var comp = ad::sub(m.log_alpha, ad::log(m.sigma));
  comp = ad::sub(comp, ad::affine(ad::square(z), 0.5, kHalfLog2Pi));
  return ad::neg(ad::mean(ad::logsumexp_rows(comp)));
}

struct EvlWeights {
  double beta0 = 0.0;  // proportion of normal events, weights the positive term
  double beta1 = 0.0;  // proportion of extreme events, weights the negative term
};

inline EvlWeights evl_weights(std::span<const std::uint8_t> labels) {
  require(!labels.empty(), ErrorCode::kEmptyBatch, "EVL weights of an empty batch");
  std::size_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const double n = static_cast<double>(labels.size());
  return {static_cast<double>(labels.size() - pos) / n, static_cast<double>(pos) / n};
}

// -(1/N) sum beta0 (1 - p/delta)^delta y log p
//          + beta1 (1 - (1-p)/delta)^delta (1-y) log(1-p)
inline ad::Var evl_loss(const ad::Var& p, std::span<const std::uint8_t> labels, double delta, EvlWeights w) {
  ad::Graph& g = *p.graph();
  const std::size_t b = p.rows();
  require(b > 0, ErrorCode::kEmptyBatch, "EVL of an empty batch");
  require(labels.size() == b && p.cols() == 1, ErrorCode::kShapeMismatch, "evl_loss: labels must match a B x 1 input");
  ad::Tensor pos(b, 1), neg(b, 1);
  for (std::size_t r = 0; r < b; ++r) {
    pos[r] = labels[r] ? w.beta0 : 0.0;
    neg[r] = labels[r] ? 0.0 : w.beta1;
  }
  using ad::affine;
  ad::Var pos_term = g.constant(std::move(pos)) * ad::pow(affine(p, -1.0 / delta, 1.0), delta) * ad::log(p);
  ad::Var neg_term = g.constant(std::move(neg)) * ad::pow(affine(p, 1.0 / delta, 1.0 - 1.0 / delta), delta) *
                     ad::log(affine(p, -1.0, 1.0));
  return ad::neg(ad::mean(pos_term + neg_term));
}

// Weights taken from the batch's own label counts.
inline ad::Var evl_loss(const ad::Var& p, std::span<const std::uint8_t> labels, double delta) {
  return evl_loss(p, labels, delta, evl_weights(labels));
}

inline ad::Var bce_loss(const ad::Var& p, std::span<const std::uint8_t> labels) {
  ad::Graph& g = *p.graph();
  const std::size_t b = p.rows();
  require(b > 0, ErrorCode::kEmptyBatch, "BCE of an empty batch");
  require(labels.size() == b && p.cols() == 1, ErrorCode::kShapeMismatch, "bce_loss: labels must match a B x 1 input");
  ad::Tensor y(b, 1), not_y(b, 1);
  for (std::size_t r = 0; r < b; ++r) {
    y[r] = labels[r] ? 1.0 : 0.0;
    not_y[r] = 1.0 - y[r];
  }
  ad::Var terms = g.constant(std::move(y)) * ad::log(p) + g.constant(std::move(not_y)) * ad::log(ad::affine(p, -1.0, 1.0));
  return ad::neg(ad::mean(terms));
}

// Full forward pass over a batch.
struct ForwardPass {
  ad::Var h;
  std::vector<MixtureVars> mixtures;  // per QoS metric; empty for classifier-only
  std::vector<ad::Var> clf;           // per QoS metric; empty for mdn-only
};

inline ForwardPass forward(const ModelConfig& cfg, const BoundParams& p, std::span<const ad::Var> steps, Mode mode,
                           Rng& rng, bool want_mixtures = true, bool want_classifier = true) {
  ForwardPass out;
  out.h = encode(cfg, p, steps, mode, rng);
  for (std::size_t y = 0; y < cfg.qos.size(); ++y) {
    if (want_mixtures) out.mixtures.push_back(mdn_head(out.h, p.mdn[y], cfg.components));
    if (want_classifier) out.clf.push_back(classifier_head(out.h, p.clf[y]));
  }
  return out;
}

struct LossParts {
  ad::Var total;
  ad::Var nll;  // invalid when not computed
  ad::Var clf;  // invalid when not computed
};

// Mean over QoS metrics of the NLL, plus lambda times the mean over QoS
// metrics of the classifier loss. `targets[y]` and `labels[y]` are the
// batch columns for QoS metric y.
inline LossParts multitask_loss(const ModelConfig& cfg, const ForwardPass& fp,
                                const std::vector<std::vector<double>>& targets,
                                const std::vector<std::vector<std::uint8_t>>& labels) {
  const std::size_t q = cfg.qos.size();
  require(targets.size() == q && labels.size() == q, ErrorCode::kShapeMismatch,
          "multitask_loss: one target and label column per QoS metric");
  ad::Graph& g = *fp.h.graph();
  LossParts parts;
  const bool use_nll = cfg.task != TaskMode::kClassifierOnly;
  const double lambda = cfg.task == TaskMode::kMdnOnly ? 0.0 : (cfg.task == TaskMode::kClassifierOnly ? 1.0 : cfg.lambda);
  const bool use_clf = lambda > 0.0;
  if (use_nll) {
    require(fp.mixtures.size() == q, ErrorCode::kShapeMismatch, "forward pass lacks mixture heads");
    ad::Var acc;
    for (std::size_t y = 0; y < q; ++y) {
      ad::Var l = nll_loss(fp.mixtures[y], targets[y]);
      acc = acc.valid() ? acc + l : l;
    }
    parts.nll = ad::scale(acc, 1.0 / static_cast<double>(q));
  }
  if (use_clf) {
    require(fp.clf.size() == q, ErrorCode::kShapeMismatch, "forward pass lacks classifier heads");
    ad::Var acc;
    for (std::size_t y = 0; y < q; ++y) {
      ad::Var l = cfg.loss == ClassifierLoss::kEvl ? evl_loss(fp.clf[y], labels[y], cfg.delta) : bce_loss(fp.clf[y], labels[y]);
      acc = acc.valid() ? acc + l : l;
    }
    parts.clf = ad::scale(acc, 1.0 / static_cast<double>(q));
  }
  if (parts.nll.valid() && parts.clf.valid()) {
    parts.total = parts.nll + ad::scale(parts.clf, lambda);
  } else if (parts.nll.valid()) {
    parts.total = parts.nll;
  } else if (parts.clf.valid()) {
    parts.total = ad::scale(parts.clf, lambda);
  } else {
    parts.total = g.constant(0.0);
  }
  return parts;
}

// ---------------------------------------------------------------------------
// Value-level API.

struct Mixture {
  std::vector<double> alpha;
  std::vector<double> mu;
  std::vector<double> sigma;

  std::size_t components() const { return alpha.size(); }
  bool operator==(const Mixture&) const = default;
};

inline void validate_mixture(const Mixture& m) {
  const std::size_t c = m.alpha.size();
  require(c >= 1 && m.mu.size() == c && m.sigma.size() == c, ErrorCode::kInvalidMixture,
          "mixture component arrays must be non-empty and equally sized");
  double total = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    require(m.alpha[k] >= 0.0 && std::isfinite(m.alpha[k]), ErrorCode::kInvalidMixture, "negative mixing weight");
    require(m.sigma[k] > 0.0 && std::isfinite(m.sigma[k]), ErrorCode::kInvalidMixture, "non-positive scale");
    require(std::isfinite(m.mu[k]), ErrorCode::kInvalidMixture, "non-finite mean");
    total += m.alpha[k];
  }
  require(std::abs(total - 1.0) <= 1e-6, ErrorCode::kInvalidMixture, "mixing weights do not sum to 1");
}

// -log p(y) for a single mixture, through logsumexp.
inline double nll_value(const Mixture& m, double y) {
  validate_mixture(m);
  double mx = -std::numeric_limits<double>::infinity();
  std::vector<double> comp(m.components());
  for (std::size_t k = 0; k < comp.size(); ++k) {
    const double z = (y - m.mu[k]) / m.sigma[k];
    comp[k] = std::log(m.alpha[k]) - std::log(m.sigma[k]) - kHalfLog2Pi - 0.5 * z * z;
    mx = std::max(mx, comp[k]);
  }
  if (!std::isfinite(mx)) return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double v : comp) s += std::exp(v - mx);
  return -(mx + std::log(s));
}

inline double evl_value(std::span<const double> p, std::span<const std::uint8_t> y, double delta, EvlWeights w) {
  require(!p.empty(), ErrorCode::kEmptyBatch, "EVL of an empty batch");
  require(p.size() == y.size(), ErrorCode::kShapeMismatch, "evl_value: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (y[i]) {
      s += w.beta0 * std::pow(1.0 - p[i] / delta, delta) * std::log(p[i]);
    } else {
      s += w.beta1 * std::pow(1.0 - (1.0 - p[i]) / delta, delta) * std::log(1.0 - p[i]);
    }
  }
  return -s / static_cast<double>(p.size());
}

inline double bce_value(std::span<const double> p, std::span<const std::uint8_t> y) {
  require(!p.empty(), ErrorCode::kEmptyBatch, "BCE of an empty batch");
  require(p.size() == y.size(), ErrorCode::kShapeMismatch, "bce_value: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += y[i] ? std::log(p[i]) : std::log(1.0 - p[i]);
  return -s / static_cast<double>(p.size());
}

struct ModelOutput {
  std::vector<Mixture> mixtures;  // per QoS metric
  std::vector<double> clf_prob;   // per QoS metric
  std::vector<double> h;
};

// Builds the per-step input constants for a batch of windows. `windows[b]`
// is a row-major w x |M| matrix.
inline std::vector<ad::Var> window_steps(ad::Graph& g, std::span<const double* const> windows, std::size_t w,
                                         std::size_t m) {
  std::vector<ad::Var> steps;
  steps.reserve(w);
  for (std::size_t t = 0; t < w; ++t) {
    ad::Tensor x(windows.size(), m);
    for (std::size_t b = 0; b < windows.size(); ++b) std::copy_n(windows[b] + t * m, m, x.row(b).begin());
    steps.push_back(g.constant(std::move(x)));
  }
  return steps;
}

inline Mixture mixture_row(const MixtureVars& mv, std::size_t row) {
  Mixture m;
  const std::size_t c = mv.mu.cols();
  for (std::size_t k = 0; k < c; ++k) {
    m.alpha.push_back(std::exp(mv.log_alpha.value()(row, k)));
    m.mu.push_back(mv.mu.value()(row, k));
    m.sigma.push_back(mv.sigma.value()(row, k));
  }
  return m;
}

// Eval-mode forward for a batch of windows (each w x |M| row-major).
inline std::vector<ModelOutput> predict(const ModelConfig& cfg, const ModelParams& params,
                                        std::span<const double* const> windows) {
  std::vector<ModelOutput> out(windows.size());
  if (windows.empty()) return out;
  ad::Graph g;
  BoundParams bp = bind_frozen(g, params);
  auto steps = window_steps(g, windows, cfg.window, cfg.n_metrics);
  Rng unused(0);
  ForwardPass fp = forward(cfg, bp, steps, Mode::kEval, unused);
  for (std::size_t b = 0; b < windows.size(); ++b) {
    const auto hrow = fp.h.value().row(b);
    out[b].h.assign(hrow.begin(), hrow.end());
    for (std::size_t y = 0; y < cfg.qos.size(); ++y) {
      out[b].mixtures.push_back(mixture_row(fp.mixtures[y], b));
      out[b].clf_prob.push_back(fp.clf[y].value()(b, 0));
    }
  }
  return out;
}

}  // namespace tailcast

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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "../oracles.hpp"
#include "tailcast/tailcast.hpp"

using namespace tailcast;
using ad::Graph;
using ad::Tensor;
using ad::Var;

namespace {

ModelConfig small_config(std::size_t m = 4, std::size_t w = 6) {
  ModelConfig c;
  c.n_metrics = m;
  c.qos = {"q0", "q1"};
  c.window = w;
  c.hidden_per_direction = 5;
  c.mdn_hidden = {7, 6};
  c.clf_hidden = {4};
  c.seed = 11;
  return c;
}

// Zero-initialised biases put ReLU units exactly on the kink, where
// central differences see half the slope.
void jitter_biases(ModelParams& p, Rng& rng) {
  for (auto& [name, t] : p.named()) {
    if (name.ends_with(".b")) {
      for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += rng.uniform(-0.2, 0.2);
    }
  }
}

std::vector<double> random_windows(std::size_t batch, const ModelConfig& c, Rng& rng) {
  std::vector<double> x(batch * c.window * c.n_metrics);
  for (double& v : x) v = rng.uniform();
  return x;
}

std::vector<const double*> pointers(const std::vector<double>& x, std::size_t batch, const ModelConfig& c) {
  std::vector<const double*> out;
  for (std::size_t b = 0; b < batch; ++b) out.push_back(x.data() + b * c.window * c.n_metrics);
  return out;
}

void zero_all(ModelParams& p) {
  for (auto* t : p.tensors()) {
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] = 0.0;
  }
}

Mixture standard_normal() { return {{1.0}, {0.0}, {1.0}}; }

}  // namespace

TEST(Model, DefaultEncodingIs128Wide) {
  ModelConfig c;
  c.n_metrics = 42;
  c.qos = {"lat"};
  ModelParams p = init_params(c);
  Rng rng(1);
  std::vector<double> x(60 * 42);
  for (double& v : x) v = rng.uniform();
  const double* ptr = x.data();
  auto out = predict(c, p, std::span<const double* const>(&ptr, 1));
  EXPECT_EQ(out[0].h.size(), 128u);
  c.encoder = EncoderKind::kLstm;
  ModelParams q = init_params(c);
  EXPECT_EQ(predict(c, q, std::span<const double* const>(&ptr, 1))[0].h.size(), 64u);
}

TEST(Model, ZeroInputZeroBiasIsFiniteAndReproducible) {
  ModelConfig c = small_config();
  ModelParams p = init_params(c);
  p.forward.b = Tensor(p.forward.b.rows(), p.forward.b.cols());
  p.backward.b = Tensor(p.backward.b.rows(), p.backward.b.cols());
  std::vector<double> x(c.window * c.n_metrics, 0.0);
  const double* ptr = x.data();
  auto a = predict(c, p, std::span<const double* const>(&ptr, 1));
  auto b = predict(c, p, std::span<const double* const>(&ptr, 1));
  for (double v : a[0].h) EXPECT_TRUE(std::isfinite(v));
  EXPECT_EQ(a[0].h, b[0].h);
}

TEST(Model, ZeroHeadsGiveUniformMixtureAndHalfProbability) {
  ModelConfig c = small_config();
  ModelParams p = init_params(c);
  zero_all(p);
  Rng rng(2);
  auto x = random_windows(3, c, rng);
  auto out = predict(c, p, pointers(x, 3, c));
  for (const auto& o : out) {
    for (const auto& m : o.mixtures) {
      for (double a : m.alpha) EXPECT_NEAR(a, 1.0 / 3.0, 1e-15);
    }
    for (double q : o.clf_prob) EXPECT_EQ(q, 0.5);
  }
}

TEST(Model, MixturesAreValidAndProbabilitiesClamped) {
  ModelConfig c = small_config();
  ModelParams p = init_params(c);
  // Large weights push the heads to their limits.
  for (auto* t : p.tensors()) {
    for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] *= 40.0;
  }
  Rng rng(3);
  auto x = random_windows(16, c, rng);
  for (const auto& o : predict(c, p, pointers(x, 16, c))) {
    for (const auto& m : o.mixtures) {
      double total = 0.0;
      for (std::size_t k = 0; k < m.components(); ++k) {
        total += m.alpha[k];
        EXPECT_GE(m.sigma[k], kSigmaFloor);
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
    for (double q : o.clf_prob) {
      EXPECT_GE(q, kProbClamp);
      EXPECT_LE(q, 1.0 - kProbClamp);
    }
  }
}

TEST(Model, EncodeIgnoresModeWithoutDropout) {
  ModelConfig c = small_config();
  c.dropout = 0.0;
  ModelParams p = init_params(c);
  Rng rng(4);
  auto x = random_windows(2, c, rng);
  auto ptrs = pointers(x, 2, c);
  Graph g;
  BoundParams bp = bind_frozen(g, p);
  auto steps = window_steps(g, ptrs, c.window, c.n_metrics);
  Rng r1(1), r2(2);
  EXPECT_EQ(encode(c, bp, steps, Mode::kTrain, r1).value(), encode(c, bp, steps, Mode::kEval, r2).value());
}

TEST(Model, EncodeRejectsWrongShape) {
  ModelConfig c = small_config();
  ModelParams p = init_params(c);
  Graph g;
  BoundParams bp = bind_frozen(g, p);
  std::vector<Var> steps(c.window, g.constant(Tensor(1, c.n_metrics + 1)));
  Rng rng(0);
  try {
    encode(c, bp, steps, Mode::kEval, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(Model, BatchRowsMatchSingleRows) {
  ModelConfig c = small_config();
  ModelParams p = init_params(c);
  Rng rng(5);
  auto x = random_windows(5, c, rng);
  auto ptrs = pointers(x, 5, c);
  auto batch = predict(c, p, ptrs);
  for (std::size_t b = 0; b < 5; ++b) {
    auto single = predict(c, p, std::span<const double* const>(&ptrs[b], 1));
    EXPECT_EQ(single[0].mixtures, batch[b].mixtures);
    EXPECT_EQ(single[0].clf_prob, batch[b].clf_prob);
  }
}

TEST(Model, NllUnitValues) {
  EXPECT_NEAR(nll_value(standard_normal(), 0.0), 0.918939, 1e-6);
  EXPECT_NEAR(nll_value(standard_normal(), 0.0), 0.5 * std::log(2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(nll_value({{1.0}, {0.3}, {2.5}}, 0.3), std::log(2.5 * std::sqrt(2.0 * std::numbers::pi)), 1e-14);
  const double phi0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  const double phi1 = phi0 * std::exp(-0.5);
  EXPECT_NEAR(nll_value({{0.5, 0.5}, {0.0, 1.0}, {1.0, 1.0}}, 0.0), -std::log(0.5 * phi0 + 0.5 * phi1), 1e-14);
  EXPECT_THROW(nll_value({{0.5, 0.2}, {0, 0}, {1, 1}}, 0.0), Error);
}

TEST(Model, NllMatchesNaiveDensity) {
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    Mixture m = oracle::random_mixture(3, rng);
    const double y = rng.uniform(-1.0, 2.0);
    const double naive = oracle::naive_nll(m, y);
    if (!std::isfinite(naive) || naive > 600) continue;
    ASSERT_NEAR(nll_value(m, y), naive, 1e-9 * std::max(1.0, std::abs(naive)));
  }
}

TEST(Model, GraphNllMatchesValue) {
  Graph g;
  MixtureVars mv;
  mv.log_alpha = g.constant(Tensor(1, 2, std::vector<double>{std::log(0.3), std::log(0.7)}));
  mv.mu = g.constant(Tensor(1, 2, std::vector<double>{0.1, 0.9}));
  mv.sigma = g.constant(Tensor(1, 2, std::vector<double>{0.2, 0.4}));
  const std::vector<double> y{0.5};
  EXPECT_NEAR(nll_loss(mv, y).item(), nll_value({{0.3, 0.7}, {0.1, 0.9}, {0.2, 0.4}}, 0.5), 1e-14);
}

TEST(Model, EvlUnitValue) {
  const std::vector<double> p{0.5};
  const std::vector<std::uint8_t> y{1};
  // 0.8 * 0.75^2 * ln 2 = 0.3119162...
  const double want = 0.8 * 0.75 * 0.75 * std::log(2.0);
  EXPECT_NEAR(evl_value(p, y, 2.0, {0.8, 0.2}), want, 1e-15);
  Graph g;
  Var pv = g.constant(Tensor(1, 1, 0.5));
  EXPECT_NEAR(evl_loss(pv, y, 2.0, {0.8, 0.2}).item(), want, 1e-15);
}

TEST(Model, EvlVanishesAtCertainty) {
  const std::vector<double> p{1.0 - kProbClamp};
  const std::vector<std::uint8_t> y{1};
  EXPECT_LT(evl_value(p, y, 2.0, {1.0, 1.0}), 1e-6);
}

TEST(Model, EvlBatchWeights) {
  const std::vector<std::uint8_t> y{1, 0, 0, 0};
  EvlWeights w = evl_weights(y);
  EXPECT_EQ(w.beta0, 0.75);
  EXPECT_EQ(w.beta1, 0.25);
  Graph g;
  Var p = g.constant(Tensor(4, 1, std::vector<double>{0.6, 0.2, 0.3, 0.1}));
  EXPECT_NEAR(evl_loss(p, y, 2.0).item(), evl_value(std::vector<double>{0.6, 0.2, 0.3, 0.1}, y, 2.0, w), 1e-15);
  EXPECT_THROW(evl_weights(std::vector<std::uint8_t>{}), Error);
}

TEST(Model, EvlBoundedByBceAndBracketInUnitInterval) {
  Rng rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(30);
    std::vector<double> p(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = std::clamp(rng.uniform(), kProbClamp, 1.0 - kProbClamp);
      y[i] = rng.uniform() < 0.3;
      const double bracket = std::pow(1.0 - p[i] / 2.0, 2.0);
      ASSERT_GT(bracket, 0.0);
      ASSERT_LE(bracket, 1.0);
    }
    ASSERT_LE(evl_value(p, y, 2.0, {1.0, 1.0}), bce_value(p, y) + 1e-15);
  }
}

TEST(Model, BceValuesAndLimit) {
  EXPECT_NEAR(bce_value(std::vector<double>{0.5}, std::vector<std::uint8_t>{1}), std::log(2.0), 1e-15);
  EXPECT_NEAR(bce_value(std::vector<double>{1.0 - kProbClamp, kProbClamp}, std::vector<std::uint8_t>{1, 0}), 0.0, 1e-6);
  Rng rng(8);
  std::vector<double> p(20);
  std::vector<std::uint8_t> y(20);
  for (std::size_t i = 0; i < 20; ++i) {
    p[i] = rng.uniform(0.05, 0.95);
    y[i] = i % 3 == 0;
  }
  // The bracket tends to exp(-p), not 1, as delta grows.
  double limit = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    limit -= y[i] ? std::exp(-p[i]) * std::log(p[i]) : std::exp(-(1.0 - p[i])) * std::log(1.0 - p[i]);
  }
  EXPECT_NEAR(evl_value(p, y, 1e6, {1.0, 1.0}), limit / 20.0, 1e-6);
  EXPECT_LT(evl_value(p, y, 1e6, {1.0, 1.0}), bce_value(p, y));
}

TEST(Model, LossesFiniteUnderFuzz) {
  Rng rng(9);
  for (int i = 0; i < 100000; ++i) {
    const double p = std::clamp(rng.uniform(), kProbClamp, 1.0 - kProbClamp);
    const std::uint8_t y = rng.uniform() < 0.5;
    const double e = evl_value(std::span<const double>(&p, 1), std::span<const std::uint8_t>(&y, 1), 2.0, {1, 1});
    const double b = bce_value(std::span<const double>(&p, 1), std::span<const std::uint8_t>(&y, 1));
    Mixture m{{1.0}, {rng.uniform(-5, 5)}, {kSigmaFloor + rng.uniform()}};
    const double n = nll_value(m, rng.uniform(-5, 5));
    ASSERT_TRUE(std::isfinite(e) && std::isfinite(b) && std::isfinite(n));
  }
}

TEST(Model, ConfigValidation) {
  ModelConfig c = small_config();
  c.delta = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c.loss = ClassifierLoss::kBce;
  EXPECT_NO_THROW(c.validate());
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = small_config();
  c.components = 0;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_THROW(parse_encoder("gru"), Error);
  EXPECT_EQ(model_config_from_json(model_config_to_json(small_config())), small_config());
}

namespace {

struct LossSetup {
  ModelConfig cfg = small_config(3, 5);
  ModelParams params;
  std::vector<double> x;
  std::vector<std::vector<double>> targets;
  std::vector<std::vector<std::uint8_t>> labels;

  LossSetup() {
    cfg.dropout = 0.0;
    params = init_params(cfg);
    Rng rng(21);
    x = random_windows(4, cfg, rng);
    for (std::size_t y = 0; y < cfg.qos.size(); ++y) {
      targets.emplace_back();
      labels.emplace_back();
      for (std::size_t b = 0; b < 4; ++b) {
        targets.back().push_back(rng.uniform());
        labels.back().push_back(b % 2 == y % 2);
      }
    }
  }

  LossParts loss(Graph& g, ModelParams& p) {
    BoundParams bp = bind_trainable(g, p);
    auto steps = window_steps(g, pointers(x, 4, cfg), cfg.window, cfg.n_metrics);
    Rng rng(0);
    ForwardPass fp = forward(cfg, bp, steps, Mode::kEval, rng);
    return multitask_loss(cfg, fp, targets, labels);
  }
};

}  // namespace

TEST(Model, LambdaZeroIsPureNll) {
  LossSetup s;
  s.cfg.lambda = 0.0;
  Graph g;
  LossParts parts = s.loss(g, s.params);
  EXPECT_EQ(parts.total.item(), parts.nll.item());
}

TEST(Model, TotalIsNllPlusLambdaClassifier) {
  LossSetup s;
  s.cfg.lambda = 0.7;
  Graph g;
  LossParts parts = s.loss(g, s.params);
  EXPECT_NEAR(parts.total.item(), parts.nll.item() + 0.7 * parts.clf.item(), 1e-14);
}

TEST(Model, GradOfTotalIsSumOfPartGrads) {
  LossSetup s;
  s.cfg.lambda = 0.7;
  auto grads_of = [&](auto pick) {
    ModelParams p = s.params;
    p.set_requires_grad(true);
    p.zero_grad();
    Graph g;
    LossParts parts = s.loss(g, p);
    g.backward(pick(parts));
    std::vector<double> out;
    for (auto* t : p.tensors()) out.insert(out.end(), t->grad.begin(), t->grad.end());
    return out;
  };
  auto total = grads_of([](LossParts& l) { return l.total; });
  auto nll = grads_of([](LossParts& l) { return l.nll; });
  auto clf = grads_of([](LossParts& l) { return l.clf; });
  ASSERT_EQ(total.size(), nll.size());
  for (std::size_t i = 0; i < total.size(); ++i) ASSERT_NEAR(total[i], nll[i] + 0.7 * clf[i], 1e-12);
}

TEST(Model, GradCheckLstmCell) {
  ModelConfig c = small_config(3, 1);
  c.encoder = EncoderKind::kLstm;
  c.dropout = 0.0;
  ModelParams p = init_params(c);
  Rng rng(22);
  auto x = random_windows(2, c, rng);
  std::vector<Tensor*> params{&p.forward.wx, &p.forward.wh, &p.forward.b};
  auto report = ad::grad_check(
      [&](Graph& g) {
        BoundParams bp = bind_trainable(g, p);
        auto steps = window_steps(g, pointers(x, 2, c), c.window, c.n_metrics);
        Var h = run_lstm(bp.forward, steps, false, c.hidden_per_direction);
        return ad::sum(h * h);
      },
      params);
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
}

TEST(Model, GradCheckFullModel) {
  LossSetup s;
  for (auto loss : {ClassifierLoss::kEvl, ClassifierLoss::kBce}) {
    s.cfg.loss = loss;
    ModelParams p = s.params;
    Rng jitter(23);
    jitter_biases(p, jitter);
    auto named = p.named();
    std::vector<Tensor*> params;
    for (auto& [name, t] : named) params.push_back(t);
    auto report = ad::grad_check([&](Graph& g) { return s.loss(g, p).total; }, params);
    EXPECT_TRUE(report.passed()) << loss_name(loss) << " " << report.max_rel_error;
    for (std::size_t k = 0; k < std::min<std::size_t>(report.failures.size(), 5); ++k) {
      const auto& f = report.failures[k];
      ADD_FAILURE() << named[f.param].first << "[" << f.index << "] analytic " << f.analytic << " numeric " << f.numeric;
    }
  }
}

TEST(Model, ParamsJsonRoundTrip) {
  ModelConfig c = small_config();
  ModelParams p = init_params(c);
  auto j = params_to_json(p);
  EXPECT_EQ(params_from_json(j, c), p);
  auto missing = j;
  missing.erase("encoder.forward.wx");
  EXPECT_THROW(params_from_json(missing, c), Error);
  auto extra = j;
  extra["stray"] = j["encoder.forward.b"];
  EXPECT_THROW(params_from_json(extra, c), Error);
}

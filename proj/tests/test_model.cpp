// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include "oracle.hpp"
#include "satcn/model.hpp"
#include "satcn/train.hpp"
#include "test_util.hpp"

using namespace satcn;
using satcn::testing::random_signal;
using satcn::testing::random_tensor;
using satcn::testing::randomize;

namespace {

ModelConfig toy(std::size_t stages, std::uint64_t seed = 1) {
  ModelConfig c;
  c.stages = stages;
  c.hidden = 6;
  c.bottleneck = 4;
  c.stacks = 2;
  c.blocks = 3;
  c.fft_size = 16;
  c.hop = 8;
  c.seed = seed;
  return c;
}

bool same_parameters(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || !(a[i].value == b[i].value)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("model construction") {
  CHECK(MultiStageModel(toy(1)).fusions().empty());
  CHECK(MultiStageModel(toy(2)).fusions().empty());
  CHECK(MultiStageModel(toy(5)).fusions().size() == 3);
  CHECK(MultiStageModel(toy(5)).stages().size() == 5);
  CHECK(toy(3).bins() == 9);

  const auto a = build_model(toy(3, 7)), b = build_model(toy(3, 7)), c = build_model(toy(3, 8));
  CHECK(same_parameters(a.store(), b.store()));
  CHECK(!same_parameters(a.store(), c.store()));
  for (const Stage& s : a.stages()) CHECK(s.attention.delta->value[0] == 0.0);
  CHECK(a.store().find("fusion3.masked.conv.weight") != nullptr);
  CHECK(a.store().find("fusion2.masked.conv.weight") == nullptr);

  for (auto bad : {&ModelConfig::stages, &ModelConfig::hidden, &ModelConfig::bottleneck, &ModelConfig::stacks,
                   &ModelConfig::blocks, &ModelConfig::hop}) {
    ModelConfig cfg = toy(2);
    cfg.*bad = 0;
    CHECK_THROWS_AS(build_model(cfg), std::invalid_argument);
  }
  ModelConfig even = toy(2);
  even.kernel = 4;
  CHECK_THROWS_AS(build_model(even), std::invalid_argument);
  ModelConfig odd_fft = toy(2);
  odd_fft.fft_size = 15;
  CHECK_THROWS_AS(build_model(odd_fft), std::invalid_argument);
}

TEST_CASE("parameter counts") {
  const ModelConfig paper;
  const MultiStageModel model(paper);
  const auto p = count_parameters(model);
  const std::size_t f = 257, h = 256, b = 128, p_kernel = 3;
  // Closed forms: three F->F convs with bias plus delta; each TCN block holds
  // in/out convs with bias, two PReLUs, two batch norms and a biased depthwise kernel.
  const std::size_t sa = 3 * (f * f + f) + 1;
  const std::size_t block = (b * h + h) + (h * b + b) + 2 * h + 4 * h + (h * p_kernel + h);
  CHECK(sa == 198919);
  CHECK(block == 68480);
  CHECK(p.self_attention == sa);
  CHECK(p.tcn_blocks == 24 * block);
  CHECK(p.tcn_blocks == 1643520);
  CHECK(p.stage_glue == (f * b + b) + (b * f + f));
  CHECK(p.stage == p.self_attention + p.tcn_blocks + p.stage_glue);
  CHECK(p.fusion == 4 * (f * f + f) + 4 * f + 3 * 2 * f);
  CHECK(p.total == 5 * p.stage + 3 * p.fusion);
  CHECK(std::abs(double(p.self_attention) - 0.2e6) <= 0.02 * 0.2e6);
  CHECK(std::abs(double(p.tcn_blocks) - 1.68e6) <= 0.05 * 1.68e6);
  CHECK(std::abs(double(p.total) - 9.91e6) <= 0.25 * 9.91e6);
}

TEST_CASE("eval forward matches the scalar oracle cascade") {
  for (std::size_t k : {1u, 2u, 4u}) {
    auto model = build_model(toy(k, 3));
    Rng rng(30 + k);
    randomize(model.store(), rng);
    const Tensor x = random_tensor(rng, {9, 10}, 0.0, 2.0);
    const auto trace = forward(model, x);
    const auto ref = oracle::model(model, oracle::to_mat(x));
    REQUIRE(trace.masks.size() == k);
    CHECK(trace.fused.size() == (k > 2 ? k - 2 : 0));
    for (std::size_t s = 0; s < k; ++s) {
      CHECK(oracle::max_diff(ref.masks[s], trace.masks[s]) < 1e-10);
      CHECK(oracle::max_diff(ref.estimates[s], trace.estimates[s]) < 1e-10);
    }
    if (k == 1) CHECK(trace.estimates[0] == hadamard(trace.masks[0], x));
  }
}

TEST_CASE("cascade contraction and mask range") {
  auto model = build_model(toy(5, 9));
  Rng rng(4);
  randomize(model.store(), rng);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor(rng, {9, 12}, 0.0, trial + 1.0);
    const auto trace = forward(model, x);
    const Tensor* prev = &x;
    for (std::size_t k = 0; k < 5; ++k) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(trace.masks[k][i] > 0.0);
        CHECK(trace.masks[k][i] < 1.0);
        CHECK(trace.estimates[k][i] >= 0.0);
        CHECK(trace.estimates[k][i] <= (*prev)[i]);
      }
      prev = &trace.estimates[k];
    }
  }
  ForwardOptions ones;
  ones.unit_masks = true;
  const Tensor x = random_tensor(rng, {9, 5}, 0.0, 1.0);
  CHECK(forward(model, x, ones).estimates.back() == x);
}

TEST_CASE("eval forward is pure and batch-consistent") {
  auto model = build_model(toy(3, 2));
  Rng rng(5);
  randomize(model.store(), rng);
  const std::vector<Tensor> xs{random_tensor(rng, {9, 7}, 0.0, 1.0), random_tensor(rng, {9, 4}, 0.0, 1.0)};
  const auto a = forward(model, xs[0]);
  const auto b = forward(model, xs[0]);
  CHECK(a.estimates.back() == b.estimates.back());
  const auto batch = forward_batch(model, xs);
  CHECK(batch[0].estimates.back() == a.estimates.back());
  CHECK(batch[1].masks[2] == forward(model, xs[1]).masks[2]);
}

TEST_CASE("stage losses") {
  ForwardTrace trace;
  trace.masks.push_back(Tensor::matrix(3, 4, 0.5));
  trace.estimates.push_back(Tensor::matrix(3, 4, 1.0));
  const auto one = total_loss(trace, Tensor::matrix(3, 4, 1.0));
  CHECK(one.per_stage.size() == 1);
  CHECK(one.total == 0.0);
  CHECK_THROWS_AS(total_loss(trace, Tensor::matrix(3, 5, 1.0)), std::invalid_argument);

  auto model = build_model(toy(4, 6));
  Rng rng(6);
  randomize(model.store(), rng);
  const Tensor x = random_tensor(rng, {9, 8}, 0.0, 2.0), s = random_tensor(rng, {9, 8}, 0.0, 1.0);
  const auto tr = forward(model, x);
  const auto losses = total_loss(tr, s);
  const auto ref = oracle::model(model, oracle::to_mat(x));
  double total = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const auto& prev = k == 0 ? oracle::to_mat(x) : ref.estimates[k - 1];
    double sum = 0.0;
    for (std::size_t f = 0; f < 9; ++f)
      for (std::size_t t = 0; t < 8; ++t) sum += std::abs(ref.masks[k][f][t] * prev[f][t] - s(f, t));
    CHECK(std::abs(losses.per_stage[k] - sum / 72.0) < 1e-10);
    total += sum / 72.0;
  }
  CHECK(std::abs(losses.total - total) < 1e-10);
}

TEST_CASE("gradient reaches every parameter") {
  ModelConfig cfg = toy(5, 11);
  auto model = build_model(cfg);
  Rng rng(7);
  const std::vector<Tensor> noisy{random_tensor(rng, {9, 10}, 0.0, 2.0), random_tensor(rng, {9, 6}, 0.0, 2.0)};
  const std::vector<Tensor> clean{random_tensor(rng, {9, 10}, 0.0, 1.0), random_tensor(rng, {9, 6}, 0.0, 1.0)};
  // At initialization the attention scale is zero, which blocks the query,
  // key and value gradients exactly; one optimizer step moves it off zero.
  train::AdamState state;
  train::TrainConfig tc;
  tc.lr = 1e-2;
  accumulate_gradients(model, noisy, clean);
  train::adam_step(model.store(), state, tc);
  for (const Stage& s : model.stages()) CHECK(s.attention.delta->value[0] != 0.0);

  accumulate_gradients(model, noisy, clean);
  for (std::size_t i = 0; i < model.store().size(); ++i) {
    const auto& p = model.store()[i];
    if (!p.trainable) continue;
    CAPTURE(p.name);
    CHECK(max_abs(p.grad) > 0.0);
  }
}

TEST_CASE("end-to-end gradient on the toy config") {
  auto model = build_model(toy(3, 12));
  Rng rng(8);
  randomize(model.store(), rng);
  const std::vector<Tensor> noisy{random_tensor(rng, {9, 10}, 0.0, 2.0), random_tensor(rng, {9, 7}, 0.0, 2.0)};
  const std::vector<Tensor> clean{random_tensor(rng, {9, 10}, 0.0, 1.0), random_tensor(rng, {9, 7}, 0.0, 1.0)};

  std::vector<std::pair<std::size_t, std::size_t>> picks;
  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < model.store().size(); ++i)
    if (model.store()[i].trainable) trainable.push_back(i);
  for (int n = 0; n < 20; ++n) {
    const std::size_t p = trainable[rng.below(trainable.size())];
    picks.emplace_back(p, rng.below(model.store()[p].value.size()));
  }

  model.store().zero_grad();
  accumulate_gradients(model, noisy, clean);
  std::vector<double> analytics;
  for (auto [p, j] : picks) analytics.push_back(model.store()[p].grad[j]);
  double worst = 0.0;
  for (std::size_t n = 0; n < picks.size(); ++n) {
    const auto [p, j] = picks[n];
    auto& param = model.store()[p];
    const double analytic = analytics[n];
    const double saved = param.value[j];
    const double h = 1e-6;
    param.value[j] = saved + h;
    const double up = accumulate_gradients(model, noisy, clean).total;
    param.value[j] = saved - h;
    const double down = accumulate_gradients(model, noisy, clean).total;
    param.value[j] = saved;
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    CAPTURE(param.name);
    CAPTURE(analytic);
    CAPTURE(numeric);
    CHECK(err < 1e-3);
    worst = std::max(worst, err);
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("enhance") {
  ModelConfig cfg = toy(3, 13);
  cfg.fft_size = 64;
  cfg.hop = 32;
  auto model = build_model(cfg);
  Rng rng(9);
  randomize(model.store(), rng);
  dsp::Waveform x{random_signal(rng, 1000), 8000};
  const auto y = enhance(model, x);
  CHECK(y.size() == x.size());
  CHECK(y.sample_rate == 8000);

  dsp::Waveform zero{std::vector<double>(700, 0.0), 8000};
  for (double v : enhance(model, zero).samples) CHECK(v == 0.0);

  ForwardOptions ones;
  ones.unit_masks = true;
  const auto id = enhance(model, x, ones);
  const auto win = analysis_window(cfg);
  const auto [mag, phase] = dsp::stft(x, win);
  const auto rt = dsp::istft(mag, phase, win, x.size(), 8000);
  double worst = 0.0, interior = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    worst = std::max(worst, std::abs(id.samples[i] - x.samples[i]));
    if (i >= cfg.hop) interior = std::max(interior, std::abs(id.samples[i] - rt.samples[i]));
  }
  CHECK(worst < 1e-9);
  CHECK(interior < 1e-12);

  dsp::Waveform shorty{std::vector<double>(10, 0.1), 8000};
  CHECK_THROWS_AS(enhance(model, shorty), std::invalid_argument);
}

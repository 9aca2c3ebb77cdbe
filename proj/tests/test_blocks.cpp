// Copyright 2026 The satcn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include "oracle.hpp"
#include "satcn/blocks.hpp"
#include "test_util.hpp"

using namespace satcn;
using satcn::testing::Projection;
using satcn::testing::random_tensor;
using satcn::testing::randomize;

namespace {

struct Fixture {
  ParamStore store;
  Rng rng{17};
  ParamFactory factory{store, rng};
};

// Checks d proj(f()) / d param against finite differences. `run` performs a
// forward pass, and when asked, a backward pass that accumulates into the
// parameter gradients.
double check_param(ParamStore& store, Parameter& p, const std::function<double(bool)>& run,
                   std::size_t max_coords = 12) {
  nn::GradCheckOptions opts;
  for (std::size_t i = 0; i < std::min(max_coords, p.value.size()); ++i) {
    opts.coordinates.push_back(i * p.value.size() / std::min(max_coords, p.value.size()));
  }
  const Tensor saved = p.value;
  const double err = nn::finite_diff_check(
      [&](const Tensor& point, Tensor* grad) {
        p.value = point;
        store.zero_grad();
        const double v = run(grad != nullptr);
        if (grad) *grad = p.grad;
        return v;
      },
      saved, opts);
  p.value = saved;
  return err;
}

}  // namespace

TEST_CASE("receptive field formula") {
  CHECK(receptive_field(3, 5) == 63);
  CHECK(receptive_field(3, 8) == 511);
  for (std::size_t l = 1; l < 10; ++l) CHECK(receptive_field(1, l) == 1);
  CHECK(block_dilation(0) == 1);
  CHECK(block_dilation(7) == 128);
}

TEST_CASE("self-attention block") {
  Fixture fx;
  auto sa = SelfAttentionBlock::create(fx.factory, "sa", 6);
  CHECK(sa.delta->value[0] == 0.0);
  CHECK(fx.store.trainable_count() == 3 * (36 + 6) + 1);
  const Tensor x = random_tensor(fx.rng, {6, 5});
  CHECK(sa.forward(x) == x);
  randomize(fx.store, fx.rng);
  sa.delta->value[0] = 0.0;
  CHECK(sa.forward(x) == x);

  for (std::size_t i = 0; i < fx.store.size(); ++i)
    if (fx.store[i].name.ends_with("bias")) fx.store[i].value.fill(0.0);
  sa.delta->value[0] = 0.7;
  const Tensor zero = sa.forward(Tensor::matrix(6, 5));
  CHECK(max_abs(zero) == 0.0);

  randomize(fx.store, fx.rng);
  CHECK(oracle::max_diff(oracle::attention(sa, oracle::to_mat(x)), sa.forward(x)) < 1e-10);
}

TEST_CASE("self-attention with identity projections") {
  Fixture fx;
  auto sa = SelfAttentionBlock::create(fx.factory, "sa", 3);
  for (Conv1x1* c : {&sa.query, &sa.key, &sa.value}) {
    c->weight->value.fill(0.0);
    for (std::size_t i = 0; i < 3; ++i) c->weight->value(i, i) = 1.0;
  }
  sa.delta->value[0] = 1.0;
  const Tensor x = Tensor::from_rows({{0.5, -1.0}, {2.0, 0.25}, {-0.75, 1.5}});
  // X + softmax_columns(X Xt / sqrt 3) X, by hand loops.
  double w[3][3], a[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) w[i][j] = (x(i, 0) * x(j, 0) + x(i, 1) * x(j, 1)) / std::sqrt(3.0);
  for (int j = 0; j < 3; ++j) {
    const double z = std::exp(w[0][j]) + std::exp(w[1][j]) + std::exp(w[2][j]);
    for (int i = 0; i < 3; ++i) a[i][j] = std::exp(w[i][j]) / z;
  }
  const Tensor y = sa.forward(x);
  for (int i = 0; i < 3; ++i)
    for (int t = 0; t < 2; ++t) {
      const double expect = x(i, t) + a[i][0] * x(0, t) + a[i][1] * x(1, t) + a[i][2] * x(2, t);
      CHECK(std::abs(y(i, t) - expect) < 1e-12);
    }
}

TEST_CASE("self-attention gradients") {
  Fixture fx;
  auto sa = SelfAttentionBlock::create(fx.factory, "sa", 5);
  randomize(fx.store, fx.rng);
  const Tensor x = random_tensor(fx.rng, {5, 4});
  const Projection proj(fx.rng, {5, 4});
  auto run = [&](bool backward) {
    SelfAttentionBlock::Cache cache;
    const Tensor y = sa.forward(x, &cache);
    if (backward) sa.backward(cache, proj.weights);
    return proj(y);
  };
  for (std::size_t i = 0; i < fx.store.size(); ++i) {
    CAPTURE(fx.store[i].name);
    CHECK(check_param(fx.store, fx.store[i], run) < 1e-4);
  }
  const double err = nn::finite_diff_check(
      [&](const Tensor& p, Tensor* grad) {
        SelfAttentionBlock::Cache cache;
        const Tensor y = sa.forward(p, &cache);
        if (grad) *grad = sa.backward(cache, proj.weights);
        return proj(y);
      },
      x);
  CHECK(err < 1e-4);
}

TEST_CASE("tcn block") {
  Fixture fx;
  auto block = TcnBlock::create(fx.factory, "tcn", 4, 6, 3, 2);
  randomize(fx.store, fx.rng);
  const Tensor x = random_tensor(fx.rng, {4, 9});
  const std::vector<Tensor> xs{x};
  for (std::size_t d : {1u, 4u, 16u}) {
    Fixture other;
    auto b = TcnBlock::create(other.factory, "b", 4, 6, 3, d);
    CHECK(b.forward(xs)[0].shape() == x.shape());
  }

  CHECK(oracle::max_diff(oracle::tcn(block, oracle::to_mat(x), false), block.forward(xs)[0]) < 1e-10);
  {
    const Tensor mean = block.bn1.running_mean->value;
    const auto y = block.forward(xs, Mode::train, nullptr);
    CHECK(oracle::max_diff(oracle::tcn(block, oracle::to_mat(x), true), y[0]) < 1e-10);
    CHECK(!(block.bn1.running_mean->value == mean));
  }

  block.out_conv.weight->value.fill(0.0);
  block.out_conv.bias->value.fill(0.0);
  CHECK(block.forward(xs)[0] == x);
  CHECK(block.forward(xs, Mode::train, nullptr)[0] == x);
}

TEST_CASE("tcn block gradients in train mode") {
  Fixture fx;
  auto block = TcnBlock::create(fx.factory, "tcn", 4, 6, 3, 2);
  randomize(fx.store, fx.rng);
  const std::vector<Tensor> xs{random_tensor(fx.rng, {4, 9}), random_tensor(fx.rng, {4, 6})};
  const Projection p0(fx.rng, {4, 9}), p1(fx.rng, {4, 6});
  auto run_on = [&](std::span<const Tensor> in, std::vector<Tensor>* dxs) {
    TcnBlock::Cache cache;
    const auto ys = block.forward(in, Mode::train, &cache);
    if (dxs) *dxs = block.backward(cache, std::vector<Tensor>{p0.weights, p1.weights});
    return p0(ys[0]) + p1(ys[1]);
  };
  for (std::size_t i = 0; i < fx.store.size(); ++i) {
    if (!fx.store[i].trainable) continue;
    CAPTURE(fx.store[i].name);
    CHECK(check_param(fx.store, fx.store[i], [&](bool bw) {
            std::vector<Tensor> dxs;
            return run_on(xs, bw ? &dxs : nullptr);
          }) < 1e-3);
  }
  const double err = nn::finite_diff_check(
      [&](const Tensor& p, Tensor* grad) {
        std::vector<Tensor> in{p, xs[1]}, dxs;
        const double v = run_on(in, grad ? &dxs : nullptr);
        if (grad) *grad = dxs[0];
        return v;
      },
      xs[0]);
  CHECK(err < 1e-3);
}

TEST_CASE("empirical receptive field of one stack") {
  for (std::size_t blocks : {5u, 8u}) {
    Fixture fx;
    std::vector<TcnBlock> stack;
    for (std::size_t l = 0; l < blocks; ++l) {
      stack.push_back(TcnBlock::create(fx.factory, "s." + std::to_string(l), 4, 6, 3, block_dilation(l)));
    }
    // Weights of order one keep the edge-of-window influence well above the threshold.
    randomize(fx.store, fx.rng, 2.0);
    const std::size_t frames = 1200, at = 600;
    std::vector<Tensor> base{random_tensor(fx.rng, {4, frames})};
    std::vector<Tensor> bumped = base;
    for (std::size_t c = 0; c < 4; ++c) bumped[0](c, at) += 1.0;
    for (const auto& b : stack) {
      base = b.forward(base);
      bumped = b.forward(bumped);
    }
    std::size_t first = frames, last = 0;
    for (std::size_t t = 0; t < frames; ++t) {
      double change = 0.0;
      for (std::size_t c = 0; c < 4; ++c) change = std::max(change, std::abs(base[0](c, t) - bumped[0](c, t)));
      if (change > 1e-12) {
        first = std::min(first, t);
        last = std::max(last, t);
      }
    }
    const std::size_t half = (receptive_field(3, blocks) - 1) / 2;
    CHECK(first == at - half);
    CHECK(last == at + half);
    CHECK(last - first + 1 == receptive_field(3, blocks));
  }
}

TEST_CASE("stage matches the scalar oracle") {
  Fixture fx;
  const StageShape shape{9, 4, 6, 2, 3, 3};
  auto stage = Stage::create(fx.factory, "stage", shape);
  CHECK(stage.blocks.size() == 6);
  CHECK(stage.blocks[3].dilation() == 1);
  CHECK(stage.blocks[5].dilation() == 4);
  CHECK(fx.store.find("stage.tcn2.3.dconv.weight") != nullptr);
  randomize(fx.store, fx.rng);
  const Tensor x = random_tensor(fx.rng, {9, 11}, 0.0, 2.0);
  const std::vector<Tensor> xs{x};
  CHECK(oracle::max_diff(oracle::stage(stage, oracle::to_mat(x), false), stage.forward(xs)[0]) < 1e-10);
  const auto trained = stage.forward(xs, Mode::train, nullptr);
  CHECK(oracle::max_diff(oracle::stage(stage, oracle::to_mat(x), true), trained[0]) < 1e-10);

  for (double scale : {1.0, 50.0}) {
    const auto masks = stage.forward(std::vector<Tensor>{random_tensor(fx.rng, {9, 7}, 0.0, scale)});
    for (double v : masks[0].values()) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
  }
  stage.projection.weight->value.fill(0.0);
  stage.projection.bias->value.fill(0.0);
  const auto half = stage.forward(xs);
  for (double v : half[0].values()) CHECK(v == 0.5);
}

TEST_CASE("stage gradients") {
  Fixture fx;
  auto stage = Stage::create(fx.factory, "stage", StageShape{5, 3, 4, 1, 2, 3});
  randomize(fx.store, fx.rng);
  const std::vector<Tensor> xs{random_tensor(fx.rng, {5, 6}, 0.0, 1.0), random_tensor(fx.rng, {5, 4}, 0.0, 1.0)};
  const Projection p0(fx.rng, {5, 6}), p1(fx.rng, {5, 4});
  auto run = [&](bool backward) {
    Stage::Cache cache;
    const auto masks = stage.forward(xs, Mode::train, &cache);
    if (backward) stage.backward(cache, std::vector<Tensor>{p0.weights, p1.weights});
    return p0(masks[0]) + p1(masks[1]);
  };
  for (std::size_t i = 0; i < fx.store.size(); ++i) {
    if (!fx.store[i].trainable) continue;
    CAPTURE(fx.store[i].name);
    CHECK(check_param(fx.store, fx.store[i], run, 6) < 1e-3);
  }
}

TEST_CASE("fusion block") {
  Fixture fx;
  auto fb = FusionBlock::create(fx.factory, "fusion", 5);
  CHECK(fx.store.trainable_count() == 4 * (25 + 5) + 4 * 5 + 3 * 10);
  const Tensor zero = Tensor::matrix(5, 4);
  CHECK(max_abs(fb.forward(zero, zero)) == 0.0);

  randomize(fx.store, fx.rng);
  const Tensor a = random_tensor(fx.rng, {5, 4}, 0.0, 1.0), b = random_tensor(fx.rng, {5, 4}, 0.0, 1.0);
  CHECK(oracle::max_diff(oracle::fusion(fb, oracle::to_mat(a), oracle::to_mat(b)), fb.forward(a, b)) < 1e-10);
  CHECK_THROWS_AS(fb.forward(a, Tensor::matrix(5, 3)), std::invalid_argument);

  Fixture wide;
  auto big = FusionBlock::create(wide.factory, "fusion", 257);
  CHECK(big.forward(Tensor::matrix(257, 3, 0.2), Tensor::matrix(257, 3, 0.1)).shape() == Tensor::Shape{257, 3});

  const Projection proj(fx.rng, {5, 4});
  auto run = [&](bool backward) {
    FusionBlock::Cache cache;
    const Tensor y = fb.forward(a, b, &cache);
    if (backward) fb.backward(cache, proj.weights);
    return proj(y);
  };
  for (std::size_t i = 0; i < fx.store.size(); ++i) {
    CAPTURE(fx.store[i].name);
    CHECK(check_param(fx.store, fx.store[i], run) < 1e-4);
  }
  for (int which = 0; which < 2; ++which) {
    const double err = nn::finite_diff_check(
        [&](const Tensor& p, Tensor* grad) {
          FusionBlock::Cache cache;
          const Tensor y = which == 0 ? fb.forward(p, b, &cache) : fb.forward(a, p, &cache);
          if (grad) {
            auto [da, db] = fb.backward(cache, proj.weights);
            *grad = which == 0 ? da : db;
          }
          return proj(y);
        },
        which == 0 ? a : b);
    CHECK(err < 1e-4);
  }
}

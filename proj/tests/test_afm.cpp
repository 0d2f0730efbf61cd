#include <doctest.h>

#include <cmath>

#include "conpro/afm.hpp"
#include "conpro/graph.hpp"
#include "conpro/rng.hpp"
#include "gradcheck.hpp"

using namespace conpro;

TEST_CASE("reshape_base with k=1 is a squeeze") {
  Rng rng(1);
  Tensor w = rng.normal_tensor({2, 3, 1, 1});
  Tensor m = afm::reshape_base(w);
  CHECK(m.shape() == Shape{2, 3});
  for (int64_t i = 0; i < w.size(); ++i) CHECK(m[i] == w[i]);
}

TEST_CASE("reshape_base produces the documented shape") {
  Tensor w({64, 32, 3, 3});
  CHECK(afm::reshape_base(w).shape() == Shape{192, 96});
}

TEST_CASE("reshape then inverse reshape is the identity, 100 random trials") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t co = 1 + rng.uniform_int(5);
    const int64_t ci = 1 + rng.uniform_int(5);
    const int64_t k = 1 + rng.uniform_int(3);
    Tensor w = rng.normal_tensor({co, ci, k, k});
    Tensor back = afm::inverse_reshape(afm::reshape_base(w), co, ci, k);
    for (int64_t i = 0; i < w.size(); ++i) CHECK(back[i] == w[i]);
  }
}

TEST_CASE("reshape_base rejects non-4-axis input") {
  CHECK_THROWS(afm::reshape_base(Tensor({2, 3})));
  CHECK_THROWS(afm::reshape_base(Tensor({2, 3, 2})));
}

TEST_CASE("BaseConvWeights overloads match the tensor forms") {
  Rng rng(77);
  afm::BaseConvWeights base;
  base.weights = rng.normal_tensor({2, 3, 3, 3});
  base.frozen = true;
  CHECK(fnv1a64(afm::reshape_base(base)) == fnv1a64(afm::reshape_base(base.weights)));
  auto f = afm::init_factors({2, 3, 3}, 2, 5);
  CHECK(fnv1a64(afm::apply_modulation(base, f)) == fnv1a64(afm::apply_modulation(base.weights, f)));
}

TEST_CASE("modulation mask with zero U is exactly one half") {
  afm::ModulationFactors f;
  f.rank = 2;
  f.u = Tensor({4, 2});
  f.v = Rng(3).normal_tensor({2, 6});
  Tensor mask = afm::modulation_mask(f);
  for (int64_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == 0.5);
}

TEST_CASE("modulation mask matches scalar sigmoid evaluations") {
  // U = [[2],[0]], V = [[1,-1]] -> sigmoid of [[2,-2],[0,0]]
  afm::ModulationFactors f;
  f.rank = 1;
  f.u = Tensor({2, 1}, {2.0, 0.0});
  f.v = Tensor({1, 2}, {1.0, -1.0});
  Tensor mask = afm::modulation_mask(f);
  CHECK(mask.at2(0, 0) == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(mask.at2(0, 1) == doctest::Approx(0.119203).epsilon(1e-6));
  CHECK(mask.at2(1, 0) == doctest::Approx(0.5));
  CHECK(mask.at2(1, 1) == doctest::Approx(0.5));
}

TEST_CASE("mask entries stay strictly inside (0,1) for random factors") {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    afm::ModulationFactors f;
    f.rank = 2;
    f.u = rng.normal_tensor({6, 2}, 3.0);
    f.v = rng.normal_tensor({2, 9}, 3.0);
    Tensor mask = afm::modulation_mask(f);
    for (int64_t i = 0; i < mask.size(); ++i) {
      CHECK(mask[i] > 0.0);
      CHECK(mask[i] < 1.0);
    }
  }
  afm::ModulationFactors bad;
  bad.rank = 2;
  bad.u = Tensor({4, 2});
  bad.v = Tensor({3, 5});
  CHECK_THROWS(afm::modulation_mask(bad));
}

TEST_CASE("apply_modulation with zero factors halves all-ones weights") {
  afm::ModulationFactors f;
  f.rank = 1;
  f.u = Tensor({2, 1});
  f.v = Tensor({1, 2});
  Tensor w = Tensor::full({2, 2, 1, 1}, 1.0);
  Tensor eff = afm::apply_modulation(w, f);
  for (int64_t i = 0; i < eff.size(); ++i) CHECK(eff[i] == 0.5);
}

TEST_CASE("apply_modulation approaches the base weights as the mask saturates") {
  Rng rng(5);
  Tensor w = rng.normal_tensor({3, 2, 3, 3});
  double prev = 1e300;
  for (double logit : {2.0, 6.0, 12.0}) {
    afm::ModulationFactors f;
    f.rank = 1;
    f.u = Tensor::full({9, 1}, logit);
    f.v = Tensor::full({1, 6}, 1.0);
    Tensor eff = afm::apply_modulation(w, f);
    double max_delta = 0.0;
    for (int64_t i = 0; i < w.size(); ++i)
      max_delta = std::max(max_delta, std::fabs(eff[i] - w[i]));
    CHECK(max_delta < prev);
    prev = max_delta;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("apply_modulation hand example") {
  // W shape (1,2,1,1) = [2,4], mask [0.5, 0.25] -> [1.0, 1.0]
  afm::ModulationFactors f;
  f.rank = 1;
  // logits: sigma(0)=0.5, sigma(log(1/3))=0.25
  f.u = Tensor({1, 1}, {1.0});
  f.v = Tensor({1, 2}, {0.0, std::log(1.0 / 3.0)});
  Tensor w({1, 2, 1, 1}, {2.0, 4.0});
  Tensor eff = afm::apply_modulation(w, f);
  CHECK(eff[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(eff[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("modulation_param_count closed forms") {
  CHECK(afm::modulation_param_count({{64, 32, 3}}, 4) == 1152);
  CHECK(afm::modulation_param_count({{1, 1, 1}}, 1) == 2);
  CHECK(afm::modulation_param_count({{8, 4, 3}, {4, 8, 3}}, 2) == 144);
  CHECK_THROWS(afm::modulation_param_count({{4, 4, 3}}, 0));
}

TEST_CASE("parameter savings hold on the toy architecture dims") {
  // r < c_out*c_in*k / (c_out + c_in) guarantees savings; assert on the
  // actual generator layer dims at the default rank
  const std::vector<afm::LayerDims> layers = {{64, 128, 3}, {32, 64, 3}, {16, 32, 3}, {3, 16, 3}};
  for (const auto& d : layers) {
    const int64_t full = d.c_out * d.c_in * d.k * d.k;
    const int64_t factored = afm::modulation_param_count({d}, 4);
    CHECK(factored < full);
  }
}

TEST_CASE("init_modulation gives a deterministic all-0.5 mask") {
  const std::vector<std::pair<std::string, afm::LayerDims>> layers = {{"conv1", {4, 3, 3}},
                                                                      {"conv2", {2, 4, 1}}};
  auto set_a = afm::init_modulation(layers, 2, 77);
  auto set_b = afm::init_modulation(layers, 2, 77);
  for (const auto& [id, f] : set_a.layer_masks) {
    Tensor mask = afm::modulation_mask(f);
    for (int64_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == 0.5);
    const auto& fb = set_b.layer_masks.at(id);
    for (int64_t i = 0; i < f.u.size(); ++i) CHECK(f.u[i] == fb.u[i]);
  }
  CHECK_THROWS(afm::init_modulation(layers, 0, 1));
  CHECK_THROWS(afm::init_modulation({{"conv1", {1, 1, 1}}}, 2, 1));  // rank > min dim
}

TEST_CASE("different seeds give different factors") {
  const std::vector<std::pair<std::string, afm::LayerDims>> layers = {{"conv1", {4, 4, 3}}};
  int differing = 0;
  for (uint64_t s = 0; s < 100; ++s) {
    auto a = afm::init_modulation(layers, 2, s);
    auto b = afm::init_modulation(layers, 2, s + 1000);
    const auto& ua = a.layer_masks.at("conv1").u;
    const auto& ub = b.layer_masks.at("conv1").u;
    for (int64_t i = 0; i < ua.size(); ++i)
      if (ua[i] != ub[i]) {
        ++differing;
        break;
      }
  }
  CHECK(differing == 100);
}

TEST_CASE("gradients through the modulation path match finite differences") {
  Rng rng(6);
  for (const auto& dims : {afm::LayerDims{4, 4, 3}, afm::LayerDims{2, 3, 2}}) {
    const int64_t rank = 2;
    Tensor w = rng.normal_tensor({dims.c_out, dims.c_in, dims.k, dims.k});
    Tensor u = rng.normal_tensor({dims.c_out * dims.k, rank}, 0.5);
    Tensor v = rng.normal_tensor({rank, dims.c_in * dims.k}, 0.5);
    Tensor t = rng.normal_tensor(w.shape());

    auto loss_value = [&](const Tensor& uu, const Tensor& vv) {
      Graph g;
      Var eff = afm::modulated_weights(g, g.constant(w), g.constant(uu), g.constant(vv));
      return g.value(g.sum(g.mul(eff, g.constant(t))))[0];
    };

    Graph g;
    Var vu = g.input(u, true);
    Var vv = g.input(v, true);
    Var eff = afm::modulated_weights(g, g.constant(w), vu, vv);
    g.backward(g.sum(g.mul(eff, g.constant(t))));

    Tensor fd_u = fd_gradient([&](const Tensor& x) { return loss_value(x, v); }, u);
    Tensor fd_v = fd_gradient([&](const Tensor& x) { return loss_value(u, x); }, v);
    CHECK(max_rel_err(g.grad(vu), fd_u) < 1e-4);
    CHECK(max_rel_err(g.grad(vv), fd_v) < 1e-4);
    // the frozen base is a constant: no gradient may exist for it
    CHECK(!g.requires_grad(g.constant(w)));
  }
}

TEST_CASE("frozen base stays bit-identical while factors train") {
  Rng rng(7);
  Tensor w = rng.normal_tensor({3, 2, 3, 3});
  const uint64_t before = fnv1a64(w);
  afm::ModulationFactors f = afm::init_factors({3, 2, 3}, 2, 9);
  // a few SGD steps on U,V against an arbitrary target
  Tensor target = rng.normal_tensor(w.shape());
  for (int step = 0; step < 5; ++step) {
    Graph g;
    Var vu = g.input(f.u, true);
    Var vv = g.input(f.v, true);
    Var eff = afm::modulated_weights(g, g.constant(w), vu, vv);
    Var diff = g.sub(eff, g.constant(target));
    g.backward(g.sum(g.mul(diff, diff)));
    for (int64_t i = 0; i < f.u.size(); ++i) f.u[i] -= 0.1 * g.grad(vu)[i];
    for (int64_t i = 0; i < f.v.size(); ++i) f.v[i] -= 0.1 * g.grad(vv)[i];
  }
  CHECK(fnv1a64(w) == before);
  // and training actually moved the factors
  CHECK(f.v.max_abs() > 0.0);
}

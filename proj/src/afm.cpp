#include "conpro/afm.hpp"

#include <cmath>

#include "conpro/rng.hpp"

namespace conpro::afm {

namespace {
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Tensor reshape_base(const Tensor& w) {
  check(w.ndim() == 4, "reshape_base expects 4-axis weights, got shape " + shape_str(w.shape()));
  check(w.dim(2) == w.dim(3), "reshape_base expects square kernels");
  const int64_t co = w.dim(0), ci = w.dim(1), k = w.dim(2);
  check(co >= 1 && ci >= 1 && k >= 1, "reshape_base: all dims must be positive");
  Tensor m({co * k, ci * k});
  for (int64_t a = 0; a < co; ++a)
    for (int64_t b = 0; b < ci; ++b)
      for (int64_t r = 0; r < k; ++r)
        for (int64_t c = 0; c < k; ++c) m.at2(a * k + r, b * k + c) = w.at4(a, b, r, c);
  return m;
}

Tensor inverse_reshape(const Tensor& m, int64_t c_out, int64_t c_in, int64_t k) {
  check(m.ndim() == 2 && m.dim(0) == c_out * k && m.dim(1) == c_in * k,
        "inverse_reshape: matrix shape " + shape_str(m.shape()) + " does not match dims");
  Tensor w({c_out, c_in, k, k});
  for (int64_t a = 0; a < c_out; ++a)
    for (int64_t b = 0; b < c_in; ++b)
      for (int64_t r = 0; r < k; ++r)
        for (int64_t c = 0; c < k; ++c) w.at4(a, b, r, c) = m.at2(a * k + r, b * k + c);
  return w;
}

Tensor modulation_mask(const ModulationFactors& m) {
  check(m.u.ndim() == 2 && m.v.ndim() == 2, "modulation_mask: factors must be matrices");
  check(m.u.dim(1) == m.v.dim(0),
        "modulation_mask: factor shapes " + shape_str(m.u.shape()) + " x " + shape_str(m.v.shape()) +
            " do not conform");
  Tensor prod = matmul_nn(m.u, m.v);
  // clamp to the open interval at the representable boundary: the sigmoid of
  // a large finite logit rounds to exactly 1.0 (or 0.0) in double precision
  const double hi = std::nextafter(1.0, 0.0);
  const double lo = std::nextafter(0.0, 1.0);
  for (int64_t i = 0; i < prod.size(); ++i)
    prod[i] = std::min(hi, std::max(lo, sigmoid(prod[i])));
  return prod;
}

Tensor apply_modulation(const Tensor& w, const ModulationFactors& m) {
  Tensor base = reshape_base(w);
  Tensor mask = modulation_mask(m);
  check(base.same_shape(mask), "apply_modulation: mask shape " + shape_str(mask.shape()) +
                                   " does not match reshaped weights " + shape_str(base.shape()));
  for (int64_t i = 0; i < base.size(); ++i) base[i] *= mask[i];
  return inverse_reshape(base, w.dim(0), w.dim(1), w.dim(2));
}

Var modulated_weights(Graph& g, Var base_w, Var u, Var v) {
  const Shape& ws = g.value(base_w).shape();
  check(ws.size() == 4, "modulated_weights expects 4-axis base weights");
  Var flat = g.afm_reshape(base_w);
  Var mask = g.sigmoid(g.matmul(u, v));
  Var mixed = g.mul(flat, mask);
  return g.afm_unreshape(mixed, ws[0], ws[1], ws[2]);
}

int64_t modulation_param_count(const std::vector<LayerDims>& layers, int64_t rank) {
  check(rank >= 1, "modulation rank must be >= 1");
  int64_t total = 0;
  for (const LayerDims& d : layers) {
    check(d.c_out >= 1 && d.c_in >= 1 && d.k >= 1, "modulation_param_count: dims must be positive");
    total += rank * (d.c_out * d.k + d.c_in * d.k);
  }
  return total;
}

ModulationFactors init_factors(const LayerDims& dims, int64_t rank, uint64_t seed) {
  check(dims.c_out >= 1 && dims.c_in >= 1 && dims.k >= 1, "init_factors: dims must be positive");
  const int64_t rows = dims.c_out * dims.k, cols = dims.c_in * dims.k;
  check(rank >= 1 && rank <= std::min(rows, cols),
        "invalid modulation rank " + std::to_string(rank) + " for layer (" + std::to_string(rows) +
            "," + std::to_string(cols) + ")");
  Rng rng(seed);
  ModulationFactors f;
  f.rank = rank;
  f.u = rng.normal_tensor({rows, rank}, 0.01);
  f.v = Tensor({rank, cols});
  return f;
}

TaskModulationSet init_modulation(const std::vector<std::pair<std::string, LayerDims>>& layers,
                                  int64_t rank, uint64_t seed) {
  TaskModulationSet set;
  for (size_t i = 0; i < layers.size(); ++i)
    set.layer_masks[layers[i].first] = init_factors(layers[i].second, rank, mix_seed(seed, i));
  return set;
}

}  // namespace conpro::afm

#pragma once

#include <map>
#include <string>
#include <vector>

#include "conpro/graph.hpp"
#include "conpro/tensor.hpp"

namespace conpro::afm {

// Frozen base convolution weights, (c_out, c_in, k, k).
struct BaseConvWeights {
  Tensor weights;
  bool frozen = false;
};

// Low-rank pair producing the multiplicative mask sigmoid(U*V) over the
// reshaped weight matrix. U: (c_out*k, r), V: (r, c_in*k).
struct ModulationFactors {
  Tensor u;
  Tensor v;
  int64_t rank = 0;
};

struct LayerDims {
  int64_t c_out = 0;
  int64_t c_in = 0;
  int64_t k = 0;
};

// Per-task set of factors, one entry per modulated layer.
struct TaskModulationSet {
  int64_t task_id = -1;
  std::map<std::string, ModulationFactors> layer_masks;
  bool frozen = false;
};

// (c_out,c_in,k,k) -> (c_out*k, c_in*k). Rows pair (c_out, kernel-row) and
// columns pair (c_in, kernel-col), both row-major; the layout is fixed so
// checkpoints stay portable.
Tensor reshape_base(const Tensor& w);
inline Tensor reshape_base(const BaseConvWeights& w) { return reshape_base(w.weights); }
Tensor inverse_reshape(const Tensor& m, int64_t c_out, int64_t c_in, int64_t k);

Tensor modulation_mask(const ModulationFactors& m);

// inverse_reshape(reshape_base(w) * sigmoid(U*V))
Tensor apply_modulation(const Tensor& w, const ModulationFactors& m);
inline Tensor apply_modulation(const BaseConvWeights& w, const ModulationFactors& m) {
  return apply_modulation(w.weights, m);
}

// Graph form of apply_modulation; gradients reach u and v whenever those
// vars require grad (the base stays a constant for frozen layers).
Var modulated_weights(Graph& g, Var base_w, Var u, Var v);

// sum over layers of r*(c_out*k + c_in*k)
int64_t modulation_param_count(const std::vector<LayerDims>& layers, int64_t rank);

ModulationFactors init_factors(const LayerDims& dims, int64_t rank, uint64_t seed);

// U ~ N(0, 0.01), V = 0, so every initial mask is exactly 0.5.
TaskModulationSet init_modulation(const std::vector<std::pair<std::string, LayerDims>>& layers,
                                  int64_t rank, uint64_t seed);

}  // namespace conpro::afm

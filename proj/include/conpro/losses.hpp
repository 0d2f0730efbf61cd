#pragma once

#include <vector>

#include "conpro/graph.hpp"
#include "conpro/models.hpp"
#include "conpro/rng.hpp"
#include "conpro/tensor.hpp"

namespace conpro::losses {

// Latent mixup group: N anchor latents, Dirichlet coefficients, and the
// convex combination z0 = sum_i c_i z_i.
struct MixupSpec {
  Tensor anchors;       // (N, d_z)
  Tensor coefficients;  // (N)
  Tensor mixed;         // (d_z)

  int64_t count() const { return coefficients.size(); }
  static MixupSpec sample(int64_t n, int64_t latent_dim, Rng& rng);
  void validate() const;
};

// A raw similarity (or coefficient) vector together with its softmax.
struct SimilarityProfile {
  Tensor raw;
  Tensor distribution;
  static SimilarityProfile from_raw(Tensor raw);
  void validate() const;
};

// cosine similarities of rows 1..N against row 0, softmax-normalized
SimilarityProfile similarity_profile(const Tensor& rows);

struct LossWeights {
  double lambda_g_mdl = 4.0;
  double lambda_d_mdl = 4.0;
  double lambda_supcon = 0.15;
  double supcon_temperature = 0.1;
  double r1_gamma = 10.0;
  void validate() const;
};

// c ~ Dir(1,...,1): uniform over the (N-1)-simplex
Tensor sample_dirichlet(int64_t n, Rng& rng);

Tensor mix_latents(const Tensor& anchors, const Tensor& coefficients);

// max-subtracted softmax; rejects non-finite input
Tensor softmax_distribution(const Tensor& raw);

// sum p_i log(p_i/q_i), with 0*log 0 = 0
double kl_divergence(const Tensor& p, const Tensor& q);

// --- graph builders (training path; gradients flow through `rows`) ---

// rows: (N+1, d) feature rows, row 0 the mixup sample, rows 1..N the anchors.
// KL( softmax_i cos(row0, row_i) || softmax(coefficients) ).
Var mixup_distance_loss(Graph& g, Var rows, const Tensor& coefficients);

// embeddings (M, d), L2-normalized inside. Anchors without positives are
// excluded; throws if no anchor has a positive.
Var supcon_loss(Graph& g, Var embeddings, const std::vector<int64_t>& labels, double temperature);

// non-saturating logistic pair; R1 is handled by the trainer
Var adversarial_d_loss(Graph& g, Var scores_real, Var scores_fake);
Var adversarial_g_loss(Graph& g, Var scores_fake);

// --- value forms matching the op contracts ---

double generator_mdl_loss(const models::Generator& gen, const models::TaskRegistry& reg,
                          int64_t task_id, int64_t layer, const MixupSpec& mixup);

double discriminator_mdl_loss(const models::Discriminator& disc, const Tensor& mixed_image,
                              const Tensor& anchor_images, const Tensor& coefficients);

double supcon_loss_value(const std::vector<Tensor>& embeddings, const std::vector<int64_t>& labels,
                         double temperature);

struct AdvPair {
  double g_loss = 0.0;
  double d_loss = 0.0;
};
// scores are raw logits; r1_mean is the mean squared input-gradient norm on
// reals, weighted by gamma/2 into d_loss.
AdvPair adversarial_losses(const Tensor& scores_real, const Tensor& scores_fake,
                           double r1_mean = 0.0, double gamma = 0.0);

// weighted totals; throws naming the term if any component is not finite
double total_generator_loss(double adv, double mdl, const LossWeights& w);
double total_discriminator_loss(double adv, double mdl, double supcon, const LossWeights& w);

}  // namespace conpro::losses

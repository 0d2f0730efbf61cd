#include "conpro/losses.hpp"

#include <cmath>
#include <set>

namespace conpro::losses {

namespace {
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); }
}  // namespace

MixupSpec MixupSpec::sample(int64_t n, int64_t latent_dim, Rng& rng) {
  MixupSpec m;
  m.anchors = rng.normal_tensor({n, latent_dim});
  m.coefficients = sample_dirichlet(n, rng);
  m.mixed = mix_latents(m.anchors, m.coefficients);
  return m;
}

void MixupSpec::validate() const {
  check(anchors.ndim() == 2 && anchors.dim(0) == coefficients.size(),
        "mixup: anchors/coefficients length mismatch");
  double sum = 0.0;
  for (int64_t i = 0; i < coefficients.size(); ++i) {
    check(coefficients[i] >= 0.0, "mixup: negative coefficient");
    sum += coefficients[i];
  }
  check(std::fabs(sum - 1.0) <= 1e-9, "mixup: coefficients do not sum to 1");
  Tensor expect = mix_latents(anchors, coefficients);
  for (int64_t i = 0; i < mixed.size(); ++i)
    check(std::fabs(expect[i] - mixed[i]) <= 1e-9, "mixup: mixed latent is not the convex combination");
}

SimilarityProfile SimilarityProfile::from_raw(Tensor raw) {
  SimilarityProfile p;
  p.distribution = softmax_distribution(raw);
  p.raw = std::move(raw);
  return p;
}

void SimilarityProfile::validate() const {
  check(raw.size() == distribution.size(), "similarity profile: length mismatch");
  double sum = 0.0;
  for (int64_t i = 0; i < distribution.size(); ++i) {
    check(distribution[i] > 0.0, "similarity profile: non-positive probability");
    sum += distribution[i];
  }
  check(std::fabs(sum - 1.0) <= 1e-9, "similarity profile: distribution does not sum to 1");
  Tensor expect = softmax_distribution(raw);
  for (int64_t i = 0; i < raw.size(); ++i)
    check(std::fabs(expect[i] - distribution[i]) <= 1e-9,
          "similarity profile: distribution is not softmax(raw)");
}

SimilarityProfile similarity_profile(const Tensor& rows) {
  check(rows.ndim() == 2 && rows.dim(0) >= 2, "similarity_profile: need a mixup row plus anchors");
  const int64_t n = rows.dim(0) - 1, d = rows.dim(1);
  auto norm = [&](int64_t r) {
    double s = 0.0;
    for (int64_t j = 0; j < d; ++j) s += rows.at2(r, j) * rows.at2(r, j);
    return std::sqrt(s);
  };
  const double n0 = norm(0);
  Tensor raw({n});
  for (int64_t i = 1; i <= n; ++i) {
    double dot = 0.0;
    for (int64_t j = 0; j < d; ++j) dot += rows.at2(0, j) * rows.at2(i, j);
    raw[i - 1] = dot / (n0 * norm(i));
  }
  return SimilarityProfile::from_raw(std::move(raw));
}

void LossWeights::validate() const {
  check(std::isfinite(lambda_g_mdl) && lambda_g_mdl >= 0.0, "lambda_g_mdl must be finite and >= 0");
  check(std::isfinite(lambda_d_mdl) && lambda_d_mdl >= 0.0, "lambda_d_mdl must be finite and >= 0");
  check(std::isfinite(lambda_supcon) && lambda_supcon >= 0.0, "lambda_supcon must be finite and >= 0");
  check(std::isfinite(supcon_temperature) && supcon_temperature > 0.0,
        "supcon_temperature must be positive");
  check(std::isfinite(r1_gamma) && r1_gamma >= 0.0, "r1_gamma must be finite and >= 0");
}

Tensor sample_dirichlet(int64_t n, Rng& rng) {
  check(n >= 1, "sample_dirichlet: n must be >= 1");
  Tensor c({n});
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    c[i] = rng.exponential();  // Gamma(1,1)
    sum += c[i];
  }
  for (int64_t i = 0; i < n; ++i) c[i] /= sum;
  return c;
}

Tensor mix_latents(const Tensor& anchors, const Tensor& coefficients) {
  check(anchors.ndim() == 2, "mix_latents: anchors must be (N, d)");
  check(anchors.dim(0) == coefficients.size(), "mix_latents: anchors/coefficients length mismatch");
  Tensor z({anchors.dim(1)});
  for (int64_t i = 0; i < anchors.dim(0); ++i)
    axpy(coefficients[i], anchors.data() + i * anchors.dim(1), z.data(), z.size());
  return z;
}

Tensor softmax_distribution(const Tensor& raw) {
  check(raw.size() >= 1, "softmax of empty vector");
  check(raw.all_finite(), "softmax input contains NaN or Inf");
  double mx = raw[0];
  for (int64_t i = 1; i < raw.size(); ++i) mx = std::max(mx, raw[i]);
  Tensor p(raw.shape());
  double denom = 0.0;
  for (int64_t i = 0; i < raw.size(); ++i) {
    p[i] = std::exp(raw[i] - mx);
    denom += p[i];
  }
  for (int64_t i = 0; i < raw.size(); ++i) p[i] /= denom;
  return p;
}

double kl_divergence(const Tensor& p, const Tensor& q) {
  check(p.size() == q.size(), "kl_divergence: length mismatch");
  double sp = 0.0, sq = 0.0;
  for (int64_t i = 0; i < p.size(); ++i) {
    check(p[i] >= 0.0 && q[i] >= 0.0, "kl_divergence: negative probability");
    sp += p[i];
    sq += q[i];
  }
  check(std::fabs(sp - 1.0) <= 1e-6 && std::fabs(sq - 1.0) <= 1e-6,
        "kl_divergence: inputs are not distributions");
  double kl = 0.0;
  for (int64_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    check(q[i] > 0.0, "kl_divergence: q has a zero where p is positive");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

Var mixup_distance_loss(Graph& g, Var rows, const Tensor& coefficients) {
  const Tensor& tr = g.value(rows);
  check(tr.ndim() == 2, "mixup_distance_loss: rows must be 2-d");
  const int64_t n = coefficients.size();
  check(tr.dim(0) == n + 1, "mixup_distance_loss: expected N+1 rows, got " +
                                std::to_string(tr.dim(0)) + " for N=" + std::to_string(n));
  Var mixed = g.select_row(rows, 0);
  std::vector<Var> sims;
  for (int64_t i = 1; i <= n; ++i) sims.push_back(g.cosine(mixed, g.select_row(rows, i)));
  Var p = g.softmax(g.concat_scalars(sims));
  Tensor q = softmax_distribution(coefficients);
  Tensor log_q(q.shape());
  for (int64_t i = 0; i < q.size(); ++i) log_q[i] = std::log(q[i]);
  return g.sum(g.mul(p, g.sub(g.log(p), g.constant(log_q))));
}

Var supcon_loss(Graph& g, Var embeddings, const std::vector<int64_t>& labels, double temperature) {
  const Tensor& te = g.value(embeddings);
  check(te.ndim() == 2, "supcon: embeddings must be (M, d)");
  const int64_t m = te.dim(0);
  check(m >= 2, "supcon: need at least two samples");
  check(static_cast<int64_t>(labels.size()) == m, "supcon: labels/embeddings length mismatch");
  check(temperature > 0.0, "supcon: temperature must be positive");

  // row-normalize: e_i / ||e_i||
  Var sq = g.row_sum(g.mul(embeddings, embeddings));          // (M)
  Var inv = g.div(g.constant(Tensor::full({m}, 1.0)), g.sqrt(sq));
  // scale rows via (M,1)x(1,?) free trick: build diag-free scaling by
  // multiplying each row; reshape inv to column and broadcast by matmul with
  // a row of ones.
  Var inv_col = g.reshape(inv, {m, 1});
  Var ones_row = g.constant(Tensor::full({1, te.dim(1)}, 1.0));
  Var norm = g.mul(embeddings, g.matmul(inv_col, ones_row));  // (M, d) unit rows

  Var sim = g.scale(g.matmul(norm, g.transpose(norm)), 1.0 / temperature);  // (M, M)
  Var expsim = g.exp(sim);

  Tensor offdiag = Tensor::full({m, m}, 1.0);
  for (int64_t i = 0; i < m; ++i) offdiag.at2(i, i) = 0.0;
  Var denom = g.row_sum(g.mul(expsim, g.constant(offdiag)));  // (M): sum_{a != i} exp
  Var log_denom = g.log(denom);

  Tensor pos_mask({m, m});
  Tensor inv_pos_count({m});
  int64_t valid_anchors = 0;
  for (int64_t i = 0; i < m; ++i) {
    int64_t cnt = 0;
    for (int64_t j = 0; j < m; ++j) {
      if (i != j && labels[static_cast<size_t>(i)] == labels[static_cast<size_t>(j)]) {
        pos_mask.at2(i, j) = 1.0;
        ++cnt;
      }
    }
    if (cnt > 0) {
      inv_pos_count[i] = 1.0 / static_cast<double>(cnt);
      ++valid_anchors;
    }
  }
  check(valid_anchors > 0, "supcon: no anchor has a positive sample");

  // per-anchor: log_denom - (1/|P(i)|) * sum_{p in P(i)} sim[i,p]
  Var pos_sum = g.row_sum(g.mul(sim, g.constant(pos_mask)));          // (M)
  Var per_anchor = g.sub(log_denom, g.mul(pos_sum, g.constant(inv_pos_count)));
  // average over anchors with positives only
  Tensor anchor_w({m});
  for (int64_t i = 0; i < m; ++i)
    anchor_w[i] = inv_pos_count[i] > 0.0 ? 1.0 / static_cast<double>(valid_anchors) : 0.0;
  return g.sum(g.mul(per_anchor, g.constant(anchor_w)));
}

Var adversarial_d_loss(Graph& g, Var scores_real, Var scores_fake) {
  Var lr = g.mean(g.softplus(g.scale(scores_real, -1.0)));
  Var lf = g.mean(g.softplus(scores_fake));
  return g.add(lr, lf);
}

Var adversarial_g_loss(Graph& g, Var scores_fake) {
  return g.mean(g.softplus(g.scale(scores_fake, -1.0)));
}

double generator_mdl_loss(const models::Generator& gen, const models::TaskRegistry& reg,
                          int64_t task_id, int64_t layer, const MixupSpec& mixup) {
  check(layer >= 0 && layer < gen.spec().activation_count(),
        "generator_mdl_loss: invalid activation layer index " + std::to_string(layer));
  mixup.validate();
  const int64_t n = mixup.count();
  const int64_t dz = mixup.anchors.dim(1);
  Tensor batch({n + 1, dz});
  std::copy(mixup.mixed.data(), mixup.mixed.data() + dz, batch.data());
  std::copy(mixup.anchors.data(), mixup.anchors.data() + n * dz, batch.data() + dz);

  Graph g;
  auto pv = gen.bind_task(g, reg.entry(task_id), false);
  auto fwd = gen.forward(g, pv, g.constant(batch));
  Var acts = fwd.acts[static_cast<size_t>(layer)];
  const Tensor& ta = g.value(acts);
  Var rows = g.reshape(acts, {n + 1, ta.size() / (n + 1)});
  Var loss = mixup_distance_loss(g, rows, mixup.coefficients);
  return g.value(loss)[0];
}

double discriminator_mdl_loss(const models::Discriminator& disc, const Tensor& mixed_image,
                              const Tensor& anchor_images, const Tensor& coefficients) {
  check(anchor_images.ndim() == 4 && anchor_images.dim(0) == coefficients.size(),
        "discriminator_mdl_loss: anchor batch does not match coefficients");
  const int64_t n = coefficients.size();
  Tensor batch({n + 1, anchor_images.dim(1), anchor_images.dim(2), anchor_images.dim(3)});
  const int64_t stride = anchor_images.size() / n;
  check(mixed_image.size() == stride, "discriminator_mdl_loss: mixed image shape mismatch");
  std::copy(mixed_image.data(), mixed_image.data() + stride, batch.data());
  std::copy(anchor_images.data(), anchor_images.data() + n * stride, batch.data() + stride);

  Graph g;
  auto dv = disc.bind(g, false);
  auto fwd = disc.forward(g, dv, g.constant(batch));
  Var rows = disc.project(g, dv, fwd.features);
  Var loss = mixup_distance_loss(g, rows, coefficients);
  return g.value(loss)[0];
}

double supcon_loss_value(const std::vector<Tensor>& embeddings, const std::vector<int64_t>& labels,
                         double temperature) {
  check(embeddings.size() >= 2, "supcon: need at least two embeddings");
  check(embeddings.size() == labels.size(), "supcon: labels/embeddings length mismatch");
  const int64_t m = static_cast<int64_t>(embeddings.size());
  const int64_t d = embeddings[0].size();
  Tensor rows({m, d});
  for (int64_t i = 0; i < m; ++i) {
    check(embeddings[static_cast<size_t>(i)].size() == d, "supcon: ragged embeddings");
    double sq = 0.0;
    for (int64_t j = 0; j < d; ++j) sq += embeddings[static_cast<size_t>(i)][j] * embeddings[static_cast<size_t>(i)][j];
    check(std::fabs(sq - 1.0) <= 1e-6, "supcon: embeddings must be unit vectors");
    std::copy(embeddings[static_cast<size_t>(i)].data(), embeddings[static_cast<size_t>(i)].data() + d,
              rows.data() + i * d);
  }
  Graph g;
  Var loss = supcon_loss(g, g.constant(rows), labels, temperature);
  return g.value(loss)[0];
}

AdvPair adversarial_losses(const Tensor& scores_real, const Tensor& scores_fake, double r1_mean,
                           double gamma) {
  check(scores_real.size() >= 1 && scores_fake.size() >= 1, "adversarial_losses: empty scores");
  AdvPair out;
  double lr = 0.0, lf = 0.0, lg = 0.0;
  for (int64_t i = 0; i < scores_real.size(); ++i) lr += softplus(-scores_real[i]);
  for (int64_t i = 0; i < scores_fake.size(); ++i) {
    lf += softplus(scores_fake[i]);
    lg += softplus(-scores_fake[i]);
  }
  out.d_loss = lr / double(scores_real.size()) + lf / double(scores_fake.size()) +
               0.5 * gamma * r1_mean;
  out.g_loss = lg / double(scores_fake.size());
  return out;
}

double total_generator_loss(double adv, double mdl, const LossWeights& w) {
  check(std::isfinite(adv), "generator adversarial loss is not finite");
  check(std::isfinite(mdl), "generator MDL loss is not finite");
  return adv + w.lambda_g_mdl * mdl;
}

double total_discriminator_loss(double adv, double mdl, double supcon, const LossWeights& w) {
  check(std::isfinite(adv), "discriminator adversarial loss is not finite");
  check(std::isfinite(mdl), "discriminator MDL loss is not finite");
  check(std::isfinite(supcon), "SupCon loss is not finite");
  return adv + w.lambda_d_mdl * mdl + w.lambda_supcon * supcon;
}

}  // namespace conpro::losses

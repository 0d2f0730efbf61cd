// Acceptance suite: one pass/fail line per criterion. Training-backed
// criteria run real schedules through the library entry points; numeric
// criteria replay the oracle and gradient checks at their stated tolerances.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <vector>

#include "conpro/afm.hpp"
#include "conpro/dai.hpp"
#include "conpro/eval.hpp"
#include "conpro/losses.hpp"
#include "conpro/runner.hpp"
#include "conpro/trainer.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace conpro;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::map<int, Outcome> g_results;

void record(int id, bool pass, const std::string& detail) {
  g_results[id] = {pass, detail};
  std::cerr << "  criterion " << id << (pass ? " ok: " : " FAILED: ") << detail << "\n";
}

void record_error(int id, const std::string& what) { g_results[id] = {false, "exception: " + what}; }

std::filesystem::path workdir() {
  auto p = std::filesystem::current_path() / "acceptance_workdir";
  return p;
}

// ---------------------------------------------------------------- criterion 2

oracle::Mat to_mat(const Tensor& t) {
  oracle::Mat m(static_cast<size_t>(t.dim(0)), oracle::Vec(static_cast<size_t>(t.dim(1))));
  for (int64_t i = 0; i < t.dim(0); ++i)
    for (int64_t j = 0; j < t.dim(1); ++j) m[size_t(i)][size_t(j)] = t.at2(i, j);
  return m;
}

oracle::Vec to_vec(const Tensor& t) { return oracle::Vec(t.data(), t.data() + t.size()); }

bool oracle_equivalence(std::string& detail) {
  const double tol = 1e-10;
  double worst = 0.0;
  auto track = [&worst](double impl, double want) {
    worst = std::max(worst, std::fabs(impl - want) / std::max(1.0, std::fabs(want)));
  };

  // softmax + KL, 20 instances
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(1, s));
    const int64_t n = 2 + int64_t(s % 7);
    Tensor raw = rng.normal_tensor({n});
    Tensor p = losses::softmax_distribution(raw);
    oracle::Vec want = oracle::softmax(to_vec(raw));
    for (int64_t i = 0; i < n; ++i) track(p[i], want[size_t(i)]);
    Tensor q = losses::softmax_distribution(rng.normal_tensor({n}));
    track(losses::kl_divergence(p, q), oracle::kl(to_vec(p), to_vec(q)));
  }

  // generator MDL through a tiny generator
  auto gspec = models::GeneratorSpec::dcgan32(6, 8, {8, 6, 4});
  models::Generator gen(gspec, 11);
  models::TaskRegistry reg;
  {
    models::TaskEntry e;
    e.task_id = 0;
    e.kind = models::TaskKind::base;
    e.frozen = true;
    reg.add(std::move(e));
  }
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(2, s));
    const int64_t n = 2 + int64_t(s % 3);
    auto mix = losses::MixupSpec::sample(n, 6, rng);
    const int64_t layer = int64_t(s % 5);
    const double impl = losses::generator_mdl_loss(gen, reg, 0, layer, mix);
    Tensor batch({n + 1, 6});
    std::copy(mix.mixed.data(), mix.mixed.data() + 6, batch.data());
    std::copy(mix.anchors.data(), mix.anchors.data() + n * 6, batch.data() + 6);
    Tensor acts = gen.activations(reg, 0, batch, layer);
    const int64_t d = acts.size() / (n + 1);
    oracle::Mat rows(size_t(n + 1), oracle::Vec(size_t(d)));
    for (int64_t i = 0; i <= n; ++i)
      for (int64_t j = 0; j < d; ++j) rows[size_t(i)][size_t(j)] = acts[i * d + j];
    track(impl, oracle::mixup_distance(rows, to_vec(mix.coefficients)));
  }

  // discriminator MDL through a tiny discriminator head
  models::DiscSpec dspec;
  dspec.channels = {4, 8, 8, 8};
  dspec.feature_dim = 8;
  dspec.proj_dim = 6;
  models::Discriminator disc(dspec, 21);
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(3, s));
    const int64_t n = 2 + int64_t(s % 3);
    Tensor mixed = rng.uniform_tensor({3, 32, 32}, -1.0, 1.0);
    Tensor anchors = rng.uniform_tensor({n, 3, 32, 32}, -1.0, 1.0);
    Tensor c = losses::sample_dirichlet(n, rng);
    const double impl = losses::discriminator_mdl_loss(disc, mixed, anchors, c);
    Tensor batch({n + 1, 3, 32, 32});
    std::copy(mixed.data(), mixed.data() + mixed.size(), batch.data());
    std::copy(anchors.data(), anchors.data() + anchors.size(), batch.data() + mixed.size());
    Tensor feats = disc.features_of(batch);
    const auto& p = disc.params();
    oracle::Mat rows(size_t(n + 1), oracle::Vec(size_t(dspec.proj_dim)));
    for (int64_t i = 0; i <= n; ++i)
      for (int64_t j = 0; j < dspec.proj_dim; ++j) {
        double acc = p.proj_b[j];
        for (int64_t k = 0; k < dspec.feature_dim; ++k) acc += feats.at2(i, k) * p.proj_w.at2(k, j);
        rows[size_t(i)][size_t(j)] = acc;
      }
    track(impl, oracle::mixup_distance(rows, to_vec(c)));
  }

  // SupCon, 20 instances
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(4, s));
    const int64_t m = 4 + int64_t(s % 4), d = 3 + int64_t(s % 6);
    Tensor emb = rng.normal_tensor({m, d});
    std::vector<int64_t> labels;
    for (int64_t i = 0; i < m; ++i) labels.push_back(int64_t(rng.uniform_int(2)));
    labels[0] = labels[1] = 5;
    Graph g;
    track(g.value(losses::supcon_loss(g, g.constant(emb), labels, 0.1))[0],
          oracle::supcon(to_mat(emb), labels, 0.1));
  }

  // Frechet distance vs the Denman-Beavers route, 20 instances
  for (uint64_t s = 0; s < 20; ++s) {
    Rng rng(mix_seed(5, s));
    const int64_t d = 2 + int64_t(s % 7), n = d + 3;
    Tensor ra = rng.normal_tensor({n, d});
    Tensor rb = rng.normal_tensor({n, d}, 0.8, 0.3);
    auto sa = eval::feature_stats(ra);
    auto sb = eval::feature_stats(rb);
    oracle::Vec ma, mb;
    oracle::Mat ca, cb;
    oracle::mean_cov(to_mat(ra), ma, ca);
    oracle::mean_cov(to_mat(rb), mb, cb);
    track(eval::frechet_distance(sa, sb), oracle::frechet(ma, ca, mb, cb));
  }

  std::ostringstream os;
  os << "max relative deviation vs naive-loop oracles " << worst << " (tolerance 1e-10)";
  detail = os.str();
  return worst <= tol;
}

// ---------------------------------------------------------------- criterion 3

// FD over a deterministic stride of each tensor's coordinates
double fd_check_sampled(const std::function<double()>& value, Tensor& param, const Tensor& analytic,
                        int64_t max_probes = 24) {
  double worst = 0.0;
  const int64_t stride = std::max<int64_t>(1, param.size() / max_probes);
  for (int64_t i = 0; i < param.size(); i += stride) {
    const double orig = param[i];
    const double h = 1e-5 * std::max(1.0, std::fabs(orig));
    param[i] = orig + h;
    const double fp = value();
    param[i] = orig - h;
    const double fm = value();
    param[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, std::fabs(fd - analytic[i]) / std::max(std::fabs(fd) + std::fabs(analytic[i]), 1e-4));
  }
  return worst;
}

bool gradient_checks(std::string& detail) {
  double worst = 0.0;

  // AFM modulation path, dims up to (4,4,3,3), rank 2
  {
    Rng rng(31);
    Tensor w = rng.normal_tensor({4, 4, 3, 3});
    Tensor u = rng.normal_tensor({12, 2}, 0.5);
    Tensor v = rng.normal_tensor({2, 12}, 0.5);
    Tensor t = rng.normal_tensor(w.shape());
    auto value = [&]() {
      Graph g;
      Var eff = afm::modulated_weights(g, g.constant(w), g.constant(u), g.constant(v));
      return g.value(g.sum(g.mul(eff, g.constant(t))))[0];
    };
    Graph g;
    Var vu = g.input(u, true), vv = g.input(v, true);
    g.backward(g.sum(g.mul(afm::modulated_weights(g, g.constant(w), vu, vv), g.constant(t))));
    Tensor gu = g.grad(vu), gv = g.grad(vv);
    worst = std::max(worst, fd_check_sampled(value, u, gu, 48));
    worst = std::max(worst, fd_check_sampled(value, v, gv, 48));
  }

  // MDL-G through a modulated tiny generator: gradients w.r.t. U and V
  {
    auto gspec = models::GeneratorSpec::dcgan32(6, 8, {8, 6, 4});
    models::Generator gen(gspec, 7);
    gen.freeze_base();
    models::TaskEntry task;
    task.task_id = 1;
    task.kind = models::TaskKind::modulated;
    task.mods = afm::init_modulation(gspec.modulated_dims(), 2, 15);
    task.mods.task_id = 1;
    task.copies = models::TaskCopies::from_base(gen.base_params());
    Rng rng(32);
    auto mix = losses::MixupSpec::sample(3, 6, rng);
    Tensor lat({4, 6});
    std::copy(mix.mixed.data(), mix.mixed.data() + 6, lat.data());
    std::copy(mix.anchors.data(), mix.anchors.data() + 18, lat.data() + 6);

    auto loss_of = [&](Graph& g, const models::GenParamVars& pv) {
      auto fwd = gen.forward(g, pv, g.constant(lat));
      Var acts = fwd.acts[2];
      const Tensor& ta = g.value(acts);
      return losses::mixup_distance_loss(g, g.reshape(acts, {4, ta.size() / 4}),
                                         mix.coefficients);
    };
    auto value = [&]() {
      Graph g;
      auto pv = gen.bind_task(g, task, false);
      return g.value(loss_of(g, pv))[0];
    };
    Graph g;
    auto pv = gen.bind_task(g, task, true);
    g.backward(loss_of(g, pv));
    for (size_t i = 0; i < pv.trainables.size(); ++i) {
      const std::string& name = pv.trainable_names[i];
      if (name.find("/U") == std::string::npos && name.find("/V") == std::string::npos) continue;
      Tensor analytic = g.has_grad(pv.trainables[i]) ? g.grad(pv.trainables[i])
                                                     : Tensor(g.value(pv.trainables[i]).shape());
      auto refs = models::task_entry_refs(gspec, task);
      for (auto& [rname, tensor] : refs)
        if (rname == name) worst = std::max(worst, fd_check_sampled(value, *tensor, analytic, 10));
    }
  }

  // MDL-D through the discriminator + projection head
  {
    models::DiscSpec dspec;
    dspec.channels = {2, 3, 3, 4};
    dspec.feature_dim = 6;
    dspec.proj_dim = 4;
    models::Discriminator disc(dspec, 9);
    Rng rng(33);
    Tensor batch = rng.uniform_tensor({4, 3, 32, 32}, -1.0, 1.0);
    Tensor c = losses::sample_dirichlet(3, rng);
    auto loss_of = [&](Graph& g, const models::DiscVars& dv) {
      auto fwd = disc.forward(g, dv, g.constant(batch));
      return losses::mixup_distance_loss(g, disc.project(g, dv, fwd.features), c);
    };
    auto value = [&]() {
      Graph g;
      auto dv = disc.bind(g, false);
      return g.value(loss_of(g, dv))[0];
    };
    Graph g;
    auto dv = disc.bind(g, true);
    g.backward(loss_of(g, dv));
    auto refs = models::discriminator_refs(disc);
    for (size_t i = 0; i < dv.trainables.size(); ++i) {
      if (!g.has_grad(dv.trainables[i])) continue;
      Tensor analytic = g.grad(dv.trainables[i]);
      for (auto& [rname, tensor] : refs)
        if (rname == dv.trainable_names[i])
          worst = std::max(worst, fd_check_sampled(value, *tensor, analytic, 8));
    }
  }

  // SupCon w.r.t. raw embeddings
  {
    Rng rng(34);
    Tensor emb = rng.normal_tensor({6, 5});
    std::vector<int64_t> labels = {0, 0, 1, 1, 2, 2};
    auto value = [&](const Tensor& e) {
      Graph g;
      return g.value(losses::supcon_loss(g, g.constant(e), labels, 0.1))[0];
    };
    Graph g;
    Var ve = g.input(emb, true);
    g.backward(losses::supcon_loss(g, ve, labels, 0.1));
    worst = std::max(worst, max_rel_err(g.grad(ve), fd_gradient(value, emb)));
  }

  // adversarial losses w.r.t. raw scores
  {
    Rng rng(35);
    Tensor sr = rng.normal_tensor({6});
    Tensor sf = rng.normal_tensor({6});
    auto d_value = [&](const Tensor& s) {
      Graph g;
      return g.value(losses::adversarial_d_loss(g, g.constant(s), g.constant(sf)))[0];
    };
    Graph g;
    Var vs = g.input(sr, true);
    g.backward(losses::adversarial_d_loss(g, vs, g.constant(sf)));
    worst = std::max(worst, max_rel_err(g.grad(vs), fd_gradient(d_value, sr)));

    auto g_value = [&](const Tensor& s) {
      Graph g2;
      return g2.value(losses::adversarial_g_loss(g2, g2.constant(s)))[0];
    };
    Graph g2;
    Var vf = g2.input(sf, true);
    g2.backward(losses::adversarial_g_loss(g2, vf));
    worst = std::max(worst, max_rel_err(g2.grad(vf), fd_gradient(g_value, sf)));
  }

  std::ostringstream os;
  os << "max relative gradient error " << worst << " (tolerance 1e-4)";
  detail = os.str();
  return worst <= 1e-4;
}

// ---------------------------------------------------------------- criterion 6

Tensor mean_features(const Tensor& images) {
  const int64_t n = images.dim(0);
  const int64_t stride = images.size() / n;
  Tensor out({n, 1});
  for (int64_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (int64_t p = 0; p < stride; ++p) acc += images[i * stride + p];
    out.at2(i, 0) = acc / double(stride);
  }
  return out;
}

bool dai_properties(std::string& detail) {
  const std::map<int64_t, double> values = {{1, 0.9}, {2, 0.1}, {3, -0.8}};
  dai::TaskSampleFn sampler = [&values](int64_t id, int64_t n, uint64_t) {
    Tensor imgs({n, 3, 4, 4});
    imgs.fill(values.at(id));
    return imgs;
  };
  Tensor real = Tensor::full({6, 3, 4, 4}, 0.15);

  int nearest_hits = 0;
  for (uint64_t seed = 0; seed < 10; ++seed) {
    auto report = dai::select_init_task(real, {1, 2, 3}, mean_features, sampler, 8, seed);
    // argmin by brute force over the report's own distances
    int64_t best = -1;
    double best_d = 0.0;
    for (const auto& [id, d] : report.per_task_distance)
      if (best < 0 || d < best_d || (d == best_d && id < best)) {
        best = id;
        best_d = d;
      }
    if (report.selected != best) {
      detail = "argmin selection disagrees with brute force";
      return false;
    }
    nearest_hits += (report.selected == 2) ? 1 : 0;
  }

  // permutation invariance of the real batch
  Rng rng(41);
  Tensor batch = rng.uniform_tensor({8, 3, 4, 4}, -1.0, 1.0);
  Tensor permuted = batch;
  const int64_t stride = 3 * 4 * 4;
  const int64_t order[8] = {5, 2, 7, 0, 3, 6, 1, 4};
  for (int64_t i = 0; i < 8; ++i)
    std::copy(batch.data() + order[i] * stride, batch.data() + (order[i] + 1) * stride,
              permuted.data() + i * stride);
  auto a = dai::select_init_task(batch, {1, 2, 3}, mean_features, sampler, 4, 9);
  auto b = dai::select_init_task(permuted, {1, 2, 3}, mean_features, sampler, 4, 9);
  bool invariant = a.selected == b.selected;
  for (const auto& [id, d] : a.per_task_distance)
    invariant = invariant && std::fabs(d - b.per_task_distance.at(id)) < 1e-12;

  std::ostringstream os;
  os << "nearest task selected " << nearest_hits << "/10 seeds; argmin == brute force; "
     << (invariant ? "permutation-invariant" : "NOT permutation-invariant");
  detail = os.str();
  return nearest_hits == 10 && invariant;
}

// ---------------------------------------------------------------- criterion 8

bool metric_sanity(std::string& detail) {
  auto g1 = [](double mu, double var) {
    eval::FeatureStats s;
    s.mean = Tensor({1}, {mu});
    s.cov = Tensor({1, 1}, {var});
    s.count = 2;
    return s;
  };
  double worst = 0.0;
  worst = std::max(worst, std::fabs(eval::frechet_distance(g1(0, 1), g1(0, 1))));
  worst = std::max(worst, std::fabs(eval::frechet_distance(g1(0, 1), g1(1, 1)) - 1.0));
  worst = std::max(worst, std::fabs(eval::frechet_distance(g1(0, 1), g1(0, 4)) - 1.0));

  double asym = 0.0;
  Rng rng(51);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor ra = rng.normal_tensor({8, 5});
    Tensor rb = rng.normal_tensor({8, 5}, 1.4, 0.3);
    auto sa = eval::feature_stats(ra);
    auto sb = eval::feature_stats(rb);
    asym = std::max(asym, std::fabs(eval::frechet_distance(sa, sb) - eval::frechet_distance(sb, sa)));
  }
  std::ostringstream os;
  os << "closed-form deviation " << worst << ", max asymmetry " << asym;
  detail = os.str();
  return worst <= 1e-8 && asym <= 1e-8;
}

// ------------------------------------------------- criteria 1, 4, 5 (training)

cli::RunConfig acceptance_config(int64_t seed, const std::string& name, bool full) {
  cli::RunConfig cfg;
  cfg.seed = seed;
  cfg.out_dir = (workdir() / name).string();
  cfg.data.n_tasks = 4;
  cfg.data.shots = 100;
  cfg.data.seed = 11;
  cfg.train.base_steps = 200;
  cfg.train.incr_steps = 200;
  cfg.train.batch_size = 8;
  if (!full) cfg.ablation = {true, false, false, false};  // AFM-only baseline
  return cfg;
}

struct TrainingArtifacts {
  // [config: 0 full / 1 baseline][seed index] -> metrics per task
  std::vector<std::vector<std::vector<eval::TaskMetrics>>> metrics;
  double full_seed1_train_seconds = 0.0;
  std::filesystem::path full_seed1_dir;
};

TrainingArtifacts run_training_matrix() {
  TrainingArtifacts art;
  art.metrics.assign(2, {});
  const std::vector<int64_t> seeds = {1, 2, 3};
  for (int cfg_idx = 0; cfg_idx < 2; ++cfg_idx) {
    const bool full = cfg_idx == 0;
    for (int64_t seed : seeds) {
      const std::string name = std::string(full ? "full" : "afm_only") + "_s" + std::to_string(seed);
      auto cfg = acceptance_config(seed, name, full);
      std::cerr << "  [train] " << name << " (" << cfg.train.base_steps << "+3x"
                << cfg.train.incr_steps << " steps)\n";
      std::ostringstream log;
      const auto t0 = std::chrono::steady_clock::now();
      cli::run_train(cfg, log);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (full && seed == 1) {
        art.full_seed1_train_seconds = secs;
        art.full_seed1_dir = cfg.out_dir;
      }
      art.metrics[size_t(cfg_idx)].push_back(cli::run_eval(cfg.out_dir, log));
    }
  }
  return art;
}

bool zero_forgetting(const TrainingArtifacts& art, std::string& detail) {
  auto run = cli::load_run_state(art.full_seed1_dir);
  bool all_exact = true;
  double max_delta = 0.0;
  for (int64_t id : run.registry.task_ids()) {
    const Tensor& stored = run.store.get("probe/" + std::to_string(id) + "/images");
    auto check = trainer::validate_task_probes(*run.gen, run.registry, id,
                                               run.config.eval.probe_count, &stored);
    all_exact = all_exact && check.exact;
    max_delta = std::max(max_delta, check.max_delta);
  }
  const double hours = art.full_seed1_train_seconds / 3600.0;
  std::ostringstream os;
  os << "4 tasks, 100 shots: probe tables " << (all_exact ? "bit-exact" : "NOT exact")
     << ", max |delta| vs stored probes " << max_delta << " (tolerance 1e-6); training took "
     << art.full_seed1_train_seconds << " s (bound: 7200 s CPU)";
  detail = os.str();
  return (all_exact || max_delta <= 1e-6) && hours <= 2.0;
}

bool parameter_accounting(const TrainingArtifacts& art, std::string& detail) {
  auto run = cli::load_run_state(art.full_seed1_dir);
  const auto dims = run.gen->spec().modulated_dims();
  std::vector<afm::LayerDims> layer_dims;
  for (const auto& [id, d] : dims) layer_dims.push_back(d);
  const int64_t rank = run.config.arch.rank;
  const int64_t base_count = run.gen->base_param_count();

  bool all_match = true;
  int64_t reported = 0;
  for (const auto& m : art.metrics[0][0]) {  // full config, seed 1
    if (m.task_id == 0) {
      all_match = all_match && m.added_params == 0;
      continue;
    }
    const auto& entry = run.registry.entry(m.task_id);
    const int64_t closed_form =
        afm::modulation_param_count(layer_dims, rank) + entry.copies.param_count();
    all_match = all_match && (m.added_params == closed_form);
    reported = m.added_params;
  }
  const double frac = double(reported) / double(base_count);
  std::ostringstream os;
  os << "added params per incremental task " << reported << " ("
     << afm::modulation_param_count(layer_dims, rank) << " factors + copies) = closed form: "
     << (all_match ? "yes" : "NO") << "; " << 100.0 * frac << "% of the " << base_count
     << "-param base generator (bound 5%)";
  detail = os.str();
  return all_match && frac < 0.05;
}

bool ablation_direction(const TrainingArtifacts& art, std::string& detail) {
  // mean toy-FID over the 3 seeds, per incremental task
  std::ostringstream os;
  int wins = 0;
  for (size_t task = 1; task <= 3; ++task) {
    double full_mean = 0.0, base_mean = 0.0;
    for (size_t s = 0; s < 3; ++s) {
      full_mean += art.metrics[0][s][task].toy_fid / 3.0;
      base_mean += art.metrics[1][s][task].toy_fid / 3.0;
    }
    const bool win = full_mean < base_mean;
    wins += win ? 1 : 0;
    os << "task " << task << ": full " << full_mean << (win ? " < " : " >= ") << base_mean
       << " baseline; ";
  }
  os << wins << "/3 tasks improved (need >= 2)";
  detail = os.str();
  return wins >= 2;
}

// ---------------------------------------------------------------- criterion 7

bool compute_claim(std::string& detail) {
  auto stream = data::build_task_stream(2, 64, 11);
  auto timing_run = [&](bool use_afm) {
    cli::RunConfig cfg;
    cfg.seed = 5;
    cfg.ablation.afm = use_afm;
    cfg.ablation.dai = use_afm;
    trainer::Trainer tr(cli::generator_spec_from(cfg), cli::disc_spec_from(cfg),
                        cli::trainer_options_from(cfg), 5);
    tr.train_base_task(stream.base_spec.class_id, stream.base.images, 10, 8);
    tr.train_incremental_task(stream.incremental_specs[0].class_id, stream.incremental[0].images,
                              60, 8);
    return tr.mean_step_ms(1);
  };
  const double modulated_ms = timing_run(true);
  const double finetune_ms = timing_run(false);
  const double ratio = modulated_ms / finetune_ms;
  std::ostringstream os;
  os << "incremental step: modulation-only " << modulated_ms << " ms vs full-finetune "
     << finetune_ms << " ms, ratio " << ratio
     << " (bound <= 1.0; the paper's ~30% speedup is NOT reproduced at this scale, only the "
        "direction is checked)";
  detail = os.str();
  return ratio <= 1.0;
}

}  // namespace

int main() {
  std::filesystem::remove_all(workdir());
  std::filesystem::create_directories(workdir());

  auto guarded = [](int id, const std::function<bool(std::string&)>& fn) {
    try {
      std::string detail;
      const bool ok = fn(detail);
      record(id, ok, detail);
    } catch (const std::exception& e) {
      record_error(id, e.what());
    }
  };

  std::cerr << "[fast criteria]\n";
  guarded(2, oracle_equivalence);
  guarded(3, gradient_checks);
  guarded(6, dai_properties);
  guarded(8, metric_sanity);

  std::cerr << "[compute claim]\n";
  guarded(7, compute_claim);

  std::cerr << "[training matrix: full + afm-only, 3 seeds]\n";
  try {
    auto art = run_training_matrix();
    guarded(1, [&](std::string& d) { return zero_forgetting(art, d); });
    guarded(4, [&](std::string& d) { return parameter_accounting(art, d); });
    guarded(5, [&](std::string& d) { return ablation_direction(art, d); });
  } catch (const std::exception& e) {
    record_error(1, e.what());
    record_error(4, e.what());
    record_error(5, e.what());
  }

  static const std::map<int, std::string> names = {
      {1, "zero-forgetting across the task sequence"},
      {2, "loss oracle equivalence at 1e-10"},
      {3, "analytic vs finite-difference gradients at 1e-4"},
      {4, "per-task parameter accounting"},
      {5, "ablation direction: full config vs AFM-only baseline"},
      {6, "distance-aware initialization properties"},
      {7, "modulation-only step cost vs full finetune"},
      {8, "Frechet metric sanity"},
  };
  bool all_pass = true;
  std::cout << "\n";
  for (const auto& [id, name] : names) {
    const auto it = g_results.find(id);
    const bool ok = it != g_results.end() && it->second.pass;
    all_pass = all_pass && ok;
    std::cout << (ok ? "[PASS] " : "[FAIL] ") << "criterion " << id << ": " << name;
    if (it != g_results.end() && !it->second.detail.empty()) std::cout << " -- " << it->second.detail;
    std::cout << "\n";
  }
  return all_pass ? 0 : 1;
}

#include "conpro/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "conpro/afm.hpp"
#include "conpro/graph.hpp"
#include "conpro/rng.hpp"

namespace conpro::eval {

FeatureExtractor::FeatureExtractor(uint64_t seed, int64_t out_dim) : seed_(seed), out_dim_(out_dim) {
  check(out_dim >= 1, "feature extractor: out_dim must be >= 1");
  Rng rng(mix_seed(seed, 0xfeed));
  const std::vector<int64_t> widths = {8, 16, out_dim};
  int64_t c_in = 3;
  for (int64_t c_out : widths) {
    weights_.push_back(rng.normal_tensor({c_out, c_in, 3, 3}, std::sqrt(2.0 / double(c_in * 9))));
    c_in = c_out;
  }
}

Tensor FeatureExtractor::features(const Tensor& images) const {
  check(images.ndim() == 4 && images.dim(1) == 3, "feature extractor expects (B,3,H,W) images");
  Graph g;
  Var h = g.constant(images);
  for (const auto& w : weights_) {
    h = g.conv2d(h, g.constant(w), Var{}, 1);
    h = g.leaky_relu(h, 0.2);
    h = g.avgpool2(h);
  }
  // global average pool over the remaining spatial grid
  const Tensor& th = g.value(h);
  const int64_t B = th.dim(0), C = th.dim(1), HW = th.dim(2) * th.dim(3);
  Tensor out({B, C});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c) {
      const double* p = th.data() + (b * C + c) * HW;
      double acc = 0.0;
      for (int64_t i = 0; i < HW; ++i) acc += p[i];
      out.at2(b, c) = acc / double(HW);
    }
  return out;
}

void FeatureExtractor::save(ArrayStore& store) const {
  for (size_t i = 0; i < weights_.size(); ++i)
    store.put("extractor/conv" + std::to_string(i + 1) + "/w", weights_[i]);
  Tensor meta({2}, {static_cast<double>(seed_), static_cast<double>(out_dim_)});
  store.put("extractor/meta", meta);
}

FeatureExtractor FeatureExtractor::load(const ArrayStore& store) {
  const Tensor& meta = store.get("extractor/meta");
  FeatureExtractor ex(static_cast<uint64_t>(meta[0]), static_cast<int64_t>(meta[1]));
  for (size_t i = 0; i < ex.weights_.size(); ++i)
    ex.weights_[i] = store.get("extractor/conv" + std::to_string(i + 1) + "/w");
  return ex;
}

FeatureStats feature_stats(const Tensor& rows) {
  check(rows.ndim() == 2, "feature_stats expects (n, d) rows");
  const int64_t n = rows.dim(0), d = rows.dim(1);
  check(n >= 2, "feature_stats needs at least two samples");
  FeatureStats s;
  s.count = n;
  s.mean = Tensor({d});
  for (int64_t i = 0; i < n; ++i) axpy(1.0 / double(n), rows.data() + i * d, s.mean.data(), d);
  s.cov = Tensor({d, d});
  for (int64_t i = 0; i < n; ++i) {
    const double* r = rows.data() + i * d;
    for (int64_t a = 0; a < d; ++a) {
      const double da = r[a] - s.mean[a];
      for (int64_t b = 0; b < d; ++b) s.cov.at2(a, b) += da * (r[b] - s.mean[b]);
    }
  }
  const double scale = 1.0 / double(n - 1);
  for (int64_t i = 0; i < s.cov.size(); ++i) s.cov[i] *= scale;
  return s;
}

FeatureStats feature_stats_of_images(const Tensor& images, const FeatureExtractor& extractor) {
  return feature_stats(extractor.features(images));
}

void jacobi_eig(const Tensor& sym, Tensor& eigvals, Tensor& eigvecs) {
  check(sym.ndim() == 2 && sym.dim(0) == sym.dim(1), "jacobi_eig expects a square matrix");
  const int64_t n = sym.dim(0);
  Tensor a = sym;
  eigvecs = Tensor({n, n});
  for (int64_t i = 0; i < n; ++i) eigvecs.at2(i, i) = 1.0;

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int64_t p = 0; p < n; ++p)
      for (int64_t q = p + 1; q < n; ++q) off += a.at2(p, q) * a.at2(p, q);
    if (off <= 1e-24) break;
    for (int64_t p = 0; p < n; ++p) {
      for (int64_t q = p + 1; q < n; ++q) {
        const double apq = a.at2(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a.at2(q, q) - a.at2(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int64_t i = 0; i < n; ++i) {
          const double aip = a.at2(i, p), aiq = a.at2(i, q);
          a.at2(i, p) = c * aip - s * aiq;
          a.at2(i, q) = s * aip + c * aiq;
        }
        for (int64_t i = 0; i < n; ++i) {
          const double api = a.at2(p, i), aqi = a.at2(q, i);
          a.at2(p, i) = c * api - s * aqi;
          a.at2(q, i) = s * api + c * aqi;
        }
        for (int64_t i = 0; i < n; ++i) {
          const double vip = eigvecs.at2(i, p), viq = eigvecs.at2(i, q);
          eigvecs.at2(i, p) = c * vip - s * viq;
          eigvecs.at2(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  eigvals = Tensor({n});
  for (int64_t i = 0; i < n; ++i) eigvals[i] = a.at2(i, i);
}

namespace {
// Q diag(sqrt(max(lambda,0))) Q^T
Tensor psd_sqrt(const Tensor& sym) {
  Tensor vals, vecs;
  jacobi_eig(sym, vals, vecs);
  const int64_t n = vals.size();
  Tensor scaled = vecs;  // columns scaled by sqrt(lambda)
  for (int64_t j = 0; j < n; ++j) {
    const double s = std::sqrt(std::max(0.0, vals[j]));
    for (int64_t i = 0; i < n; ++i) scaled.at2(i, j) = vecs.at2(i, j) * s;
  }
  // Q diag(sqrt(lambda)) Q^T == scaled * Q^T
  Tensor root({n, n});
  mm_nt_acc(root.data(), scaled.data(), vecs.data(), n, n, n);
  return root;
}
}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  check(a.mean.size() == b.mean.size(), "frechet_distance: dimension mismatch");
  const int64_t d = a.mean.size();
  double mean_term = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    const double diff = a.mean[i] - b.mean[i];
    mean_term += diff * diff;
  }
  const Tensor ra = psd_sqrt(a.cov);
  Tensor inner({d, d});
  {
    Tensor tmp = matmul_nn(ra, b.cov);
    Tensor prod = matmul_nn(tmp, ra);
    // symmetrize against roundoff before the eigensolve
    for (int64_t i = 0; i < d; ++i)
      for (int64_t j = 0; j < d; ++j) inner.at2(i, j) = 0.5 * (prod.at2(i, j) + prod.at2(j, i));
  }
  Tensor vals, vecs;
  jacobi_eig(inner, vals, vecs);
  double trace_root = 0.0;
  for (int64_t i = 0; i < d; ++i) trace_root += std::sqrt(std::max(0.0, vals[i]));
  double trace_a = 0.0, trace_b = 0.0;
  for (int64_t i = 0; i < d; ++i) {
    trace_a += a.cov.at2(i, i);
    trace_b += b.cov.at2(i, i);
  }
  return std::max(0.0, mean_term + trace_a + trace_b - 2.0 * trace_root);
}

double toy_fid(const Tensor& images_a, const Tensor& images_b, const FeatureExtractor& extractor) {
  return frechet_distance(feature_stats_of_images(images_a, extractor),
                          feature_stats_of_images(images_b, extractor));
}

int64_t added_param_count(const models::TaskEntry& entry) {
  switch (entry.kind) {
    case models::TaskKind::base:
      return 0;
    case models::TaskKind::full_copy:
      return entry.full.param_count();
    case models::TaskKind::modulated:
    default: {
      int64_t n = entry.copies.param_count();
      for (const auto& [id, f] : entry.mods.layer_masks) n += f.u.size() + f.v.size();
      return n;
    }
  }
}

TaskMetrics evaluate_task(const models::Generator& gen, const models::TaskRegistry& reg,
                          int64_t task_id, int64_t n_gen, const Tensor& real_images,
                          const FeatureExtractor& extractor, uint64_t seed, double step_ms) {
  const models::TaskEntry& entry = reg.entry(task_id);
  check(entry.frozen, "evaluate_task: task " + std::to_string(task_id) + " is not frozen");
  check(n_gen >= 2, "evaluate_task: n_gen must be >= 2");
  Rng rng(mix_seed(seed, 0xe7a1, static_cast<uint64_t>(task_id)));
  Tensor z = rng.normal_tensor({n_gen, gen.spec().latent_dim});
  Tensor generated = gen.generate(reg, task_id, z);
  TaskMetrics m;
  m.task_id = task_id;
  m.class_id = entry.class_id;
  m.toy_fid = toy_fid(generated, real_images, extractor);
  m.added_params = added_param_count(entry);
  m.step_ms = step_ms;
  return m;
}

std::string metrics_csv_header() { return "task_id,class_id,toy_fid,added_params,step_ms\n"; }

std::string metrics_csv_row(const TaskMetrics& m) {
  std::ostringstream os;
  os.precision(17);
  os << m.task_id << "," << m.class_id << "," << m.toy_fid << "," << m.added_params << ","
     << m.step_ms << "\n";
  return os.str();
}

void write_fid_bars(const std::vector<TaskMetrics>& metrics, const std::filesystem::path& file) {
  check(!metrics.empty(), "write_fid_bars: no metrics");
  const int64_t bar_w = 28, gap = 8, h = 120, margin = 10;
  const int64_t w = margin * 2 + static_cast<int64_t>(metrics.size()) * (bar_w + gap);
  double max_fid = 1e-12;
  for (const auto& m : metrics) max_fid = std::max(max_fid, m.toy_fid);

  std::vector<unsigned char> px(static_cast<size_t>(w * h * 3), 245);
  for (size_t t = 0; t < metrics.size(); ++t) {
    const int64_t x0 = margin + static_cast<int64_t>(t) * (bar_w + gap);
    const int64_t bar_h = std::max<int64_t>(1, static_cast<int64_t>(
                                                   (h - 2 * margin) * metrics[t].toy_fid / max_fid));
    for (int64_t y = h - margin - bar_h; y < h - margin; ++y)
      for (int64_t x = x0; x < x0 + bar_w; ++x) {
        unsigned char* p = px.data() + (y * w + x) * 3;
        p[0] = 60;
        p[1] = 90;
        p[2] = 180;
      }
  }
  std::ofstream os(file, std::ios::binary);
  check(static_cast<bool>(os), "cannot write '" + file.string() + "'");
  os << "P6\n" << w << " " << h << "\n255\n";
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
}

std::string report_table(const std::vector<std::string>& config_names,
                         const std::vector<std::vector<TaskMetrics>>& per_config) {
  check(config_names.size() == per_config.size(), "report_table: names/columns mismatch");
  check(!per_config.empty(), "report_table: no configurations");
  const size_t n_tasks = per_config[0].size();
  for (const auto& col : per_config)
    check(col.size() == n_tasks, "report_table: configurations cover different task counts");

  std::ostringstream os;
  os << std::left << std::setw(10) << "toy-FID";
  for (const auto& name : config_names) os << std::right << std::setw(16) << name;
  os << "\n";
  for (size_t t = 0; t < n_tasks; ++t) {
    os << std::left << std::setw(10) << ("task " + std::to_string(per_config[0][t].task_id));
    for (const auto& col : per_config) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(4) << col[t].toy_fid;
      os << std::right << std::setw(16) << cell.str();
    }
    os << "\n";
  }
  os << std::left << std::setw(10) << "params+";
  for (const auto& col : per_config) {
    int64_t total = 0;
    for (const auto& m : col) total += m.added_params;
    os << std::right << std::setw(16) << total;
  }
  os << "\n" << std::left << std::setw(10) << "ms/step";
  for (const auto& col : per_config) {
    double mean = 0.0;
    for (const auto& m : col) mean += m.step_ms;
    std::ostringstream cell;
    cell << std::fixed << std::setprecision(2) << mean / double(col.size());
    os << std::right << std::setw(16) << cell.str();
  }
  os << "\n";
  return os.str();
}

}  // namespace conpro::eval

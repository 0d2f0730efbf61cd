#include "conpro/models.hpp"

#include <cmath>
#include <set>

#include "conpro/rng.hpp"

namespace conpro::models {

namespace {
constexpr double kLeakySlope = 0.2;
constexpr int64_t kRootSize = 4;
}  // namespace

GeneratorSpec GeneratorSpec::dcgan32(int64_t latent_dim, int64_t base_channels,
                                     const std::vector<int64_t>& widths) {
  check(widths.size() == 3, "dcgan32 expects three block widths");
  GeneratorSpec s;
  s.latent_dim = latent_dim;
  s.base_channels = base_channels;
  int64_t c_in = base_channels;
  for (size_t i = 0; i < widths.size(); ++i) {
    ConvBlock b;
    b.id = "conv" + std::to_string(i + 1);
    b.c_in = c_in;
    b.c_out = widths[i];
    b.k = 3;
    b.upsample = true;
    b.norm = true;
    s.blocks.push_back(b);
    c_in = widths[i];
  }
  ConvBlock out;
  out.id = "conv4";
  out.c_in = c_in;
  out.c_out = s.out_channels;
  out.k = 3;
  out.upsample = false;
  out.norm = false;
  s.blocks.push_back(out);
  for (const auto& b : s.blocks) s.modulated_layer_ids.push_back(b.id);
  s.validate();
  return s;
}

void GeneratorSpec::validate() const {
  check(latent_dim >= 1 && base_channels >= 1, "generator spec: bad dimensions");
  check(!blocks.empty(), "generator spec: no blocks");
  int64_t size = kRootSize;
  int64_t c = base_channels;
  std::set<std::string> ids;
  for (const auto& b : blocks) {
    check(b.c_in == c, "generator spec: block '" + b.id + "' input channels do not chain");
    check(b.k % 2 == 1, "generator spec: kernels must be odd for same-size padding");
    check(ids.insert(b.id).second, "generator spec: duplicate block id '" + b.id + "'");
    if (b.upsample) size *= 2;
    c = b.c_out;
  }
  check(size == height && size == width,
        "generator spec: blocks compose to " + std::to_string(size) + ", expected " +
            std::to_string(height));
  check(c == out_channels, "generator spec: final channels do not match the image");
  for (const auto& id : modulated_layer_ids)
    check(ids.count(id) > 0, "generator spec: modulated layer '" + id + "' is not a block");
}

std::vector<std::pair<std::string, afm::LayerDims>> GeneratorSpec::modulated_dims() const {
  std::vector<std::pair<std::string, afm::LayerDims>> out;
  for (const auto& b : blocks) {
    if (std::find(modulated_layer_ids.begin(), modulated_layer_ids.end(), b.id) ==
        modulated_layer_ids.end())
      continue;
    out.emplace_back(b.id, afm::LayerDims{b.c_out, b.c_in, b.k});
  }
  return out;
}

GeneratorParams GeneratorParams::init(const GeneratorSpec& spec, uint64_t seed) {
  Rng rng(seed);
  GeneratorParams p;
  const int64_t root = spec.base_channels * kRootSize * kRootSize;
  p.proj_w = rng.normal_tensor({spec.latent_dim, root}, 1.0 / std::sqrt(double(spec.latent_dim)));
  p.proj_b = Tensor({root});
  p.proj_norm.gain = Tensor::full({spec.base_channels}, 1.0);
  p.proj_norm.bias = Tensor({spec.base_channels});
  for (const auto& b : spec.blocks) {
    GenBlockParams bp;
    const double std = std::sqrt(2.0 / double(b.c_in * b.k * b.k));
    bp.w = rng.normal_tensor({b.c_out, b.c_in, b.k, b.k}, std);
    bp.b = Tensor({b.c_out});
    if (b.norm) {
      bp.norm.gain = Tensor::full({b.c_out}, 1.0);
      bp.norm.bias = Tensor({b.c_out});
    }
    p.blocks.push_back(std::move(bp));
  }
  return p;
}

int64_t GeneratorParams::param_count() const {
  int64_t n = proj_w.size() + proj_b.size() + proj_norm.gain.size() + proj_norm.bias.size();
  for (const auto& b : blocks)
    n += b.w.size() + b.b.size() + b.norm.gain.size() + b.norm.bias.size();
  return n;
}

TaskCopies TaskCopies::from_base(const GeneratorParams& base) {
  TaskCopies c;
  c.proj_norm = base.proj_norm;
  for (const auto& b : base.blocks) {
    c.conv_bias.push_back(b.b);
    c.norms.push_back(b.norm);
  }
  return c;
}

int64_t TaskCopies::param_count() const {
  int64_t n = proj_norm.gain.size() + proj_norm.bias.size();
  for (const auto& t : conv_bias) n += t.size();
  for (const auto& a : norms) n += a.gain.size() + a.bias.size();
  return n;
}

std::string task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::base: return "base";
    case TaskKind::modulated: return "modulated";
    default: return "full_copy";
  }
}

TaskKind task_kind_from_name(const std::string& s) {
  if (s == "base") return TaskKind::base;
  if (s == "modulated") return TaskKind::modulated;
  if (s == "full_copy") return TaskKind::full_copy;
  fail("unknown task kind '" + s + "'");
}

int64_t TaskRegistry::add(TaskEntry e) {
  if (e.task_id < 0) e.task_id = static_cast<int64_t>(tasks_.size());
  for (const auto& t : tasks_)
    check(t.task_id != e.task_id, "task id " + std::to_string(e.task_id) + " already registered");
  tasks_.push_back(std::move(e));
  return tasks_.back().task_id;
}

bool TaskRegistry::has(int64_t task_id) const {
  for (const auto& t : tasks_)
    if (t.task_id == task_id) return true;
  return false;
}

const TaskEntry& TaskRegistry::entry(int64_t task_id) const {
  for (const auto& t : tasks_)
    if (t.task_id == task_id) return t;
  fail("unknown task id " + std::to_string(task_id));
}

TaskEntry& TaskRegistry::entry_mut(int64_t task_id) {
  for (auto& t : tasks_)
    if (t.task_id == task_id) return t;
  fail("unknown task id " + std::to_string(task_id));
}

std::vector<int64_t> TaskRegistry::task_ids() const {
  std::vector<int64_t> ids;
  for (const auto& t : tasks_) ids.push_back(t.task_id);
  return ids;
}

std::vector<int64_t> TaskRegistry::modulated_task_ids() const {
  std::vector<int64_t> ids;
  for (const auto& t : tasks_)
    if (t.kind == TaskKind::modulated && t.frozen) ids.push_back(t.task_id);
  return ids;
}

Generator::Generator(GeneratorSpec spec, uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  base_ = GeneratorParams::init(spec_, seed);
}

GenParamVars Generator::bind_base(Graph& g, bool trainable) const {
  check(!(trainable && frozen_), "base generator weights are frozen");
  GenParamVars pv;
  auto track = [&pv](Var v, const std::string& name, bool t) {
    if (t) {
      pv.trainables.push_back(v);
      pv.trainable_names.push_back(name);
    }
    return v;
  };
  pv.proj_w = track(g.input(base_.proj_w, trainable), "base/proj/w", trainable);
  pv.proj_b = track(g.input(base_.proj_b, trainable), "base/proj/b", trainable);
  pv.proj_gain = track(g.input(base_.proj_norm.gain, trainable), "base/proj_norm/gain", trainable);
  pv.proj_bias = track(g.input(base_.proj_norm.bias, trainable), "base/proj_norm/bias", trainable);
  for (size_t i = 0; i < spec_.blocks.size(); ++i) {
    const auto& bp = base_.blocks[i];
    const std::string id = spec_.blocks[i].id;
    GenParamVars::BlockVars bv;
    bv.w = track(g.input(bp.w, trainable), "base/" + id + "/w", trainable);
    bv.b = track(g.input(bp.b, trainable), "base/" + id + "/b", trainable);
    if (!bp.norm.gain.empty()) {
      bv.gain = track(g.input(bp.norm.gain, trainable), "base/" + id + "_norm/gain", trainable);
      bv.bias = track(g.input(bp.norm.bias, trainable), "base/" + id + "_norm/bias", trainable);
    }
    pv.blocks.push_back(bv);
  }
  return pv;
}

GenParamVars Generator::bind_task(Graph& g, const TaskEntry& task, bool trainable) const {
  check(!(trainable && task.frozen), "task " + std::to_string(task.task_id) + " is frozen");
  if (task.kind == TaskKind::base) return bind_base(g, trainable && !frozen_);

  GenParamVars pv;
  auto track = [&pv](Var v, const std::string& name, bool t) {
    if (t) {
      pv.trainables.push_back(v);
      pv.trainable_names.push_back(name);
    }
    return v;
  };
  const std::string tp = "task/" + std::to_string(task.task_id) + "/";

  if (task.kind == TaskKind::full_copy) {
    const GeneratorParams& p = task.full;
    pv.proj_w = track(g.input(p.proj_w, trainable), tp + "full/proj/w", trainable);
    pv.proj_b = track(g.input(p.proj_b, trainable), tp + "full/proj/b", trainable);
    pv.proj_gain = track(g.input(p.proj_norm.gain, trainable), tp + "full/proj_norm/gain", trainable);
    pv.proj_bias = track(g.input(p.proj_norm.bias, trainable), tp + "full/proj_norm/bias", trainable);
    for (size_t i = 0; i < spec_.blocks.size(); ++i) {
      const auto& bp = p.blocks[i];
      const std::string id = spec_.blocks[i].id;
      GenParamVars::BlockVars bv;
      bv.w = track(g.input(bp.w, trainable), tp + "full/" + id + "/w", trainable);
      bv.b = track(g.input(bp.b, trainable), tp + "full/" + id + "/b", trainable);
      if (!bp.norm.gain.empty()) {
        bv.gain = track(g.input(bp.norm.gain, trainable), tp + "full/" + id + "_norm/gain", trainable);
        bv.bias = track(g.input(bp.norm.bias, trainable), tp + "full/" + id + "_norm/bias", trainable);
      }
      pv.blocks.push_back(bv);
    }
    return pv;
  }

  // modulated task: frozen base weights, sigmoid(U*V) masks, per-task copies
  pv.proj_w = g.constant(base_.proj_w);
  pv.proj_b = g.constant(base_.proj_b);
  pv.proj_gain = track(g.input(task.copies.proj_norm.gain, trainable), tp + "copy/proj_norm/gain", trainable);
  pv.proj_bias = track(g.input(task.copies.proj_norm.bias, trainable), tp + "copy/proj_norm/bias", trainable);
  for (size_t i = 0; i < spec_.blocks.size(); ++i) {
    const auto& bp = base_.blocks[i];
    const std::string id = spec_.blocks[i].id;
    GenParamVars::BlockVars bv;
    auto it = task.mods.layer_masks.find(id);
    if (it != task.mods.layer_masks.end()) {
      Var base_w = g.constant(bp.w);
      Var u = track(g.input(it->second.u, trainable), tp + id + "/U", trainable);
      Var v = track(g.input(it->second.v, trainable), tp + id + "/V", trainable);
      bv.w = afm::modulated_weights(g, base_w, u, v);
    } else {
      bv.w = g.constant(bp.w);
    }
    bv.b = track(g.input(task.copies.conv_bias[i], trainable), tp + "copy/" + id + "/b", trainable);
    if (!task.copies.norms[i].gain.empty()) {
      bv.gain = track(g.input(task.copies.norms[i].gain, trainable), tp + "copy/" + id + "_norm/gain", trainable);
      bv.bias = track(g.input(task.copies.norms[i].bias, trainable), tp + "copy/" + id + "_norm/bias", trainable);
    }
    pv.blocks.push_back(bv);
  }
  return pv;
}

GenForward Generator::forward(Graph& g, const GenParamVars& pv, Var z) const {
  const Tensor& tz = g.value(z);
  check(tz.ndim() == 2 && tz.dim(1) == spec_.latent_dim,
        "generator forward: latent batch must be (B," + std::to_string(spec_.latent_dim) + ")");
  const int64_t B = tz.dim(0);

  GenForward out;
  Var h = g.add_rowvec(g.matmul(z, pv.proj_w), pv.proj_b);
  h = g.reshape(h, {B, spec_.base_channels, kRootSize, kRootSize});
  h = g.instance_norm(h, pv.proj_gain, pv.proj_bias);
  h = g.leaky_relu(h, kLeakySlope);
  out.acts.push_back(h);

  for (size_t i = 0; i < spec_.blocks.size(); ++i) {
    const auto& b = spec_.blocks[i];
    if (b.upsample) h = g.upsample2(h);
    h = g.conv2d(h, pv.blocks[i].w, pv.blocks[i].b, static_cast<int>((b.k - 1) / 2));
    const bool last = (i + 1 == spec_.blocks.size());
    if (!last) {
      if (b.norm) h = g.instance_norm(h, pv.blocks[i].gain, pv.blocks[i].bias);
      h = g.leaky_relu(h, kLeakySlope);
    }
    out.acts.push_back(h);
  }
  out.image = g.tanh(h);
  return out;
}

Tensor Generator::generate_entry(const TaskEntry& task, const Tensor& z) const {
  Graph g;
  auto pv = bind_task(g, task, false);
  auto fwd = forward(g, pv, g.constant(z));
  return g.value(fwd.image);
}

Tensor Generator::generate(const TaskRegistry& reg, int64_t task_id, const Tensor& z) const {
  return generate_entry(reg.entry(task_id), z);
}

Tensor Generator::activations(const TaskRegistry& reg, int64_t task_id, const Tensor& z,
                              int64_t layer) const {
  check(layer >= 0 && layer < spec_.activation_count(),
        "invalid activation layer index " + std::to_string(layer));
  Graph g;
  auto pv = bind_task(g, reg.entry(task_id), false);
  auto fwd = forward(g, pv, g.constant(z));
  return g.value(fwd.acts[static_cast<size_t>(layer)]);
}

std::pair<Tensor, Tensor> Discriminator::discriminate(const Tensor& images) const {
  Graph g;
  auto dv = bind(g, false);
  auto fwd = forward(g, dv, g.constant(images));
  return {g.value(fwd.logits), g.value(fwd.features)};
}

Tensor Discriminator::features_of(const Tensor& images) const { return discriminate(images).second; }

void DiscSpec::validate() const {
  check(in_channels >= 1 && image_size >= 4, "discriminator spec: bad input");
  check(!channels.empty(), "discriminator spec: no blocks");
  int64_t size = image_size;
  for (size_t i = 0; i < channels.size(); ++i) {
    check(channels[i] >= 1, "discriminator spec: bad channel count");
    check(size % 2 == 0, "discriminator spec: image size not divisible by pooling");
    size /= 2;
  }
  check(size >= 1, "discriminator spec: too many blocks");
  check(feature_dim >= 1 && proj_dim >= 1, "discriminator spec: bad head dims");
}

int64_t DiscParams::param_count() const {
  int64_t n = fc_w.size() + fc_b.size() + out_w.size() + out_b.size() + proj_w.size() + proj_b.size();
  for (const auto& b : blocks) n += b.w.size() + b.b.size();
  return n;
}

Discriminator::Discriminator(DiscSpec spec, uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  Rng rng(seed);
  int64_t c_in = spec_.in_channels;
  int64_t size = spec_.image_size;
  for (int64_t c_out : spec_.channels) {
    DiscParams::BlockParams bp;
    bp.w = rng.normal_tensor({c_out, c_in, 3, 3}, std::sqrt(2.0 / double(c_in * 9)));
    bp.b = Tensor({c_out});
    params_.blocks.push_back(std::move(bp));
    c_in = c_out;
    size /= 2;
  }
  const int64_t flat = c_in * size * size;
  params_.fc_w = rng.normal_tensor({flat, spec_.feature_dim}, std::sqrt(2.0 / double(flat)));
  params_.fc_b = Tensor({spec_.feature_dim});
  params_.out_w = rng.normal_tensor({spec_.feature_dim, 1}, std::sqrt(1.0 / double(spec_.feature_dim)));
  params_.out_b = Tensor({1});
  params_.proj_w = rng.normal_tensor({spec_.feature_dim, spec_.proj_dim},
                                     std::sqrt(1.0 / double(spec_.feature_dim)));
  params_.proj_b = Tensor({spec_.proj_dim});
}

DiscVars Discriminator::bind(Graph& g, bool trainable) const {
  DiscVars dv;
  auto track = [&dv](Var v, const std::string& name, bool t) {
    if (t) {
      dv.trainables.push_back(v);
      dv.trainable_names.push_back(name);
    }
    return v;
  };
  for (size_t i = 0; i < params_.blocks.size(); ++i) {
    const std::string id = "disc/conv" + std::to_string(i + 1);
    DiscVars::BlockVars bv;
    bv.w = track(g.input(params_.blocks[i].w, trainable), id + "/w", trainable);
    bv.b = track(g.input(params_.blocks[i].b, trainable), id + "/b", trainable);
    dv.blocks.push_back(bv);
  }
  dv.fc_w = track(g.input(params_.fc_w, trainable), "disc/fc/w", trainable);
  dv.fc_b = track(g.input(params_.fc_b, trainable), "disc/fc/b", trainable);
  dv.out_w = track(g.input(params_.out_w, trainable), "disc/out/w", trainable);
  dv.out_b = track(g.input(params_.out_b, trainable), "disc/out/b", trainable);
  dv.proj_w = track(g.input(params_.proj_w, trainable), "disc/proj/w", trainable);
  dv.proj_b = track(g.input(params_.proj_b, trainable), "disc/proj/b", trainable);
  return dv;
}

DiscForward Discriminator::forward(Graph& g, const DiscVars& dv, Var images) const {
  const Tensor& ti = g.value(images);
  check(ti.ndim() == 4 && ti.dim(1) == spec_.in_channels && ti.dim(2) == spec_.image_size &&
            ti.dim(3) == spec_.image_size,
        "discriminator forward: image batch shape mismatch, got " + shape_str(ti.shape()));
  const int64_t B = ti.dim(0);
  Var h = images;
  for (size_t i = 0; i < dv.blocks.size(); ++i) {
    h = g.conv2d(h, dv.blocks[i].w, dv.blocks[i].b, 1);
    h = g.leaky_relu(h, kLeakySlope);
    h = g.avgpool2(h);
  }
  const Tensor& th = g.value(h);
  const int64_t flat = th.dim(1) * th.dim(2) * th.dim(3);
  h = g.reshape(h, {B, flat});
  Var features = g.leaky_relu(g.add_rowvec(g.matmul(h, dv.fc_w), dv.fc_b), kLeakySlope);
  Var logits = g.reshape(g.add_rowvec(g.matmul(features, dv.out_w), dv.out_b), {B});
  return {logits, features};
}

Var Discriminator::project(Graph& g, const DiscVars& dv, Var features) const {
  return g.add_rowvec(g.matmul(features, dv.proj_w), dv.proj_b);
}

namespace {

void full_params_refs(const GeneratorParams& p, const GeneratorSpec& spec, const std::string& prefix,
                      ConstParamRefs& out) {
  out.emplace_back(prefix + "proj/w", &p.proj_w);
  out.emplace_back(prefix + "proj/b", &p.proj_b);
  out.emplace_back(prefix + "proj_norm/gain", &p.proj_norm.gain);
  out.emplace_back(prefix + "proj_norm/bias", &p.proj_norm.bias);
  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const std::string id = spec.blocks[i].id;
    out.emplace_back(prefix + id + "/w", &p.blocks[i].w);
    out.emplace_back(prefix + id + "/b", &p.blocks[i].b);
    if (!p.blocks[i].norm.gain.empty()) {
      out.emplace_back(prefix + id + "_norm/gain", &p.blocks[i].norm.gain);
      out.emplace_back(prefix + id + "_norm/bias", &p.blocks[i].norm.bias);
    }
  }
}

ParamRefs unconst(const ConstParamRefs& refs) {
  ParamRefs out;
  for (const auto& [name, t] : refs) out.emplace_back(name, const_cast<Tensor*>(t));
  return out;
}

}  // namespace

ConstParamRefs generator_base_refs(const Generator& gen) {
  ConstParamRefs out;
  full_params_refs(gen.base_params(), gen.spec(), "base/", out);
  return out;
}

ConstParamRefs task_entry_refs(const GeneratorSpec& spec, const TaskEntry& entry) {
  ConstParamRefs out;
  const std::string tp = "task/" + std::to_string(entry.task_id) + "/";
  if (entry.kind == TaskKind::full_copy) {
    full_params_refs(entry.full, spec, tp + "full/", out);
    return out;
  }
  if (entry.kind != TaskKind::modulated) return out;
  for (const auto& [layer, f] : entry.mods.layer_masks) {
    out.emplace_back(tp + layer + "/U", &f.u);
    out.emplace_back(tp + layer + "/V", &f.v);
  }
  out.emplace_back(tp + "copy/proj_norm/gain", &entry.copies.proj_norm.gain);
  out.emplace_back(tp + "copy/proj_norm/bias", &entry.copies.proj_norm.bias);
  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const std::string id = spec.blocks[i].id;
    out.emplace_back(tp + "copy/" + id + "/b", &entry.copies.conv_bias[i]);
    if (!entry.copies.norms[i].gain.empty()) {
      out.emplace_back(tp + "copy/" + id + "_norm/gain", &entry.copies.norms[i].gain);
      out.emplace_back(tp + "copy/" + id + "_norm/bias", &entry.copies.norms[i].bias);
    }
  }
  return out;
}

ConstParamRefs discriminator_refs(const Discriminator& disc) {
  ConstParamRefs out;
  const DiscParams& p = disc.params();
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string id = "disc/conv" + std::to_string(i + 1);
    out.emplace_back(id + "/w", &p.blocks[i].w);
    out.emplace_back(id + "/b", &p.blocks[i].b);
  }
  out.emplace_back("disc/fc/w", &p.fc_w);
  out.emplace_back("disc/fc/b", &p.fc_b);
  out.emplace_back("disc/out/w", &p.out_w);
  out.emplace_back("disc/out/b", &p.out_b);
  out.emplace_back("disc/proj/w", &p.proj_w);
  out.emplace_back("disc/proj/b", &p.proj_b);
  return out;
}

ParamRefs generator_base_refs(Generator& gen) {
  return unconst(generator_base_refs(static_cast<const Generator&>(gen)));
}
ParamRefs task_entry_refs(const GeneratorSpec& spec, TaskEntry& entry) {
  return unconst(task_entry_refs(spec, static_cast<const TaskEntry&>(entry)));
}
ParamRefs discriminator_refs(Discriminator& disc) {
  return unconst(discriminator_refs(static_cast<const Discriminator&>(disc)));
}

void save_generator(const Generator& gen, ArrayStore& store) {
  for (const auto& [name, t] : generator_base_refs(gen)) store.put(name, *t);
}

void load_generator(Generator& gen, const ArrayStore& store) {
  for (auto& [name, t] : generator_base_refs(gen)) *t = store.get(name);
}

void save_discriminator(const Discriminator& disc, ArrayStore& store) {
  for (const auto& [name, t] : discriminator_refs(disc)) store.put(name, *t);
}

void load_discriminator(Discriminator& disc, const ArrayStore& store) {
  for (auto& [name, t] : discriminator_refs(disc)) *t = store.get(name);
}

void save_task_entry(const TaskEntry& t, const GeneratorSpec& spec, ArrayStore& store) {
  for (const auto& [name, tensor] : task_entry_refs(spec, t)) store.put(name, *tensor);
  if (t.kind == TaskKind::modulated) {
    const std::string tp = "task/" + std::to_string(t.task_id) + "/";
    for (const auto& [layer, f] : t.mods.layer_masks) {
      store.annotate(tp + layer + "/U", "rank=" + std::to_string(f.rank));
      store.annotate(tp + layer + "/V", "rank=" + std::to_string(f.rank));
    }
  }
}

TaskEntry load_task_entry(int64_t task_id, TaskKind kind, const GeneratorSpec& spec,
                          const ArrayStore& store) {
  TaskEntry t;
  t.task_id = task_id;
  t.kind = kind;
  if (kind == TaskKind::modulated) {
    t.mods.task_id = task_id;
    // size the containers, then fill every ref from the store
    for (const auto& [layer, dims] : spec.modulated_dims()) {
      afm::ModulationFactors f;
      f.rank = 0;
      t.mods.layer_masks[layer] = std::move(f);
    }
    t.copies.conv_bias.resize(spec.blocks.size());
    t.copies.norms.resize(spec.blocks.size());
    const std::string tp = "task/" + std::to_string(task_id) + "/";
    for (auto& [layer, f] : t.mods.layer_masks) {
      f.u = store.get(tp + layer + "/U");
      f.v = store.get(tp + layer + "/V");
      f.rank = f.u.dim(1);
    }
    t.copies.proj_norm.gain = store.get(tp + "copy/proj_norm/gain");
    t.copies.proj_norm.bias = store.get(tp + "copy/proj_norm/bias");
    for (size_t i = 0; i < spec.blocks.size(); ++i) {
      const std::string id = spec.blocks[i].id;
      t.copies.conv_bias[i] = store.get(tp + "copy/" + id + "/b");
      if (store.has(tp + "copy/" + id + "_norm/gain")) {
        t.copies.norms[i].gain = store.get(tp + "copy/" + id + "_norm/gain");
        t.copies.norms[i].bias = store.get(tp + "copy/" + id + "_norm/bias");
      }
    }
  } else if (kind == TaskKind::full_copy) {
    const std::string tp = "task/" + std::to_string(task_id) + "/full/";
    GeneratorParams& p = t.full;
    p.proj_w = store.get(tp + "proj/w");
    p.proj_b = store.get(tp + "proj/b");
    p.proj_norm.gain = store.get(tp + "proj_norm/gain");
    p.proj_norm.bias = store.get(tp + "proj_norm/bias");
    for (size_t i = 0; i < spec.blocks.size(); ++i) {
      const std::string id = spec.blocks[i].id;
      GenBlockParams bp;
      bp.w = store.get(tp + id + "/w");
      bp.b = store.get(tp + id + "/b");
      if (store.has(tp + id + "_norm/gain")) {
        bp.norm.gain = store.get(tp + id + "_norm/gain");
        bp.norm.bias = store.get(tp + id + "_norm/bias");
      }
      p.blocks.push_back(std::move(bp));
    }
  }
  return t;
}

}  // namespace conpro::models

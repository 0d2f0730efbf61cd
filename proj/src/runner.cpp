#include "conpro/runner.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <fstream>
#include <iomanip>
#include <sstream>

namespace conpro::cli {

LockFile::LockFile(const std::filesystem::path& p) : path_(p) {
  fd_ = ::open(p.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  check(fd_ >= 0, "run directory is locked ('" + p.string() +
                      "' exists); concurrent runs must use distinct output directories");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
}

LockFile::~LockFile() {
  if (fd_ >= 0) {
    ::close(fd_);
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }
}

models::GeneratorSpec generator_spec_from(const RunConfig& cfg) {
  return models::GeneratorSpec::dcgan32(cfg.arch.latent_dim, cfg.arch.base_channels,
                                        cfg.arch.gen_widths);
}

models::DiscSpec disc_spec_from(const RunConfig& cfg) {
  models::DiscSpec d;
  d.channels = cfg.arch.disc_channels;
  d.feature_dim = cfg.arch.feature_dim;
  d.proj_dim = cfg.arch.proj_dim;
  return d;
}

trainer::TrainerOptions trainer_options_from(const RunConfig& cfg) {
  trainer::TrainerOptions o;
  o.weights.lambda_g_mdl = cfg.loss.lambda_g_mdl;
  o.weights.lambda_d_mdl = cfg.loss.lambda_d_mdl;
  o.weights.lambda_supcon = cfg.loss.lambda_supcon;
  o.weights.supcon_temperature = cfg.loss.supcon_temperature;
  o.weights.r1_gamma = cfg.loss.r1_gamma;
  o.opt.lr_d = cfg.train.lr_d;
  o.opt.lr_g_base = cfg.train.lr_g_base;
  o.opt.lr_modulation = cfg.train.lr_modulation;
  o.opt.beta1 = cfg.train.beta1;
  o.opt.beta2 = cfg.train.beta2;
  o.mixup_anchors = cfg.loss.mixup_anchors;
  o.mdl_layer = cfg.arch.mdl_layer;
  o.use_afm = cfg.ablation.afm;
  o.use_mdl = cfg.ablation.mdl;
  o.use_supcon = cfg.ablation.supcon;
  o.use_dai = cfg.ablation.dai;
  o.rank = cfg.arch.rank;
  o.replay_cap = cfg.train.replay_cap;
  o.dai_n_per_task = cfg.dai.n_per_task;
  o.dai_real_cap = cfg.dai.real_batch_cap;
  o.probe_count = cfg.eval.probe_count;
  return o;
}

data::TaskStream dataset_for(const RunConfig& cfg) {
  if (!cfg.data.dataset_dir.empty()) return data::import_dataset(cfg.data.dataset_dir);
  return data::build_task_stream(cfg.data.n_tasks, cfg.data.shots,
                                 static_cast<uint64_t>(cfg.data.seed),
                                 cfg.data.base_budget_multiplier);
}

void save_run_state(const trainer::Trainer& tr, const eval::FeatureExtractor& extractor,
                    const RunPaths& paths) {
  ArrayStore store;
  models::save_generator(tr.generator(), store);
  models::save_discriminator(tr.discriminator(), store);
  extractor.save(store);

  nlohmann::ordered_json reg;
  reg["schema_version"] = 1;
  reg["probe_count"] = tr.options().probe_count;
  reg["tasks"] = nlohmann::ordered_json::array();
  for (int64_t id : tr.registry().task_ids()) {
    const auto& e = tr.registry().entry(id);
    models::save_task_entry(e, tr.generator().spec(), store);
    const std::string tp = "probe/" + std::to_string(id) + "/";
    Tensor z = tr.probe_latents(e.probe_seed);
    store.put(tp + "latents", z);
    store.put(tp + "images", tr.generator().generate_entry(e, z));

    nlohmann::ordered_json tj;
    tj["task_id"] = e.task_id;
    tj["class_id"] = e.class_id;
    tj["kind"] = models::task_kind_name(e.kind);
    tj["frozen"] = e.frozen;
    tj["probe_seed"] = e.probe_seed;
    std::vector<std::string> hashes;
    for (uint64_t h : e.probe_hashes) {
      std::ostringstream os;
      os << std::hex << std::setw(16) << std::setfill('0') << h;
      hashes.push_back(os.str());
    }
    tj["probe_hashes"] = hashes;
    reg["tasks"].push_back(tj);
  }

  store.save(paths.checkpoint());
  store.write_manifest(paths.manifest());
  std::ofstream os(paths.registry());
  check(static_cast<bool>(os), "cannot write '" + paths.registry().string() + "'");
  os << reg.dump(2) << "\n";
}

LoadedRun load_run_state(const std::filesystem::path& run_dir) {
  RunPaths paths{run_dir};
  check(std::filesystem::exists(paths.config()),
        "no resolved config under '" + run_dir.string() + "'");
  LoadedRun run;
  run.config = RunConfig::load(paths.config());
  run.store = ArrayStore::load(paths.checkpoint());

  run.gen = std::make_unique<models::Generator>(generator_spec_from(run.config), 0);
  models::load_generator(*run.gen, run.store);
  run.disc = std::make_unique<models::Discriminator>(disc_spec_from(run.config), 0);
  models::load_discriminator(*run.disc, run.store);
  run.extractor = std::make_unique<eval::FeatureExtractor>(eval::FeatureExtractor::load(run.store));

  std::ifstream is(paths.registry());
  check(static_cast<bool>(is), "cannot open '" + paths.registry().string() + "'");
  nlohmann::json reg = nlohmann::json::parse(is);
  for (const auto& tj : reg.at("tasks")) {
    auto kind = models::task_kind_from_name(tj.at("kind").get<std::string>());
    auto e = models::load_task_entry(tj.at("task_id").get<int64_t>(), kind, run.gen->spec(),
                                     run.store);
    e.class_id = tj.at("class_id").get<int64_t>();
    e.frozen = tj.at("frozen").get<bool>();
    e.probe_seed = tj.at("probe_seed").get<uint64_t>();
    for (const auto& hs : tj.at("probe_hashes"))
      e.probe_hashes.push_back(std::stoull(hs.get<std::string>(), nullptr, 16));
    if (e.kind == models::TaskKind::base && e.frozen) run.gen->freeze_base();
    run.registry.add(std::move(e));
  }
  return run;
}

void run_gen_data(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  std::filesystem::path dir = cfg.data.dataset_dir.empty()
                                  ? std::filesystem::path(cfg.out_dir) / "dataset"
                                  : std::filesystem::path(cfg.data.dataset_dir);
  check(!dir.empty(), "gen-data: set data.dataset_dir or out_dir");
  auto stream = data::build_task_stream(cfg.data.n_tasks, cfg.data.shots,
                                        static_cast<uint64_t>(cfg.data.seed),
                                        cfg.data.base_budget_multiplier);
  data::export_dataset(stream, dir);
  log << "wrote dataset (" << cfg.data.n_tasks << " classes, base " << stream.base.shots()
      << " shots, incremental " << cfg.data.shots << " shots) to " << dir.string() << "\n";
}

void run_train(const RunConfig& cfg, std::ostream& log) {
  cfg.validate_for_train();
  RunPaths paths{cfg.out_dir};
  std::filesystem::create_directories(paths.dir);
  LockFile lock(paths.lock());
  cfg.save(paths.config());

  auto stream = dataset_for(cfg);
  std::ofstream ledger(paths.metrics());
  std::ofstream dai_log(paths.dai());
  trainer::Trainer tr(generator_spec_from(cfg), disc_spec_from(cfg), trainer_options_from(cfg),
                      static_cast<uint64_t>(cfg.seed));
  tr.set_ledger(&ledger);
  tr.set_dai_log(&dai_log);

  log << "training base task (class " << stream.base_spec.class_id << ", "
      << stream.base.shots() << " shots, " << cfg.train.base_steps << " steps)\n";
  tr.train_base_task(stream.base_spec.class_id, stream.base.images, cfg.train.base_steps,
                     cfg.train.batch_size);
  for (size_t i = 0; i < stream.incremental.size(); ++i) {
    log << "training incremental task " << (i + 1) << " (class "
        << stream.incremental_specs[i].class_id << ", " << stream.incremental[i].shots()
        << " shots, " << cfg.train.incr_steps << " steps)\n";
    tr.train_incremental_task(stream.incremental_specs[i].class_id, stream.incremental[i].images,
                              cfg.train.incr_steps, cfg.train.batch_size);
  }

  eval::FeatureExtractor extractor(static_cast<uint64_t>(cfg.eval.extractor_seed),
                                   cfg.eval.extractor_dim);
  save_run_state(tr, extractor, paths);
  log << "saved checkpoint to " << paths.checkpoint().string() << "\n";
}

namespace {
double mean_step_ms_from_csv(const std::filesystem::path& metrics, int64_t task_id) {
  std::ifstream is(metrics);
  if (!is) return 0.0;
  std::string line;
  std::getline(is, line);  // header
  double sum = 0.0;
  int64_t n = 0;
  while (std::getline(is, line)) {
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() < 11) continue;
    if (std::stoll(cells[1]) != task_id) continue;
    sum += std::stod(cells[10]);
    ++n;
  }
  return n > 0 ? sum / double(n) : 0.0;
}
}  // namespace

std::vector<eval::TaskMetrics> run_eval(const std::filesystem::path& run_dir, std::ostream& log) {
  LoadedRun run = load_run_state(run_dir);
  RunPaths paths{run_dir};
  auto stream = dataset_for(run.config);

  std::vector<eval::TaskMetrics> metrics;
  for (int64_t id : run.registry.task_ids()) {
    const auto& e = run.registry.entry(id);
    const Tensor* real = nullptr;
    if (e.class_id == stream.base_spec.class_id) {
      real = &stream.base.images;
    } else {
      for (size_t i = 0; i < stream.incremental_specs.size(); ++i)
        if (stream.incremental_specs[i].class_id == e.class_id) real = &stream.incremental[i].images;
    }
    check(real != nullptr, "eval: no dataset for class " + std::to_string(e.class_id));
    metrics.push_back(eval::evaluate_task(*run.gen, run.registry, id, run.config.eval.n_gen, *real,
                                          *run.extractor, static_cast<uint64_t>(run.config.seed),
                                          mean_step_ms_from_csv(paths.metrics(), id)));
  }

  std::ofstream os(paths.eval_csv());
  check(static_cast<bool>(os), "cannot write '" + paths.eval_csv().string() + "'");
  os << eval::metrics_csv_header();
  for (const auto& m : metrics) os << eval::metrics_csv_row(m);
  eval::write_fid_bars(metrics, run_dir / "eval_fid.ppm");
  log << "wrote " << paths.eval_csv().string() << " (" << metrics.size() << " tasks)\n";
  return metrics;
}

std::string run_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& log) {
  check(!run_dirs.empty(), "report: no run directories given");
  std::vector<std::string> names;
  std::vector<std::vector<eval::TaskMetrics>> columns;
  for (const auto& dir : run_dirs) {
    RunPaths paths{dir};
    check(std::filesystem::exists(paths.eval_csv()),
          "report: missing '" + paths.eval_csv().string() + "' (run `conpro eval` first)");
    std::ifstream is(paths.eval_csv());
    std::string line;
    std::getline(is, line);
    std::vector<eval::TaskMetrics> col;
    while (std::getline(is, line)) {
      std::istringstream row(line);
      std::string cell;
      std::vector<std::string> cells;
      while (std::getline(row, cell, ',')) cells.push_back(cell);
      if (cells.size() < 5) continue;
      eval::TaskMetrics m;
      m.task_id = std::stoll(cells[0]);
      m.class_id = std::stoll(cells[1]);
      m.toy_fid = std::stod(cells[2]);
      m.added_params = std::stoll(cells[3]);
      m.step_ms = std::stod(cells[4]);
      col.push_back(m);
    }
    names.push_back(dir.filename().string());
    columns.push_back(std::move(col));
  }
  std::string table = eval::report_table(names, columns);
  log << table;
  return table;
}

int cmd_gen_data(const RunConfig& cfg, std::ostream& log) {
  try {
    run_gen_data(cfg, log);
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_train(const RunConfig& cfg, std::ostream& log) {
  try {
    run_train(cfg, log);
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_eval(const std::filesystem::path& run_dir, std::ostream& log) {
  try {
    run_eval(run_dir, log);
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_report(const std::vector<std::filesystem::path>& run_dirs, std::ostream& log) {
  try {
    run_report(run_dirs, log);
    return 0;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace conpro::cli

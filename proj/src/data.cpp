#include "conpro/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "conpro/rng.hpp"

namespace conpro::data {

namespace {

double frac(double x) { return x - std::floor(x); }

void hsv_to_rgb(double h, double s, double v, double* rgb) {
  h = frac(h) * 6.0;
  const int i = static_cast<int>(h) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (i) {
    case 0: rgb[0] = v; rgb[1] = t; rgb[2] = p; break;
    case 1: rgb[0] = q; rgb[1] = v; rgb[2] = p; break;
    case 2: rgb[0] = p; rgb[1] = v; rgb[2] = t; break;
    case 3: rgb[0] = p; rgb[1] = q; rgb[2] = v; break;
    case 4: rgb[0] = t; rgb[1] = p; rgb[2] = v; break;
    default: rgb[0] = v; rgb[1] = p; rgb[2] = q; break;
  }
}

// signed distance to the class shape, negative inside
double shape_distance(ShapeFamily family, double x, double y, double scale) {
  switch (family) {
    case ShapeFamily::circle:
      return std::sqrt(x * x + y * y) - scale;
    case ShapeFamily::square:
      return std::max(std::fabs(x), std::fabs(y)) - scale * 0.82;
    case ShapeFamily::triangle: {
      // upward equilateral triangle: intersection of three half planes
      const double s = scale * 1.05;
      const double d1 = -y - s * 0.5;                          // below the base
      const double d2 = 0.866 * x + 0.5 * y - s * 0.5;         // right edge
      const double d3 = -0.866 * x + 0.5 * y - s * 0.5;        // left edge
      return std::max(d1, std::max(d2, d3));
    }
    case ShapeFamily::stripes:
    default:
      return 0.0;  // handled separately
  }
}

}  // namespace

std::string family_name(ShapeFamily f) {
  switch (f) {
    case ShapeFamily::circle: return "circle";
    case ShapeFamily::square: return "square";
    case ShapeFamily::triangle: return "triangle";
    default: return "stripes";
  }
}

ShapeFamily family_from_name(const std::string& s) {
  if (s == "circle") return ShapeFamily::circle;
  if (s == "square") return ShapeFamily::square;
  if (s == "triangle") return ShapeFamily::triangle;
  if (s == "stripes") return ShapeFamily::stripes;
  fail("unknown shape family '" + s + "'");
}

void render_sample(const SyntheticClassSpec& spec, uint64_t seed, int64_t sample_index, double* out) {
  Rng rng(mix_seed(seed, static_cast<uint64_t>(spec.class_id), static_cast<uint64_t>(sample_index)));
  const double cx = spec.pos_jitter * rng.uniform(-1.0, 1.0);
  const double cy = spec.pos_jitter * rng.uniform(-1.0, 1.0);
  const double scale = 0.55 * (1.0 + spec.scale_jitter * rng.uniform(-1.0, 1.0));
  const double hue = frac(spec.hue + spec.hue_jitter * rng.uniform(-1.0, 1.0));
  const double phase = 2.0 * M_PI * frac(0.37 * static_cast<double>(spec.class_id));

  double bg[3];
  hsv_to_rgb(frac(hue + 0.5), 0.30, 0.16, bg);

  const int64_t n = kImageSize;
  const double edge = 2.0 / static_cast<double>(n);  // ~1 pixel of anti-aliasing
  for (int64_t py = 0; py < n; ++py) {
    for (int64_t px = 0; px < n; ++px) {
      const double x = (2.0 * (static_cast<double>(px) + 0.5) / static_cast<double>(n)) - 1.0;
      const double y = (2.0 * (static_cast<double>(py) + 0.5) / static_cast<double>(n)) - 1.0;
      double alpha;
      if (spec.family == ShapeFamily::stripes) {
        const double band = std::sin(M_PI * spec.texture_freq * ((x - cx) + (y - cy)) + phase);
        alpha = 0.5 + 0.5 * std::tanh(band / 0.25);
      } else {
        const double d = shape_distance(spec.family, x - cx, y - cy, scale);
        alpha = std::clamp(0.5 - d / edge, 0.0, 1.0);
      }
      const double tex =
          0.80 + 0.20 * std::sin(2.0 * M_PI * spec.texture_freq * (1.7 * (x - cx) + (y - cy)) + phase);
      double fg[3];
      hsv_to_rgb(hue, 0.85, tex, fg);
      for (int64_t c = 0; c < 3; ++c) {
        const double v = bg[c] + alpha * (fg[c] - bg[c]);
        out[(c * n + py) * n + px] = 2.0 * v - 1.0;
      }
    }
  }
}

FewShotDataset render_class(const SyntheticClassSpec& spec, int64_t shots, uint64_t seed) {
  check(shots >= 1, "render_class: shots must be >= 1");
  check(spec.texture_freq > 0.0, "render_class: texture frequency must be positive");
  check(spec.pos_jitter >= 0.0 && spec.scale_jitter >= 0.0 && spec.hue_jitter >= 0.0,
        "render_class: jitter magnitudes must be non-negative");
  FewShotDataset ds;
  ds.class_id = spec.class_id;
  ds.seed = seed;
  ds.images = Tensor({shots, kImageChannels, kImageSize, kImageSize});
  const int64_t stride = kImageChannels * kImageSize * kImageSize;
  for (int64_t i = 0; i < shots; ++i) render_sample(spec, seed, i, ds.images.data() + i * stride);
  return ds;
}

std::vector<SyntheticClassSpec> make_class_specs(int64_t n_classes, uint64_t seed) {
  check(n_classes >= 1, "make_class_specs: need at least one class");
  std::vector<SyntheticClassSpec> specs;
  Rng rng(mix_seed(seed, 0x5f3c));
  const double hue0 = rng.uniform();
  for (int64_t i = 0; i < n_classes; ++i) {
    SyntheticClassSpec s;
    s.class_id = i;
    // neighbouring classes share a family (class-incremental streams are
    // drawn from one visual domain); appearance varies via hue and texture
    s.family = static_cast<ShapeFamily>((i / 4) % 4);
    s.hue = frac(hue0 + 0.381966011 * static_cast<double>(i));  // golden-ratio spacing
    s.texture_freq = 1.5 + static_cast<double>(i % 3);
    s.pos_jitter = 0.16;
    s.scale_jitter = 0.14;
    s.hue_jitter = 0.02;
    specs.push_back(s);
  }
  // distinct (family, hue) is part of the dataset contract
  std::set<std::pair<int, int64_t>> seen;
  for (const auto& s : specs) {
    auto key = std::make_pair(static_cast<int>(s.family), static_cast<int64_t>(s.hue * 1e6));
    check(seen.insert(key).second, "duplicate (family, hue) pair in class specs");
  }
  return specs;
}

TaskStream build_task_stream(int64_t n_tasks, int64_t shots, uint64_t seed,
                             int64_t base_budget_multiplier) {
  check(n_tasks >= 2, "build_task_stream: need a base task plus at least one incremental task");
  check(shots >= 1, "build_task_stream: shots must be >= 1");
  check(base_budget_multiplier >= 1, "build_task_stream: base budget multiplier must be >= 1");
  auto specs = make_class_specs(n_tasks, seed);
  TaskStream stream;
  stream.base_spec = specs[0];
  stream.base = render_class(specs[0], shots * base_budget_multiplier, mix_seed(seed, 1, 0));
  for (int64_t t = 1; t < n_tasks; ++t) {
    stream.incremental_specs.push_back(specs[static_cast<size_t>(t)]);
    stream.incremental.push_back(
        render_class(specs[static_cast<size_t>(t)], shots, mix_seed(seed, 1, static_cast<uint64_t>(t))));
  }
  return stream;
}

namespace {

nlohmann::ordered_json spec_to_json(const SyntheticClassSpec& s) {
  nlohmann::ordered_json j;
  j["class_id"] = s.class_id;
  j["family"] = family_name(s.family);
  j["hue"] = s.hue;
  j["texture_freq"] = s.texture_freq;
  j["pos_jitter"] = s.pos_jitter;
  j["scale_jitter"] = s.scale_jitter;
  j["hue_jitter"] = s.hue_jitter;
  return j;
}

SyntheticClassSpec spec_from_json(const nlohmann::json& j) {
  SyntheticClassSpec s;
  s.class_id = j.at("class_id").get<int64_t>();
  s.family = family_from_name(j.at("family").get<std::string>());
  s.hue = j.at("hue").get<double>();
  s.texture_freq = j.at("texture_freq").get<double>();
  s.pos_jitter = j.at("pos_jitter").get<double>();
  s.scale_jitter = j.at("scale_jitter").get<double>();
  s.hue_jitter = j.at("hue_jitter").get<double>();
  return s;
}

void write_raw(const std::filesystem::path& file, const Tensor& t) {
  std::ofstream os(file, std::ios::binary);
  check(static_cast<bool>(os), "cannot open '" + file.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.size()) * static_cast<std::streamsize>(sizeof(double)));
}

Tensor read_raw(const std::filesystem::path& file, const Shape& shape) {
  std::ifstream is(file, std::ios::binary);
  check(static_cast<bool>(is), "cannot open '" + file.string() + "'");
  Tensor t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.size()) * static_cast<std::streamsize>(sizeof(double)));
  check(static_cast<bool>(is), "'" + file.string() + "' is shorter than its manifest shape");
  return t;
}

nlohmann::ordered_json dataset_entry(const FewShotDataset& ds, const SyntheticClassSpec& spec) {
  nlohmann::ordered_json j;
  j["spec"] = spec_to_json(spec);
  j["shots"] = ds.shots();
  j["seed"] = ds.seed;
  j["file"] = "class_" + std::to_string(ds.class_id) + ".bin";
  return j;
}

}  // namespace

void export_dataset(const TaskStream& stream, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "conpro-dataset-v1";
  manifest["image_shape"] = {kImageChannels, kImageSize, kImageSize};
  manifest["base"] = dataset_entry(stream.base, stream.base_spec);
  manifest["incremental"] = nlohmann::ordered_json::array();
  write_raw(dir / ("class_" + std::to_string(stream.base.class_id) + ".bin"), stream.base.images);
  for (size_t i = 0; i < stream.incremental.size(); ++i) {
    manifest["incremental"].push_back(dataset_entry(stream.incremental[i], stream.incremental_specs[i]));
    write_raw(dir / ("class_" + std::to_string(stream.incremental[i].class_id) + ".bin"),
              stream.incremental[i].images);
  }
  std::ofstream os(dir / "manifest.json");
  check(static_cast<bool>(os), "cannot write dataset manifest");
  os << manifest.dump(2) << "\n";
}

namespace {
FewShotDataset import_entry(const std::filesystem::path& dir, const nlohmann::json& j,
                            SyntheticClassSpec& spec_out) {
  spec_out = spec_from_json(j.at("spec"));
  FewShotDataset ds;
  ds.class_id = spec_out.class_id;
  ds.seed = j.at("seed").get<uint64_t>();
  const int64_t shots = j.at("shots").get<int64_t>();
  ds.images = read_raw(dir / j.at("file").get<std::string>(),
                       {shots, kImageChannels, kImageSize, kImageSize});
  return ds;
}
}  // namespace

TaskStream import_dataset(const std::filesystem::path& dir) {
  std::ifstream is(dir / "manifest.json");
  check(static_cast<bool>(is), "no dataset manifest under '" + dir.string() + "'");
  nlohmann::json manifest = nlohmann::json::parse(is);
  check(manifest.at("format").get<std::string>() == "conpro-dataset-v1",
        "unsupported dataset format");
  TaskStream stream;
  stream.base = import_entry(dir, manifest.at("base"), stream.base_spec);
  for (const auto& j : manifest.at("incremental")) {
    SyntheticClassSpec spec;
    stream.incremental.push_back(import_entry(dir, j, spec));
    stream.incremental_specs.push_back(spec);
  }
  return stream;
}

namespace {

// nearest-neighbour resample of an interleaved [0,1] RGB buffer to 32x32
void resample_to_image(const std::vector<double>& rgb, int64_t w, int64_t h, double* out) {
  for (int64_t py = 0; py < kImageSize; ++py)
    for (int64_t px = 0; px < kImageSize; ++px) {
      const int64_t sx = std::min(w - 1, px * w / kImageSize);
      const int64_t sy = std::min(h - 1, py * h / kImageSize);
      for (int64_t c = 0; c < 3; ++c)
        out[(c * kImageSize + py) * kImageSize + px] = 2.0 * rgb[(sy * w + sx) * 3 + c] - 1.0;
    }
}

bool read_pnm(const std::filesystem::path& file, std::vector<double>& rgb, int64_t& w, int64_t& h) {
  std::ifstream is(file, std::ios::binary);
  if (!is) return false;
  std::string magic;
  is >> magic;
  if (magic != "P6" && magic != "P5") return false;
  auto next_int = [&is]() {
    int v;
    while (is >> std::ws && is.peek() == '#') is.ignore(1 << 20, '\n');
    is >> v;
    return v;
  };
  w = next_int();
  h = next_int();
  const int maxval = next_int();
  is.ignore(1);  // single whitespace before raster
  check(maxval > 0 && maxval < 65536, "unsupported PNM maxval in '" + file.string() + "'");
  const bool gray = (magic == "P5");
  const int64_t comps = gray ? 1 : 3;
  const int64_t bytes_per = maxval < 256 ? 1 : 2;
  std::vector<unsigned char> buf(static_cast<size_t>(w * h * comps * bytes_per));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  check(static_cast<bool>(is), "truncated PNM file '" + file.string() + "'");
  rgb.resize(static_cast<size_t>(w * h * 3));
  for (int64_t i = 0; i < w * h; ++i)
    for (int64_t c = 0; c < 3; ++c) {
      const int64_t src = (i * comps + (gray ? 0 : c)) * bytes_per;
      double v = buf[static_cast<size_t>(src)];
      if (bytes_per == 2) v = v * 256.0 + buf[static_cast<size_t>(src + 1)];
      rgb[static_cast<size_t>(i * 3 + c)] = v / static_cast<double>(maxval);
    }
  return true;
}

}  // namespace

FewShotDataset load_image_folder(const std::filesystem::path& class_dir, int64_t class_id) {
  check(std::filesystem::is_directory(class_dir), "'" + class_dir.string() + "' is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(class_dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<std::vector<double>> images;
  const int64_t stride = kImageChannels * kImageSize * kImageSize;
  for (const auto& f : files) {
    const auto ext = f.extension().string();
    if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") {
      std::vector<double> rgb;
      int64_t w = 0, h = 0;
      if (!read_pnm(f, rgb, w, h)) continue;
      std::vector<double> img(static_cast<size_t>(stride));
      resample_to_image(rgb, w, h, img.data());
      images.push_back(std::move(img));
    } else if (ext == ".f64") {
      std::ifstream is(f, std::ios::binary);
      std::vector<double> img(static_cast<size_t>(stride));
      is.read(reinterpret_cast<char*>(img.data()),
              static_cast<std::streamsize>(img.size()) * static_cast<std::streamsize>(sizeof(double)));
      check(static_cast<bool>(is), "raw image '" + f.string() + "' must hold 3*32*32 doubles");
      images.push_back(std::move(img));
    }
  }
  check(!images.empty(), "no loadable images under '" + class_dir.string() + "'");
  FewShotDataset ds;
  ds.class_id = class_id;
  ds.images = Tensor({static_cast<int64_t>(images.size()), kImageChannels, kImageSize, kImageSize});
  for (size_t i = 0; i < images.size(); ++i)
    std::copy(images[i].begin(), images[i].end(), ds.images.data() + static_cast<int64_t>(i) * stride);
  return ds;
}

double nearest_centroid_accuracy(const std::vector<FewShotDataset>& sets) {
  check(sets.size() >= 2, "nearest_centroid_accuracy: need at least two classes");
  const int64_t stride = kImageChannels * kImageSize * kImageSize;
  std::vector<std::vector<double>> centroids;
  for (const auto& ds : sets) {
    std::vector<double> c(static_cast<size_t>(stride), 0.0);
    for (int64_t i = 0; i < ds.shots(); ++i)
      axpy(1.0 / static_cast<double>(ds.shots()), ds.images.data() + i * stride, c.data(), stride);
    centroids.push_back(std::move(c));
  }
  int64_t correct = 0, total = 0;
  for (size_t s = 0; s < sets.size(); ++s) {
    for (int64_t i = 0; i < sets[s].shots(); ++i) {
      const double* img = sets[s].images.data() + i * stride;
      double best = 0.0;
      size_t best_idx = 0;
      for (size_t c = 0; c < centroids.size(); ++c) {
        double d = 0.0;
        for (int64_t p = 0; p < stride; ++p) {
          const double diff = img[p] - centroids[c][p];
          d += diff * diff;
        }
        if (c == 0 || d < best) {
          best = d;
          best_idx = c;
        }
      }
      correct += (best_idx == s) ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace conpro::data

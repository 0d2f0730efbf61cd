#include "conpro/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

namespace conpro {

static_assert(std::endian::native == std::endian::little,
              "array container assumes a little-endian host");

namespace {
constexpr char kMagic[8] = {'C', 'O', 'N', 'P', 'R', 'O', 'V', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(static_cast<bool>(is), "array container: truncated file");
  return v;
}
}  // namespace

void ArrayStore::put(const std::string& name, Tensor t) {
  check(!name.empty(), "array name must be non-empty");
  entries_[name] = std::move(t);
}

const Tensor& ArrayStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  check(it != entries_.end(), "array container has no entry named '" + name + "'");
  return it->second;
}

void ArrayStore::annotate(const std::string& name, const std::string& note) { notes_[name] = note; }

void ArrayStore::save(const std::filesystem::path& file) const {
  std::ofstream os(file, std::ios::binary);
  check(static_cast<bool>(os), "cannot open '" + file.string() + "' for writing");
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint64_t>(os, entries_.size());
  for (const auto& [name, t] : entries_) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod<uint64_t>(os, static_cast<uint64_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.size()) * static_cast<std::streamsize>(sizeof(double)));
  }
  check(static_cast<bool>(os), "write failed for '" + file.string() + "'");
}

ArrayStore ArrayStore::load(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  check(static_cast<bool>(is), "cannot open '" + file.string() + "'");
  char magic[8];
  is.read(magic, sizeof(magic));
  check(static_cast<bool>(is) && std::equal(magic, magic + 8, kMagic),
        "'" + file.string() + "' is not a conpro array container");
  ArrayStore store;
  const uint64_t n = read_pod<uint64_t>(is);
  for (uint64_t e = 0; e < n; ++e) {
    const uint32_t name_len = read_pod<uint32_t>(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t ndim = read_pod<uint32_t>(is);
    Shape shape(ndim);
    for (uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int64_t>(read_pod<uint64_t>(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size()) * static_cast<std::streamsize>(sizeof(double)));
    check(static_cast<bool>(is), "array container: truncated entry '" + name + "'");
    store.entries_[name] = std::move(t);
  }
  return store;
}

void ArrayStore::write_manifest(const std::filesystem::path& file) const {
  std::ofstream os(file);
  check(static_cast<bool>(os), "cannot open '" + file.string() + "' for writing");
  os << "# conpro checkpoint manifest: name shape [annotation]\n";
  for (const auto& [name, t] : entries_) {
    os << name << " " << shape_str(t.shape());
    auto it = notes_.find(name);
    if (it != notes_.end()) os << " " << it->second;
    os << "\n";
  }
}

}  // namespace conpro

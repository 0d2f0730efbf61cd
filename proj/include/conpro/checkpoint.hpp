#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "conpro/tensor.hpp"

namespace conpro {

// Self-describing container of named double arrays. On disk: a magic tag,
// then one record per entry (name, dims, raw little-endian doubles).
// write_manifest emits a plain-text listing of names, shapes and any
// annotations (used for modulation ranks).
class ArrayStore {
 public:
  void put(const std::string& name, Tensor t);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  size_t count() const { return entries_.size(); }
  const std::map<std::string, Tensor>& entries() const { return entries_; }

  void save(const std::filesystem::path& file) const;
  static ArrayStore load(const std::filesystem::path& file);

  void annotate(const std::string& name, const std::string& note);
  void write_manifest(const std::filesystem::path& file) const;

 private:
  std::map<std::string, Tensor> entries_;
  std::map<std::string, std::string> notes_;
};

}  // namespace conpro

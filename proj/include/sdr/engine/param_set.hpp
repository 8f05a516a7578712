#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sdr/tensor.hpp"

namespace sdr::ad {

/// Named learnable tensors in insertion order. Names are unique and a
/// tensor's shape is fixed once added.
template <typename T>
class ParamSet {
 public:
  using Entry = std::pair<std::string, Tensor<T>>;

  void add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(name, std::move(value));
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Tensor<T>& at(const std::string& name) const { return entries_[lookup(name)].second; }
  Tensor<T>& at(const std::string& name) { return entries_[lookup(name)].second; }

  // Replaces the values of an existing parameter; the shape must not change.
  void set(const std::string& name, Tensor<T> value) {
    Tensor<T>& slot = at(name);
    require_same_shape(slot.shape(), value.shape(), ("parameter '" + name + "'").c_str());
    slot = std::move(value);
  }

  std::size_t size() const { return entries_.size(); }
  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.second.size();
    return n;
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
  }

  // Entries whose name starts with prefix, with the prefix stripped.
  ParamSet subset(const std::string& prefix) const {
    ParamSet out;
    for (const auto& [name, value] : entries_) {
      if (name.rfind(prefix, 0) == 0) out.add(name.substr(prefix.size()), value);
    }
    return out;
  }

  // Copies every entry of other into this set under prefix.
  void merge(const ParamSet& other, const std::string& prefix) {
    for (const auto& [name, value] : other) add(prefix + name, value);
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& [name, value] : entries_) out.add(name, value.template cast<U>());
    return out;
  }

  bool operator==(const ParamSet& o) const { return entries_ == o.entries_; }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Binary "SDRK1" format: magic, u32 count, then per parameter u32 name length,
// UTF-8 name, u32 rank, u32 dims, float32 values. All little-endian.
void save_params(const ParamSet<float>& params, const std::filesystem::path& path);
ParamSet<float> load_params(const std::filesystem::path& path);

std::string encode_params(const ParamSet<float>& params);
ParamSet<float> decode_params(const std::string& bytes);

}  // namespace sdr::ad

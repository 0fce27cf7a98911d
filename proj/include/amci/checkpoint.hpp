#pragma once

// Self-describing binary container for named float64 arrays, used for
// network and proposal checkpoints.  Layout is documented in
// docs/checkpoint-format.md and guarded by a magic + version header.

#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "amci/errors.hpp"

namespace amci {

class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  bool has(const std::string& name) const { return arrays_.count(name) > 0; }

  void set(const std::string& name, std::vector<double> values) {
    arrays_[name] = std::move(values);
  }
  void set_scalar(const std::string& name, double v) { arrays_[name] = {v}; }

  const std::vector<double>& get(const std::string& name) const {
    auto it = arrays_.find(name);
    if (it == arrays_.end()) throw config_error("checkpoint: missing array '" + name + "'");
    return it->second;
  }
  double get_scalar(const std::string& name) const {
    const auto& a = get(name);
    if (a.size() != 1) throw config_error("checkpoint: '" + name + "' is not a scalar");
    return a[0];
  }

  const std::map<std::string, std::vector<double>>& arrays() const { return arrays_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw config_error("checkpoint: cannot open '" + path + "' for writing");
    out.write("AMCK", 4);
    write_u32(out, kVersion);
    write_u32(out, static_cast<std::uint32_t>(arrays_.size()));
    for (const auto& [name, values] : arrays_) {
      write_u32(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_u64(out, values.size());
      out.write(reinterpret_cast<const char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
    }
    if (!out) throw config_error("checkpoint: write failed for '" + path + "'");
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw config_error("checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "AMCK")
      throw config_error("checkpoint: '" + path + "' is not an AMCK container");
    const std::uint32_t version = read_u32(in);
    if (version != kVersion)
      throw config_error("checkpoint: unsupported container version " + std::to_string(version));
    const std::uint32_t count = read_u32(in);
    Checkpoint ck;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint32_t name_len = read_u32(in);
      std::string name(name_len, '\0');
      in.read(name.data(), name_len);
      const std::uint64_t len = read_u64(in);
      std::vector<double> values(len);
      in.read(reinterpret_cast<char*>(values.data()),
              static_cast<std::streamsize>(len * sizeof(double)));
      if (!in) throw config_error("checkpoint: truncated container '" + path + "'");
      ck.arrays_[name] = std::move(values);
    }
    return ck;
  }

 private:
  static void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
  }
  static void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
  }
  static std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }
  static std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  }

  std::map<std::string, std::vector<double>> arrays_;
};

}  // namespace amci

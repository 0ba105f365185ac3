// Flat `key = value` experiment configuration with `#` comments. Every key
// read is recorded together with its resolved value (defaults included) so a
// run can echo the exact configuration it used; keys that are never read are
// hard errors.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace oat::config {

class ExperimentConfig {
 public:
  ExperimentConfig() = default;

  static ExperimentConfig from_file(const std::string& path);
  static ExperimentConfig from_text(const std::string& text);

  // --set key=value override.
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def);
  std::string require_string(const std::string& key);
  double get_double(const std::string& key, double def);
  std::int64_t get_int(const std::string& key, std::int64_t def);
  std::uint64_t get_u64(const std::string& key, std::uint64_t def);
  bool get_bool(const std::string& key, bool def);
  // Comma-separated list.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& def);

  // Throws if any provided key was never consumed by a getter.
  void ensure_all_consumed() const;

  // `key = value` lines for every key that was resolved, sorted by key.
  std::string resolved_text() const;
  void write_resolved(const std::string& path) const;

 private:
  std::string raw(const std::string& key, std::optional<std::string> def);

  std::map<std::string, std::string> values_;
  std::map<std::string, std::string> resolved_;
  std::map<std::string, bool> consumed_;
};

}  // namespace oat::config

#include "oat/config.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace oat::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: line " + std::to_string(lineno) +
                                  " is not `key = value`: " + line);
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config: empty key on line " + std::to_string(lineno));
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  values_[trim(key)] = trim(value);
}

std::string ExperimentConfig::raw(const std::string& key, std::optional<std::string> def) {
  const auto it = values_.find(key);
  std::string v;
  if (it != values_.end()) {
    v = it->second;
    consumed_[key] = true;
  } else if (def.has_value()) {
    v = *def;
  } else {
    throw std::invalid_argument("config: missing required key `" + key + "`");
  }
  resolved_[key] = v;
  return v;
}

std::string ExperimentConfig::get_string(const std::string& key, const std::string& def) {
  return raw(key, def);
}

std::string ExperimentConfig::require_string(const std::string& key) {
  return raw(key, std::nullopt);
}

double ExperimentConfig::get_double(const std::string& key, double def) {
  const std::string v = raw(key, std::to_string(def));
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key `" + key + "` is not a number: " + v);
  }
}

std::int64_t ExperimentConfig::get_int(const std::string& key, std::int64_t def) {
  const std::string v = raw(key, std::to_string(def));
  try {
    std::size_t pos = 0;
    const long long i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key `" + key + "` is not an integer: " + v);
  }
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key, std::uint64_t def) {
  const std::string v = raw(key, std::to_string(def));
  try {
    std::size_t pos = 0;
    const unsigned long long i = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key `" + key + "` is not an unsigned integer: " + v);
  }
}

bool ExperimentConfig::get_bool(const std::string& key, bool def) {
  const std::string v = raw(key, def ? "true" : "false");
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::invalid_argument("config: key `" + key + "` is not a boolean: " + v);
}

std::vector<std::string> ExperimentConfig::get_list(const std::string& key,
                                                    const std::vector<std::string>& def) {
  std::string joined;
  for (std::size_t i = 0; i < def.size(); ++i) {
    if (i) joined += ",";
    joined += def[i];
  }
  const std::string v = raw(key, joined);
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(v);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void ExperimentConfig::ensure_all_consumed() const {
  for (const auto& [key, _] : values_) {
    if (!consumed_.count(key)) {
      throw std::invalid_argument("config: unknown key `" + key + "`");
    }
  }
}

std::string ExperimentConfig::resolved_text() const {
  std::string out;
  for (const auto& [key, value] : resolved_) {
    out += key + " = " + value + "\n";
  }
  return out;
}

void ExperimentConfig::write_resolved(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("config: cannot open " + path + " for writing");
  os << resolved_text();
  if (!os) throw std::runtime_error("config: write failed for " + path);
}

}  // namespace oat::config

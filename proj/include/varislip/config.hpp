#pragma once

#include <map>
#include <string>
#include <vector>

#include "varislip/stepper.hpp"

namespace varislip {

// Flat `key = value` configuration document ('#' comments).  Parsing applies
// scenario defaults for every key the document leaves out, so the serialized
// form always echoes the complete effective configuration.
class SimulationConfig {
 public:
  static SimulationConfig parse(const std::string& text);
  static SimulationConfig load(const std::string& path);
  std::string serialize() const;  // canonical: sorted keys, one per line

  bool has(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);

  void apply_scenario_defaults();  // based on the 'scenario' key
  void validate() const;

  // typed views
  StepConfig step_config() const;
  ModelBundle models() const;
  std::string scenario() const { return get_string("scenario"); }
  uint64_t seed() const;
  int snapshot_stride() const;

  bool operator==(const SimulationConfig& o) const { return kv_ == o.kv_; }

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

std::vector<std::string> scenario_names();

}  // namespace varislip

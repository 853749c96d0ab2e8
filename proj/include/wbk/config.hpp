#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "wbk/losses.hpp"
#include "wbk/nets.hpp"

namespace wbk {

// Ordered `key = value` pairs. '#' starts a comment; blank lines are skipped.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(const std::string& text);

int parse_int(const std::string& key, const std::string& value);
float parse_float(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

enum class OptimizerKind { AdamW, Sgd };
// Label used by the weak phase: MM2B box transforms plus scale consistency,
// or the box itself treated as a dense mask.
enum class Supervision { Mm2b, Box };

struct RunConfig {
  std::string phase;  // empty: any command
  int epochs = 30;
  int batch_size = 8;
  float learning_rate = 3e-3f;
  float weight_decay = 0.01f;
  OptimizerKind optimizer = OptimizerKind::AdamW;
  float scale1 = 1.0f;
  float scale2 = 0.75f;
  LossConfig loss;
  float sc_weight = 1.0f;
  Supervision supervision = Supervision::Mm2b;
  bool augment = true;
  NetConfig net;

  std::filesystem::path dataset;
  std::filesystem::path eval_dataset;
  std::filesystem::path checkpoint;         // output of the current phase
  std::filesystem::path refine_checkpoint;  // frozen refiner for weak training / infer
  std::filesystem::path resume;
  std::string report_format = "csv";

  std::uint64_t seed = 42;
  float refine_label_fraction = 0.1f;
  int refine_epochs = 60;
  float refine_learning_rate = 3e-3f;

  void validate() const;
};

// Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string format_run_config(const RunConfig& cfg);

const char* to_string(OptimizerKind k);
const char* to_string(Supervision s);

}  // namespace wbk

#include "wbk/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wbk/error.hpp"

namespace wbk {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
  throw Error(ErrorKind::Usage, "config key '" + key + "': '" + value + "' is not " + expected);
}

}  // namespace

KeyValues parse_key_values(const std::string& text) {
  KeyValues out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::Usage, "config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw Error(ErrorKind::Usage, "config line " + std::to_string(lineno) + ": empty key");
    for (const auto& kv : out) {
      if (kv.first == key) throw Error(ErrorKind::Usage, "config key '" + key + "' given twice");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

int parse_int(const std::string& key, const std::string& value) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
  return v;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an unsigned integer");
  return v;
}

float parse_float(const std::string& key, const std::string& value) {
  float v = 0.0f;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(v)) {
    bad_value(key, value, "a finite number");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  bad_value(key, value, "a boolean");
}

const char* to_string(OptimizerKind k) { return k == OptimizerKind::AdamW ? "adamw" : "sgd"; }
const char* to_string(Supervision s) { return s == Supervision::Mm2b ? "mm2b" : "box"; }

void RunConfig::validate() const {
  if (epochs < 0) throw Error(ErrorKind::Usage, "epochs must be >= 0");
  if (refine_epochs < 0) throw Error(ErrorKind::Usage, "refine_epochs must be >= 0");
  if (batch_size < 1) throw Error(ErrorKind::Usage, "batch_size must be >= 1");
  if (learning_rate < 0.0f || refine_learning_rate < 0.0f) throw Error(ErrorKind::Usage, "learning rates must be >= 0");
  if (weight_decay < 0.0f) throw Error(ErrorKind::Usage, "weight_decay must be >= 0");
  if (!(scale1 > 0.0f && scale1 <= 4.0f && scale2 > 0.0f && scale2 <= 4.0f)) {
    throw Error(ErrorKind::Usage, "scale_pair entries must be in (0, 4]");
  }
  if (sc_weight < 0.0f) throw Error(ErrorKind::Usage, "sc_weight must be >= 0");
  if (!(refine_label_fraction > 0.0f && refine_label_fraction <= 1.0f)) {
    throw Error(ErrorKind::Usage, "refine_label_fraction must be in (0, 1]");
  }
  if (report_format != "csv" && report_format != "jsonl") throw Error(ErrorKind::Usage, "report_format must be csv or jsonl");
  loss.validate();
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  auto path_of = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "phase") cfg.phase = value;
    else if (key == "epochs") cfg.epochs = parse_int(key, value);
    else if (key == "batch_size") cfg.batch_size = parse_int(key, value);
    else if (key == "learning_rate") cfg.learning_rate = parse_float(key, value);
    else if (key == "weight_decay") cfg.weight_decay = parse_float(key, value);
    else if (key == "optimizer") {
      if (value == "adamw") cfg.optimizer = OptimizerKind::AdamW;
      else if (value == "sgd") cfg.optimizer = OptimizerKind::Sgd;
      else bad_value(key, value, "adamw or sgd");
    } else if (key == "scale_pair") {
      std::istringstream vs(value);
      std::string a, b, rest;
      if (!(vs >> a >> b) || (vs >> rest)) bad_value(key, value, "two numbers");
      cfg.scale1 = parse_float(key, a);
      cfg.scale2 = parse_float(key, b);
    } else if (key == "beta") cfg.loss.beta = parse_float(key, value);
    else if (key == "gamma") cfg.loss.gamma = parse_float(key, value);
    else if (key == "lambda1") cfg.loss.lambda1 = parse_float(key, value);
    else if (key == "lambda2") cfg.loss.lambda2 = parse_float(key, value);
    else if (key == "smooth_eps") cfg.loss.smooth_eps = parse_float(key, value);
    else if (key == "clamp_eps") cfg.loss.clamp_eps = parse_float(key, value);
    else if (key == "sc_weight") cfg.sc_weight = parse_float(key, value);
    else if (key == "supervision") {
      if (value == "mm2b") cfg.supervision = Supervision::Mm2b;
      else if (value == "box") cfg.supervision = Supervision::Box;
      else bad_value(key, value, "mm2b or box");
    } else if (key == "augment") cfg.augment = parse_bool(key, value);
    else if (key == "use_cnn") cfg.net.use_cnn = parse_bool(key, value);
    else if (key == "features") cfg.net.features = parse_int(key, value);
    else if (key == "cnn_width") cfg.net.cnn_width = parse_int(key, value);
    else if (key == "head_width") cfg.net.head_width = parse_int(key, value);
    else if (key == "dataset") cfg.dataset = path_of(value);
    else if (key == "eval_dataset") cfg.eval_dataset = path_of(value);
    else if (key == "checkpoint") cfg.checkpoint = path_of(value);
    else if (key == "refine_checkpoint") cfg.refine_checkpoint = path_of(value);
    else if (key == "resume") cfg.resume = path_of(value);
    else if (key == "report_format") cfg.report_format = value;
    else if (key == "seed") cfg.seed = parse_u64(key, value);
    else if (key == "refine_label_fraction") cfg.refine_label_fraction = parse_float(key, value);
    else if (key == "refine_epochs") cfg.refine_epochs = parse_int(key, value);
    else if (key == "refine_learning_rate") cfg.refine_learning_rate = parse_float(key, value);
    else throw Error(ErrorKind::Usage, "unknown config key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Usage, "cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::string format_run_config(const RunConfig& cfg) {
  auto num = [](double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::ostringstream os;
  if (!cfg.phase.empty()) os << "phase = " << cfg.phase << "\n";
  os << "epochs = " << cfg.epochs << "\n"
     << "batch_size = " << cfg.batch_size << "\n"
     << "learning_rate = " << num(cfg.learning_rate) << "\n"
     << "weight_decay = " << num(cfg.weight_decay) << "\n"
     << "optimizer = " << to_string(cfg.optimizer) << "\n"
     << "scale_pair = " << num(cfg.scale1) << " " << num(cfg.scale2) << "\n"
     << "beta = " << num(cfg.loss.beta) << "\n"
     << "gamma = " << num(cfg.loss.gamma) << "\n"
     << "lambda1 = " << num(cfg.loss.lambda1) << "\n"
     << "lambda2 = " << num(cfg.loss.lambda2) << "\n"
     << "smooth_eps = " << num(cfg.loss.smooth_eps) << "\n"
     << "clamp_eps = " << num(cfg.loss.clamp_eps) << "\n"
     << "sc_weight = " << num(cfg.sc_weight) << "\n"
     << "supervision = " << to_string(cfg.supervision) << "\n"
     << "augment = " << (cfg.augment ? "true" : "false") << "\n"
     << "use_cnn = " << (cfg.net.use_cnn ? "true" : "false") << "\n"
     << "features = " << cfg.net.features << "\n"
     << "cnn_width = " << cfg.net.cnn_width << "\n"
     << "head_width = " << cfg.net.head_width << "\n"
     << "seed = " << cfg.seed << "\n"
     << "refine_label_fraction = " << num(cfg.refine_label_fraction) << "\n"
     << "refine_epochs = " << cfg.refine_epochs << "\n"
     << "refine_learning_rate = " << num(cfg.refine_learning_rate) << "\n"
     << "report_format = " << cfg.report_format << "\n";
  return os.str();
}

}  // namespace wbk

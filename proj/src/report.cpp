#include "wbk/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "wbk/error.hpp"

namespace wbk {

namespace {

constexpr const char* kColumns[] = {"dsc", "iou_fg", "miou", "acc", "sen", "spe", "hd95"};

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::vector<double> values_of(const MetricsRow& r) {
  return {r.dsc, r.iou_fg, r.miou, r.acc, r.sen, r.spe, r.hd95};
}

}  // namespace

ReportFormat parse_report_format(const std::string& s) {
  if (s == "csv") return ReportFormat::Csv;
  if (s == "jsonl") return ReportFormat::Jsonl;
  throw Error(ErrorKind::Usage, "unknown report format '" + s + "'");
}

std::string format_metrics_report(std::vector<MetricsRow> rows, ReportFormat format) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const MetricsRow& a, const MetricsRow& b) { return a.sample_id < b.sample_id; });
  std::string out;
  if (format == ReportFormat::Csv) {
    out += "sample_id";
    for (const char* c : kColumns) out += std::string(",") + c;
    out += "\n";
    for (const MetricsRow& r : rows) {
      out += std::to_string(r.sample_id);
      for (double v : values_of(r)) out += "," + fixed6(v);
      out += "\n";
    }
    return out;
  }
  for (const MetricsRow& r : rows) {
    out += "{\"sample_id\":" + std::to_string(r.sample_id);
    const auto vals = values_of(r);
    for (std::size_t k = 0; k < vals.size(); ++k) out += std::string(",\"") + kColumns[k] + "\":" + fixed6(vals[k]);
    out += "}\n";
  }
  return out;
}

void write_metrics_report(const std::vector<MetricsRow>& rows, const std::filesystem::path& path,
                          ReportFormat format) {
  const std::string text = format_metrics_report(rows, format);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::Data, "cannot write report " + path.string());
  f << text;
  if (!f) throw Error(ErrorKind::Data, "write failed for report " + path.string());
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("sample_id,", 0) != 0) {
    throw Error(ErrorKind::Data, "metrics csv: missing header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    MetricsRow r;
    const int got = std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &r.sample_id, &r.dsc, &r.iou_fg,
                                &r.miou, &r.acc, &r.sen, &r.spe, &r.hd95);
    if (got != 8) throw Error(ErrorKind::Data, "metrics csv: malformed row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace wbk

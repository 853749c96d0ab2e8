#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wbk/metrics.hpp"

namespace wbk {

enum class ReportFormat { Csv, Jsonl };

ReportFormat parse_report_format(const std::string& s);

// Rows are emitted sorted by sample_id with six decimals per float.
std::string format_metrics_report(std::vector<MetricsRow> rows, ReportFormat format);
void write_metrics_report(const std::vector<MetricsRow>& rows, const std::filesystem::path& path,
                          ReportFormat format);

// Inverse of the csv writer; used by tests and the eval summary.
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

}  // namespace wbk

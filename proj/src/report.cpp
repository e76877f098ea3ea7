#include "injectprobe/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "injectprobe/errors.hpp"
#include "json_detail.hpp"

namespace injectprobe {

namespace {

using detail::json;

std::string fixed2(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

std::string fixed0(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.0f", value);
  return buf;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

json cell_to_json(const CellKey& key, const CellStats& stats) {
  json obj;
  obj["backend"] = key.backend;
  obj["category"] = std::string(to_string(key.category));
  obj["mode"] = std::string(to_string(key.mode));
  obj["successes"] = stats.successes;
  obj["total"] = stats.total;
  obj["rate_percent"] = stats.rate_percent;
  return obj;
}

}  // namespace

ReportFormat parse_report_format(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "markdown") return ReportFormat::markdown;
  throw SchemaError("format", "unknown format '" + std::string(name) + "'");
}

double round2_half_up(double value) {
  return std::floor(value * 100.0 + 0.5) / 100.0;
}

RunReport aggregate(const std::vector<ScoreResult>& results,
                    const std::map<std::string, CaseMeta>& meta,
                    const ReportContext& context) {
  RunReport report;
  report.run_id = context.run_id;
  report.config_digest = context.config_digest;
  report.created_at = context.created_at;
  report.threshold = context.threshold;

  std::set<std::string> seen;
  for (const ScoreResult& r : results) {
    if (!seen.insert(r.case_id).second) {
      throw DuplicateCase("duplicate case id '" + r.case_id + "'");
    }
    auto it = meta.find(r.case_id);
    if (it == meta.end()) {
      throw UnknownCase("no meta entry for case id '" + r.case_id + "'");
    }
    if (r.threshold != context.threshold) {
      throw InconsistentRecord("case '" + r.case_id +
                               "' was scored at a different threshold");
    }
    CellStats& cell =
        report.cells[CellKey{it->second.backend, it->second.category,
                             it->second.mode}];
    cell.total += 1;
    if (r.success) cell.successes += 1;
  }
  for (auto& [key, cell] : report.cells) {
    cell.rate_percent =
        round2_half_up(100.0 * static_cast<double>(cell.successes) /
                       static_cast<double>(cell.total));
  }
  return report;
}

ComparisonTable compare_reports(const RunReport& before, const RunReport& after) {
  if (before.threshold != after.threshold) {
    throw AxisMismatch("reports were scored at different thresholds (" +
                       fixed2(before.threshold) + " vs " +
                       fixed2(after.threshold) + ")");
  }
  ComparisonTable table;
  table.threshold = before.threshold;

  std::set<CellKey> keys;
  for (const auto& [key, stats] : before.cells) keys.insert(key);
  for (const auto& [key, stats] : after.cells) keys.insert(key);

  for (const CellKey& key : keys) {
    CompareRow row;
    row.key = key;
    if (auto it = before.cells.find(key); it != before.cells.end()) {
      row.before_rate = it->second.rate_percent;
    }
    if (auto it = after.cells.find(key); it != after.cells.end()) {
      row.after_rate = it->second.rate_percent;
    }
    if (row.before_rate && row.after_rate) {
      row.delta = *row.after_rate - *row.before_rate;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string emit_report(const RunReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::json: {
      json doc;
      doc["schema_version"] = 1;
      doc["run_id"] = report.run_id;
      doc["threshold"] = report.threshold;
      doc["config_digest"] = report.config_digest;
      doc["created_at"] = report.created_at;
      json cells = json::array();
      for (const auto& [key, stats] : report.cells) {
        cells.push_back(cell_to_json(key, stats));
      }
      doc["cells"] = std::move(cells);
      return doc.dump(2) + "\n";
    }
    case ReportFormat::csv: {
      std::string out = "backend,category,mode,successes,total,rate_percent\n";
      for (const auto& [key, stats] : report.cells) {
        out += csv_escape(key.backend);
        out += ',';
        out += to_string(key.category);
        out += ',';
        out += to_string(key.mode);
        out += ',';
        out += std::to_string(stats.successes);
        out += ',';
        out += std::to_string(stats.total);
        out += ',';
        out += fixed2(stats.rate_percent);
        out += '\n';
      }
      return out;
    }
    case ReportFormat::markdown: {
      std::string out;
      out += "| backend | category | mode | successes | total | rate % |\n";
      out += "|---|---|---|---:|---:|---:|\n";
      for (const auto& [key, stats] : report.cells) {
        out += "| " + key.backend + " | " + std::string(to_string(key.category)) +
               " | " + std::string(to_string(key.mode)) + " | " +
               std::to_string(stats.successes) + " | " +
               std::to_string(stats.total) + " | " + fixed2(stats.rate_percent) +
               " |\n";
      }
      return out;
    }
  }
  throw SchemaError("format", "unhandled report format");
}

RunReport parse_report(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  detail::check_keys(doc,
                     {"schema_version", "run_id", "threshold", "config_digest",
                      "created_at", "cells"},
                     {}, "report");
  if (detail::require_integer(doc, "schema_version", "report") != 1) {
    throw SchemaError("report.schema_version", "unsupported schema version");
  }
  RunReport report;
  report.run_id = detail::require_string(doc, "run_id", "report");
  report.threshold = detail::require_number(doc, "threshold", "report");
  report.config_digest = detail::require_string(doc, "config_digest", "report");
  report.created_at = detail::require_string(doc, "created_at", "report");
  detail::require_array(doc.at("cells"), "report.cells");
  for (std::size_t i = 0; i < doc.at("cells").size(); ++i) {
    const json& cell = doc.at("cells").at(i);
    const std::string path = "report.cells[" + std::to_string(i) + "]";
    detail::check_keys(
        cell, {"backend", "category", "mode", "successes", "total",
               "rate_percent"},
        {}, path);
    CellKey key;
    key.backend = detail::require_string(cell, "backend", path);
    key.category =
        parse_attack_category(detail::require_string(cell, "category", path));
    key.mode =
        parse_delimiter_mode(detail::require_string(cell, "mode", path));
    CellStats stats;
    stats.successes = static_cast<std::size_t>(
        detail::require_integer(cell, "successes", path));
    stats.total =
        static_cast<std::size_t>(detail::require_integer(cell, "total", path));
    stats.rate_percent = detail::require_number(cell, "rate_percent", path);
    if (stats.successes > stats.total) {
      throw SchemaError(path, "successes exceed total");
    }
    if (!report.cells.emplace(std::move(key), stats).second) {
      throw SchemaError(path, "duplicate cell");
    }
  }
  return report;
}

std::string emit_comparison(const ComparisonTable& table, ReportFormat format) {
  const auto render = [](const std::optional<double>& v,
                         const char* missing) -> std::string {
    return v ? fixed2(*v) : std::string(missing);
  };
  switch (format) {
    case ReportFormat::json: {
      json doc;
      doc["schema_version"] = 1;
      doc["threshold"] = table.threshold;
      json rows = json::array();
      for (const CompareRow& row : table.rows) {
        json obj;
        obj["backend"] = row.key.backend;
        obj["category"] = std::string(to_string(row.key.category));
        obj["mode"] = std::string(to_string(row.key.mode));
        obj["before_rate"] = row.before_rate ? json(*row.before_rate) : json();
        obj["after_rate"] = row.after_rate ? json(*row.after_rate) : json();
        obj["delta"] = row.delta ? json(*row.delta) : json();
        rows.push_back(std::move(obj));
      }
      doc["rows"] = std::move(rows);
      return doc.dump(2) + "\n";
    }
    case ReportFormat::csv: {
      std::string out = "backend,category,mode,before_rate,after_rate,delta\n";
      for (const CompareRow& row : table.rows) {
        out += csv_escape(row.key.backend);
        out += ',';
        out += to_string(row.key.category);
        out += ',';
        out += to_string(row.key.mode);
        out += ',';
        out += render(row.before_rate, "");
        out += ',';
        out += render(row.after_rate, "");
        out += ',';
        out += render(row.delta, "");
        out += '\n';
      }
      return out;
    }
    case ReportFormat::markdown: {
      std::string out;
      out += "| backend | category | mode | before % | after % | delta |\n";
      out += "|---|---|---|---:|---:|---:|\n";
      for (const CompareRow& row : table.rows) {
        out += "| " + row.key.backend + " | " +
               std::string(to_string(row.key.category)) + " | " +
               std::string(to_string(row.key.mode)) + " | " +
               render(row.before_rate, "—") + " | " +
               render(row.after_rate, "—") + " | " + render(row.delta, "—") +
               " |\n";
      }
      return out;
    }
  }
  throw SchemaError("format", "unhandled report format");
}

std::vector<SizeEntry> size_vulnerability_series(std::vector<SizeEntry> entries) {
  for (const SizeEntry& e : entries) {
    if (!(e.parameter_count > 0)) {
      throw SchemaError("series", "parameter counts must be positive");
    }
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const SizeEntry& a, const SizeEntry& b) {
                     return a.parameter_count < b.parameter_count;
                   });
  return entries;
}

std::string series_to_csv(const std::vector<SizeEntry>& series) {
  std::string out = "model,parameters,avg_success_rate\n";
  for (const SizeEntry& e : series) {
    out += csv_escape(e.model);
    out += ',';
    out += fixed0(e.parameter_count);
    out += ',';
    out += fixed2(e.avg_success_rate);
    out += '\n';
  }
  return out;
}

}  // namespace injectprobe

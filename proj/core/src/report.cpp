#include "fprune/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "fprune/errors.hpp"

namespace fprune {

using Json = nlohmann::ordered_json;

namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double read_number(const Json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return v.get<double>();
}

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string csv_number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string report_to_json(const PruneReport& r) {
  Json j;
  j["method"] = r.method;
  j["bound"] = r.bound;
  j["seed"] = r.seed;
  j["selection_seed"] = r.selection_seed ? Json(*r.selection_seed) : Json(nullptr);
  j["prune_ratio"] = r.prune_ratio;
  j["filter_prune_ratio"] = r.filter_prune_ratio;
  j["saved_flops"] = r.saved_flops;
  j["params_before"] = r.params_before;
  j["params_after"] = r.params_after;
  j["flops_before"] = r.flops_before;
  j["flops_after"] = r.flops_after;
  j["filters_before"] = r.filters_before;
  j["filters_after"] = r.filters_after;
  j["val_accuracy_before"] = r.val_accuracy_before;
  j["val_accuracy_after"] = r.val_accuracy_after;
  j["val_drop"] = r.val_drop;
  j["test_accuracy_before"] = number_or_null(r.test_accuracy_before);
  j["test_accuracy_after"] = number_or_null(r.test_accuracy_after);
  j["test_drop"] = number_or_null(r.test_drop);
  j["time_before_ms"] = number_or_null(r.time_before_ms);
  j["time_after_ms"] = number_or_null(r.time_after_ms);
  Json layers = Json::array();
  for (const auto& l : r.layers) {
    Json e;
    e["unit"] = l.unit;
    e["layer"] = l.target.layer;
    e["slot"] = static_cast<int>(l.target.slot);
    e["original_filters"] = l.original_filters;
    e["kept_filters"] = l.kept_filters;
    e["ratio"] = l.ratio;
    e["kept_indices"] = l.kept_indices;
    e["pstar"] = l.pstar;
    e["val_accuracy"] = l.val_accuracy;
    e["agent_epochs"] = l.agent_epochs;
    e["agent_converged"] = l.agent_converged;
    layers.push_back(std::move(e));
  }
  j["layers"] = std::move(layers);
  return j.dump(2) + "\n";
}

PruneReport report_from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    PruneReport r;
    r.method = j.at("method").get<std::string>();
    r.bound = j.at("bound").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("selection_seed") && !j.at("selection_seed").is_null()) {
      r.selection_seed = j.at("selection_seed").get<std::uint64_t>();
    }
    r.prune_ratio = j.at("prune_ratio").get<double>();
    r.filter_prune_ratio = j.at("filter_prune_ratio").get<double>();
    r.saved_flops = j.at("saved_flops").get<double>();
    r.params_before = j.at("params_before").get<std::uint64_t>();
    r.params_after = j.at("params_after").get<std::uint64_t>();
    r.flops_before = j.at("flops_before").get<std::uint64_t>();
    r.flops_after = j.at("flops_after").get<std::uint64_t>();
    r.filters_before = j.at("filters_before").get<std::uint64_t>();
    r.filters_after = j.at("filters_after").get<std::uint64_t>();
    r.val_accuracy_before = j.at("val_accuracy_before").get<double>();
    r.val_accuracy_after = j.at("val_accuracy_after").get<double>();
    r.val_drop = j.at("val_drop").get<double>();
    r.test_accuracy_before = read_number(j, "test_accuracy_before");
    r.test_accuracy_after = read_number(j, "test_accuracy_after");
    r.test_drop = read_number(j, "test_drop");
    r.time_before_ms = read_number(j, "time_before_ms");
    r.time_after_ms = read_number(j, "time_after_ms");
    for (const auto& e : j.at("layers")) {
      LayerPruneResult l;
      l.unit = e.at("unit").get<std::size_t>();
      l.target.layer = e.at("layer").get<std::size_t>();
      const int slot = e.at("slot").get<int>();
      if (slot != 0 && slot != 1) throw DataError("bad slot in report");
      l.target.slot = static_cast<ConvSlot>(slot);
      l.original_filters = e.at("original_filters").get<std::size_t>();
      l.kept_filters = e.at("kept_filters").get<std::size_t>();
      l.ratio = e.at("ratio").get<double>();
      l.kept_indices = e.at("kept_indices").get<std::vector<std::size_t>>();
      l.pstar = e.at("pstar").get<double>();
      l.val_accuracy = e.at("val_accuracy").get<double>();
      l.agent_epochs = e.at("agent_epochs").get<std::size_t>();
      l.agent_converged = e.at("agent_converged").get<bool>();
      if (l.kept_filters == 0 || l.kept_filters > l.original_filters ||
          l.kept_indices.size() != l.kept_filters) {
        throw DataError("inconsistent layer entry in report");
      }
      r.layers.push_back(std::move(l));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed report: ") + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

PruneReport load_report(const std::filesystem::path& path) {
  try {
    return report_from_json(read_text_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string report_to_csv(const PruneReport& r) {
  std::ostringstream os;
  os << "method,bound,seed,prune_ratio,filter_prune_ratio,saved_flops,params_before,params_after,"
        "flops_before,flops_after,val_before,val_after,val_drop,test_before,test_after,test_drop,"
        "time_before_ms,time_after_ms\n";
  os << r.method << ',' << csv_number(r.bound) << ',' << r.seed << ',' << csv_number(r.prune_ratio)
     << ',' << csv_number(r.filter_prune_ratio) << ',' << csv_number(r.saved_flops) << ','
     << r.params_before << ',' << r.params_after << ',' << r.flops_before << ',' << r.flops_after
     << ',' << csv_number(r.val_accuracy_before) << ',' << csv_number(r.val_accuracy_after) << ','
     << csv_number(r.val_drop) << ',' << csv_number(r.test_accuracy_before) << ','
     << csv_number(r.test_accuracy_after) << ',' << csv_number(r.test_drop) << ','
     << csv_number(r.time_before_ms) << ',' << csv_number(r.time_after_ms) << '\n';
  return os.str();
}

std::string layer_ratios_csv(const PruneReport& r) {
  std::ostringstream os;
  os << "unit,layer,slot,original,kept,ratio\n";
  for (const auto& l : r.layers) {
    os << l.unit << ',' << l.target.layer << ',' << static_cast<int>(l.target.slot) << ','
       << l.original_filters << ',' << l.kept_filters << ',' << csv_number(l.ratio) << '\n';
  }
  return os.str();
}

void write_prune_outputs(const std::filesystem::path& dir, const std::string& stem,
                         const PruneReport& report, std::span<const TrainLog> logs) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / (stem + ".json"), report_to_json(report));
  write_text_file(dir / (stem + ".csv"), report_to_csv(report));
  write_text_file(dir / (stem + "_layers.csv"), layer_ratios_csv(report));
  for (std::size_t i = 0; i < logs.size() && i < report.layers.size(); ++i) {
    logs[i].write_csv(dir / (stem + "_agent" + std::to_string(report.layers[i].unit) + ".csv"));
  }
}

namespace {

std::vector<std::string> table_header() {
  return {"run",         "method",     "bound",     "prune_ratio(%)", "filters_removed(%)",
          "saved_flops(%)", "val_before", "val_after", "val_drop",       "test_before",
          "test_after", "test_drop",  "ms_before", "ms_after"};
}

std::vector<std::string> table_row(const PruneReport& r, const std::string& label) {
  return {label,
          r.method,
          fixed(r.bound, 2),
          fixed(r.prune_ratio, 2),
          fixed(r.filter_prune_ratio, 2),
          fixed(r.saved_flops, 2),
          fixed(r.val_accuracy_before, 2),
          fixed(r.val_accuracy_after, 2),
          fixed(r.val_drop, 2),
          fixed(r.test_accuracy_before, 2),
          fixed(r.test_accuracy_after, 2),
          fixed(r.test_drop, 2),
          fixed(r.time_before_ms, 3),
          fixed(r.time_after_ms, 3)};
}

void check_rows(std::span<const PruneReport> reports, std::span<const std::string> labels) {
  if (reports.empty()) throw ConfigError("no reports to compare");
  if (reports.size() != labels.size()) throw ConfigError("one label per report required");
}

}  // namespace

std::string comparison_table(std::span<const PruneReport> reports,
                             std::span<const std::string> labels) {
  check_rows(reports, labels);
  std::vector<std::vector<std::string>> rows{table_header()};
  for (std::size_t i = 0; i < reports.size(); ++i) rows.push_back(table_row(reports[i], labels[i]));
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c) os << "  ";
      if (c < 2) os << std::left; else os << std::right;
      os << std::setw(static_cast<int>(width[c])) << rows[r][c];
    }
    os << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      os << std::string(total + 2 * (width.size() - 1), '-') << '\n';
    }
  }
  return os.str();
}

std::string comparison_csv(std::span<const PruneReport> reports,
                           std::span<const std::string> labels) {
  check_rows(reports, labels);
  std::ostringstream os;
  os << "run,method,bound,seed,prune_ratio,filter_prune_ratio,saved_flops,val_before,val_after,"
        "val_drop,test_before,test_after,test_drop,time_before_ms,time_after_ms\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    os << labels[i] << ',' << r.method << ',' << csv_number(r.bound) << ',' << r.seed << ','
       << csv_number(r.prune_ratio) << ',' << csv_number(r.filter_prune_ratio) << ','
       << csv_number(r.saved_flops) << ',' << csv_number(r.val_accuracy_before) << ','
       << csv_number(r.val_accuracy_after) << ',' << csv_number(r.val_drop) << ','
       << csv_number(r.test_accuracy_before) << ',' << csv_number(r.test_accuracy_after) << ','
       << csv_number(r.test_drop) << ',' << csv_number(r.time_before_ms) << ','
       << csv_number(r.time_after_ms) << '\n';
  }
  return os.str();
}

}  // namespace fprune

#include "fc3/runner.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace fc3 {

namespace {

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

/// Splits one CSV record; `line` has no trailing newline.
std::vector<std::string> parse_record(const std::string& line, int line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw std::runtime_error("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(cur));
  return fields;
}

template <typename T>
T number(const std::string& text, int line_no, const char* column) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (!in || in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error("line " + std::to_string(line_no) + ": bad " + column + " '" + text + "'");
  return v;
}

}  // namespace

ResultRow ResultRow::from(const TrialResult& r) {
  ResultRow row;
  row.scenario = r.scenario;
  row.system = to_string(r.system);
  row.interference = r.interference;
  row.trial = r.trial;
  row.outcome = to_string(r.outcome);
  row.sim_time_s = r.sim_time;
  row.ticks = r.ticks;
  row.chain_switches = r.chain_switches;
  row.controllers_entered = r.controllers_entered;
  return row;
}

std::string csv_header() {
  std::string out;
  for (std::size_t i = 0; i < csv_columns.size(); ++i) {
    if (i) out += ',';
    out += csv_columns[i];
  }
  return out;
}

std::string csv_line(const ResultRow& row) {
  const std::vector<std::string> fields = {quote(row.scenario),
                                           quote(row.system),
                                           quote(row.interference),
                                           std::to_string(row.trial),
                                           quote(row.outcome),
                                           fixed(row.sim_time_s, 3),
                                           std::to_string(row.ticks),
                                           std::to_string(row.chain_switches),
                                           quote(join(row.controllers_entered, ';'))};
  return join(fields, ',');
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_line(r) << '\n';
}

std::vector<ResultRow> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != csv_header()) throw std::runtime_error("line 1: unexpected header");
  std::vector<ResultRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = parse_record(line, line_no);
    if (f.size() != csv_columns.size())
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " + std::to_string(csv_columns.size()) +
                               " fields, got " + std::to_string(f.size()));
    ResultRow r;
    r.scenario = f[0];
    r.system = f[1];
    r.interference = f[2];
    r.trial = number<int>(f[3], line_no, "trial");
    r.outcome = f[4];
    if (r.outcome != "success" && r.outcome != "infeasible" && r.outcome != "timeout")
      throw std::runtime_error("line " + std::to_string(line_no) + ": bad outcome '" + r.outcome + "'");
    r.sim_time_s = number<double>(f[5], line_no, "sim_time_s");
    r.ticks = number<long>(f[6], line_no, "ticks");
    r.chain_switches = number<int>(f[7], line_no, "chain_switches");
    r.controllers_entered = split(f[8], ';');
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<CellSummary> aggregate(const std::vector<ResultRow>& rows) {
  std::vector<CellSummary> cells;
  std::vector<double> total;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  for (const auto& r : rows) {
    const auto key = std::make_tuple(r.scenario, r.system, r.interference);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, cells.size()).first;
      cells.push_back({r.scenario, r.system, r.interference, 0, 0, 0, 0, std::nullopt});
      total.push_back(0.0);
    }
    auto& c = cells[it->second];
    ++c.trials;
    if (r.outcome == "success") {
      ++c.successes;
      total[it->second] += r.sim_time_s;
    } else if (r.outcome == "infeasible") {
      ++c.infeasible;
    } else {
      ++c.timeouts;
    }
  }
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (cells[i].successes > 0) cells[i].mean_success_time = total[i] / cells[i].successes;
  return cells;
}

std::string format_aggregate(const std::vector<CellSummary>& cells) {
  std::vector<std::string> interferences;
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& c : cells) {
    if (std::find(interferences.begin(), interferences.end(), c.interference) == interferences.end())
      interferences.push_back(c.interference);
    const auto g = std::make_pair(c.scenario, c.system);
    if (std::find(groups.begin(), groups.end(), g) == groups.end()) groups.push_back(g);
  }
  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::ostringstream out;
  out << pad("scenario", 10) << pad("system", 8);
  for (const auto& i : interferences) out << pad(i, 9);
  out << '\n';
  for (const auto& [scenario, system] : groups) {
    out << pad(scenario, 10) << pad(system, 8);
    for (const auto& i : interferences) {
      std::string cell;
      for (const auto& c : cells)
        if (c.scenario == scenario && c.system == system && c.interference == i)
          cell = c.mean_success_time ? fixed(*c.mean_success_time, 2) : "-";
      out << pad(cell, 9);
    }
    out << '\n';
  }
  return out.str();
}

std::vector<ResultRow> run_batch(const BatchSpec& spec, const BatchProgress& progress) {
  std::vector<ResultRow> rows;
  for (const Scenario* scenario : spec.scenarios) {
    const auto ids = spec.interferences.empty() ? scenario->interference_ids() : spec.interferences;
    for (System system : spec.systems)
      for (const auto& id : ids)
        for (int k = 0; k < spec.trials; ++k) {
          rows.push_back(ResultRow::from(run_trial(*scenario, system, id, k, spec.seed)));
          if (progress) progress(rows.back());
        }
  }
  return rows;
}

}  // namespace fc3

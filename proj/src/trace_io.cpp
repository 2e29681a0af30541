#include "lis/trace_io.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lis/csv.hpp"
#include "lis/errors.hpp"

namespace lis {

std::vector<std::string> trace_header(const ReactionModel& model) {
  std::vector<std::string> h{"t_s", "V", "eps", "m_Sp"};
  for (const auto& sp : model.species()) h.push_back("m_" + sp.name);
  const std::size_t p = model.reaction_count();
  for (const char* prefix : {"i_", "E_", "eta_"})
    for (std::size_t j = 1; j <= p; ++j) h.push_back(prefix + std::to_string(j));
  h.emplace_back("capacity_mAh_per_g");
  return h;
}

void write_trace_csv(std::ostream& os, const ReactionModel& model, const SimulationTrace& trace) {
  CsvWriter w(os);
  w.row(trace_header(model));
  std::vector<double> row;
  for (std::size_t k = 0; k < trace.samples.size(); ++k) {
    const auto& [s, a] = trace.samples[k];
    row.clear();
    row.insert(row.end(), {s.t, a.V, s.eps, s.m_Sp});
    row.insert(row.end(), s.m.begin(), s.m.end());
    row.insert(row.end(), a.i_r.begin(), a.i_r.end());
    row.insert(row.end(), a.E.begin(), a.E.end());
    row.insert(row.end(), a.eta.begin(), a.eta.end());
    row.push_back(trace.capacity_at(k));
    w.row(row);
  }
}

void write_trace_csv(const std::filesystem::path& path, const ReactionModel& model, const SimulationTrace& trace) {
  std::ostringstream os;
  write_trace_csv(os, model, trace);
  write_file_atomic(path, os.str());
}

Eigen::Index CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ParseError("missing column '" + name + "'", 1);
  return it - header.begin();
}

CsvTable read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = csv_split(line);
    if (table.header.empty()) {
      table.header = std::move(fields);
      continue;
    }
    if (fields.size() != table.header.size()) throw ParseError("wrong number of fields", line_no);
    std::vector<double> values(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k)
      if (!parse_double(fields[k], values[k])) throw ParseError("non-numeric field '" + fields[k] + "'", line_no);
    rows.push_back(std::move(values));
  }
  if (table.header.empty()) throw ParseError("empty file " + path.string(), 0);
  table.rows.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.header.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

}  // namespace lis

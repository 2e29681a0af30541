#include "lis/param_file.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "lis/csv.hpp"
#include "lis/errors.hpp"

namespace lis {

std::string_view parameter_unit(std::string_view path) {
  if (path.starts_with("E0[")) return "V";
  if (path.starts_with("i0[")) return "A/m^2";
  if (path.starts_with("m0[") || path == "S_sat" || path == "m_Sp0") return "g";
  if (path == "a_v0") return "m^2";
  if (path == "v") return "L";
  if (path == "omega") return "1/g";
  if (path == "k_p") return "1/(g s)";
  if (path == "F") return "C/mol";
  if (path == "R") return "J/(K mol)";
  if (path == "T") return "K";
  if (path == "M_S") return "g/mol";
  return "-";
}

std::string format_parameters(const ReactionModel& model, const ParameterSet& params) {
  std::ostringstream os;
  os << "# lis0d parameter set\n";
  os << "model = " << model_number(model.id()) << '\n';
  for (const auto& path : parameter_paths(model)) {
    os << path << " = " << format_double(get_parameter(model, params, path)) << "  # " << parameter_unit(path)
       << '\n';
  }
  return os.str();
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct Entry {
  std::string key;
  double value;
  std::size_t line;
};

}  // namespace

ParameterFile parse_parameters(std::string_view text) {
  std::vector<Entry> entries;
  std::optional<int> model;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view raw = trim(line.substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_no);
    if (!seen.insert(key).second) throw ParseError("duplicate key '" + key + "'", line_no);
    double value = 0;
    if (!parse_double(raw, value)) throw ParseError("value for '" + key + "' is not a number", line_no);
    if (key == "model") {
      if (value != static_cast<int>(value)) throw ParseError("model must be an integer", line_no);
      model = static_cast<int>(value);
    } else {
      entries.push_back({key, value, line_no});
    }
  }
  if (!model) throw ParseError("missing 'model' key", 0);

  ParameterFile out;
  try {
    out.model = model_from_number(*model);
  } catch (const ConfigError& e) {
    throw ParseError(e.what(), 0);
  }
  const ReactionModel rm = build_model(out.model);
  out.params = nominal_parameters(out.model);
  for (const auto& e : entries) {
    try {
      set_parameter(rm, out.params, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ParseError(err.what(), e.line);
    }
  }
  return out;
}

void write_parameters(const std::filesystem::path& path, const ReactionModel& model, const ParameterSet& params) {
  write_file_atomic(path, format_parameters(model, params));
}

ParameterFile read_parameters(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open parameter file " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_parameters(ss.str());
}

}  // namespace lis

#include "lis/model.hpp"

#include <charconv>
#include <cmath>
#include <set>

#include "lis/errors.hpp"

namespace lis {

int model_number(ModelId id) { return static_cast<int>(id); }

ModelId model_from_number(int n) {
  if (n < 1 || n > 4) throw ConfigError("model must be 1, 2, 3 or 4 (got " + std::to_string(n) + ")");
  return static_cast<ModelId>(n);
}

std::string to_string(ModelId id) { return "M" + std::to_string(model_number(id)); }

Eigen::MatrixXd StoichiometryTable::to_matrix() const {
  Eigen::MatrixXd out(rows_, cols_);
  for (std::size_t j = 0; j < cols_; ++j)
    for (std::size_t i = 0; i < rows_; ++i) out(i, j) = (*this)(i, j).value();
  return out;
}

ReactionModel::ReactionModel(ModelId id, std::vector<Species> species, StoichiometryTable s, std::vector<int> electrons)
    : id_(id), species_(std::move(species)), s_(std::move(s)), electrons_(std::move(electrons)) {
  if (species_.size() > static_cast<std::size_t>(kMaxSpecies)) throw ConfigError("too many species");
  s_dense_ = s_.to_matrix();
  n_sulfur_.resize(species_.size());
  for (std::size_t i = 0; i < species_.size(); ++i) n_sulfur_(i) = species_[i].n_sulfur;
  n_electrons_.resize(electrons_.size());
  for (std::size_t j = 0; j < electrons_.size(); ++j) n_electrons_(j) = electrons_[j];
}

std::optional<std::size_t> ReactionModel::species_index(std::string_view name) const {
  for (std::size_t i = 0; i < species_.size(); ++i)
    if (species_[i].name == name) return i;
  return std::nullopt;
}

Rational ReactionModel::sulfur_balance(std::size_t reaction) const {
  Rational sum;
  for (std::size_t i = 0; i < species_.size(); ++i) sum = sum + s_(i, reaction) * Rational(species_[i].n_sulfur);
  return sum;
}

namespace {

struct Term {
  const char* species;
  Rational coeff;
};

ReactionModel assemble(ModelId id, std::vector<Species> species, std::vector<std::vector<Term>> reactions) {
  StoichiometryTable s(species.size(), reactions.size());
  for (std::size_t j = 0; j < reactions.size(); ++j) {
    for (const auto& term : reactions[j]) {
      std::size_t i = 0;
      while (species[i].name != term.species) ++i;
      s(i, j) = term.coeff;
    }
  }
  std::vector<int> electrons(reactions.size(), 1);
  return ReactionModel(id, std::move(species), std::move(s), std::move(electrons));
}

}  // namespace

ReactionModel build_model(ModelId id) {
  const Species S8{"S8", 8}, S8_2{"S8^2-", 8}, S6{"S6^2-", 6}, S4{"S4^2-", 4}, S2{"S2^2-", 2}, S1{"S^2-", 1};
  switch (id) {
    case ModelId::M1:
      return assemble(id, {S8, S4, S1},
                      {{{"S8", {-1, 4}}, {"S4^2-", {1, 2}}},
                       {{"S4^2-", {-1, 6}}, {"S^2-", {2, 3}}}});
    case ModelId::M2:
      return assemble(id, {S8, S6, S4, S1},
                      {{{"S8", {-3, 8}}, {"S6^2-", {1, 2}}},
                       {{"S6^2-", {-1}}, {"S4^2-", {3, 2}}},
                       {{"S4^2-", {-1, 6}}, {"S^2-", {2, 3}}}});
    case ModelId::M3:
      return assemble(id, {S8, S8_2, S6, S4, S1},
                      {{{"S8", {-1, 2}}, {"S8^2-", {1, 2}}},
                       {{"S8^2-", {-3, 2}}, {"S6^2-", {2}}},
                       {{"S6^2-", {-1}}, {"S4^2-", {3, 2}}},
                       {{"S4^2-", {-1, 6}}, {"S^2-", {2, 3}}}});
    case ModelId::M4:
      return assemble(id, {S8, S8_2, S6, S4, S2, S1},
                      {{{"S8", {-1, 2}}, {"S8^2-", {1, 2}}},
                       {{"S8^2-", {-3, 2}}, {"S6^2-", {2}}},
                       {{"S6^2-", {-1}}, {"S4^2-", {3, 2}}},
                       {{"S4^2-", {-1, 2}}, {"S2^2-", {1}}},
                       {{"S2^2-", {-1, 2}}, {"S^2-", {1}}}});
  }
  throw ConfigError("unknown model id");
}

bool operator==(const ParameterSet& a, const ParameterSet& b) {
  auto same = [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) { return x.size() == y.size() && x == y; };
  return same(a.E0, b.E0) && same(a.i0, b.i0) && a.a_v0 == b.a_v0 && a.volume == b.volume && a.gamma == b.gamma &&
         a.omega == b.omega && a.k_p == b.k_p && a.S_sat == b.S_sat && same(a.m0, b.m0) && a.m_Sp0 == b.m_Sp0 &&
         a.constants == b.constants;
}

Eigen::VectorXd default_initial_masses(const ReactionModel& model, double sulfur_mass, double S_sat) {
  const Eigen::Index q = static_cast<Eigen::Index>(model.species_count());
  Eigen::VectorXd m0 = Eigen::VectorXd::Constant(q, kIntermediateMassFraction * sulfur_mass);
  m0(0) = sulfur_mass;
  m0(q - 1) = kSulfideMassFractionOfSaturation * S_sat;
  return m0;
}

ParameterSet nominal_parameters(ModelId id) {
  const ReactionModel model = build_model(id);
  ParameterSet p;
  switch (id) {
    case ModelId::M1:
      p.E0 = Eigen::Vector2d(2.40, 2.10);
      p.i0 = Eigen::Vector2d(2.00, 0.02);
      break;
    case ModelId::M2:
      p.E0 = Eigen::Vector3d(2.40, 2.30, 2.10);
      p.i0 = Eigen::Vector3d(2.00, 0.02, 0.02);
      break;
    case ModelId::M3:
      p.E0 = Eigen::Vector4d(2.46, 2.38, 2.30, 2.10);
      p.i0 = Eigen::Vector4d(2.00, 0.02, 0.02, 0.02);
      break;
    case ModelId::M4:
      p.E0.resize(5);
      p.E0 << 2.46, 2.38, 2.30, 2.15, 1.98;
      p.i0.resize(5);
      p.i0 << 2.00, 0.02, 0.02, 0.02, 0.02;
      break;
  }
  p.m0 = default_initial_masses(model, kNominalSulfurMass, p.S_sat);
  p.m_Sp0 = kPrecipitateSeedMass;
  return p;
}

void validate(const ReactionModel& model, const ParameterSet& params) {
  const auto p = static_cast<Eigen::Index>(model.reaction_count());
  const auto q = static_cast<Eigen::Index>(model.species_count());
  if (params.E0.size() != p) throw ConfigError("E0 must have one entry per reaction");
  if (params.i0.size() != p) throw ConfigError("i0 must have one entry per reaction");
  if (params.m0.size() != q) throw ConfigError("m0 must have one entry per species");
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(params.E0(j) > 1.0 && params.E0(j) < 3.0))
      throw ConfigError("E0[" + std::to_string(j + 1) + "] outside (1, 3) V");
    if (!(params.i0(j) > 0) || !std::isfinite(params.i0(j)))
      throw ConfigError("i0[" + std::to_string(j + 1) + "] must be positive");
  }
  for (Eigen::Index i = 0; i < q; ++i)
    if (!(params.m0(i) > 0) || !std::isfinite(params.m0(i)))
      throw ConfigError("m0[" + model.species()[static_cast<std::size_t>(i)].name + "] must be positive");
  auto positive = [](double x, const char* name) {
    if (!(x > 0) || !std::isfinite(x)) throw ConfigError(std::string(name) + " must be positive");
  };
  positive(params.a_v0, "a_v0");
  positive(params.volume, "v");
  positive(params.gamma, "gamma");
  positive(params.omega, "omega");
  positive(params.k_p, "k_p");
  positive(params.S_sat, "S_sat");
  positive(params.m_Sp0, "m_Sp0");
  positive(params.constants.faraday, "F");
  positive(params.constants.gas, "R");
  positive(params.constants.temperature, "T");
  positive(params.constants.sulfur_molar_mass, "M_S");
}

CellState initial_state(const ParameterSet& params) {
  CellState s;
  s.m = params.m0;
  s.m_Sp = params.m_Sp0;
  s.eps = 1.0;
  s.t = 0.0;
  return s;
}

namespace {

// Splits "name[index]" into ("name", "index"); index empty when absent.
std::pair<std::string_view, std::string_view> split_path(std::string_view path) {
  const auto open = path.find('[');
  if (open == std::string_view::npos) return {path, {}};
  if (path.back() != ']') throw ConfigError("malformed parameter path '" + std::string(path) + "'");
  return {path.substr(0, open), path.substr(open + 1, path.size() - open - 2)};
}

Eigen::Index reaction_slot(const ReactionModel& model, std::string_view path, std::string_view index) {
  int j = 0;
  const auto [ptr, ec] = std::from_chars(index.data(), index.data() + index.size(), j);
  if (ec != std::errc{} || ptr != index.data() + index.size() || j < 1 ||
      j > static_cast<int>(model.reaction_count()))
    throw ConfigError("reaction index out of range in '" + std::string(path) + "'");
  return j - 1;
}

double* locate(const ReactionModel& model, ParameterSet& params, std::string_view path) {
  const auto [name, index] = split_path(path);
  if (!index.empty()) {
    if (name == "E0") return &params.E0(reaction_slot(model, path, index));
    if (name == "i0") return &params.i0(reaction_slot(model, path, index));
    if (name == "m0") {
      const auto i = model.species_index(index);
      if (!i) throw ConfigError("unknown species in '" + std::string(path) + "'");
      return &params.m0(static_cast<Eigen::Index>(*i));
    }
  } else {
    if (name == "a_v0") return &params.a_v0;
    if (name == "v") return &params.volume;
    if (name == "gamma") return &params.gamma;
    if (name == "omega") return &params.omega;
    if (name == "k_p") return &params.k_p;
    if (name == "S_sat") return &params.S_sat;
    if (name == "m_Sp0") return &params.m_Sp0;
    if (name == "F") return &params.constants.faraday;
    if (name == "R") return &params.constants.gas;
    if (name == "T") return &params.constants.temperature;
    if (name == "M_S") return &params.constants.sulfur_molar_mass;
  }
  throw ConfigError("unknown parameter '" + std::string(path) + "'");
}

}  // namespace

double get_parameter(const ReactionModel& model, const ParameterSet& params, std::string_view path) {
  return *locate(model, const_cast<ParameterSet&>(params), path);
}

void set_parameter(const ReactionModel& model, ParameterSet& params, std::string_view path, double value) {
  *locate(model, params, path) = value;
}

std::vector<std::string> parameter_paths(const ReactionModel& model) {
  std::vector<std::string> out;
  for (std::size_t j = 1; j <= model.reaction_count(); ++j) out.push_back("E0[" + std::to_string(j) + "]");
  for (std::size_t j = 1; j <= model.reaction_count(); ++j) out.push_back("i0[" + std::to_string(j) + "]");
  for (const char* name : {"a_v0", "v", "gamma", "omega", "k_p", "S_sat"}) out.emplace_back(name);
  for (const auto& sp : model.species()) out.push_back("m0[" + sp.name + "]");
  for (const char* name : {"m_Sp0", "F", "R", "T", "M_S"}) out.emplace_back(name);
  return out;
}

}  // namespace lis

#pragma once

// Reaction catalog, parameter sets and state for the zero-dimensional
// lithium-sulfur cathode models.
//
// Units: masses in g, volume in L, area in m^2, current in A, potential in V,
// time in s. Species and reaction indices are 0-based in code and 1-based in
// parameter paths ("E0[1]" is the first reaction).

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lis/rational.hpp"

namespace lis {

enum class ModelId { M1 = 1, M2 = 2, M3 = 3, M4 = 4 };

inline constexpr std::array<ModelId, 4> kAllModels{ModelId::M1, ModelId::M2, ModelId::M3, ModelId::M4};

int model_number(ModelId id);
ModelId model_from_number(int n);  // throws ConfigError outside 1..4
std::string to_string(ModelId id);

struct Species {
  std::string name;  // "S8", "S8^2-", ..., "S^2-"
  int n_sulfur = 0;  // sulfur atoms per formula unit
};

/// Dense q x p table of exact stoichiometric coefficients, column-major by reaction.
class StoichiometryTable {
 public:
  StoichiometryTable() = default;
  StoichiometryTable(std::size_t species, std::size_t reactions)
      : rows_(species), cols_(reactions), data_(species * reactions) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Rational& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  Rational operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  Eigen::MatrixXd to_matrix() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Rational> data_;
};

/// Immutable description of one reduction chain. Reactions are written in
/// the reduction direction: reactants negative, products positive.
class ReactionModel {
 public:
  ReactionModel(ModelId id, std::vector<Species> species, StoichiometryTable s, std::vector<int> electrons);

  ModelId id() const { return id_; }
  std::size_t species_count() const { return species_.size(); }   // q
  std::size_t reaction_count() const { return electrons_.size(); }  // p
  const std::vector<Species>& species() const { return species_; }
  const StoichiometryTable& stoichiometry() const { return s_; }
  const std::vector<int>& electrons() const { return electrons_; }

  // Floating-point views used by the solver.
  const Eigen::MatrixXd& s() const { return s_dense_; }
  const Eigen::VectorXd& n_sulfur() const { return n_sulfur_; }
  const Eigen::VectorXd& n_electrons() const { return n_electrons_; }

  std::optional<std::size_t> species_index(std::string_view name) const;

  /// Sum_i s[i][j] * n_S[i], exact.
  Rational sulfur_balance(std::size_t reaction) const;

 private:
  ModelId id_;
  std::vector<Species> species_;
  StoichiometryTable s_;
  std::vector<int> electrons_;
  Eigen::MatrixXd s_dense_;
  Eigen::VectorXd n_sulfur_;
  Eigen::VectorXd n_electrons_;
};

/// Builds the exact reaction chain for one of the four catalog models.
ReactionModel build_model(ModelId id);

struct PhysicalConstants {
  double faraday = 9.649e4;  // C/mol
  double gas = 8.3145;       // J/(K mol)
  double temperature = 298;  // K
  double sulfur_molar_mass = 32.065;  // g/mol

  friend bool operator==(const PhysicalConstants&, const PhysicalConstants&) = default;
};

struct ParameterSet {
  Eigen::VectorXd E0;  // V, one per reaction
  Eigen::VectorXd i0;  // A/m^2, one per reaction
  double a_v0 = 1;     // m^2
  double volume = 0.0114;  // L
  double gamma = 1.5;
  double omega = 0.1;    // 1/g
  double k_p = 22;       // 1/(g s)
  double S_sat = 1e-4;   // g
  Eigen::VectorXd m0;    // g, one per species
  double m_Sp0 = 1e-6;   // g
  PhysicalConstants constants;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b);
};

// Defaults for quantities the nominal table leaves open. See README.
inline constexpr double kNominalSulfurMass = 2.8;              // g of S8, model scale
inline constexpr double kIntermediateMassFraction = 1e-4;      // of m0[S8], polysulfides
inline constexpr double kSulfideMassFractionOfSaturation = 1e-2;  // of S_sat, for S^2-
inline constexpr double kPrecipitateSeedMass = 1e-6;           // g, model scale

/// Initial dissolved masses: `sulfur_mass` of S8, small positive amounts of
/// every other species.
Eigen::VectorXd default_initial_masses(const ReactionModel& model, double sulfur_mass, double S_sat);

ParameterSet nominal_parameters(ModelId id);

/// Throws ConfigError naming the first violated invariant.
void validate(const ReactionModel& model, const ParameterSet& params);

// Per-step vectors live on the stack; no model has more species than this.
inline constexpr int kMaxSpecies = 8;
using SpeciesVector = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxSpecies, 1>;
using ReactionFlags = Eigen::Array<bool, Eigen::Dynamic, 1, 0, kMaxSpecies, 1>;

struct CellState {
  SpeciesVector m;    // dissolved masses, g
  double m_Sp = 0;    // precipitated sulfur, g
  double eps = 1;     // relative porosity
  double t = 0;       // s
  // Reactions switched off because a reactant ran out (see simulate); empty
  // means every reaction is active.
  ReactionFlags off;

  double total_sulfur() const { return m.sum() + m_Sp; }
};

CellState initial_state(const ParameterSet& params);

// Parameter paths: "E0[j]", "i0[j]" (1-based), "m0[<species>]", "a_v0", "v",
// "gamma", "omega", "k_p", "S_sat", "m_Sp0", "F", "R", "T", "M_S".
double get_parameter(const ReactionModel& model, const ParameterSet& params, std::string_view path);
void set_parameter(const ReactionModel& model, ParameterSet& params, std::string_view path, double value);

/// Every path accepted by get_parameter for this model, in canonical order.
std::vector<std::string> parameter_paths(const ReactionModel& model);

}  // namespace lis

#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "lis/dae.hpp"

namespace lis {

/// Column names of the trace CSV:
/// t_s,V,eps,m_Sp,m_<species>...,i_<j>...,E_<j>...,eta_<j>...,capacity_mAh_per_g
std::vector<std::string> trace_header(const ReactionModel& model);

void write_trace_csv(std::ostream& os, const ReactionModel& model, const SimulationTrace& trace);
void write_trace_csv(const std::filesystem::path& path, const ReactionModel& model, const SimulationTrace& trace);

/// A numeric CSV table: header plus row-major values.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd rows;

  Eigen::Index column(const std::string& name) const;  // throws ParseError if absent
};

CsvTable read_numeric_csv(const std::filesystem::path& path);

}  // namespace lis

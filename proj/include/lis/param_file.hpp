#pragma once

// Flat "key = value" parameter files.
//
//   # comment
//   model = 3
//   E0[1] = 2.46        # V
//   m0[S8] = 2.8        # g
//
// Keys are parameter paths (see model.hpp). `model` is required; any other
// key left out keeps its nominal value for that model. Values are written as
// shortest round-trip decimals, so write -> read is bit-exact.

#include <filesystem>
#include <string>
#include <string_view>

#include "lis/model.hpp"

namespace lis {

struct ParameterFile {
  ModelId model = ModelId::M1;
  ParameterSet params;
};

std::string format_parameters(const ReactionModel& model, const ParameterSet& params);
ParameterFile parse_parameters(std::string_view text);

void write_parameters(const std::filesystem::path& path, const ReactionModel& model, const ParameterSet& params);
ParameterFile read_parameters(const std::filesystem::path& path);

/// Unit label for a parameter path, as written in file comments.
std::string_view parameter_unit(std::string_view path);

}  // namespace lis

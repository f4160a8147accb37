#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "tship/experiments.hpp"
#include "tship/instance.hpp"

namespace tship {

inline constexpr std::string_view kInstanceSchema = "tship-instance/1";
inline constexpr std::string_view kStudySchema = "tship-study/1";

/// YAML instance file. Each location's demand is given either by explicit
/// `means`, by `pattern` + `scale`, or (family empirical) by `pmfs`; bounds
/// default to Instance::default_bounds. Unknown keys are rejected.
Instance parse_instance(const std::string& yaml_text);
Instance load_instance(const std::filesystem::path& path);
void write_instance(std::ostream& out, const Instance& inst);

/// YAML study file. Keys missing from the file keep the defaults of the named
/// family (four-period or ten-period). Unknown keys are rejected.
StudySpec parse_study(const std::string& yaml_text);
StudySpec load_study(const std::filesystem::path& path);
void write_study(std::ostream& out, const StudySpec& spec);

}  // namespace tship

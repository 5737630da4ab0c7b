#pragma once

#include "rtlmp/case_model.hpp"
#include "rtlmp/experiment.hpp"
#include "rtlmp/meter_attacks.hpp"
#include "rtlmp/pricing.hpp"
#include "rtlmp/state_estimation.hpp"
#include "rtlmp/topology_attacks.hpp"

#include <string>

namespace rtlmp {

// JSON documents for the command-line tool. Branches appear by label,
// buses by id and meters by label so the output can be fed back in.

std::string case_summary_json(const CaseBundle& bundle);
std::string estimate_json(const CaseBundle& bundle, const EstimateReport& report);
std::string lmp_json(const PowerCase& grid, const LmpSolution& solution);
/// Region of `state`, its boundary margin and the nonempty regions whose
/// patterns differ only in lines within `threshold_mw` of their limits.
std::string partition_json(const CaseBundle& bundle, const DcModel& model, const Vector& state,
                           double threshold_mw);
std::string meter_plan_json(const CaseBundle& bundle, const MeterAttackPlan& plan);
std::string topology_plan_json(const CaseBundle& bundle, const TopologyAttackPlan& plan);
std::string comparison_json(const SearchComparison& comparison);

/// Attack vector of a plan document written by meter_plan_json or
/// topology_plan_json, as an m-vector.
Vector attack_vector_from_json(const std::string& text, const MeterConfig& meters);

/// Branch indices from labels separated by ',' or ';'.
CongestionPattern parse_pattern(const PowerCase& grid, const std::string& text);

}  // namespace rtlmp

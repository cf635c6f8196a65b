#pragma once

#include <string>
#include <vector>

#include "varislip/config.hpp"
#include "varislip/diagnostics.hpp"

namespace varislip {

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kCodeVersion = "varislip 0.1.0";

// budget.csv column order (fixed; any change requires a schema bump):
// time, step, <EnergyBudget fields in declaration order>, normal_residual,
// tangential_jump, max_divergence, cn_residual, min_separation, flow_det_min,
// flow_det_max, coupling_defect, iterations, row_sum
std::vector<std::string> budget_columns();

// Writes metadata.txt, budget.csv, report.txt and snapshot_*.txt files.
// Byte-deterministic for identical inputs.
void write_outputs(const Trajectory& traj, const VerificationReport& report,
                   const SimulationConfig& config, const std::string& dir);

// Transport scenarios have no trajectory; they emit metadata + report only.
void write_transport_outputs(const TransportReport& report, const SimulationConfig& config,
                             const std::string& dir);

// Re-checks a stored run from its directory alone (metadata + budget +
// snapshots).  `which` filters by check group as in run_verification.
VerificationReport verify_run_directory(const std::string& dir,
                                        const std::vector<std::string>& which = {"all"});

std::string format_double(double v);  // %.17g

}  // namespace varislip

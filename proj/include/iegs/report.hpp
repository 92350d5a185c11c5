#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "iegs/oracle.hpp"
#include "iegs/rd.hpp"
#include "iegs/stealth.hpp"
#include "iegs/types.hpp"

namespace iegs::report {

/// Deterministic number formatting shared by every CSV/JSON writer.
std::string fmt(double v);

struct CompareRow {
  std::string method;
  double objective = 0.0;
  int iterations = 0;
  double wall_seconds = 0.0;
  AttackVector attack;
};

void write_iterations_csv(std::ostream& os, const rd::RDState& state, bool with_timing);
void write_attack_csv(std::ostream& os, const IEGSInstance& instance, const AttackVector& x,
                      const FalsifiedMeasurements& falsified);
void write_dispatch_csv(std::ostream& os, const IEGSInstance& instance,
                        const oracle::DispatchResult& dispatch);
void write_compare_csv(std::ostream& os, const IEGSInstance& instance,
                       const std::vector<CompareRow>& rows, bool with_timing);
void write_classification_csv(std::ostream& os, const oracle::ZClassification& classes,
                              const std::vector<std::string>& z_names);
void write_oracle_trace_csv(std::ostream& os, const IEGSInstance& instance,
                            const oracle::BruteForceResult& result);
void write_pwl_report_csv(std::ostream& os, const pwl::PwlScheme& scheme);

std::string report_json(const IEGSInstance& instance, const rd::SolveReport& report,
                        const FalsifiedMeasurements& falsified,
                        const std::vector<std::string>& y_names,
                        const std::vector<std::string>& z_names, bool with_timing);

} // namespace iegs::report

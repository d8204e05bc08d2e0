#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sqg {

/// Degenerate is the 0/0 case (passes vacuously). HypothesisFailure means a
/// precondition of a conditional statement was not met, so the inequality
/// itself was not tested.
enum class CheckStatus { Pass, Degenerate, InequalityFailure, HypothesisFailure };
std::string status_name(CheckStatus s);

struct CheckReport {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    /// rhs - lhs.
    double margin = 0.0;
    double tolerance = 0.0;
    /// margin >= -tolerance.
    bool pass = true;
    CheckStatus status = CheckStatus::Pass;
    /// Extra measured values (ratios, fitted constants, leakage, ...).
    std::vector<std::pair<std::string, double>> values;
    std::vector<std::pair<std::string, std::string>> meta;
    std::string note;

    double value(const std::string& key) const;
    bool has(const std::string& key) const;
};

/// Builds a report for lhs <= rhs within `tol`; status follows pass.
CheckReport inequality_report(std::string name, double lhs, double rhs, double tol);
/// Ratio-style report: lhs/rhs against a cap. 0/0 is Degenerate.
CheckReport ratio_report(std::string name, double num, double den, double cap);
/// Marks the report as gated out by an unmet hypothesis.
void mark_hypothesis_failure(CheckReport& r, const std::string& why);

/// 0 when every report passes, 1 on any inequality failure, 2 when the only
/// failures are hypothesis failures.
int suite_exit_code(const std::vector<CheckReport>& reports);

}  // namespace sqg

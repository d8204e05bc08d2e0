#include "sqglab/check.hpp"

#include <cmath>
#include <stdexcept>

namespace sqg {

std::string status_name(CheckStatus s) {
    switch (s) {
        case CheckStatus::Pass: return "pass";
        case CheckStatus::Degenerate: return "degenerate";
        case CheckStatus::InequalityFailure: return "inequality-failure";
        case CheckStatus::HypothesisFailure: return "hypothesis-failure";
    }
    return "?";
}

double CheckReport::value(const std::string& key) const {
    for (auto& [k, v] : values)
        if (k == key) return v;
    throw std::out_of_range("check report " + name + " has no value " + key);
}

bool CheckReport::has(const std::string& key) const {
    for (auto& [k, v] : values)
        if (k == key) return true;
    return false;
}

CheckReport inequality_report(std::string name, double lhs, double rhs, double tol) {
    CheckReport r;
    r.name = std::move(name);
    r.lhs = lhs;
    r.rhs = rhs;
    r.tolerance = tol;
    r.margin = rhs - lhs;
    r.pass = std::isfinite(r.margin) && r.margin >= -tol;
    r.status = r.pass ? CheckStatus::Pass : CheckStatus::InequalityFailure;
    if (r.pass && lhs == 0.0 && rhs == 0.0) r.status = CheckStatus::Degenerate;
    return r;
}

CheckReport ratio_report(std::string name, double num, double den, double cap) {
    CheckReport r;
    r.name = std::move(name);
    r.tolerance = 0.0;
    r.rhs = cap;
    r.values = {{"numerator", num}, {"denominator", den}};
    if (num == 0.0 && den == 0.0) {
        r.lhs = 0.0;
        r.margin = cap;
        r.pass = true;
        r.status = CheckStatus::Degenerate;
        r.note = "0/0";
        return r;
    }
    r.lhs = num / den;
    r.margin = cap - r.lhs;
    r.pass = std::isfinite(r.lhs) && r.margin >= 0.0;
    r.status = r.pass ? CheckStatus::Pass : CheckStatus::InequalityFailure;
    return r;
}

void mark_hypothesis_failure(CheckReport& r, const std::string& why) {
    r.status = CheckStatus::HypothesisFailure;
    r.note = r.note.empty() ? why : r.note + "; " + why;
}

int suite_exit_code(const std::vector<CheckReport>& reports) {
    bool hyp = false;
    for (auto& r : reports) {
        if (r.status == CheckStatus::InequalityFailure) return 1;
        if (r.status == CheckStatus::HypothesisFailure) hyp = true;
    }
    return hyp ? 2 : 0;
}

}  // namespace sqg

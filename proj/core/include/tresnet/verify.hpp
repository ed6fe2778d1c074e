#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace tresnet::verify {

/// One registered invariant. run() throws (with a diagnostic message) on
/// violation and returns normally on success.
struct PropertyCheck {
    std::string module;  // tensor | layers | model | gradcheck | analysis | cli
    std::string name;
    std::function<void()> run;
};

/// Every invariant of every module, in deterministic order.
const std::vector<PropertyCheck>& property_registry();

struct CheckOutcome {
    std::string module;
    std::string name;
    bool passed = false;
    std::string message;
};

struct VerifySummary {
    std::vector<CheckOutcome> outcomes;
    int passed = 0;
    int failed = 0;
    bool all_passed() const { return failed == 0; }
};

/// Runs all checks (optionally restricted to one module), printing one
/// line per property. Throws ValidationError for an unknown module name.
VerifySummary run_verify(const std::optional<std::string>& module_filter,
                         std::ostream& out);

}  // namespace tresnet::verify

#pragma once

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace fairclust {

// Raised when a schema, config, or input file violates its contract.
// The CLI maps these to exit code 1 (validation) vs 2 (runtime).
class SchemaError : public std::runtime_error {
public:
    explicit SchemaError(const std::string& what) : std::runtime_error(what) {}
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Raised when an operation is called outside the hypotheses it needs
// (e.g. a spurious-effect bound on a non-FTU assignment).
class HypothesisViolation : public std::runtime_error {
public:
    explicit HypothesisViolation(const std::string& what) : std::runtime_error(what) {}
};

// Single formatting routine for every double we write to CSV/JSON sidecars,
// so repeated runs produce byte-identical files. %.17g round-trips IEEE
// doubles exactly.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct EffectFlags {
    bool nde = false;
    bool nie = false;
    bool se = false;
};

inline std::string to_string(const EffectFlags& f) {
    std::string s;
    s += f.nde ? '1' : '0';
    s += ',';
    s += f.nie ? '1' : '0';
    s += ',';
    s += f.se ? '1' : '0';
    return s;
}

}  // namespace fairclust

#pragma once

#include "homeagent/errors.hpp"

#include <cmath>
#include <cstdio>
#include <span>
#include <string>

namespace homeagent {

// A score with its raw counts. Numerators may be fractional (set-valued
// answers earn partial credit; table totals average item fractions).
struct Ratio {
    double numerator = 0.0;
    double denominator = 0.0;

    double percent() const { return denominator == 0.0 ? 0.0 : 100.0 * numerator / denominator; }
    double fraction() const { return denominator == 0.0 ? 0.0 : numerator / denominator; }
};

// One decimal, half rounded up: 91.25 -> "91.3", 88.888.. -> "88.9".
inline std::string format_percent(double percent) {
    const double tenths = std::floor(percent * 10.0 + 0.5 + 1e-9);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", tenths / 10.0);
    return buf;
}

inline std::string format_percent(const Ratio& r) { return format_percent(r.percent()); }

// Unweighted mean of item fractions, stored as (sum of fractions, item count).
inline Ratio macro_average(std::span<const Ratio> items) {
    Ratio total{0.0, static_cast<double>(items.size())};
    for (const auto& r : items) {
        if (r.denominator <= 0.0) throw PreconditionViolation("cannot average a ratio with zero denominator");
        total.numerator += r.fraction();
    }
    return total;
}

}  // namespace homeagent

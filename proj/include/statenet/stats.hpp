#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"

namespace statenet {

struct log_fit {
    double a = 0;  // size ~= a + b * ln(n)
    double b = 0;
    double r_squared = 0;
};

// Least-squares fit of size = a + b*ln(n) over (n, bytes) samples.
inline log_fit fit_log_regression(std::span<const std::pair<double, double>> samples)
{
    if (samples.size() < 3) throw fit_error("need at least 3 samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double first = std::log(samples[0].first);
    bool distinct = false;
    for (const auto& [n, y] : samples) {
        if (n <= 0) throw fit_error("sample count must be positive");
        double x = std::log(n);
        if (std::abs(x - first) > 1e-12) distinct = true;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    if (!distinct) throw fit_error("samples need distinct n values");
    const double m = static_cast<double>(samples.size());
    const double denom = m * sxx - sx * sx;
    log_fit f;
    f.b = (m * sxy - sx * sy) / denom;
    f.a = (sy - f.b * sx) / m;
    double ss_res = 0, ss_tot = 0, mean_y = sy / m;
    for (const auto& [n, y] : samples) {
        double pred = f.a + f.b * std::log(n);
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    f.r_squared = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
    return f;
}

struct linear_fit {
    double intercept = 0;
    double slope = 0;
    double r_squared = 0;
};

inline linear_fit fit_linear(std::span<const std::pair<double, double>> samples)
{
    if (samples.size() < 2) throw fit_error("need at least 2 samples");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& [x, y] : samples) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = static_cast<double>(samples.size());
    const double denom = m * sxx - sx * sx;
    if (denom == 0) throw fit_error("degenerate x values");
    linear_fit f;
    f.slope = (m * sxy - sx * sy) / denom;
    f.intercept = (sy - f.slope * sx) / m;
    double ss_res = 0, ss_tot = 0, mean_y = sy / m;
    for (const auto& [x, y] : samples) {
        double pred = f.intercept + f.slope * x;
        ss_res += (y - pred) * (y - pred);
        ss_tot += (y - mean_y) * (y - mean_y);
    }
    f.r_squared = ss_tot == 0 ? 1.0 : 1.0 - ss_res / ss_tot;
    return f;
}

struct storage_report {
    double savings = 0;          // 1 - mean stored fraction
    double loss_probability = 0; // P(no node stores a random item)
};

// Closed forms over per-node stored fractions f_i = 2^(-PL_i):
//   savings = 1 - (sum f_i) / N,  loss = prod (1 - f_i).
inline storage_report storage_savings_from_fractions(std::span<const double> stored_fractions)
{
    if (stored_fractions.empty()) throw error("storage_savings: empty node list");
    storage_report r;
    double sum = 0;
    double log_loss = 0;
    bool certain = false;
    for (double f : stored_fractions) {
        sum += f;
        if (f >= 1.0)
            certain = true;
        else
            log_loss += std::log1p(-f);
    }
    r.savings = 1.0 - sum / static_cast<double>(stored_fractions.size());
    r.loss_probability = certain ? 0.0 : std::exp(log_loss);
    return r;
}

inline storage_report storage_savings(std::span<const double> prefix_lens)
{
    std::vector<double> fractions;
    fractions.reserve(prefix_lens.size());
    for (double pl : prefix_lens) fractions.push_back(std::pow(2.0, -pl));
    return storage_savings_from_fractions(fractions);
}

// p in [0,1]; nearest-rank percentile of a sorted copy.
inline double percentile(std::vector<double> values, double p)
{
    if (values.empty()) return 0;
    std::sort(values.begin(), values.end());
    double idx = p * (static_cast<double>(values.size()) - 1);
    auto lo = static_cast<std::size_t>(idx);
    auto hi = std::min(lo + 1, values.size() - 1);
    double frac = idx - static_cast<double>(lo);
    return values[lo] * (1 - frac) + values[hi] * frac;
}

inline double mean(std::span<const double> v)
{
    if (v.empty()) return 0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace statenet

#pragma once

#include <cstddef>
#include <vector>

namespace lqrl {

/// Monte-Carlo summary: std_error = sample_std / sqrt(reps).
struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t reps = 0;
};

McEstimate summarize(const std::vector<double>& samples);

double mean(const std::vector<double>& v);
double sample_variance(const std::vector<double>& v);

/// Ordinary least squares y = intercept + slope * x.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double r2 = 0.0;
};

LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y);

/// Fit of log(y) against log(x).
LinearFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lqrl

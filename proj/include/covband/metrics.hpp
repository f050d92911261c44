#pragma once

#include <optional>
#include <vector>

namespace covband {

// Fraction of true flags; the per-replicate empirical coverage.
double coverage(const std::vector<bool>& covered);

// Lower median (index (n-1)/2 of the sorted values) so an even count never
// averages a finite width with an infinite one. Infinite widths sort last
// and are legal inputs.
double median_width(const std::vector<double>& widths);

double fraction_infinite(const std::vector<double>& widths);

// Population variance of per-replicate coverages.
double coverage_variance(const std::vector<double>& coverages);

// Mann-Whitney AUROC: probability a positive outranks a negative, ties
// counted half. Returns nullopt when labels are all one class.
std::optional<double> auroc(const std::vector<double>& scores,
                            const std::vector<bool>& labels);

}  // namespace covband

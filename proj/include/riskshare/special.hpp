#pragma once

namespace riskshare {

double normal_pdf(double x);
double normal_cdf(double x);

// Inverse of normal_cdf. Returns -inf at 0 and +inf at 1.
double normal_quantile(double p);

} // namespace riskshare

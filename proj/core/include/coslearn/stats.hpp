// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string_view>

namespace coslearn {

double mean(std::span<const double> xs);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than 2 values.
double sample_std(std::span<const double> xs);

enum class Tail { two_sided, greater, less };

std::string_view to_string(Tail t);
Tail parse_tail(std::string_view name);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Welch's unequal-variance t-test of mean(a) against mean(b). `greater`
/// tests mean(a) > mean(b). Each sample needs at least 2 values.
///
/// When both samples have zero variance the statistic degenerates: equal
/// means give t = 0, p = 1; different means give t = +-inf and p = 0 in the
/// direction of the difference. df is then reported as na + nb - 2.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b,
                         Tail tail = Tail::two_sided);

/// Student t CDF via the regularized incomplete beta function.
double student_t_cdf(double t, double df);

}  // namespace coslearn

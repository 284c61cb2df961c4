// SPDX-License-Identifier: Apache-2.0
#include "coslearn/stats.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <limits>
#include <string>

#include "coslearn/error.hpp"

namespace coslearn {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw ValidationError("mean of an empty sample");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::string_view to_string(Tail t) {
  switch (t) {
    case Tail::two_sided: return "two_sided";
    case Tail::greater: return "greater";
    case Tail::less: return "less";
  }
  return "two_sided";
}

Tail parse_tail(std::string_view name) {
  if (name == "two_sided") return Tail::two_sided;
  if (name == "greater") return Tail::greater;
  if (name == "less") return Tail::less;
  throw LookupError("unknown tail '" + std::string(name) + "'");
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("degrees of freedom must be positive");
  if (std::isnan(t)) throw NumericError("t statistic is NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = df / (df + t * t);
  const double tail = 0.5 * boost::math::ibeta(0.5 * df, 0.5, x);
  return t > 0 ? 1.0 - tail : tail;
}

namespace {

// Upper tail P(T >= t) without cancellation for large t.
double upper_tail(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double half = 0.5 * boost::math::ibeta(0.5 * df, 0.5, df / (df + t * t));
  return t > 0 ? half : 1.0 - half;
}

}  // namespace

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b, Tail tail) {
  if (a.size() < 2 || b.size() < 2) {
    throw ValidationError("welch_t_test needs at least 2 values per sample, got " +
                          std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
  for (double x : a) {
    if (!std::isfinite(x)) throw ValidationError("welch_t_test: non-finite value in first sample");
  }
  for (double x : b) {
    if (!std::isfinite(x)) throw ValidationError("welch_t_test: non-finite value in second sample");
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  const double sa = sample_std(a), sb = sample_std(b);
  const double va = sa * sa / na, vb = sb * sb / nb;
  const double se2 = va + vb;

  WelchResult r;
  if (se2 == 0.0) {
    r.df = na + nb - 2.0;
    if (ma == mb) {
      r.t = 0.0;
      r.p = 1.0;
      return r;
    }
    r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  } else {
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
  }
  switch (tail) {
    case Tail::two_sided:
      r.p = std::isinf(r.t) ? 0.0 : boost::math::ibeta(0.5 * r.df, 0.5, r.df / (r.df + r.t * r.t));
      break;
    case Tail::greater: r.p = upper_tail(r.t, r.df); break;
    case Tail::less: r.p = upper_tail(-r.t, r.df); break;
  }
  return r;
}

}  // namespace coslearn

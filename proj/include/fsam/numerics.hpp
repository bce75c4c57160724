// fsam/numerics.hpp

// Copyright 2026  fsam authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "fsam/common.hpp"

namespace fsam {

// Log probabilities are plain doubles in (-inf, 0]; kLogZero stands for p = 0
// and compares less than any finite value.
using LogProb = double;
constexpr LogProb kLogZero = -std::numeric_limits<double>::infinity();

// ln(e^a + e^b), stable via max-shift. kLogZero is the identity.
inline LogProb log_add(LogProb a, LogProb b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  const double hi = a > b ? a : b;
  const double lo = a > b ? b : a;
  return hi + std::log1p(std::exp(lo - hi));
}

// ln sum_i e^{v_i}; kLogZero for an empty span.
inline LogProb log_sum(std::span<const double> v) {
  double hi = kLogZero;
  for (double x : v)
    if (x > hi) hi = x;
  if (hi == kLogZero) return kLogZero;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

// Discrete probability distribution: non-negative entries summing to 1.
using Distribution = std::vector<double>;

constexpr double kDistributionFloor = 1e-10;

// Floors every entry at eps and renormalizes. Softmax outputs can round to
// exactly 0, which would put a hard zero in a KL denominator.
inline Distribution smoothed(const Distribution& p, double eps = kDistributionFloor) {
  Distribution out(p.size());
  double total = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    out[i] = p[i] > eps ? p[i] : eps;
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

// KL(p || q) = sum_i p_i ln(p_i / q_i), with 0 ln(0/q) == 0. Both arguments
// are floored and renormalized first, so identical inputs give exactly 0.
inline double kl_divergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size())
    throw DimensionError("kl_divergence: length mismatch " +
                         std::to_string(p.size()) + " vs " + std::to_string(q.size()));
  const Distribution ps = smoothed(p);
  const Distribution qs = smoothed(q);
  double sum = 0.0;
  for (size_t i = 0; i < ps.size(); ++i) {
    if (ps[i] > 0.0 && ps[i] != qs[i]) sum += ps[i] * std::log(ps[i] / qs[i]);
  }
  return sum > 0.0 ? sum : 0.0;
}

}  // namespace fsam

#pragma once

// Brute-force reference implementations used to pin the metric code.

#include <cmath>
#include <limits>
#include <vector>

#include "advbiom/core/image.hpp"

namespace oracle {

inline double fraction_at_or_above(const std::vector<double>& s, double tau) {
  int n = 0;
  for (double v : s) n += v >= tau;
  return static_cast<double>(n) / static_cast<double>(s.size());
}

inline double fraction_below(const std::vector<double>& s, double tau) {
  int n = 0;
  for (double v : s) n += v < tau;
  return static_cast<double>(n) / static_cast<double>(s.size());
}

/// Scans every candidate and keeps the smallest feasible one.
inline double threshold(const std::vector<double>& imposter, double far) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : imposter) mx = std::max(mx, v);
  std::vector<double> candidates = imposter;
  candidates.push_back(std::nextafter(mx, std::numeric_limits<double>::infinity()));
  double best = std::numeric_limits<double>::infinity();
  for (double tau : candidates) {
    if (fraction_at_or_above(imposter, tau) <= far) best = std::min(best, tau);
  }
  return best;
}

/// Per-window SSIM with two-pass moments, no shortcuts.
inline double ssim(const advbiom::FloatImage& a, const advbiom::FloatImage& b) {
  const int win = 11;
  const double sigma = 1.5, c1 = 0.02 * 0.02, c2 = 0.06 * 0.06;
  std::vector<double> k(win * win);
  double ks = 0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      k[i * win + j] = std::exp(-((i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0)) / (2 * sigma * sigma));
      ks += k[i * win + j];
    }
  for (auto& v : k) v /= ks;
  double total = 0;
  for (int c = 0; c < a.channels(); ++c) {
    double acc = 0;
    int count = 0;
    for (int i0 = 0; i0 + win <= a.height(); ++i0)
      for (int j0 = 0; j0 + win <= a.width(); ++j0) {
        double ma = 0, mb = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            ma += k[i * win + j] * a.at(i0 + i, j0 + j, c);
            mb += k[i * win + j] * b.at(i0 + i, j0 + j, c);
          }
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            const double da = a.at(i0 + i, j0 + j, c) - ma, db = b.at(i0 + i, j0 + j, c) - mb;
            va += k[i * win + j] * da * da;
            vb += k[i * win + j] * db * db;
            cov += k[i * win + j] * da * db;
          }
        acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += acc / count;
  }
  return total / a.channels();
}

}  // namespace oracle

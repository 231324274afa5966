#include "advbiom/fingerprint/minutiae.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "advbiom/nn/ops.hpp"

namespace advbiom::fingerprint {

using nn::Var;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kStep = kPi / 6;

int wrap_channel(int c) { return ((c % kMinutiaeChannels) + kMinutiaeChannels) % kMinutiaeChannels; }

double wrap_angle(double a) {
  a = std::fmod(a, 2 * kPi);
  return a < 0 ? a + 2 * kPi : a;
}

}  // namespace

MinutiaeMap::MinutiaeMap(const FloatImage& im) : FloatImage(im) { validate(); }

void MinutiaeMap::validate() const {
  if (channels() != kMinutiaeChannels) {
    throw std::domain_error("minutiae map needs 12 channels, got " + std::to_string(channels()));
  }
  for (double v : values())
    if (!std::isfinite(v) || v < 0.0) throw std::domain_error("minutiae map values must be finite and >= 0");
}

MinutiaeMap render_minutiae_map(const std::vector<MinutiaPoint>& points, int height, int width, double sigma) {
  MinutiaeMap h(height, width);
  const int reach = static_cast<int>(std::ceil(3 * sigma));
  for (const MinutiaPoint& p : points) {
    const double cf = wrap_angle(p.theta) / kStep;
    const int c0 = static_cast<int>(std::floor(cf));
    const double a = cf - c0;
    const int ch[2] = {wrap_channel(c0), wrap_channel(c0 + 1)};
    const double wt[2] = {1.0 - a, a};
    const int ci = static_cast<int>(std::lround(p.i)), cj = static_cast<int>(std::lround(p.j));
    for (int i = std::max(0, ci - reach); i <= std::min(height - 1, ci + reach); ++i) {
      for (int j = std::max(0, cj - reach); j <= std::min(width - 1, cj + reach); ++j) {
        const double r2 = (i - p.i) * (i - p.i) + (j - p.j) * (j - p.j);
        const double g = std::exp(-r2 / (2 * sigma * sigma));
        for (int k = 0; k < 2; ++k) h.at(i, j, ch[k]) = std::max(h.at(i, j, ch[k]), wt[k] * g);
      }
    }
  }
  return h;
}

double parabola_vertex_offset(double f_prev, double f_mid, double f_next) {
  const double curv = f_prev - 2 * f_mid + f_next;
  if (curv == 0.0) return 0.0;
  return (f_prev - f_next) / (2 * curv);
}

std::vector<MinutiaPoint> detect_minutiae(const MinutiaeMap& h, double m_t) {
  if (h.channels() != kMinutiaeChannels) throw std::invalid_argument("detect_minutiae: need a 12-channel map");
  std::vector<MinutiaPoint> out;
  const int rows = h.height(), cols = h.width();
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      for (int c = 0; c < kMinutiaeChannels; ++c) {
        const double v = h.at(i, j, c);
        if (!(v > m_t)) continue;
        bool peak = true;
        for (int di = -2; di <= 2 && peak; ++di) {
          for (int dj = -2; dj <= 2 && peak; ++dj) {
            const int ni = i + di, nj = j + dj;
            if (ni < 0 || nj < 0 || ni >= rows || nj >= cols) continue;
            for (int dc = -1; dc <= 1; ++dc) {
              if (di == 0 && dj == 0 && dc == 0) continue;
              const int nc = wrap_channel(c + dc);
              const double u = h.at(ni, nj, nc);
              // ties: the earlier cell in (i, j, c) order wins
              const bool earlier = ni < i || (ni == i && (nj < j || (nj == j && nc < c)));
              if (u > v || (u == v && earlier)) {
                peak = false;
                break;
              }
            }
          }
        }
        if (!peak) continue;
        const double f_prev = h.at(i, j, wrap_channel(c - 1)), f_next = h.at(i, j, wrap_channel(c + 1));
        const double offset = parabola_vertex_offset(f_prev, v, f_next);
        out.push_back({static_cast<double>(i), static_cast<double>(j), wrap_angle((c + offset) * kStep)});
      }
    }
  }
  return out;
}

std::vector<MinutiaPoint> displace_minutiae(const std::vector<MinutiaPoint>& points, const DisplacementConfig& cfg,
                                            int height, int width, Rng& rng) {
  if (cfg.d < 0) throw std::invalid_argument("displacement distance must be >= 0");
  std::vector<MinutiaPoint> out;
  out.reserve(points.size());
  for (const MinutiaPoint& p : points) {
    const double along_i = uniform(rng, 0.0, cfg.d);
    const double si = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    const double sj = uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0;
    out.push_back({std::clamp(p.i + si * along_i, 0.0, height - 1.0),
                   std::clamp(p.j + sj * (cfg.d - along_i), 0.0, width - 1.0), p.theta});
  }
  return out;
}

MinutiaeMap build_target_map(const std::vector<MinutiaPoint>& points, const DisplacementConfig& cfg, int height,
                             int width, Rng& rng, double sigma) {
  return render_minutiae_map(displace_minutiae(points, cfg, height, width, rng), height, width, sigma);
}

Var mmap_sim_loss(const Var& h_target, const Var& h_pred) {
  if (h_target.shape() != h_pred.shape()) throw ShapeError("mmap_sim_loss: map shapes differ");
  return nn::mean(nn::sum_per_sample(nn::abs(nn::sub(h_target, h_pred))));
}

Var mmap_dis_loss(const Var& a, const Var& b, double eps_div) {
  if (a.shape() != b.shape()) throw ShapeError("mmap_dis_loss: map shapes differ");
  const Var l1 = nn::sum_per_sample(nn::abs(nn::sub(a, b)));
  return nn::mean(nn::reciprocal(nn::add_scalar(l1, eps_div)));
}

Var pixel_loss(const Var& x, const Var& x_disp, const Var& x_adv) {
  if (x.shape() != x_disp.shape() || x.shape() != x_adv.shape()) throw ShapeError("pixel_loss: image shapes differ");
  return nn::add(nn::mean(nn::abs(nn::sub(x, x_disp))), nn::mean(nn::abs(nn::sub(x, x_adv))));
}

double angle_distance(double a, double b) {
  const double d = std::abs(wrap_angle(a) - wrap_angle(b));
  return std::min(d, 2 * kPi - d);
}

MinutiaeMatch match_minutiae(const std::vector<MinutiaPoint>& truth, const std::vector<MinutiaPoint>& detected,
                             double max_dist, double max_angle) {
  struct Cand {
    double dist;
    std::size_t t, d;
  };
  std::vector<Cand> cands;
  for (std::size_t t = 0; t < truth.size(); ++t)
    for (std::size_t d = 0; d < detected.size(); ++d) {
      const double dist = std::hypot(truth[t].i - detected[d].i, truth[t].j - detected[d].j);
      if (dist <= max_dist && angle_distance(truth[t].theta, detected[d].theta) <= max_angle)
        cands.push_back({dist, t, d});
    }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.dist < b.dist; });
  std::vector<bool> used_t(truth.size()), used_d(detected.size());
  MinutiaeMatch m{static_cast<int>(truth.size()), static_cast<int>(detected.size()), 0};
  for (const Cand& c : cands) {
    if (used_t[c.t] || used_d[c.d]) continue;
    used_t[c.t] = used_d[c.d] = true;
    ++m.matched;
  }
  return m;
}

}  // namespace advbiom::fingerprint

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "advbiom/advgen/losses.hpp"
#include "advbiom/cli/commands.hpp"
#include "advbiom/core/image_io.hpp"
#include "advbiom/eval/report.hpp"

namespace advbiom::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kW = 640, kH = 420, kLeft = 60, kRight = 20, kTop = 40, kBottom = 50;

const cv::Scalar kGenuine(60, 160, 40), kImposter(40, 40, 200), kTau(0, 0, 0), kGrid(220, 220, 220);

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

struct Axes {
  double x0, x1, y0, y1;
  cv::Point to_px(double x, double y) const {
    const double u = (x - x0) / (x1 - x0), v = (y - y0) / (y1 - y0);
    return {kLeft + static_cast<int>(std::lround(u * (kW - kLeft - kRight))),
            kH - kBottom - static_cast<int>(std::lround(v * (kH - kTop - kBottom)))};
  }
};

cv::Mat blank_plot(const std::string& title, const Axes& ax, const std::string& xlabel, const std::string& ylabel) {
  cv::Mat img(kH, kW, CV_8UC3, cv::Scalar(255, 255, 255));
  for (int k = 0; k <= 4; ++k) {
    const double x = ax.x0 + (ax.x1 - ax.x0) * k / 4, y = ax.y0 + (ax.y1 - ax.y0) * k / 4;
    cv::line(img, ax.to_px(x, ax.y0), ax.to_px(x, ax.y1), kGrid);
    cv::line(img, ax.to_px(ax.x0, y), ax.to_px(ax.x1, y), kGrid);
    cv::putText(img, fmt("%.2f", x), ax.to_px(x, ax.y0) + cv::Point(-14, 18), cv::FONT_HERSHEY_SIMPLEX, 0.4, kTau);
    cv::putText(img, fmt("%.2f", y), ax.to_px(ax.x0, y) + cv::Point(-50, 4), cv::FONT_HERSHEY_SIMPLEX, 0.4, kTau);
  }
  cv::rectangle(img, ax.to_px(ax.x0, ax.y1), ax.to_px(ax.x1, ax.y0), kTau);
  cv::putText(img, title, {kLeft, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.55, kTau);
  cv::putText(img, xlabel, {kW / 2 - 40, kH - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kTau);
  cv::putText(img, ylabel, {4, kTop - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kTau);
  return img;
}

std::vector<double> histogram(const std::vector<double>& v, double lo, double hi, int bins) {
  std::vector<double> h(bins, 0.0);
  for (double s : v) {
    const int b = std::clamp(static_cast<int>((s - lo) / (hi - lo) * bins), 0, bins - 1);
    h[b] += 1.0;
  }
  if (!v.empty())
    for (double& x : h) x /= static_cast<double>(v.size());
  return h;
}

void draw_histogram(cv::Mat& img, const Axes& ax, const std::vector<double>& h, const cv::Scalar& color,
                    int thickness) {
  const double w = (ax.x1 - ax.x0) / static_cast<double>(h.size());
  for (std::size_t b = 0; b < h.size(); ++b) {
    const double xa = ax.x0 + w * b, xb = xa + w;
    cv::line(img, ax.to_px(xa, h[b]), ax.to_px(xb, h[b]), color, thickness);
    if (b + 1 < h.size()) cv::line(img, ax.to_px(xb, h[b]), ax.to_px(xb, h[b + 1]), color, thickness);
  }
}

fs::path write_histograms(const eval::AttackReport& r, const fs::path& out) {
  std::vector<double> gb, ga, ib, ia;
  for (const auto& p : r.pairs) {
    (p.genuine ? gb : ib).push_back(p.score_before);
    (p.genuine ? ga : ia).push_back(p.score_after);
  }
  double lo = r.threshold.tau, hi = r.threshold.tau;
  for (const auto* v : {&gb, &ga, &ib, &ia})
    for (double s : *v) lo = std::min(lo, s), hi = std::max(hi, s);
  if (hi - lo < 1e-9) hi = lo + 1.0;
  constexpr int bins = 30;
  std::vector<std::vector<double>> hs{histogram(gb, lo, hi, bins), histogram(ga, lo, hi, bins),
                                      histogram(ib, lo, hi, bins), histogram(ia, lo, hi, bins)};
  double ymax = 0.0;
  for (const auto& h : hs) ymax = std::max(ymax, *std::ranges::max_element(h));
  const Axes ax{lo, hi, 0.0, ymax > 0 ? ymax * 1.1 : 1.0};
  cv::Mat img = blank_plot(r.attack + " " + r.mode + " on " + r.matcher, ax, "similarity score", "fraction");
  // Thin lines before the attack, thick after.
  draw_histogram(img, ax, hs[0], kGenuine, 1);
  draw_histogram(img, ax, hs[1], kGenuine, 3);
  draw_histogram(img, ax, hs[2], kImposter, 1);
  draw_histogram(img, ax, hs[3], kImposter, 3);
  cv::line(img, ax.to_px(r.threshold.tau, ax.y0), ax.to_px(r.threshold.tau, ax.y1), kTau, 1, cv::LINE_AA);
  cv::putText(img, fmt("tau %.3f", r.threshold.tau), ax.to_px(r.threshold.tau, ax.y1) + cv::Point(4, 14),
              cv::FONT_HERSHEY_SIMPLEX, 0.4, kTau);
  cv::putText(img, fmt("success %.3f", r.success_rate), {kW - 170, 25}, cv::FONT_HERSHEY_SIMPLEX, 0.5, kTau);
  cv::putText(img, "genuine", {kW - 170, kTop + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kGenuine);
  cv::putText(img, "imposter", {kW - 170, kTop + 36}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kImposter);
  cv::imwrite(out.string(), img);
  return out;
}

// TAR against FAR with the imposter scores as the threshold sweep, before and after.
std::vector<cv::Point2d> roc(const std::vector<double>& genuine, std::vector<double> imposter) {
  std::vector<cv::Point2d> pts;
  if (genuine.empty() || imposter.empty()) return pts;
  std::ranges::sort(imposter, std::greater<>());
  pts.emplace_back(0.0, 0.0);
  for (std::size_t k = 0; k < imposter.size(); ++k) {
    const double t = imposter[k];
    const double tar =
        static_cast<double>(std::ranges::count_if(genuine, [&](double g) { return g >= t; })) / genuine.size();
    pts.emplace_back(static_cast<double>(k + 1) / imposter.size(), tar);
  }
  return pts;
}

fs::path write_roc(const eval::AttackReport& r, const fs::path& out) {
  std::vector<double> gb, ga, ib, ia;
  for (const auto& p : r.pairs) {
    (p.genuine ? gb : ib).push_back(p.score_before);
    (p.genuine ? ga : ia).push_back(p.score_after);
  }
  const Axes ax{0.0, 1.0, 0.0, 1.0};
  cv::Mat img = blank_plot("TAR vs FAR, " + r.attack + " " + r.mode, ax, "FAR", "TAR");
  const auto before = roc(gb, ib), after = roc(ga, ia);
  for (std::size_t k = 1; k < before.size(); ++k)
    cv::line(img, ax.to_px(before[k - 1].x, before[k - 1].y), ax.to_px(before[k].x, before[k].y), kGenuine, 1);
  for (std::size_t k = 1; k < after.size(); ++k)
    cv::line(img, ax.to_px(after[k - 1].x, after[k - 1].y), ax.to_px(after[k].x, after[k].y), kImposter, 2);
  cv::line(img, ax.to_px(r.threshold.far_level, 0.0), ax.to_px(r.threshold.far_level, 1.0), kTau);
  cv::putText(img, fmt("FAR %.3f", r.threshold.far_level), ax.to_px(r.threshold.far_level, 1.0) + cv::Point(4, 14),
              cv::FONT_HERSHEY_SIMPLEX, 0.4, kTau);
  cv::putText(img, "clean", {kW - 170, kH - kBottom - 36}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kGenuine);
  cv::putText(img, "attacked", {kW - 170, kH - kBottom - 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, kImposter);
  if (before.empty() && after.empty())
    cv::putText(img, "no genuine/imposter pairs", {kLeft + 20, kH / 2}, cv::FONT_HERSHEY_SIMPLEX, 0.5, kTau);
  cv::imwrite(out.string(), img);
  return out;
}

// Probe image with the pixels whose mask magnitude passes the saliency threshold in red.
fs::path write_overlay(const fs::path& probe_png, const fs::path& mask_png, const fs::path& out) {
  const NormalizedImage x = load_normalized(probe_png);
  const NormalizedImage m = load_normalized(mask_png);
  if (!(x.shape() == m.shape())) throw ShapeError("mask and probe differ in shape: " + mask_png.string());
  const AdversarialMask mask(m.shape(), std::vector<double>(m.values().begin(), m.values().end()));
  const auto salient = advgen::saliency_mask_threshold(mask, 0.40);
  const RawImage raw = denormalize_image(x);
  constexpr int scale = 4;
  cv::Mat img(x.height(), x.width(), CV_8UC3);
  for (int i = 0; i < x.height(); ++i)
    for (int j = 0; j < x.width(); ++j) {
      const int c3 = x.channels();
      cv::Vec3b px(raw.at(i, j, c3 == 3 ? 2 : 0), raw.at(i, j, c3 == 3 ? 1 : 0), raw.at(i, j, 0));
      if (salient[i][j]) px = cv::Vec3b(px[0] / 3, px[1] / 3, 255);
      img.at<cv::Vec3b>(i, j) = px;
    }
  cv::resize(img, img, {}, scale, scale, cv::INTER_NEAREST);
  fs::create_directories(out.parent_path());
  cv::imwrite(out.string(), img);
  return out;
}

}  // namespace

std::vector<fs::path> cmd_report(const std::vector<fs::path>& reports, const fs::path& out_dir,
                                 const std::optional<fs::path>& attack_dir) {
  std::vector<fs::path> written;
  if (reports.empty() && !attack_dir) {
    std::cout << "nothing to plot: no reports given\n";
    return written;
  }
  fs::create_directories(out_dir);
  for (const auto& path : reports) {
    const eval::AttackReport r = eval::read_report(path);
    const std::string stem = path.stem().string();
    written.push_back(write_histograms(r, out_dir / (stem + "_hist.png")));
    written.push_back(write_roc(r, out_dir / (stem + "_roc.png")));
  }
  if (attack_dir) {
    for (const auto& e : fs::recursive_directory_iterator(*attack_dir)) {
      const std::string stem = e.path().stem().string();
      if (!e.is_regular_file() || !stem.ends_with("_mask")) continue;
      const fs::path probe = e.path().parent_path() / (stem.substr(0, stem.size() - 5) + ".png");
      if (!fs::exists(probe)) continue;
      const fs::path rel = fs::relative(probe, *attack_dir).replace_extension();
      written.push_back(
          write_overlay(probe, e.path(), out_dir / "saliency" / (rel.generic_string() + "_saliency.png")));
    }
  }
  if (written.empty()) std::cout << "nothing to plot: no reports or masks found\n";
  return written;
}

}  // namespace advbiom::cli

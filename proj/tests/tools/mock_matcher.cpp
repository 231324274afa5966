// Stand-in for an external matcher: reads two image paths from stdin and prints
// 1 - mean |a - b| / 127.5, a similarity in [-1, 1]. The first argument selects a
// failure mode for adapter error tests.
#include <opencv2/imgcodecs.hpp>

#include <cstdio>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
  const std::string mode = argc > 1 ? argv[1] : "ok";
  std::string pa, pb;
  if (!std::getline(std::cin, pa) || !std::getline(std::cin, pb)) return 2;
  if (mode == "crash") return 3;
  if (mode == "garbage") {
    std::cout << "not a number\n";
    return 0;
  }
  if (mode == "out-of-range") {
    std::cout << "1.5\n";
    return 0;
  }
  const cv::Mat a = cv::imread(pa, cv::IMREAD_UNCHANGED), b = cv::imread(pb, cv::IMREAD_UNCHANGED);
  if (a.empty() || b.empty() || a.size != b.size || a.type() != b.type()) return 4;
  cv::Mat diff;
  cv::absdiff(a, b, diff);
  const cv::Scalar m = cv::mean(diff);
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) total += m[c];
  std::printf("%.9f\n", 1.0 - total / a.channels() / 127.5);
  return 0;
}

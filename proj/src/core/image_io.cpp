#include "advbiom/core/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace advbiom {

RawImage load_image(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) {
    throw std::runtime_error("cannot decode image " + path.string());
  }
  if (mat.depth() != CV_8U) {
    mat.convertTo(mat, CV_8U, mat.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  }
  switch (mat.channels()) {
    case 1:
      break;
    case 3:
      cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
      break;
    case 4:
      cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGB);
      break;
    default:
      throw std::runtime_error("unsupported channel count in " + path.string());
  }
  if (!mat.isContinuous()) mat = mat.clone();
  const ImageShape shape{mat.rows, mat.cols, mat.channels()};
  std::vector<std::uint8_t> pixels(mat.data, mat.data + shape.size());
  return RawImage(shape, std::move(pixels));
}

void save_png(const std::filesystem::path& path, const RawImage& image) {
  const auto& s = image.shape();
  cv::Mat mat(s.height, s.width, s.channels == 1 ? CV_8UC1 : CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels().data()));
  cv::Mat out;
  if (s.channels == 3) {
    cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
  } else {
    out = mat;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), out, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw std::runtime_error("cannot write " + path.string());
  }
}

}  // namespace advbiom

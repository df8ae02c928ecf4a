#include "tcattn/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>
#include <vector>

#include <unistd.h>

namespace tcattn {

std::string to_pgm(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height) {
  if (pixels.size() != width * height) throw InvalidInput("to_pgm: pixel count mismatch");
  std::string out = "P2\n" + std::to_string(width) + ' ' + std::to_string(height) + "\n255\n";
  for (std::size_t r = 0; r < height; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      if (c > 0) out += ' ';
      out += std::to_string(pixels[r * width + c]);
    }
    out += '\n';
  }
  return out;
}

std::string mask_to_pgm(const AttentionMask& mask) {
  const std::size_t n = mask.size();
  std::vector<std::uint8_t> px(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) px[i * n + j] = mask.is_allowed(i, j) ? 255 : 0;
  return to_pgm(px, n, n);
}

std::string mask_to_csv(const AttentionMask& mask) {
  std::string out;
  const std::size_t n = mask.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j > 0) out += ',';
      out += mask.is_allowed(i, j) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

std::string weights_to_pgm(const Matrix& weights) {
  Real peak = 0;
  for (Real w : weights.data()) peak = std::max(peak, w);
  std::vector<std::uint8_t> px(weights.size(), 0);
  if (peak > 0) {
    for (std::size_t i = 0; i < px.size(); ++i) {
      const Real w = std::max(Real{0}, weights.data()[i]);
      px[i] = static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(w / peak)));
    }
  }
  return to_pgm(px, weights.cols(), weights.rows());
}

std::string weights_to_csv(const Matrix& weights) {
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    for (std::size_t j = 0; j < weights.cols(); ++j) {
      if (j > 0) out += ',';
      std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(weights(i, j)));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw IoError("write failed for '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw IoError("cannot rename into '" + path.string() + "': " + ec.message());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace tcattn

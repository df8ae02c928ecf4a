#pragma once

// Plain-text outputs: PGM (P2, maxval 255) images and CSV grids, written
// atomically through a temporary file and rename.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "tcattn/masks.hpp"
#include "tcattn/numerics.hpp"

namespace tcattn {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "P2\n<width> <height>\n255\n" then one line per row, pixels separated
/// by single spaces.
std::string to_pgm(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height);

/// Allowed cells white (255), forbidden black (0); row i is query i.
std::string mask_to_pgm(const AttentionMask& mask);
/// 1 for allowed, 0 for forbidden.
std::string mask_to_csv(const AttentionMask& mask);

/// Linear grayscale over [0, max weight]: round(255 * w / max). Zero
/// weights are black; an all-zero matrix is all black.
std::string weights_to_pgm(const Matrix& weights);
std::string weights_to_csv(const Matrix& weights);

void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace tcattn

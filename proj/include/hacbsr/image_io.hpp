#pragma once

#include <filesystem>

#include "hacbsr/core.hpp"

namespace hacbsr {

/// Reads an 8- or 16-bit PNG as grayscale in [0, 1]; colour inputs are converted to luminance.
Image<double> read_png(const std::filesystem::path& path);

/// Writes a grayscale PNG, clamping to [0, 1] and rounding to the nearest level.
void write_png(const std::filesystem::path& path, const Image<double>& image, int bit_depth = 8);

/// K lines of K comma-separated values, printed with round-trip precision.
void write_kernel_csv(const std::filesystem::path& path, const Image<double>& kernel);
Image<double> read_grid_csv(const std::filesystem::path& path);
Kernel<double> read_kernel_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace hacbsr

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hacbsr/degradation.hpp"

namespace hacbsr {

/// Procedural cratered terrain: shaded relief of a smooth height field with
/// bowl-and-rim craters, modulated by a smooth albedo, scaled to [0.05, 0.95].
Image<double> terrain_image(Index size, Rng& rng);

/// Separable Gaussian blur with periodic boundaries.
Image<double> periodic_gaussian_blur(const Image<double>& x, double sigma);

struct DatasetConfig {
  int n_images = 2;
  Index hr_size = 64;
  std::vector<int> scales{2};
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  DownsampleMode mode = DownsampleMode::Strided;
  int bit_depth = 8;
};

struct DatasetRecord {
  std::string id;
  int image_index = 0;
  int scale = 2;
  std::string hr_path;  // relative to the manifest directory
  std::string lr_path;
  std::string kernel_path;
  CovarianceSpec spec;
  Index kernel_size = 0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string mode = "strided";
};

struct DatasetManifest {
  DatasetConfig config;
  std::vector<DatasetRecord> records;
};

/// In-memory sample used by the synthesizer and the desk experiments.
struct SyntheticPair {
  Image<double> hr;
  Image<double> lr;
  CovarianceSpec spec;
  Kernel<double> kernel;
};

SyntheticPair synthesize_pair(Index hr_size, int scale, double noise_sigma, std::uint64_t seed, int image_index,
                              DownsampleMode mode = DownsampleMode::Strided);

DatasetManifest synthesize_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);
DatasetManifest read_manifest(const std::filesystem::path& path);

std::string mode_name(DownsampleMode mode);
DownsampleMode parse_mode(const std::string& name);

}  // namespace hacbsr

#include "hacbsr/dataset.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>

#include "hacbsr/image_io.hpp"

namespace hacbsr {

using nlohmann::json;

namespace {

Eigen::VectorXd gaussian_taps(double sigma) {
  const auto radius = static_cast<Index>(std::ceil(4.0 * sigma));
  Eigen::VectorXd w(2 * radius + 1);
  for (Index i = -radius; i <= radius; ++i) w[i + radius] = std::exp(-0.5 * std::pow(i / sigma, 2));
  return w / w.sum();
}

Image<double> white_noise(Index n, Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Image<double> f(n, n);
  for (Index i = 0; i < f.size(); ++i) f.data()[i] = nd(rng);
  return f;
}

/// np.gradient convention: central differences inside, one-sided at the borders.
double diff(const Image<double>& h, Index i, Index j, bool along_rows) {
  const Index n = along_rows ? h.rows() : h.cols();
  const Index k = along_rows ? i : j;
  auto at = [&](Index t) { return along_rows ? h(t, j) : h(i, t); };
  if (k == 0) return at(1) - at(0);
  if (k == n - 1) return at(n - 1) - at(n - 2);
  return 0.5 * (at(k + 1) - at(k - 1));
}

}  // namespace

Image<double> periodic_gaussian_blur(const Image<double>& x, double sigma) {
  const Eigen::VectorXd w = gaussian_taps(sigma);
  const Index r = w.size() / 2;
  const Index h = x.rows(), wd = x.cols();
  auto wrap = [](Index i, Index n) { return ((i % n) + n) % n; };
  Image<double> tmp = Image<double>::Zero(h, wd), out = Image<double>::Zero(h, wd);
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < wd; ++j)
      for (Index t = -r; t <= r; ++t) tmp(i, j) += w[t + r] * x(i, wrap(j + t, wd));
  for (Index i = 0; i < h; ++i)
    for (Index j = 0; j < wd; ++j)
      for (Index t = -r; t <= r; ++t) out(i, j) += w[t + r] * tmp(wrap(i + t, h), j);
  return out;
}

Image<double> terrain_image(Index n, Rng& rng) {
  if (n < 8) throw ArgumentError("terrain size must be at least 8");
  Image<double> height = 3.0 * periodic_gaussian_blur(white_noise(n, rng), 2.65);
  const double size = static_cast<double>(n);
  std::uniform_int_distribution<int> crater_count(8, 14);
  std::uniform_real_distribution<double> pos(0.0, size);
  std::uniform_real_distribution<double> radius(3.0, std::max(3.0, size / 5.0));
  const int craters = crater_count(rng);
  for (int c = 0; c < craters; ++c) {
    const double cx = pos(rng), cy = pos(rng), rad = radius(rng);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) {
        const double r = std::hypot(static_cast<double>(j) - cx, static_cast<double>(i) - cy) / rad;
        const double bowl = r < 1.0 ? -(1.0 - r * r) * rad * 0.3 : 0.0;
        height(i, j) += bowl + 0.12 * rad * std::exp(-std::pow((r - 1.0) / 0.2, 2));
      }
  }
  const Eigen::Vector3d light = Eigen::Vector3d(-0.6, -0.6, 0.53).normalized();
  Image<double> albedo = periodic_gaussian_blur(white_noise(n, rng), 1.59);
  const double alb_std = std::sqrt((albedo.array() - albedo.mean()).square().mean());
  Image<double> img(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const double gy = diff(height, i, j, true), gx = diff(height, i, j, false);
      const double nz = 1.0 / std::sqrt(gx * gx + gy * gy + 1.0);
      const double shade = (-gx * light[0] - gy * light[1] + light[2]) * nz;
      img(i, j) = std::max(shade, 0.0) * (1.0 + 0.15 * albedo(i, j) / alb_std);
    }
  const double lo = img.minCoeff(), hi = img.maxCoeff();
  if (!(hi > lo)) return Image<double>::Constant(n, n, 0.5);
  return ((img.array() - lo) / (hi - lo) * 0.9 + 0.05).matrix();
}

std::string mode_name(DownsampleMode mode) { return mode == DownsampleMode::Bicubic ? "bicubic" : "strided"; }

DownsampleMode parse_mode(const std::string& name) {
  if (name == "strided") return DownsampleMode::Strided;
  if (name == "bicubic") return DownsampleMode::Bicubic;
  throw ArgumentError("unknown downsampling mode '" + name + "'");
}

SyntheticPair synthesize_pair(Index hr_size, int scale, double noise_sigma, std::uint64_t seed, int image_index,
                              DownsampleMode mode) {
  if (scale < 2 || scale > 4) throw ArgumentError("scale must be 2, 3 or 4");
  if (hr_size % scale != 0) throw ArgumentError("HR size must be divisible by every scale");
  Rng image_rng = stream_rng(seed, 1000 + static_cast<std::uint64_t>(image_index));
  Image<double> hr = terrain_image(hr_size, image_rng);
  Rng kernel_rng = stream_rng(seed, 100000 + 16 * static_cast<std::uint64_t>(image_index) + scale);
  const CovarianceSpec spec = sample_covariance(kernel_rng, default_sigma_range(scale), default_rho_range());
  Kernel<double> k = gaussian_kernel<double>(spec, default_kernel_size(scale));
  Image<double> lr = degrade(hr, k, scale, noise_sigma, kernel_rng, mode);
  return {std::move(hr), std::move(lr), spec, std::move(k)};
}

DatasetManifest synthesize_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  if (cfg.n_images < 1) throw ArgumentError("n_images must be at least 1");
  if (cfg.scales.empty()) throw ArgumentError("at least one scale is required");
  if (!(cfg.noise_sigma >= 0.0)) throw ArgumentError("noise sigma must be nonnegative");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string(), "cannot create directory: " + ec.message());

  DatasetManifest m;
  m.config = cfg;
  char name[64];
  for (int i = 0; i < cfg.n_images; ++i) {
    std::snprintf(name, sizeof name, "hr_%03d.png", i);
    const std::string hr_name = name;
    bool hr_written = false;
    for (int s : cfg.scales) {
      SyntheticPair pair = synthesize_pair(cfg.hr_size, s, cfg.noise_sigma, cfg.seed, i, cfg.mode);
      if (!hr_written) {
        write_png(out_dir / hr_name, pair.hr, cfg.bit_depth);
        hr_written = true;
      }
      DatasetRecord r;
      std::snprintf(name, sizeof name, "img%03d_x%d", i, s);
      r.id = name;
      r.image_index = i;
      r.scale = s;
      r.hr_path = hr_name;
      r.lr_path = r.id + "_lr.png";
      r.kernel_path = r.id + "_kernel.csv";
      r.spec = pair.spec;
      r.kernel_size = pair.kernel.size();
      r.noise_sigma = cfg.noise_sigma;
      r.seed = cfg.seed;
      r.mode = mode_name(cfg.mode);
      write_png(out_dir / r.lr_path, pair.lr, cfg.bit_depth);
      write_kernel_csv(out_dir / r.kernel_path, pair.kernel.values());
      m.records.push_back(std::move(r));
    }
  }
  write_text(out_dir / "manifest.json", manifest_to_json(m));
  return m;
}

std::string manifest_to_json(const DatasetManifest& m) {
  json j;
  j["kind"] = "hacbsr-dataset";
  j["n_images"] = m.config.n_images;
  j["hr_size"] = m.config.hr_size;
  j["scales"] = m.config.scales;
  j["noise_sigma"] = m.config.noise_sigma;
  j["seed"] = m.config.seed;
  j["mode"] = mode_name(m.config.mode);
  j["bit_depth"] = m.config.bit_depth;
  j["records"] = json::array();
  for (const auto& r : m.records) {
    j["records"].push_back({{"id", r.id},
                            {"image_index", r.image_index},
                            {"scale", r.scale},
                            {"hr", r.hr_path},
                            {"lr", r.lr_path},
                            {"kernel", r.kernel_path},
                            {"sigma1", r.spec.sigma1},
                            {"sigma2", r.spec.sigma2},
                            {"rho", r.spec.rho},
                            {"kernel_size", r.kernel_size},
                            {"noise_sigma", r.noise_sigma},
                            {"seed", r.seed},
                            {"mode", r.mode}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  DatasetManifest m;
  try {
    const json j = json::parse(text);
    m.config.n_images = j.at("n_images").get<int>();
    m.config.hr_size = j.at("hr_size").get<Index>();
    m.config.scales = j.at("scales").get<std::vector<int>>();
    m.config.noise_sigma = j.at("noise_sigma").get<double>();
    m.config.seed = j.at("seed").get<std::uint64_t>();
    m.config.mode = parse_mode(j.at("mode").get<std::string>());
    m.config.bit_depth = j.value("bit_depth", 8);
    for (const auto& e : j.at("records")) {
      DatasetRecord r;
      r.id = e.at("id").get<std::string>();
      r.image_index = e.at("image_index").get<int>();
      r.scale = e.at("scale").get<int>();
      r.hr_path = e.at("hr").get<std::string>();
      r.lr_path = e.at("lr").get<std::string>();
      r.kernel_path = e.at("kernel").get<std::string>();
      r.spec = {e.at("sigma1").get<double>(), e.at("sigma2").get<double>(), e.at("rho").get<double>()};
      r.kernel_size = e.at("kernel_size").get<Index>();
      r.noise_sigma = e.at("noise_sigma").get<double>();
      r.seed = e.at("seed").get<std::uint64_t>();
      r.mode = e.at("mode").get<std::string>();
      m.records.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("malformed dataset manifest: ") + e.what());
  }
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) { return manifest_from_json(read_text(path)); }

}  // namespace hacbsr

#include "hacbsr/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "hacbsr/dataset.hpp"
#include "hacbsr/image_io.hpp"
#include "hacbsr/metrics.hpp"
#include "hacbsr/persistence.hpp"
#include "hacbsr/plot.hpp"
#include "hacbsr/stability.hpp"

namespace hacbsr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::mutex log_mutex;

void log_line(const std::string& s) {
  std::lock_guard<std::mutex> lock(log_mutex);
  std::cerr << s << '\n';
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v{};
    is >> v;
    if (!is || !(is >> std::ws).eof()) throw ArgumentError(std::string("cannot parse ") + what + " entry '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ArgumentError(std::string(what) + " list is empty");
  return out;
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string directory_name(const fs::path& dir) {
  fs::path p = fs::absolute(dir).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

int worker_count() {
  const char* env = std::getenv("HACBSR_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1 || n > 256) throw ArgumentError("HACBSR_THREADS must be an integer in [1, 256]");
  return static_cast<int>(n);
}

json sampling_json(const SamplingConfig& c) {
  return {{"kernel_size", c.kernel_size},
          {"sigma_range", {c.sigma_range.lo, c.sigma_range.hi}},
          {"rho_range", {c.rho_range.lo, c.rho_range.hi}},
          {"n_proposals", c.n_proposals},
          {"tau_target", c.thresholds.tau_target},
          {"sigma_min", c.thresholds.sigma_min},
          {"sigma_max", c.thresholds.sigma_max},
          {"hinge", c.thresholds.hinge},
          {"weights", {c.weights.w_pearson, c.weights.w_ssim, c.weights.w_feat}}};
}

/// Artifact listing for one run directory.
struct RunManifest {
  std::string run_id;
  TrainConfig config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;  // file names relative to the run directory
  std::string started;
  std::string finished;
  std::string status;

  std::string to_json() const {
    json j;
    j["run_id"] = run_id;
    j["software_version"] = kVersion;
    j["seed"] = config.seed;
    j["config"] = json::parse(run_report_to_json([&] {
                    RunReport r;
                    r.config = config;
                    return r;
                  }()))["config"];
    j["sampling"] = sampling_json(config.sampling());
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["started_utc"] = started;
    j["finished_utc"] = finished;
    j["status"] = status;
    return j.dump(1) + "\n";
  }
};

struct GroundTruth {
  fs::path hr;
  fs::path kernel;
};

struct RunJob {
  std::string id;
  fs::path lr;
  int scale = 2;
  std::optional<GroundTruth> truth;
  fs::path out_dir;
};

struct JobResult {
  std::string id;
  int scale = 0;
  std::string status = "pending";
  double core = std::nan("");
  double cil = std::nan("");
  double seconds = 0.0;
  std::map<std::string, double> metrics;
  std::string error;
  int exit_code = kExitOk;
};

template <typename Scalar>
JobResult run_job(const RunJob& job, TrainConfig cfg, const std::string& run_id) {
  JobResult res;
  res.id = job.id;
  res.scale = job.scale;
  cfg.scale = job.scale;
  cfg.validate();
  fs::create_directories(job.out_dir);

  RunManifest man;
  man.run_id = run_id;
  man.config = cfg;
  man.inputs.push_back(job.lr.string());
  if (job.truth) {
    man.inputs.push_back(job.truth->hr.string());
    man.inputs.push_back(job.truth->kernel.string());
  }
  man.started = utc_timestamp();

  const Image<Scalar> y = read_png(job.lr).cast<Scalar>();
  RunReport report;
  std::optional<TrainState<Scalar>> state;
  auto write = [&](const std::string& name, const std::string& text) {
    write_text(job.out_dir / name, text);
    man.outputs.push_back(name);
  };
  auto finish = [&] {
    write("report.json", run_report_to_json(report));
    write("history.csv", selections_csv(report.selections));
    write("config.txt", config_to_text(cfg));
    man.finished = utc_timestamp();
    man.status = res.status;
    man.outputs.push_back("manifest.json");
    write_text(job.out_dir / "manifest.json", man.to_json());
  };

  try {
    const auto out = run_hacbsr<Scalar>(y, cfg, report, &state);
    const Image<double> sr = out.image.template cast<double>();
    const Image<double> kv = out.kernel.values().template cast<double>();
    if (job.truth) {
      const Image<double> hr = read_png(job.truth->hr);
      const Kernel<double> kt = read_kernel_csv(job.truth->kernel);
      if (hr.rows() != sr.rows() || hr.cols() != sr.cols())
        throw ShapeError("ground-truth image size does not match the SR output for " + job.id);
      report.final_metrics["psnr"] = psnr(sr, hr);
      report.final_metrics["ssim"] = ssim(sr, hr);
      if (kt.size() == out.kernel.size())
        report.final_metrics["kernel_psnr"] = kernel_psnr(Kernel<double>::normalized(kv), kt);
    }
    write_png(job.out_dir / "sr.png", sr, 16);
    man.outputs.push_back("sr.png");
    write_kernel_csv(job.out_dir / "kernel.csv", kv);
    man.outputs.push_back("kernel.csv");
    write_checkpoint(job.out_dir / "checkpoint.bin", make_checkpoint(*state));
    man.outputs.push_back("checkpoint.bin");
    res.status = "ok";
  } catch (const DivergenceError& e) {
    res.status = "diverged";
    res.error = e.what();
    res.exit_code = kExitDivergence;
  }
  res.core = report.final_core_loss;
  res.cil = report.final_cil_loss;
  res.seconds = report.wall_seconds;
  res.metrics = report.final_metrics;
  finish();
  return res;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
  if (dynamic_cast<const Error*>(&e)) return kExitArgument;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  return kExitArgument;
}

std::string format_double(double v) {
  if (!std::isfinite(v)) return "nan";
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------- synth-data

struct SynthOptions {
  int n = 2;
  Index hr_size = 64;
  std::string scales = "2";
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::string mode = "strided";
  int bit_depth = 8;
  std::string out;
};

int cmd_synth_data(const SynthOptions& o) {
  DatasetConfig cfg;
  cfg.n_images = o.n;
  cfg.hr_size = o.hr_size;
  cfg.scales = parse_list<int>(o.scales, "scale");
  cfg.noise_sigma = o.noise_sigma;
  cfg.seed = o.seed;
  cfg.mode = parse_mode(o.mode);
  cfg.bit_depth = o.bit_depth;
  const auto m = synthesize_dataset(cfg, o.out);
  std::cout << "wrote " << m.records.size() << " LR images for " << cfg.n_images << " HR images to " << o.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- run

struct RunOptions {
  std::string input;
  std::string out = "out";
  std::string run_id;
  std::string config;
  std::string precision = "float";
  std::string hr;
  std::string true_kernel;
  int scale = 2;
  int iters = 0;
  int inner = 0;
  double theta_h = 0;
  std::uint64_t seed = 0;
  int image_warmup = 0;
  int kernel_warmup = 0;
  Index feature_dim = 0;
  bool no_contrastive_sampling = false;
  bool no_history_contrast = false;
  std::vector<std::pair<std::string, const CLI::Option*>> given;
};

TrainConfig build_config(const RunOptions& o) {
  TrainConfig cfg = o.config.empty() ? TrainConfig{} : read_config_file(o.config);
  auto given = [&](const std::string& name) {
    for (const auto& [n, opt] : o.given)
      if (n == name) return opt->count() > 0;
    return false;
  };
  if (given("--scale")) cfg.scale = o.scale;
  if (given("--iters")) cfg.outer_iters = o.iters;
  if (given("--inner")) cfg.inner_iters = o.inner;
  if (given("--theta-h")) cfg.theta_h = o.theta_h;
  if (given("--seed")) cfg.seed = o.seed;
  if (given("--image-warmup")) cfg.image_warmup = o.image_warmup;
  if (given("--kernel-warmup")) cfg.kernel_warmup = o.kernel_warmup;
  if (given("--feature-dim")) cfg.feature_dim = o.feature_dim;
  if (o.no_contrastive_sampling) cfg.contrastive_sampling = false;
  if (o.no_history_contrast) cfg.history_contrast = false;
  cfg.validate();
  return cfg;
}

std::string aggregate_csv(const std::vector<JobResult>& results) {
  std::ostringstream os;
  os << "id,scale,status,final_core_loss,final_cil_loss,wall_seconds,psnr,ssim,kernel_psnr\n";
  auto metric = [](const JobResult& r, const char* k) {
    const auto it = r.metrics.find(k);
    return it == r.metrics.end() ? std::string("nan") : format_double(it->second);
  };
  for (const auto& r : results)
    os << r.id << ',' << r.scale << ',' << r.status << ',' << format_double(r.core) << ',' << format_double(r.cil) << ','
       << format_double(r.seconds) << ',' << metric(r, "psnr") << ',' << metric(r, "ssim") << ','
       << metric(r, "kernel_psnr") << '\n';
  return os.str();
}

int cmd_run(const RunOptions& o) {
  const TrainConfig cfg = build_config(o);
  if (o.precision != "float" && o.precision != "double") throw ArgumentError("--precision must be float or double");
  const fs::path input(o.input);
  if (!fs::exists(input)) throw IoError(o.input, "input does not exist");

  std::vector<RunJob> jobs;
  const bool dataset = fs::is_directory(input);
  const std::string run_id =
      !o.run_id.empty() ? o.run_id
                        : (dataset ? directory_name(input) : input.stem().string()) +
                              "-seed" + std::to_string(cfg.seed);
  const fs::path root = fs::path(o.out) / run_id;

  if (!dataset) {
    RunJob j{input.stem().string(), input, cfg.scale, std::nullopt, root};
    if (!o.hr.empty() != !o.true_kernel.empty()) throw ArgumentError("--hr and --true-kernel must be given together");
    if (!o.hr.empty()) j.truth = GroundTruth{o.hr, o.true_kernel};
    jobs.push_back(j);
  } else if (fs::exists(input / "manifest.json")) {
    const DatasetManifest m = read_manifest(input / "manifest.json");
    for (const auto& r : m.records)
      jobs.push_back({r.id, input / r.lr_path, r.scale, GroundTruth{input / r.hr_path, input / r.kernel_path}, root / r.id});
  } else {
    std::vector<fs::path> pngs;
    for (const auto& e : fs::directory_iterator(input))
      if (e.is_regular_file() && e.path().extension() == ".png") pngs.push_back(e.path());
    std::sort(pngs.begin(), pngs.end());
    for (const auto& p : pngs) jobs.push_back({p.stem().string(), p, cfg.scale, std::nullopt, root / p.stem()});
  }
  if (jobs.empty()) throw ArgumentError("no input images found in " + o.input);

  std::vector<JobResult> results(jobs.size());
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = o.precision == "double" ? run_job<double>(jobs[i], cfg, run_id) : run_job<float>(jobs[i], cfg, run_id);
      } catch (const std::exception& e) {
        results[i].id = jobs[i].id;
        results[i].scale = jobs[i].scale;
        results[i].status = "error";
        results[i].error = e.what();
        results[i].exit_code = exit_code_for(e);
      }
      const auto& r = results[i];
      log_line(r.id + ": " + r.status + (r.error.empty() ? "" : " (" + r.error + ")"));
    }
  };
  const int n_workers = std::min<int>(worker_count(), static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  if (dataset) {
    write_text(root / "aggregate.csv", aggregate_csv(results));
    RunManifest man;
    man.run_id = run_id;
    man.config = cfg;
    man.inputs.push_back(input.string());
    man.started = man.finished = utc_timestamp();
    man.status = "ok";
    man.outputs.push_back("aggregate.csv");
    for (const auto& j : jobs) man.outputs.push_back(j.id + "/manifest.json");
    man.outputs.push_back("manifest.json");
    write_text(root / "manifest.json", man.to_json());
  }
  std::cout << root.string() << "\n";

  int code = kExitOk;
  for (const auto& r : results) {
    if (r.exit_code == kExitOk) continue;
    if (code == kExitOk || r.exit_code == kExitDivergence) code = r.exit_code;
  }
  return code;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string dataset;
  std::string results;
  std::string baseline;
  std::string out;
};

int cmd_eval(const EvalOptions& o) {
  if (o.results.empty() && o.baseline.empty()) throw ArgumentError("eval needs --results and/or --baseline bicubic");
  if (!o.baseline.empty() && o.baseline != "bicubic") throw ArgumentError("unknown baseline '" + o.baseline + "'");
  const fs::path root(o.dataset);
  const fs::path manifest_path = fs::is_directory(root) ? root / "manifest.json" : root;
  const fs::path base = manifest_path.parent_path();
  if (!fs::exists(manifest_path)) throw ArgumentError("missing ground truth: no manifest at " + manifest_path.string());
  const DatasetManifest m = read_manifest(manifest_path);

  std::vector<std::pair<std::string, MetricReport>> reports;
  if (!o.results.empty()) reports.push_back({"hacbsr", {}});
  if (!o.baseline.empty()) reports.push_back({o.baseline, {}});

  for (const auto& rec : m.records) {
    const fs::path hr_path = base / rec.hr_path;
    const fs::path k_path = base / rec.kernel_path;
    if (!fs::exists(hr_path) || !fs::exists(k_path))
      throw ArgumentError("missing ground truth for " + rec.id + " (" + hr_path.string() + ")");
    const Image<double> hr = read_png(hr_path);
    const Kernel<double> kt = read_kernel_csv(k_path);
    for (auto& [method, rep] : reports) {
      Image<double> sr;
      Kernel<double> k = Kernel<double>::uniform(kt.size());
      if (method == "hacbsr") {
        const fs::path dir = fs::path(o.results) / rec.id;
        if (!fs::exists(dir / "sr.png")) throw ArgumentError("missing SR output for " + rec.id + " in " + o.results);
        sr = read_png(dir / "sr.png");
        if (fs::exists(dir / "kernel.csv")) k = read_kernel_csv(dir / "kernel.csv");
      } else {
        const Image<double> lr = read_png(base / rec.lr_path);
        sr = upsample_bicubic(lr, rec.scale).cwiseMax(0.0).cwiseMin(1.0);
      }
      if (sr.rows() != hr.rows() || sr.cols() != hr.cols())
        throw ShapeError("SR size does not match ground truth for " + rec.id);
      if (k.size() != kt.size()) throw ShapeError("estimated kernel size does not match ground truth for " + rec.id);
      rep.records.push_back({rec.id, rec.scale, psnr(sr, hr), ssim(sr, hr), kernel_psnr(k, kt)});
    }
  }

  std::ostringstream os;
  os << "method,id,scale,psnr,ssim,kernel_psnr\n";
  for (auto& [method, rep] : reports) {
    rep.finalize();
    for (const auto& r : rep.records)
      os << method << ',' << r.id << ',' << r.scale << ',' << format_double(r.psnr) << ',' << format_double(r.ssim) << ','
         << format_double(r.kernel_psnr) << '\n';
    os << method << ",mean,," << format_double(rep.mean_psnr) << ',' << format_double(rep.mean_ssim) << ','
       << format_double(rep.mean_kernel_psnr) << '\n';
  }
  if (o.out.empty()) {
    std::cout << os.str();
  } else {
    write_text(o.out, os.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------- verify-stability

struct StabilityOptions {
  Index image_size = 16;
  int scale = 2;
  Index feature_dim = 0;
  std::string theta_grid = "0.01,0.1,1,10,100";
  int trials = 20;
  std::uint64_t seed = 0;
  double noise_sigma = 0.01;
  bool consistent = false;
  std::string out;
};

int cmd_verify_stability(const StabilityOptions& o) {
  if (o.trials < 1) throw ArgumentError("--trials must be at least 1");
  InstanceConfig cfg;
  cfg.height = cfg.width = o.image_size;
  cfg.scale = o.scale;
  cfg.feature_dim = o.feature_dim > 0 ? o.feature_dim : o.image_size * o.image_size;
  cfg.noise_sigma = o.noise_sigma;
  cfg.consistent = o.consistent;
  cfg.theta_grid = parse_list<double>(o.theta_grid, "theta");
  if (o.image_size < 2 || o.image_size % o.scale != 0) throw ArgumentError("--image-size must be a multiple of --scale");
  if (cfg.height * cfg.width > kMaxDenseDim) throw CapacityError("--image-size exceeds the dense guard");
  if (!o.out.empty()) fs::create_directories(o.out);

  int failed = 0;
  std::ostringstream summary;
  summary << "trial,seed,passed,failures,min_slack\n";
  for (int t = 0; t < o.trials; ++t) {
    const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(t);
    const LinearSystem sys = make_random_system(cfg, seed);
    const StabilityReport rep = verify_bounds(sys);
    double slack = std::numeric_limits<double>::infinity();
    for (const auto& r : rep.records)
      if (r.solved) slack = std::min(slack, r.rhs - r.lhs);
    if (!rep.passed()) ++failed;
    summary << t << ',' << seed << ',' << (rep.passed() ? 1 : 0) << ',' << rep.failures.size() << ','
            << format_double(slack) << '\n';
    std::cout << "trial " << t << ": " << rep.verdict() << "\n";
    if (!o.out.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "trial_%03d.csv", t);
      write_text(fs::path(o.out) / name, stability_csv(rep));
    }
  }
  if (!o.out.empty()) write_text(fs::path(o.out) / "summary.csv", summary.str());
  std::cout << (failed == 0 ? "PASS" : "FAIL") << ": " << o.trials - failed << "/" << o.trials
            << " trials passed all checks (d = " << cfg.feature_dim << ", n = " << cfg.height * cfg.width << ")\n";
  return failed == 0 ? kExitOk : kExitVerification;
}

// ---------------------------------------------------------------- sample-kernels

struct SampleOptions {
  int n = 200;
  int proposals = 16;
  int scale = 2;
  int capacity = 20;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_sample_kernels(const SampleOptions& o) {
  if (o.n < 1 || o.proposals < 1 || o.capacity < 1) throw ArgumentError("--n, --proposals and --capacity must be positive");
  if (o.scale < 2 || o.scale > 4) throw ArgumentError("--scale must be 2, 3 or 4");
  SamplingConfig cfg = SamplingConfig::for_scale(o.scale);
  cfg.n_proposals = o.proposals;
  const auto picks = sample_schedule(o.seed, o.n, cfg, static_cast<size_t>(o.capacity));
  std::vector<SelectionRecord> records;
  for (size_t i = 0; i < picks.size(); ++i) {
    const auto& p = picks[i];
    records.push_back({static_cast<long>(i), p.score.j, p.score.s_avg, p.score.s_min, p.score.s_max, p.spec});
  }
  const SelectionStats st = selection_stats(picks, cfg.thresholds);
  if (o.out.empty()) {
    std::cout << selections_csv(records);
  } else {
    write_text(o.out, selections_csv(records));
  }
  std::cerr << "S_max > " << cfg.thresholds.sigma_max << " rate " << st.s_max_exceed_rate << ", descriptor outlier rate "
            << st.outlier_rate << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- plot-report

struct PlotOptions {
  std::string report;
  std::string history;
  std::string baseline_history;
  std::string stability;
  std::string out = "plots";
};

std::vector<std::pair<double, double>> read_stability_curve(const fs::path& path) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("theta,", 0) != 0)
    throw ArgumentError("stability CSV " + path.string() + " has no header");
  std::vector<std::pair<double, double>> pts;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string theta, mu, c;
    std::getline(ls, theta, ',');
    std::getline(ls, mu, ',');
    std::getline(ls, c, ',');
    try {
      pts.push_back({std::stod(theta), std::stod(c)});
    } catch (const std::exception&) {
      throw ArgumentError("stability CSV row is malformed: '" + line + "'");
    }
  }
  if (pts.empty()) throw ArgumentError("stability CSV " + path.string() + " has no rows");
  return pts;
}

std::vector<SelectionRecord> read_history(const fs::path& path) {
  auto recs = parse_selections_csv(read_text(path));
  if (recs.empty()) throw ArgumentError("selection history " + path.string() + " is empty");
  return recs;
}

int cmd_plot_report(const PlotOptions& o) {
  if (o.report.empty() && o.history.empty() && o.stability.empty())
    throw ArgumentError("plot-report needs --report, --history or --stability");
  fs::create_directories(o.out);
  const fs::path out(o.out);
  std::vector<std::string> written;
  auto emit = [&](const plot::Canvas& c, const std::string& name) {
    plot::save(c, out / name);
    written.push_back((out / name).string());
  };

  if (!o.report.empty()) {
    const std::string text = read_text(o.report);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) throw ArgumentError("report " + o.report + " is empty");
    const RunReport r = run_report_from_json(text);
    if (r.iterations.empty()) throw ArgumentError("report " + o.report + " has no iterations");
    plot::Series kl{"KL", {}, {}, 0.55}, core{"CORE", {}, {}, 0.0}, cil{"CIL", {}, {}, 0.3}, meta{"META", {}, {}, 0.75};
    plot::Series alpha{"ALPHA", {}, {}, 0.0, true, true};
    std::vector<std::vector<plot::Bar>> omega;
    double refresh = 0;
    for (const auto& it : r.iterations) {
      const double x = static_cast<double>(it.iteration);
      auto mean = [](const std::vector<double>& v) {
        double s = 0;
        for (double e : v) s += e;
        return v.empty() ? std::nan("") : s / static_cast<double>(v.size());
      };
      kl.x.push_back(x);
      kl.y.push_back(it.kl_loss);
      core.x.push_back(x);
      core.y.push_back(mean(it.core));
      cil.x.push_back(x);
      cil.y.push_back(mean(it.cil));
      meta.x.push_back(x);
      meta.y.push_back(it.meta_loss);
      for (double a : it.alphas) {
        alpha.x.push_back(++refresh);
        alpha.y.push_back(a);
      }
    }
    const size_t max_groups = 40;
    const size_t stride = (r.iterations.size() + max_groups - 1) / max_groups;
    for (size_t i = 0; i < r.iterations.size(); i += stride) {
      std::vector<plot::Bar> g;
      const auto& w = r.iterations[i].omega;
      for (size_t p = 0; p < w.size(); ++p) g.push_back({w[p], 0.15 + 0.6 * static_cast<double>(p) / std::max<size_t>(1, w.size())});
      omega.push_back(std::move(g));
    }
    emit(plot::line_chart({kl, core, cil, meta}, {"LOSS CURVES", "OUTER ITERATION", "LOSS", false, true}), "loss_curves.png");
    emit(plot::line_chart({alpha}, {"EMA RATE ALPHA", "HISTORY REFRESH", "ALPHA"}), "alpha_trace.png");
    emit(plot::bar_chart(omega, {"META WEIGHTS OMEGA", "OUTER ITERATION (SAMPLED)", "OMEGA"}), "omega_bars.png");
  }

  if (!o.history.empty()) {
    std::vector<plot::Series> series;
    auto scatter = [](const std::vector<SelectionRecord>& recs, const std::string& label, double gray) {
      plot::Series s{label, {}, {}, gray, true, false};
      for (const auto& r : recs) {
        s.x.push_back(r.spec.sigma1);
        s.y.push_back(r.spec.sigma2);
      }
      return s;
    };
    series.push_back(scatter(read_history(o.history), "CONTRASTIVE", 0.0));
    if (!o.baseline_history.empty()) series.push_back(scatter(read_history(o.baseline_history), "RANDOM", 0.6));
    emit(plot::line_chart(series, {"SELECTED KERNELS", "SIGMA1", "SIGMA2"}), "selection_scatter.png");

    std::vector<plot::Series> smax;
    auto trace = [](const std::vector<SelectionRecord>& recs, const std::string& label, double gray) {
      plot::Series s{label, {}, {}, gray};
      for (const auto& r : recs) {
        s.x.push_back(static_cast<double>(r.iteration));
        s.y.push_back(r.s_max);
      }
      return s;
    };
    smax.push_back(trace(read_history(o.history), "CONTRASTIVE", 0.0));
    if (!o.baseline_history.empty()) smax.push_back(trace(read_history(o.baseline_history), "RANDOM", 0.6));
    emit(plot::line_chart(smax, {"MAX SIMILARITY TO HISTORY", "SELECTION", "S_MAX"}), "selection_smax.png");
  }

  if (!o.stability.empty()) {
    const auto pts = read_stability_curve(o.stability);
    plot::Series c{"C(THETA)", {}, {}, 0.0, true, true};
    for (const auto& [t, v] : pts) {
      c.x.push_back(t);
      c.y.push_back(v);
    }
    emit(plot::line_chart({c}, {"STABILITY CONSTANT", "THETA", "C", true, true}), "stability_c.png");
  }
  for (const auto& w : written) std::cout << w << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Unsupervised blind super-resolution with contrastive kernel sampling and history contrast"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  SynthOptions so;
  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic HR/LR dataset with ground-truth kernels");
  synth->add_option("--n", so.n, "Number of HR images")->check(CLI::PositiveNumber);
  synth->add_option("--hr-size", so.hr_size, "HR side length in pixels")->check(CLI::PositiveNumber);
  synth->add_option("--scales", so.scales, "Comma-separated scale factors");
  synth->add_option("--noise-sigma", so.noise_sigma, "Gaussian noise std on the LR images")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", so.seed, "Dataset seed");
  synth->add_option("--mode", so.mode, "Downsampling: strided or bicubic");
  synth->add_option("--bit-depth", so.bit_depth, "PNG bit depth (8 or 16)")->check(CLI::IsMember({8, 16}));
  synth->add_option("--out", so.out, "Output directory")->required();

  RunOptions ro;
  auto* run = app.add_subcommand("run", "Run blind super-resolution on an LR image or a dataset directory");
  run->add_option("--input", ro.input, "LR PNG, dataset directory with manifest.json, or directory of PNGs")->required();
  run->add_option("--out", ro.out, "Output root; results go to <out>/<run-id>");
  run->add_option("--run-id", ro.run_id, "Run directory name");
  run->add_option("--config", ro.config, "key = value config file; flags override it");
  run->add_option("--precision", ro.precision, "float or double");
  run->add_option("--hr", ro.hr, "Ground-truth HR PNG for a single input");
  run->add_option("--true-kernel", ro.true_kernel, "Ground-truth kernel CSV for a single input");
  ro.given = {
      {"--scale", run->add_option("--scale", ro.scale, "Scale factor (2, 3, 4)")},
      {"--iters", run->add_option("--iters", ro.iters, "Outer iterations N")},
      {"--inner", run->add_option("--inner", ro.inner, "Inner CIL steps P")},
      {"--theta-h", run->add_option("--theta-h", ro.theta_h, "History contrast weight")},
      {"--seed", run->add_option("--seed", ro.seed, "Run seed")},
      {"--image-warmup", run->add_option("--image-warmup", ro.image_warmup, "Image warm-start steps")},
      {"--kernel-warmup", run->add_option("--kernel-warmup", ro.kernel_warmup, "Kernel warm-start steps")},
      {"--feature-dim", run->add_option("--feature-dim", ro.feature_dim, "Encoder feature dimension")},
  };
  run->add_flag("--no-contrastive-sampling", ro.no_contrastive_sampling, "Draw one random kernel per sample (-CK)");
  run->add_flag("--no-history-contrast", ro.no_history_contrast, "Drop the history contrast term (-CL)");

  EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "Score SR outputs against a dataset's ground truth");
  eval->add_option("--dataset", eo.dataset, "Dataset directory or manifest.json")->required();
  eval->add_option("--results", eo.results, "Run directory holding <id>/sr.png and <id>/kernel.csv");
  eval->add_option("--baseline", eo.baseline, "Built-in baseline: bicubic");
  eval->add_option("--out", eo.out, "CSV output path (default stdout)");

  StabilityOptions vo;
  auto* verify = app.add_subcommand("verify-stability", "Check the linearized stability bounds on random instances");
  verify->add_option("--image-size", vo.image_size, "HR side length");
  verify->add_option("--scale", vo.scale, "Scale factor")->check(CLI::IsMember({2, 3, 4}));
  verify->add_option("--feature-dim", vo.feature_dim, "Encoder dimension d (default: image-size^2)");
  verify->add_option("--theta-grid", vo.theta_grid, "Comma-separated ascending theta values");
  verify->add_option("--trials", vo.trials, "Number of random instances");
  verify->add_option("--seed", vo.seed, "Seed of the first trial");
  verify->add_option("--noise-sigma", vo.noise_sigma, "Observation noise for inconsistent instances");
  verify->add_flag("--consistent", vo.consistent, "Use y = A x_h");
  verify->add_option("--out", vo.out, "Directory for per-trial CSVs and summary.csv");

  PlotOptions po;
  auto* plotc = app.add_subcommand("plot-report", "Render PNG plots from run, history and stability outputs");
  plotc->add_option("--report", po.report, "report.json of a run");
  plotc->add_option("--history", po.history, "Selection history CSV (contrastive)");
  plotc->add_option("--baseline-history", po.baseline_history, "Selection history CSV (random) for comparison");
  plotc->add_option("--stability", po.stability, "Stability CSV from verify-stability");
  plotc->add_option("--out", po.out, "Output directory");

  SampleOptions sa;
  auto* sample = app.add_subcommand("sample-kernels", "Run the kernel sampler alone and dump its selection history");
  sample->add_option("--n", sa.n, "Number of selections");
  sample->add_option("--proposals", sa.proposals, "Candidates per selection (1 = random sampling)");
  sample->add_option("--scale", sa.scale, "Scale factor");
  sample->add_option("--capacity", sa.capacity, "History capacity");
  sample->add_option("--seed", sa.seed, "Seed");
  sample->add_option("--out", sa.out, "CSV output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitArgument;
  }

  try {
    if (*synth) return cmd_synth_data(so);
    if (*run) return cmd_run(ro);
    if (*eval) return cmd_eval(eo);
    if (*verify) return cmd_verify_stability(vo);
    if (*plotc) return cmd_plot_report(po);
    if (*sample) return cmd_sample_kernels(sa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitArgument;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("hacbsr");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace hacbsr

#include "hacbsr/persistence.hpp"

#include <json.hpp>

#include <fstream>
#include <functional>
#include <sstream>

#include "hacbsr/image_io.hpp"

namespace hacbsr {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  T out{};
  in >> out;
  if (!in || !(in >> std::ws).eof()) throw ArgumentError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ArgumentError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;

template <typename T>
Setter number(T TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& k, const std::string& v) { c.*field = parse_number<T>(k, v); };
}

Setter flag(bool TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& k, const std::string& v) { c.*field = parse_bool(k, v); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"outer_iters", number(&TrainConfig::outer_iters)},
      {"inner_iters", number(&TrainConfig::inner_iters)},
      {"lr_image", number(&TrainConfig::lr_image)},
      {"lr_kernel_kl", number(&TrainConfig::lr_kernel_kl)},
      {"lr_kernel_meta", number(&TrainConfig::lr_kernel_meta)},
      {"theta_h", number(&TrainConfig::theta_h)},
      {"scale", number(&TrainConfig::scale)},
      {"kl_batch", number(&TrainConfig::kl_batch)},
      {"alpha_min", number(&TrainConfig::alpha_min)},
      {"alpha_max", number(&TrainConfig::alpha_max)},
      {"loss_min", number(&TrainConfig::loss_min)},
      {"loss_max", number(&TrainConfig::loss_max)},
      {"seed", number(&TrainConfig::seed)},
      {"history_update_period", number(&TrainConfig::history_update_period)},
      {"history_capacity", number(&TrainConfig::history_capacity)},
      {"n_proposals", number(&TrainConfig::n_proposals)},
      {"kernel_size", number(&TrainConfig::kernel_size)},
      {"sigma_max_factor", number(&TrainConfig::sigma_max_factor)},
      {"sigma_lo", number(&TrainConfig::sigma_lo)},
      {"rho_limit", number(&TrainConfig::rho_limit)},
      {"image_warmup", number(&TrainConfig::image_warmup)},
      {"kernel_warmup", number(&TrainConfig::kernel_warmup)},
      {"unet_width", number(&TrainConfig::unet_width)},
      {"unet_scales", number(&TrainConfig::unet_scales)},
      {"kernel_noise_dim", number(&TrainConfig::kernel_noise_dim)},
      {"kernel_hidden", number(&TrainConfig::kernel_hidden)},
      {"encoder", [](TrainConfig& c, const std::string&, const std::string& v) { c.encoder = v; }},
      {"feature_dim", number(&TrainConfig::feature_dim)},
      {"contrastive_sampling", flag(&TrainConfig::contrastive_sampling)},
      {"history_contrast", flag(&TrainConfig::history_contrast)},
      {"divergence_limit", number(&TrainConfig::divergence_limit)},
      {"snapshot_period", number(&TrainConfig::snapshot_period)},
  };
  return table;
}

json config_json(const TrainConfig& c) {
  return {{"outer_iters", c.outer_iters},
          {"inner_iters", c.inner_iters},
          {"lr_image", c.lr_image},
          {"lr_kernel_kl", c.lr_kernel_kl},
          {"lr_kernel_meta", c.lr_kernel_meta},
          {"theta_h", c.theta_h},
          {"scale", c.scale},
          {"kl_batch", c.kl_batch},
          {"alpha_min", c.alpha_min},
          {"alpha_max", c.alpha_max},
          {"loss_min", c.loss_min},
          {"loss_max", c.loss_max},
          {"seed", c.seed},
          {"history_update_period", c.history_update_period},
          {"history_capacity", c.history_capacity},
          {"n_proposals", c.n_proposals},
          {"kernel_size", c.resolved_kernel_size()},
          {"sigma_max_factor", c.sigma_max_factor},
          {"sigma_lo", c.sigma_lo},
          {"rho_limit", c.rho_limit},
          {"image_warmup", c.image_warmup},
          {"kernel_warmup", c.kernel_warmup},
          {"unet_width", c.unet_width},
          {"unet_scales", c.unet_scales},
          {"kernel_noise_dim", c.kernel_noise_dim},
          {"kernel_hidden", c.kernel_hidden},
          {"encoder", c.encoder},
          {"feature_dim", c.feature_dim},
          {"contrastive_sampling", c.contrastive_sampling},
          {"history_contrast", c.history_contrast},
          {"divergence_limit", c.divergence_limit},
          {"snapshot_period", c.snapshot_period}};
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ArgumentError("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

TrainConfig parse_config_text(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ArgumentError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    apply_config_entry(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig read_config_file(const std::filesystem::path& path, TrainConfig base) {
  return parse_config_text(read_text(path), std::move(base));
}

std::string config_to_text(const TrainConfig& cfg) {
  std::ostringstream os;
  const json j = config_json(cfg);
  for (const auto& [k, v] : j.items()) os << k << " = " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
  return os.str();
}

std::string run_report_to_json(const RunReport& r) {
  json j;
  j["config"] = config_json(r.config);
  j["conventions"] = {{"core_loss", "mean squared residual over LR pixels"},
                      {"contrast", "squared feature distance divided by feature dimension"},
                      {"metrics_crop", "none"}};
  j["image_warmup_losses"] = r.image_warmup_losses;
  j["kernel_warmup_losses"] = r.kernel_warmup_losses;
  json its = json::array();
  for (const auto& it : r.iterations) {
    its.push_back({{"iteration", it.iteration},
                   {"kl_loss", it.kl_loss},
                   {"core", it.core},
                   {"cil", it.cil},
                   {"contrast", it.contrast},
                   {"alpha", it.alphas},
                   {"pi", it.pi},
                   {"omega", it.omega},
                   {"meta_loss", it.meta_loss},
                   {"sampled_j", it.sampled_j}});
  }
  j["iterations"] = std::move(its);
  json ks = json::array();
  for (const auto& k : r.kernels) {
    std::vector<double> flat(k.values.data(), k.values.data() + k.values.size());
    ks.push_back({{"iteration", k.iteration}, {"size", k.values.rows()}, {"values", flat}});
  }
  j["kernel_snapshots"] = std::move(ks);
  j["wall_seconds"] = r.wall_seconds;
  j["final_core_loss"] = r.final_core_loss;
  j["final_cil_loss"] = r.final_cil_loss;
  j["diverged"] = r.diverged;
  if (r.diverged) j["divergence_message"] = r.divergence_message;
  j["final_metrics"] = r.final_metrics;
  return j.dump(1) + "\n";
}

RunReport run_report_from_json(const std::string& text) {
  RunReport r;
  try {
    const json j = json::parse(text);
    TrainConfig cfg;
    for (const auto& [k, v] : j.at("config").items())
      apply_config_entry(cfg, k, v.is_string() ? v.get<std::string>() : v.dump());
    r.config = cfg;
    r.image_warmup_losses = j.value("image_warmup_losses", std::vector<double>{});
    r.kernel_warmup_losses = j.value("kernel_warmup_losses", std::vector<double>{});
    for (const auto& e : j.at("iterations")) {
      IterationRecord it;
      it.iteration = e.at("iteration").get<long>();
      it.kl_loss = e.at("kl_loss").get<double>();
      it.core = e.at("core").get<std::vector<double>>();
      it.cil = e.at("cil").get<std::vector<double>>();
      it.contrast = e.at("contrast").get<std::vector<double>>();
      it.alphas = e.at("alpha").get<std::vector<double>>();
      it.pi = e.at("pi").get<std::vector<double>>();
      it.omega = e.at("omega").get<std::vector<double>>();
      it.meta_loss = e.at("meta_loss").get<double>();
      it.sampled_j = e.at("sampled_j").get<std::vector<double>>();
      r.iterations.push_back(std::move(it));
    }
    for (const auto& e : j.value("kernel_snapshots", json::array())) {
      const auto n = e.at("size").get<Index>();
      const auto flat = e.at("values").get<std::vector<double>>();
      if (static_cast<Index>(flat.size()) != n * n) throw ArgumentError("kernel snapshot has the wrong length");
      r.kernels.push_back({e.at("iteration").get<long>(), Eigen::Map<const Image<double>>(flat.data(), n, n)});
    }
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.final_core_loss = j.at("final_core_loss").get<double>();
    r.final_cil_loss = j.at("final_cil_loss").get<double>();
    r.diverged = j.at("diverged").get<bool>();
    r.divergence_message = j.value("divergence_message", std::string());
    r.final_metrics = j.value("final_metrics", std::map<std::string, double>{});
  } catch (const json::exception& e) {
    throw ArgumentError(std::string("malformed run report: ") + e.what());
  }
  return r;
}

std::string selections_csv(const std::vector<SelectionRecord>& records) {
  std::ostringstream os;
  os.precision(12);
  os << "iteration,J,S_avg,S_min,S_max,sigma1,sigma2,rho\n";
  for (const auto& r : records)
    os << r.iteration << ',' << r.j << ',' << r.s_avg << ',' << r.s_min << ',' << r.s_max << ',' << r.spec.sigma1 << ','
       << r.spec.sigma2 << ',' << r.spec.rho << '\n';
  return os.str();
}

std::vector<SelectionRecord> parse_selections_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("iteration,", 0) != 0)
    throw ArgumentError("selection history: missing header");
  std::vector<SelectionRecord> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    SelectionRecord r;
    char c1, c2, c3, c4, c5, c6, c7;
    ls >> r.iteration >> c1 >> r.j >> c2 >> r.s_avg >> c3 >> r.s_min >> c4 >> r.s_max >> c5 >> r.spec.sigma1 >> c6 >>
        r.spec.sigma2 >> c7 >> r.spec.rho;
    if (!ls || c1 != ',' || c7 != ',') throw ArgumentError("selection history: malformed row '" + line + "'");
    out.push_back(r);
  }
  return out;
}

const Checkpoint::Section& Checkpoint::get(const std::string& name) const {
  for (const auto& s : sections)
    if (s.name == name) return s;
  throw ArgumentError("checkpoint has no section '" + name + "'");
}

namespace {

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError(path, "truncated checkpoint");
  return v;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open checkpoint for writing");
  out.write(Checkpoint::kMagic, sizeof Checkpoint::kMagic);
  write_pod(out, ck.version);
  write_pod(out, ck.scalar_size);
  write_pod(out, static_cast<std::uint32_t>(ck.sections.size()));
  for (const auto& s : ck.sections) {
    write_pod(out, static_cast<std::uint32_t>(s.name.size()));
    out.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    write_pod(out, s.kind);
    write_pod(out, s.elem_size);
    write_pod(out, static_cast<std::uint64_t>(s.bytes.size()));
    out.write(s.bytes.data(), static_cast<std::streamsize>(s.bytes.size()));
  }
  if (!out) throw IoError(path.string(), "checkpoint write failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string where = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(where, "cannot open checkpoint");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, Checkpoint::kMagic, 8) != 0) throw IoError(where, "not a checkpoint file");
  Checkpoint ck;
  ck.version = read_pod<std::uint32_t>(in, where);
  if (ck.version != Checkpoint::kVersion) throw IoError(where, "unsupported checkpoint version " + std::to_string(ck.version));
  ck.scalar_size = read_pod<std::uint32_t>(in, where);
  const auto count = read_pod<std::uint32_t>(in, where);
  for (std::uint32_t i = 0; i < count; ++i) {
    Checkpoint::Section s;
    const auto len = read_pod<std::uint32_t>(in, where);
    if (len > 4096) throw IoError(where, "corrupt section name");
    s.name.resize(len);
    in.read(s.name.data(), len);
    s.kind = read_pod<std::uint8_t>(in, where);
    s.elem_size = read_pod<std::uint32_t>(in, where);
    const auto bytes = read_pod<std::uint64_t>(in, where);
    if (bytes > (std::uint64_t(1) << 34)) throw IoError(where, "corrupt section size");
    s.bytes.resize(static_cast<size_t>(bytes));
    in.read(s.bytes.data(), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError(where, "truncated checkpoint");
    ck.sections.push_back(std::move(s));
  }
  return ck;
}

}  // namespace hacbsr

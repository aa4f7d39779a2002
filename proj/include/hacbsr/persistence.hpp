#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hacbsr/optimization.hpp"

namespace hacbsr {

// Config files: one `key = value` per line, '#' starts a comment, keys are
// TrainConfig field names.
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig parse_config_text(const std::string& text, TrainConfig base = {});
TrainConfig read_config_file(const std::filesystem::path& path, TrainConfig base = {});
std::string config_to_text(const TrainConfig& cfg);

std::string run_report_to_json(const RunReport& report);
RunReport run_report_from_json(const std::string& text);

std::string selections_csv(const std::vector<SelectionRecord>& records);
std::vector<SelectionRecord> parse_selections_csv(const std::string& text);

/// Binary container: magic, format version, scalar width, then named sections.
struct Checkpoint {
  static constexpr char kMagic[8] = {'H', 'A', 'C', 'B', 'S', 'R', 'C', 'K'};
  static constexpr std::uint32_t kVersion = 1;

  struct Section {
    std::string name;
    std::uint8_t kind = 0;  // 0: floating point, 1: int64
    std::uint32_t elem_size = 0;
    std::vector<char> bytes;
  };

  std::uint32_t version = kVersion;
  std::uint32_t scalar_size = 0;
  std::vector<Section> sections;

  const Section& get(const std::string& name) const;

  template <typename T>
  void put(const std::string& name, const T* data, size_t count, std::uint8_t kind) {
    Section s{name, kind, static_cast<std::uint32_t>(sizeof(T)), std::vector<char>(count * sizeof(T))};
    if (count) std::memcpy(s.bytes.data(), data, count * sizeof(T));
    sections.push_back(std::move(s));
  }

  template <typename T>
  std::vector<T> values(const std::string& name) const {
    const Section& s = get(name);
    if (s.elem_size != sizeof(T) || s.bytes.size() % sizeof(T) != 0)
      throw ArgumentError("checkpoint section '" + name + "' has an unexpected element size");
    std::vector<T> out(s.bytes.size() / sizeof(T));
    if (!out.empty()) std::memcpy(out.data(), s.bytes.data(), s.bytes.size());
    return out;
  }
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

template <typename Scalar>
Checkpoint make_checkpoint(const TrainState<Scalar>& s) {
  Checkpoint ck;
  ck.scalar_size = sizeof(Scalar);
  auto put_vec = [&](const std::string& name, const auto& v) { ck.put(name, v.data(), static_cast<size_t>(v.size()), 0); };
  put_vec("phi_x", s.phi_x);
  put_vec("phi_h", s.phi_h);
  put_vec("phi_k", s.phi_k);
  put_vec("z_x", s.z_x);
  put_vec("z_k", s.z_k);
  put_vec("adam_x.m", s.adam_x.first_moment());
  put_vec("adam_x.v", s.adam_x.second_moment());
  put_vec("adam_k.m", s.adam_k.first_moment());
  put_vec("adam_k.v", s.adam_k.second_moment());
  const std::int64_t counters[] = {s.outer,         s.inner_step, s.kl_steps,      s.meta_steps,
                                   s.adam_x.steps(), s.adam_k.steps(), s.sr_height, s.sr_width};
  ck.put("counters", counters, 8, 1);
  return ck;
}

/// Loads parameters, noise, optimizer moments and counters into a state built with the same configuration.
template <typename Scalar>
void restore_checkpoint(TrainState<Scalar>& s, const Checkpoint& ck) {
  if (ck.scalar_size != sizeof(Scalar)) throw ArgumentError("checkpoint scalar width does not match");
  auto load = [&](const std::string& name, Index expected) {
    const auto v = ck.values<Scalar>(name);
    if (static_cast<Index>(v.size()) != expected) throw ArgumentError("checkpoint section '" + name + "' has the wrong size");
    return Vector<Scalar>(Eigen::Map<const Vector<Scalar>>(v.data(), expected));
  };
  const auto c = ck.values<std::int64_t>("counters");
  if (c.size() != 8 || c[6] != s.sr_height || c[7] != s.sr_width)
    throw ArgumentError("checkpoint image size does not match the state");
  s.phi_x = load("phi_x", s.phi_x.size());
  s.phi_h = load("phi_h", s.phi_h.size());
  s.phi_k = load("phi_k", s.phi_k.size());
  const Vector<Scalar> zx = load("z_x", s.z_x.size());
  s.z_x = Eigen::Map<const nn::Planes<Scalar>>(zx.data(), s.z_x.rows(), s.z_x.cols());
  s.z_k = load("z_k", s.z_k.size());
  s.adam_x.restore(load("adam_x.m", s.phi_x.size()), load("adam_x.v", s.phi_x.size()), static_cast<long>(c[4]));
  s.adam_k.restore(load("adam_k.m", s.phi_k.size()), load("adam_k.v", s.phi_k.size()), static_cast<long>(c[5]));
  s.outer = static_cast<long>(c[0]);
  s.inner_step = static_cast<long>(c[1]);
  s.kl_steps = static_cast<long>(c[2]);
  s.meta_steps = static_cast<long>(c[3]);
  s.x_history = s.history_image();
}

}  // namespace hacbsr

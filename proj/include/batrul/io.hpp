#pragma once

// File formats: dataset manifest, simulator / training configs, label
// JSONL, evaluation reports, training history and the window tensor file.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "batrul/error.hpp"
#include "batrul/features.hpp"
#include "batrul/ingest.hpp"
#include "batrul/labeling.hpp"
#include "batrul/pipeline.hpp"
#include "batrul/simulate.hpp"

namespace batrul::io {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- files

inline std::ifstream open_in(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(Errc::Io, "cannot open '" + path.string() + "' for reading");
  return in;
}

inline std::ofstream open_out(const fs::path& path, bool binary = true) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot open '" + path.string() + "' for writing");
  return out;
}

inline std::string read_file(const fs::path& path) {
  auto in = open_in(path, true);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const fs::path& path, const std::string& content) {
  auto out = open_out(path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(Errc::Io, "write to '" + path.string() + "' failed");
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::InvalidConfig, what + ": " + e.what());
  }
}

// ----------------------------------------------------- strict field access

namespace detail {

/// Reads the listed keys of a JSON object, rejecting any other key.
class FieldReader {
 public:
  FieldReader(const json& j, std::string context) : j_(j), context_(std::move(context)) {
    if (!j_.is_object()) throw Error(Errc::InvalidConfig, context_ + " must be a JSON object");
  }

  template <class V>
  void get(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception& e) {
      throw Error(Errc::InvalidConfig, context_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw Error(Errc::InvalidConfig, context_ + ": unknown key '" + k + "'");
    }
  }

 private:
  const json& j_;
  std::string context_;
  std::set<std::string> seen_;
};

}  // namespace detail

// --------------------------------------------------------------- manifest

struct ManifestEntry {
  std::string cell_id;
  std::string path;  // as written in the manifest
  double nominal_capacity_ah = 0.0;
};

struct Manifest {
  fs::path base_dir;
  std::vector<ManifestEntry> cells;

  fs::path resolve(const ManifestEntry& e) const {
    const fs::path p(e.path);
    return p.is_absolute() ? p : base_dir / p;
  }
};

/// Accepts `{"cells": [...]}` or a bare array of
/// `{cell_id, path, nominal_capacity_ah}` records.
inline Manifest read_manifest(const fs::path& path) {
  const json j = parse_json(read_file(path), "manifest '" + path.string() + "'");
  const json* list = &j;
  if (j.is_object()) {
    if (!j.contains("cells")) throw Error(Errc::InvalidConfig, "manifest lacks 'cells'");
    list = &j.at("cells");
  }
  if (!list->is_array()) throw Error(Errc::InvalidConfig, "manifest cells must be an array");
  Manifest m;
  m.base_dir = path.parent_path();
  std::set<std::string> ids;
  for (const auto& item : *list) {
    ManifestEntry e;
    detail::FieldReader r(item, "manifest entry");
    r.get("cell_id", e.cell_id);
    r.get("path", e.path);
    r.get("nominal_capacity_ah", e.nominal_capacity_ah);
    r.finish();
    if (e.cell_id.empty() || e.path.empty()) throw Error(Errc::InvalidConfig, "manifest entry needs cell_id and path");
    if (!(e.nominal_capacity_ah > 0.0)) throw Error(Errc::InvalidConfig, "nominal_capacity_ah must be > 0");
    if (!ids.insert(e.cell_id).second) throw Error(Errc::InvalidConfig, "duplicate cell_id '" + e.cell_id + "'");
    m.cells.push_back(std::move(e));
  }
  return m;
}

inline std::string manifest_json(const std::vector<ManifestEntry>& cells) {
  json arr = json::array();
  for (const auto& e : cells) {
    arr.push_back({{"cell_id", e.cell_id}, {"path", e.path}, {"nominal_capacity_ah", e.nominal_capacity_ah}});
  }
  return json{{"cells", arr}}.dump(2) + "\n";
}

inline CellSeries load_cell(const Manifest& m, const ManifestEntry& e) {
  auto in = open_in(m.resolve(e));
  try {
    return parse_cell_csv(in, e.nominal_capacity_ah, e.cell_id);
  } catch (const Error& err) {
    throw Error(err.code(), "cell '" + e.cell_id + "': " + err.what(), err.line());
  }
}

// ------------------------------------------------------------- SimConfig

inline SimProfile parse_profile(const std::string& s) {
  if (s == "constant_current") return SimProfile::ConstantCurrent;
  if (s == "randomized_partial") return SimProfile::RandomizedPartial;
  throw Error(Errc::InvalidConfig, "unknown profile '" + s + "'");
}

inline std::string profile_name(SimProfile p) {
  return p == SimProfile::ConstantCurrent ? "constant_current" : "randomized_partial";
}

inline json to_json(const SimConfig& c) {
  return {
      {"cell_id", c.cell_id},
      {"nominal_capacity_ah", c.nominal_capacity_ah},
      {"fade_per_ah", c.fade_per_ah},
      {"profile", profile_name(c.profile)},
      {"charge_rate_a", c.charge_rate_a},
      {"max_discharge_rate_a", c.max_discharge_rate_a},
      {"min_discharge_rate_a", c.min_discharge_rate_a},
      {"soc_bounds", {{"low", c.soc_bounds.low}, {"high", c.soc_bounds.high}}},
      {"noise_std",
       {{"voltage_v", c.noise_std.voltage_v},
        {"current_a", c.noise_std.current_a},
        {"temperature_c", c.noise_std.temperature_c}}},
      {"ambient_temp_c", c.ambient_temp_c},
      {"sample_period_s", c.sample_period_s},
      {"seed", c.seed},
      {"internal_resistance_ohm", c.internal_resistance_ohm},
      {"resistance_growth", c.resistance_growth},
      {"thermal_rise_c_per_w", c.thermal_rise_c_per_w},
      {"thermal_time_constant_s", c.thermal_time_constant_s},
      {"reference_interval_ah", c.reference_interval_ah},
      {"reference_current_a", c.reference_current_a},
      {"rest_duration_s", c.rest_duration_s},
      {"max_duration_s", c.max_duration_s},
  };
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline SimConfig sim_config_from_json(const json& j) {
  SimConfig c;
  detail::FieldReader r(j, "sim config");
  r.get("cell_id", c.cell_id);
  r.get("nominal_capacity_ah", c.nominal_capacity_ah);
  r.get("fade_per_ah", c.fade_per_ah);
  std::string profile = profile_name(c.profile);
  r.get("profile", profile);
  c.profile = parse_profile(profile);
  r.get("charge_rate_a", c.charge_rate_a);
  r.get("max_discharge_rate_a", c.max_discharge_rate_a);
  r.get("min_discharge_rate_a", c.min_discharge_rate_a);
  if (const json* b = r.sub("soc_bounds")) {
    detail::FieldReader rb(*b, "sim config.soc_bounds");
    rb.get("low", c.soc_bounds.low);
    rb.get("high", c.soc_bounds.high);
    rb.finish();
  }
  if (const json* n = r.sub("noise_std")) {
    detail::FieldReader rn(*n, "sim config.noise_std");
    rn.get("voltage_v", c.noise_std.voltage_v);
    rn.get("current_a", c.noise_std.current_a);
    rn.get("temperature_c", c.noise_std.temperature_c);
    rn.finish();
  }
  r.get("ambient_temp_c", c.ambient_temp_c);
  r.get("sample_period_s", c.sample_period_s);
  r.get("seed", c.seed);
  r.get("internal_resistance_ohm", c.internal_resistance_ohm);
  r.get("resistance_growth", c.resistance_growth);
  r.get("thermal_rise_c_per_w", c.thermal_rise_c_per_w);
  r.get("thermal_time_constant_s", c.thermal_time_constant_s);
  r.get("reference_interval_ah", c.reference_interval_ah);
  r.get("reference_current_a", c.reference_current_a);
  r.get("rest_duration_s", c.rest_duration_s);
  r.get("max_duration_s", c.max_duration_s);
  r.finish();
  validate_sim_config(c);
  return c;
}

// ----------------------------------------------------------- TrainConfig

inline json to_json(const TrainConfig& c) {
  return {
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"lr", c.lr},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"epsilon", c.epsilon},
      {"seed", c.seed},
      {"early_stop_patience", c.early_stop_patience},
      {"clip_norm", c.clip_norm},
      {"latent_dim", c.latent_dim},
      {"ae_hidden", c.ae_hidden},
      {"ae_activation", std::string(nn::to_string(c.ae_activation))},
      {"ae_epochs", c.ae_epochs},
      {"ae_batch_size", c.ae_batch_size},
      {"ae_lr", c.ae_lr},
      {"ae_max_vectors", c.ae_max_vectors},
      {"hidden_size", c.hidden_size},
      {"window_len", c.window_len},
      {"stride", c.stride},
      {"rate_s", c.rate_s},
      {"deadband_a", c.deadband_a},
      {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
  };
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  detail::FieldReader r(j, "train config");
  r.get("epochs", c.epochs);
  r.get("batch_size", c.batch_size);
  r.get("lr", c.lr);
  r.get("beta1", c.beta1);
  r.get("beta2", c.beta2);
  r.get("epsilon", c.epsilon);
  r.get("seed", c.seed);
  r.get("early_stop_patience", c.early_stop_patience);
  r.get("clip_norm", c.clip_norm);
  r.get("latent_dim", c.latent_dim);
  r.get("ae_hidden", c.ae_hidden);
  std::string act(nn::to_string(c.ae_activation));
  r.get("ae_activation", act);
  if (act == "tanh") {
    c.ae_activation = nn::Activation::Tanh;
  } else if (act == "linear") {
    c.ae_activation = nn::Activation::Linear;
  } else {
    throw Error(Errc::InvalidConfig, "ae_activation must be 'tanh' or 'linear'");
  }
  r.get("ae_epochs", c.ae_epochs);
  r.get("ae_batch_size", c.ae_batch_size);
  r.get("ae_lr", c.ae_lr);
  r.get("ae_max_vectors", c.ae_max_vectors);
  r.get("hidden_size", c.hidden_size);
  r.get("window_len", c.window_len);
  r.get("stride", c.stride);
  r.get("rate_s", c.rate_s);
  r.get("deadband_a", c.deadband_a);
  if (const json* s = r.sub("split")) {
    detail::FieldReader rs(*s, "train config.split");
    rs.get("train", c.split.train);
    rs.get("val", c.split.val);
    rs.get("test", c.split.test);
    rs.finish();
  }
  r.finish();
  validate_train_config(c);
  return c;
}

// ------------------------------------------------- NormStats / SplitSpec

inline json to_json(const NormStats& n) {
  return {{"channels", n.channel_names()},
          {"mean", n.mean},
          {"std", n.stddev},
          {"target_scale_ah", n.target_scale_ah}};
}

inline NormStats norm_stats_from_json(const json& j) {
  NormStats n;
  std::vector<std::string> channels;
  detail::FieldReader r(j, "norm stats");
  r.get("channels", channels);
  r.get("mean", n.mean);
  r.get("std", n.stddev);
  r.get("target_scale_ah", n.target_scale_ah);
  r.finish();
  if (channels != n.channel_names()) throw Error(Errc::ShapeMismatch, "normalizer channels must be exactly V, I, T");
  return n;
}

inline json to_json(const SplitSpec& s) { return {{"train", s.train}, {"val", s.val}, {"test", s.test}}; }

inline SplitSpec split_from_json(const json& j) {
  SplitSpec s;
  detail::FieldReader r(j, "split");
  r.get("train", s.train);
  r.get("val", s.val);
  r.get("test", s.test);
  r.finish();
  return s;
}

// ------------------------------------------------------------ labels JSONL

inline std::string label_jsonl_line(const LabelRecord& r) {
  json j = {{"cell_id", r.cell_id},
            {"cumulative_discharge_ah", r.cumulative_discharge_ah},
            {"soh_pct", r.soh_pct ? json(*r.soh_pct) : json(nullptr)},
            {"remaining_ah", r.remaining_ah}};
  return j.dump() + "\n";
}

inline void write_labels_jsonl(std::ostream& out, const std::vector<LabelRecord>& records) {
  for (const auto& r : records) out << label_jsonl_line(r);
}

/// Label rows grouped by cell, in file order.
inline std::map<std::string, std::vector<LabelRecord>> read_labels_jsonl(std::istream& in) {
  std::map<std::string, std::vector<LabelRecord>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedRow, std::string("label JSONL: ") + e.what(), line_no);
    }
    LabelRecord r;
    try {
      r.cell_id = j.at("cell_id").get<std::string>();
      r.cumulative_discharge_ah = j.at("cumulative_discharge_ah").get<double>();
      if (!j.at("soh_pct").is_null()) r.soh_pct = j.at("soh_pct").get<double>();
      r.remaining_ah = j.at("remaining_ah").get<double>();
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedRow, std::string("label JSONL: ") + e.what(), line_no);
    }
    out[r.cell_id].push_back(std::move(r));
  }
  return out;
}

// ------------------------------------------------------------ reports

inline json to_json(const EvalReport& rep) {
  json cells = json::array();
  for (const auto& c : rep.per_cell) {
    cells.push_back({{"cell_id", c.cell_id},
                     {"n_windows", c.n_windows},
                     {"rmse_ah", c.rmse_ah},
                     {"mae_ah", c.mae_ah},
                     {"max_abs_err_ah", c.max_abs_err_ah}});
  }
  return {{"rmse_ah", rep.rmse_ah},
          {"mae_ah", rep.mae_ah},
          {"max_abs_err_ah", rep.max_abs_err_ah},
          {"n_windows", rep.n_windows},
          {"rmse_life_fraction", rep.rmse_life_fraction ? json(*rep.rmse_life_fraction) : json(nullptr)},
          {"per_cell", cells}};
}

inline std::string eval_report_table(const EvalReport& rep) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(4);
  ss << std::left << std::setw(14) << "cell" << std::right << std::setw(10) << "windows" << std::setw(12)
     << "rmse_ah" << std::setw(12) << "mae_ah" << std::setw(12) << "max_ah" << "\n";
  for (const auto& c : rep.per_cell) {
    ss << std::left << std::setw(14) << c.cell_id << std::right << std::setw(10) << c.n_windows << std::setw(12)
       << c.rmse_ah << std::setw(12) << c.mae_ah << std::setw(12) << c.max_abs_err_ah << "\n";
  }
  ss << std::left << std::setw(14) << "ALL" << std::right << std::setw(10) << rep.n_windows << std::setw(12)
     << rep.rmse_ah << std::setw(12) << rep.mae_ah << std::setw(12) << rep.max_abs_err_ah << "\n";
  if (rep.rmse_life_fraction) ss << "rmse / mean life: " << *rep.rmse_life_fraction << "\n";
  return ss.str();
}

inline std::string history_csv(const std::vector<EpochRecord>& history) {
  std::string out = "epoch,train_loss,val_rmse\n";
  for (const auto& h : history) {
    out += std::to_string(h.epoch);
    out.push_back(',');
    batrul::detail::append_double(out, h.train_loss);
    out.push_back(',');
    batrul::detail::append_double(out, h.val_rmse);
    out.push_back('\n');
  }
  return out;
}

// ------------------------------------------------------ window tensor file

namespace detail {

inline void put_f32_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

inline float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[b]) << (8 * b);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

/// One JSON header line, then count x W x 3 features and count targets, all
/// little-endian f32.
inline void write_window_file(std::ostream& out, const WindowSet& w) {
  json prov = json::array();
  for (const auto& p : w.provenance) prov.push_back({p.cell_id, p.row_begin, p.row_end});
  const json header = {{"W", w.window_len},
                       {"channels", std::vector<std::string>(kChannelNames.begin(), kChannelNames.end())},
                       {"count", w.count()},
                       {"dtype", "f32"},
                       {"byte_order", "little-endian"},
                       {"stride", w.stride},
                       {"normalized", w.normalized},
                       {"layout", "features[count][W][channels] then targets[count] (remaining_ah)"},
                       {"provenance", prov}};
  std::string buf = header.dump() + "\n";
  buf.reserve(buf.size() + 4 * (w.features.size() + w.targets.size()));
  for (const double v : w.features) detail::put_f32_le(buf, static_cast<float>(v));
  for (const double v : w.targets) detail::put_f32_le(buf, static_cast<float>(v));
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline WindowSet read_window_file(std::istream& in) {
  std::string header_line;
  if (!std::getline(in, header_line)) throw Error(Errc::EmptyFile, "window file has no header");
  const json h = parse_json(header_line, "window file header");
  if (h.value("dtype", "") != "f32" || h.value("byte_order", "") != "little-endian") {
    throw Error(Errc::InvalidConfig, "unsupported window file encoding");
  }
  WindowSet w;
  w.window_len = h.at("W").get<std::size_t>();
  w.stride = h.at("stride").get<std::size_t>();
  w.normalized = h.at("normalized").get<bool>();
  const auto count = h.at("count").get<std::size_t>();
  if (h.at("channels").size() != kNumChannels) throw Error(Errc::ShapeMismatch, "window file channel count");
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t n_feat = count * w.window_len * kNumChannels;
  if (payload.size() != 4 * (n_feat + count)) throw Error(Errc::MalformedRow, "window file payload size mismatch");
  const auto* p = reinterpret_cast<const unsigned char*>(payload.data());
  w.features.resize(n_feat);
  for (std::size_t i = 0; i < n_feat; ++i) w.features[i] = detail::get_f32_le(p + 4 * i);
  w.targets.resize(count);
  for (std::size_t i = 0; i < count; ++i) w.targets[i] = detail::get_f32_le(p + 4 * (n_feat + i));
  for (const auto& e : h.at("provenance")) {
    w.provenance.push_back({e.at(0).get<std::string>(), e.at(1).get<std::size_t>(), e.at(2).get<std::size_t>()});
  }
  return w;
}

}  // namespace batrul::io

// batrul: simulate, ingest, label, train, eval, predict.
//
// Exit codes: 0 ok, 2 invalid config / usage / bad input data, 3 I/O or
// corrupt checkpoint, 4 checkpoint version mismatch, 1 anything unexpected.

#include <CLI11.hpp>

#include <cstdio>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "batrul/batrul.hpp"

namespace fs = std::filesystem;
using batrul::Errc;
using batrul::Error;
using batrul::io::json;

namespace {

int exit_code_for(Errc c) {
  switch (c) {
    case Errc::Io:
    case Errc::CorruptCheckpoint:
      return 3;
    case Errc::VersionMismatch:
      return 4;
    default:
      return 2;
  }
}

void log_config(const std::string& command, const json& resolved) {
  std::cerr << json{{"command", command}, {"config", resolved}}.dump() << "\n";
}

json read_json_file(const std::string& path, const std::string& what) {
  return batrul::io::parse_json(batrul::io::read_file(path), what + " '" + path + "'");
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(Errc::Io, "cannot create directory '" + dir.string() + "'");
}

// Runs f(i) for i in [0, n) on up to `jobs` threads; results keep index order.
template <class F>
auto parallel_map(std::size_t n, std::size_t jobs, F&& f) {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> out;
  out.reserve(n);
  jobs = std::max<std::size_t>(1, jobs);
  for (std::size_t start = 0; start < n; start += jobs) {
    std::vector<std::future<R>> batch;
    for (std::size_t i = start; i < std::min(n, start + jobs); ++i) {
      batch.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, f, i));
    }
    for (auto& fut : batch) out.push_back(fut.get());
  }
  return out;
}

std::vector<batrul::CellSeries> load_all(const batrul::io::Manifest& m, std::size_t jobs) {
  return parallel_map(m.cells.size(), jobs, [&m](std::size_t i) { return batrul::io::load_cell(m, m.cells[i]); });
}

// ------------------------------------------------------------- simulate

struct SimulateOpts {
  std::string config;
  std::string out_dir;
  std::size_t n_cells = 10;
  std::uint64_t seed = 1;
  std::size_t jobs = 1;
  double fade_jitter = batrul::FleetJitter{}.fade_rel;
};

int cmd_simulate(const SimulateOpts& o) {
  batrul::SimConfig base;
  if (!o.config.empty()) base = batrul::io::sim_config_from_json(read_json_file(o.config, "sim config"));
  batrul::validate_sim_config(base);
  if (o.n_cells == 0) throw Error(Errc::InvalidConfig, "--n-cells must be >= 1");
  batrul::FleetJitter jitter;
  jitter.fade_rel = o.fade_jitter;
  log_config("simulate", {{"base", batrul::io::to_json(base)},
                          {"n_cells", o.n_cells},
                          {"seed", o.seed},
                          {"fade_jitter", o.fade_jitter},
                          {"out_dir", o.out_dir}});

  const fs::path dir(o.out_dir);
  make_dirs(dir);
  const auto fleet = batrul::simulate_fleet(base, o.n_cells, o.seed, jitter, o.jobs);
  std::vector<batrul::io::ManifestEntry> entries;
  for (const auto& r : fleet) {
    const std::string id = r.series.cell_id;
    {
      auto out = batrul::io::open_out(dir / (id + ".csv"), false);
      batrul::write_cell_csv(out, r.series);
      if (!out) throw Error(Errc::Io, "write failed for " + id);
    }
    {
      auto out = batrul::io::open_out(dir / (id + ".truth.csv"), false);
      batrul::write_truth_csv(out, r);
      if (!out) throw Error(Errc::Io, "write failed for " + id);
    }
    entries.push_back({id, id + ".csv", r.series.nominal_capacity_ah});
  }
  batrul::io::write_file(dir / "manifest.json", batrul::io::manifest_json(entries));
  std::cerr << "wrote " << fleet.size() << " cells to " << dir.string() << "\n";
  return 0;
}

// --------------------------------------------------------------- ingest

struct IngestOpts {
  std::string manifest;
  std::string out_dir;
  double deadband = batrul::kDefaultDeadbandA;
  std::size_t jobs = 1;
};

int cmd_ingest(const IngestOpts& o) {
  const auto m = batrul::io::read_manifest(o.manifest);
  log_config("ingest", {{"manifest", o.manifest}, {"out_dir", o.out_dir}, {"deadband_a", o.deadband}});
  if (m.cells.empty()) throw Error(Errc::InvalidConfig, "manifest lists no cells");
  const auto cells = load_all(m, o.jobs);
  std::vector<batrul::io::ManifestEntry> entries;
  for (const auto& s : cells) {
    std::map<std::string, std::size_t> counts{{"charge", 0}, {"discharge", 0}, {"rest", 0}};
    for (const auto& seg : batrul::segment_cycles(s, o.deadband)) {
      ++counts[seg.kind == batrul::CycleKind::Charge ? "charge"
               : seg.kind == batrul::CycleKind::Discharge ? "discharge"
                                                          : "rest"];
    }
    const auto profile = batrul::discharge_throughput_profile(s, o.deadband);
    std::cout << json{{"cell_id", s.cell_id},
                      {"samples", s.size()},
                      {"duration_s", s.samples.back().timestamp_s - s.samples.front().timestamp_s},
                      {"segments", counts},
                      {"discharge_ah", profile.back()}}
                     .dump()
              << "\n";
    if (!o.out_dir.empty()) {
      make_dirs(o.out_dir);
      auto out = batrul::io::open_out(fs::path(o.out_dir) / (s.cell_id + ".csv"), false);
      batrul::write_cell_csv(out, s);
      entries.push_back({s.cell_id, s.cell_id + ".csv", s.nominal_capacity_ah});
    }
  }
  if (!o.out_dir.empty()) {
    batrul::io::write_file(fs::path(o.out_dir) / "manifest.json", batrul::io::manifest_json(entries));
  }
  return 0;
}

// ---------------------------------------------------------------- label

struct LabelOpts {
  std::string manifest;
  std::string out;
  std::string report;
  double threshold = batrul::kManufacturerEolPct;
  double deadband = batrul::kDefaultDeadbandA;
  double v_high = batrul::FullDischargeCriteria{}.v_high;
  double v_low = batrul::FullDischargeCriteria{}.v_low;
  std::size_t jobs = 1;
};

int cmd_label(const LabelOpts& o) {
  const auto m = batrul::io::read_manifest(o.manifest);
  batrul::LabelOptions lo;
  lo.threshold_pct = o.threshold;
  lo.deadband_a = o.deadband;
  lo.criteria = {o.v_high, o.v_low};
  if (!(o.threshold > 0.0 && o.threshold <= 120.0)) throw Error(Errc::InvalidConfig, "--threshold must be in (0, 120]");
  if (o.deadband < 0.0) throw Error(Errc::InvalidConfig, "--deadband must be >= 0");
  const std::string report_path = o.report.empty() ? o.out + ".report.json" : o.report;
  log_config("label", {{"manifest", o.manifest},
                       {"threshold_pct", o.threshold},
                       {"deadband_a", o.deadband},
                       {"v_high", o.v_high},
                       {"v_low", o.v_low},
                       {"out", o.out},
                       {"report", report_path}});
  if (m.cells.empty()) throw Error(Errc::InvalidConfig, "manifest lists no cells");

  const auto labels = parallel_map(m.cells.size(), o.jobs, [&](std::size_t i) {
    return batrul::label_cell(batrul::io::load_cell(m, m.cells[i]), lo);
  });
  std::string jsonl;
  json cells = json::array();
  json censored = json::array();
  for (const auto& l : labels) {
    if (l.censored()) {
      censored.push_back({{"cell_id", l.cell_id}, {"reason", l.censor_reason}});
      std::cerr << "warning: cell " << l.cell_id << " censored: " << l.censor_reason << "\n";
      continue;
    }
    for (const auto& r : l.records) jsonl += batrul::io::label_jsonl_line(r);
    cells.push_back({{"cell_id", l.cell_id},
                     {"eol_throughput_ah", *l.eol_throughput_ah},
                     {"total_throughput_ah", l.total_throughput_ah},
                     {"reference_points", l.soh.size()},
                     {"records", l.records.size()}});
  }
  batrul::io::write_file(o.out, jsonl);
  const json report = {{"threshold_pct", o.threshold},
                       {"labeled", cells},
                       {"censored", censored},
                       {"n_labeled", cells.size()},
                       {"n_censored", censored.size()}};
  batrul::io::write_file(report_path, report.dump(2) + "\n");
  std::cerr << "labeled " << cells.size() << " cells, censored " << censored.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------- train

// Labeled cells of the manifest, in manifest order.
std::vector<batrul::CellData> labeled_cells(const batrul::io::Manifest& m, const std::string& labels_path,
                                            const batrul::TrainConfig& cfg, std::size_t jobs,
                                            const std::vector<std::string>* only = nullptr) {
  auto in = batrul::io::open_in(labels_path);
  const auto labels = batrul::io::read_labels_jsonl(in);
  std::vector<const batrul::io::ManifestEntry*> wanted;
  for (const auto& e : m.cells) {
    if (!labels.count(e.cell_id)) continue;
    if (only && std::find(only->begin(), only->end(), e.cell_id) == only->end()) continue;
    wanted.push_back(&e);
  }
  return parallel_map(wanted.size(), jobs, [&](std::size_t i) {
    const auto series = batrul::io::load_cell(m, *wanted[i]);
    return batrul::prepare_cell(series, labels.at(wanted[i]->cell_id), cfg);
  });
}

struct TrainOpts {
  std::string manifest;
  std::string labels;
  std::string config;
  std::string out;
  std::string history;
  std::string precision = "f64";
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
};

template <class T>
void train_and_save(const std::vector<batrul::CellData>& cells, const batrul::TrainConfig& cfg, const TrainOpts& o) {
  const auto res = batrul::train_pipeline<T>(cells, cfg);
  {
    auto out = batrul::io::open_out(o.out, true);
    batrul::save_bundle(res.bundle, out);
  }
  const std::string history_path = o.history.empty() ? o.out + ".history.csv" : o.history;
  batrul::io::write_file(history_path, batrul::io::history_csv(res.rul_history));
  std::cerr << json{{"autoencoder_initial_loss", res.ae_history.initial_loss},
                    {"autoencoder_final_loss", res.ae_history.loss.empty() ? res.ae_history.initial_loss
                                                                           : res.ae_history.loss.back()},
                    {"epochs_run", res.rul_history.size()},
                    {"best_epoch", res.best_epoch},
                    {"initial_train_rmse_ah", res.initial_train_rmse_ah},
                    {"final_train_rmse_ah", res.final_train_rmse_ah},
                    {"split", batrul::io::to_json(res.bundle.split)}}
                   .dump()
            << "\n";
}

int cmd_train(const TrainOpts& o) {
  batrul::TrainConfig cfg;
  if (!o.config.empty()) cfg = batrul::io::train_config_from_json(read_json_file(o.config, "train config"));
  if (o.seed) cfg.seed = *o.seed;
  batrul::validate_train_config(cfg);
  log_config("train", {{"manifest", o.manifest},
                       {"labels", o.labels},
                       {"out", o.out},
                       {"precision", o.precision},
                       {"train", batrul::io::to_json(cfg)}});
  const auto m = batrul::io::read_manifest(o.manifest);
  const auto cells = labeled_cells(m, o.labels, cfg, o.jobs);
  if (cells.size() < 3) throw Error(Errc::TooFewCells, "need at least 3 labeled cells, got " + std::to_string(cells.size()));
  if (o.precision == "f32") {
    train_and_save<float>(cells, cfg, o);
  } else {
    train_and_save<double>(cells, cfg, o);
  }
  return 0;
}

// ----------------------------------------------------------------- eval

struct EvalOpts {
  std::string checkpoint;
  std::string manifest;
  std::string labels;
  std::string split = "test";
  std::string out;
  std::size_t jobs = 1;
};

template <class T>
int eval_with(const std::string& bytes, const EvalOpts& o) {
  const auto bundle = batrul::deserialize_bundle<T>(bytes);
  const auto m = batrul::io::read_manifest(o.manifest);
  std::vector<std::string> ids;
  if (o.split == "test") ids = bundle.split.test;
  if (o.split == "val") ids = bundle.split.val;
  if (o.split == "train") ids = bundle.split.train;
  const auto cells = labeled_cells(m, o.labels, bundle.config, o.jobs, o.split == "all" ? nullptr : &ids);
  if (cells.empty()) throw Error(Errc::EmptyInput, "no labeled cells to evaluate in split '" + o.split + "'");
  std::vector<const batrul::CellData*> ptrs;
  std::map<std::string, double> life;
  for (const auto& c : cells) {
    ptrs.push_back(&c);
    life[c.cell_id] = c.eol_throughput_ah;
  }
  const auto windows = batrul::build_windows(ptrs, bundle.norm, bundle.config.window_len, bundle.config.stride);
  const auto report = batrul::evaluate(bundle, windows, &life);
  std::cout << batrul::io::eval_report_table(report);
  if (!o.out.empty()) batrul::io::write_file(o.out, batrul::io::to_json(report).dump(2) + "\n");
  return 0;
}

int cmd_eval(const EvalOpts& o) {
  if (o.split != "test" && o.split != "val" && o.split != "train" && o.split != "all") {
    throw Error(Errc::InvalidConfig, "--split must be test, val, train or all");
  }
  log_config("eval", {{"checkpoint", o.checkpoint},
                      {"manifest", o.manifest},
                      {"labels", o.labels},
                      {"split", o.split},
                      {"out", o.out}});
  const auto bytes = batrul::io::read_file(o.checkpoint);
  return batrul::checkpoint_precision(bytes) == "f32" ? eval_with<float>(bytes, o) : eval_with<double>(bytes, o);
}

// -------------------------------------------------------------- predict

struct PredictOpts {
  std::string checkpoint;
  std::string input = "-";
  bool header = false;
};

template <class T>
int predict_with(const std::string& bytes, const PredictOpts& o) {
  const auto bundle = batrul::deserialize_bundle<T>(bytes);
  std::ifstream file;
  std::istream* in = &std::cin;
  if (o.input != "-") {
    file = batrul::io::open_in(o.input);
    in = &file;
  }
  batrul::CellCsvReader reader(*in);
  batrul::OnlinePredictor<T> predictor(bundle);
  batrul::RawSample s;
  std::string line;
  bool header_done = !o.header;
  while (reader.next(s)) {
    for (const auto& e : predictor.push(s)) {
      if (!header_done) {
        std::cout << "timestamp_s,remaining_ah\n";
        header_done = true;
      }
      line.clear();
      batrul::detail::append_double(line, e.timestamp_s);
      line.push_back(',');
      batrul::detail::append_double(line, e.remaining_ah);
      line.push_back('\n');
      std::cout << line;
    }
  }
  std::cout.flush();
  return 0;
}

int cmd_predict(const PredictOpts& o) {
  log_config("predict", {{"checkpoint", o.checkpoint}, {"input", o.input}, {"header", o.header}});
  const auto bytes = batrul::io::read_file(o.checkpoint);
  return batrul::checkpoint_precision(bytes) == "f32" ? predict_with<float>(bytes, o)
                                                      : predict_with<double>(bytes, o);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Battery remaining-useful-life toolkit: simulate, label, train, evaluate and predict."};
  app.require_subcommand(1);

  SimulateOpts sim;
  auto* c_sim = app.add_subcommand("simulate", "Simulate a fleet of aging cells and write CSVs plus a manifest.");
  c_sim->add_option("--config", sim.config, "Simulator config JSON (missing keys keep defaults)");
  c_sim->add_option("--out-dir", sim.out_dir, "Output directory")->required();
  c_sim->add_option("--n-cells", sim.n_cells, "Number of cells")->capture_default_str();
  c_sim->add_option("--seed", sim.seed, "Fleet seed")->capture_default_str();
  c_sim->add_option("--fade-jitter", sim.fade_jitter, "Relative per-cell spread of the fade rate")
      ->capture_default_str();
  c_sim->add_option("--jobs", sim.jobs, "Parallel cells")->capture_default_str();

  IngestOpts ing;
  auto* c_ing = app.add_subcommand("ingest", "Validate and summarize the cells of a manifest.");
  c_ing->add_option("--manifest", ing.manifest, "Manifest JSON")->required();
  c_ing->add_option("--out-dir", ing.out_dir, "Write canonical CSVs and a manifest here");
  c_ing->add_option("--deadband", ing.deadband, "Current deadband (A) for segmentation")->capture_default_str();
  c_ing->add_option("--jobs", ing.jobs, "Parallel cells")->capture_default_str();

  LabelOpts lab;
  auto* c_lab = app.add_subcommand("label", "Compute SOH, EOL and remaining-Ah labels as JSONL.");
  c_lab->add_option("--manifest", lab.manifest, "Manifest JSON")->required();
  c_lab->add_option("--out", lab.out, "Output JSONL")->required();
  c_lab->add_option("--report", lab.report, "Censoring report JSON (default: <out>.report.json)");
  c_lab->add_option("--threshold", lab.threshold, "EOL threshold, percent of nominal")->capture_default_str();
  c_lab->add_option("--deadband", lab.deadband, "Current deadband (A)")->capture_default_str();
  c_lab->add_option("--v-high", lab.v_high, "Reference discharge must start above this voltage")
      ->capture_default_str();
  c_lab->add_option("--v-low", lab.v_low, "Reference discharge must end below this voltage")->capture_default_str();
  c_lab->add_option("--jobs", lab.jobs, "Parallel cells")->capture_default_str();

  TrainOpts tr;
  auto* c_tr = app.add_subcommand("train", "Train the autoencoder and LSTM regressor; write a checkpoint.");
  c_tr->add_option("--manifest", tr.manifest, "Manifest JSON")->required();
  c_tr->add_option("--labels", tr.labels, "Labels JSONL")->required();
  c_tr->add_option("--config", tr.config, "Training config JSON (missing keys keep defaults)");
  c_tr->add_option("--out", tr.out, "Checkpoint path")->required();
  c_tr->add_option("--history", tr.history, "History CSV (default: <out>.history.csv)");
  c_tr->add_option("--precision", tr.precision, "Stored precision")
      ->check(CLI::IsMember({"f32", "f64"}))
      ->capture_default_str();
  c_tr->add_option("--seed", tr.seed, "Override the config seed");
  c_tr->add_option("--jobs", tr.jobs, "Parallel cell loading")->capture_default_str();

  EvalOpts ev;
  auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint on labeled cells.");
  c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
  c_ev->add_option("--manifest", ev.manifest, "Manifest JSON")->required();
  c_ev->add_option("--labels", ev.labels, "Labels JSONL")->required();
  c_ev->add_option("--split", ev.split, "Cells to evaluate: test, val, train or all")->capture_default_str();
  c_ev->add_option("--out", ev.out, "Report JSON path");
  c_ev->add_option("--jobs", ev.jobs, "Parallel cell loading")->capture_default_str();

  PredictOpts pr;
  auto* c_pr = app.add_subcommand("predict", "Stream a cell CSV and print timestamp_s,remaining_ah estimates.");
  c_pr->add_option("--checkpoint", pr.checkpoint, "Checkpoint path")->required();
  c_pr->add_option("--input", pr.input, "Cell CSV, '-' for stdin")->capture_default_str();
  c_pr->add_flag("--header", pr.header, "Print a header line before the first estimate");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_sim) return cmd_simulate(sim);
    if (*c_ing) return cmd_ingest(ing);
    if (*c_lab) return cmd_label(lab);
    if (*c_tr) return cmd_train(tr);
    if (*c_ev) return cmd_eval(ev);
    if (*c_pr) return cmd_predict(pr);
  } catch (const Error& e) {
    std::cerr << "error [" << batrul::to_string(e.code()) << "]";
    if (e.line()) std::cerr << " line " << e.line();
    std::cerr << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const json::exception& e) {
    std::cerr << "error [InvalidConfig]: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [Io]: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

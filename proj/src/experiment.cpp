#include "cpdlab/experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "json.hpp"

namespace cpdlab {

namespace {

using nlohmann::json;

std::string shortest(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return HUGE_VAL;
  if (s == "-inf") return -HUGE_VAL;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::SchemaError, "results csv: bad number '" + s + "'");
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::SchemaError, "results csv: bad integer '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
void read_field(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) throw Error(ErrorCode::ConfigInvalid, std::string(where) + ": unknown key '" + key + "'");
  }
}

}  // namespace

void apply_preset(ExperimentConfig& config, ScalePreset preset) {
  if (preset == ScalePreset::Desk) {
    config.n_train = 200;
    config.n_test = 600;
    config.runs = 3;
  } else {
    config.n_train = 1000;
    config.n_test = 3000;
    config.runs = 5;
  }
}

ExperimentConfig parse_experiment_config(const std::string& json_text, ExperimentConfig base) {
  ExperimentConfig c = std::move(base);
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "config: top level must be an object");
    reject_unknown(j,
                   {"preset", "kernels", "models", "units", "dims", "runs", "activation", "p", "n_train",
                    "n_test", "alpha", "q", "half_width", "train", "seed", "jobs", "out"},
                   "config");
    if (j.contains("preset")) {
      const std::string preset = j.at("preset");
      if (preset == "desk") apply_preset(c, ScalePreset::Desk);
      else if (preset == "paper") apply_preset(c, ScalePreset::Paper);
      else throw Error(ErrorCode::ConfigInvalid, "config: preset must be 'desk' or 'paper'");
    }
    read_field(j, "kernels", c.kernels);
    if (j.contains("models")) {
      c.models.clear();
      for (const auto& m : j.at("models")) c.models.push_back(parse_head(m.get<std::string>()));
    }
    read_field(j, "units", c.units);
    read_field(j, "dims", c.dims);
    read_field(j, "runs", c.runs);
    if (j.contains("activation")) c.activation = parse_activation(j.at("activation").get<std::string>());
    read_field(j, "p", c.p);
    read_field(j, "n_train", c.n_train);
    read_field(j, "n_test", c.n_test);
    read_field(j, "alpha", c.alpha);
    read_field(j, "q", c.q);
    if (j.contains("half_width")) c.half_width = j.at("half_width").get<double>();
    read_field(j, "seed", c.seed);
    read_field(j, "jobs", c.jobs);
    read_field(j, "out", c.out);
    if (j.contains("train")) {
      const json& t = j.at("train");
      reject_unknown(t, {"iterations", "lr0", "l2", "loss", "schedule", "l2_groups"}, "config.train");
      read_field(t, "iterations", c.train.iterations);
      read_field(t, "lr0", c.train.lr0);
      read_field(t, "l2", c.train.l2);
      if (t.contains("loss")) {
        const std::string loss = t.at("loss");
        if (loss == "mse") c.train.loss = LossKind::Mse;
        else if (loss == "logistic") c.train.loss = LossKind::Logistic;
        else throw Error(ErrorCode::ConfigInvalid, "config.train.loss must be 'mse' or 'logistic'");
      }
      if (t.contains("schedule")) {
        const json& s = t.at("schedule");
        reject_unknown(s, {"mode", "gamma_step", "period", "lr_min"}, "config.train.schedule");
        if (s.contains("mode")) {
          const std::string mode = s.at("mode");
          if (mode == "step-floor") c.train.schedule.mode = LrSchedule::Mode::StepFloor;
          else if (mode == "paper-literal") c.train.schedule.mode = LrSchedule::Mode::PaperLiteral;
          else throw Error(ErrorCode::ConfigInvalid, "config.train.schedule.mode must be 'step-floor' or 'paper-literal'");
        }
        read_field(s, "gamma_step", c.train.schedule.gamma_step);
        read_field(s, "period", c.train.schedule.period);
        read_field(s, "lr_min", c.train.schedule.lr_min);
      }
      if (t.contains("l2_groups")) {
        const json& g = t.at("l2_groups");
        reject_unknown(g, {"weights", "biases", "offset_maps", "gamma"}, "config.train.l2_groups");
        read_field(g, "weights", c.train.l2_groups.weights);
        read_field(g, "biases", c.train.l2_groups.biases);
        read_field(g, "offset_maps", c.train.l2_groups.offset_maps);
        read_field(g, "gamma", c.train.l2_groups.gamma);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("config: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigInvalid) throw;
    throw Error(ErrorCode::ConfigInvalid, e.what());
  }
  validate(c);
  return c;
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::ConfigInvalid, what); };
  if (c.kernels.empty() || c.models.empty() || c.units.empty() || c.dims.empty())
    fail("config: kernels, models, units and dims must be non-empty");
  if (c.runs < 1) fail("config: runs must be >= 1");
  if (c.jobs < 1) fail("config: jobs must be >= 1");
  if (c.n_train < 2 || c.n_test < 2) fail("config: n_train and n_test must be >= 2");
  if (c.p < 1) fail("config: p must be >= 1");
  for (auto t : c.units) if (t < 1) fail("config: units must be >= 1");
  for (auto k : c.dims) if (k < 1) fail("config: dims must be >= 1");
  if (!(c.train.lr0 > 0.0)) fail("config: lr0 must be > 0");
  if (c.train.l2 < 0.0) fail("config: l2 must be >= 0");
  if (c.train.iterations < 1) fail("config: iterations must be >= 1");
  if (c.train.loss != LossKind::Mse) fail("config: the experiment grid trains with the mse loss");
  for (const auto& k : c.kernels) {
    try {
      const KernelSpec spec = parse_kernel(k, c.alpha, c.q);
      DatasetSpec d = default_dataset_spec(spec);
      d.p = c.p;
      validate(GroundTruthSpec{d.fstar, spec});
      if (d.fstar == FeatureTransform::PaperMap4D && c.p < 5) fail("config: kernel '" + k + "' needs p >= 5");
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigInvalid) throw;
      fail(std::string("config: ") + e.what());
    }
  }
}

// ---------------------------------------------------------------------------

CellKey key_of(const ResultRow& r) { return {r.kernel, r.model, r.T, r.K, r.run}; }

std::string results_csv_header() {
  return std::string("#schema=") + kResultsSchema +
         "\nkernel,model,T,K,run,seed,mspe,final_train_loss,gamma,wall_ms,status\n";
}

std::string format_result_row(const ResultRow& r) {
  char wall[32];
  std::snprintf(wall, sizeof(wall), "%.3f", r.wall_ms);
  std::ostringstream os;
  os << r.kernel << ',' << r.model << ',' << r.T << ',' << r.K << ',' << r.run << ',' << r.seed << ','
     << shortest(r.mspe) << ',' << shortest(r.final_train_loss) << ','
     << (r.gamma ? shortest(*r.gamma) : std::string()) << ',' << wall << ',' << r.status << '\n';
  return os.str();
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::SchemaError, "results csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != std::string("#schema=") + kResultsSchema)
    throw Error(ErrorCode::SchemaError, "results csv: missing '#schema=" + std::string(kResultsSchema) + "' line");
  if (!std::getline(in, line) || line != "kernel,model,T,K,run,seed,mspe,final_train_loss,gamma,wall_ms,status")
    throw Error(ErrorCode::SchemaError, "results csv: unexpected column header");
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    // A torn final line from an interrupted run is ignored; anything else
    // malformed is an error.
    if (cells.size() != 11) {
      if (in.peek() == EOF) break;
      throw Error(ErrorCode::SchemaError, "results csv: expected 11 columns");
    }
    ResultRow r;
    r.kernel = cells[0];
    r.model = cells[1];
    r.T = parse_u64(cells[2]);
    r.K = parse_u64(cells[3]);
    r.run = parse_u64(cells[4]);
    r.seed = parse_u64(cells[5]);
    r.mspe = parse_double(cells[6]);
    r.final_train_loss = parse_double(cells[7]);
    if (!cells[8].empty()) r.gamma = parse_double(cells[8]);
    r.wall_ms = parse_double(cells[9]);
    r.status = cells[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::uint64_t dataset_seed(std::uint64_t seed, const std::string& kernel, std::size_t run) {
  return derive_seed(seed, hash_key("data/" + kernel + "/" + std::to_string(run)));
}

std::uint64_t cell_seed(std::uint64_t seed, const std::string& kernel, Head model, std::size_t T,
                        std::size_t K, std::size_t run) {
  std::ostringstream key;
  key << "init/" << kernel << '/' << to_string(model) << '/' << T << '/' << K << '/' << run;
  return derive_seed(seed, hash_key(key.str()));
}

DatasetSpec dataset_spec_for(const ExperimentConfig& config, const std::string& kernel, std::size_t run) {
  DatasetSpec d = default_dataset_spec(parse_kernel(kernel, config.alpha, config.q),
                                       dataset_seed(config.seed, kernel, run));
  d.p = config.p;
  d.n_train = config.n_train;
  d.n_test = config.n_test;
  if (config.half_width) d.half_width = *config.half_width;
  return d;
}

ResultRow run_cell(const ExperimentConfig& config, const Dataset& dataset, const std::string& kernel, Head model,
                   std::size_t T, std::size_t K, std::size_t run, SimilarityModel* trained) {
  ResultRow row;
  row.kernel = kernel;
  row.model = to_string(model);
  row.T = T;
  row.K = K;
  row.run = run;
  row.seed = cell_seed(config.seed, kernel, model, T, K, run);

  ModelShape shape;
  shape.head = model;
  shape.kind = FeatureKind::Mlp;
  shape.input_dim = dataset.train.x.cols();
  shape.hidden = T;
  shape.output_dim = K;
  shape.activation = config.activation;
  Rng rng(row.seed);
  SimilarityModel m = make_model(shape, rng);
  try {
    const TrainReport report = gd_train(m, dataset, config.train);
    row.mspe = report.mspe_test;
    row.final_train_loss = report.final_train_loss;
    row.gamma = report.gamma;
    row.wall_ms = report.wall_ms;
  } catch (const DivergenceError& e) {
    row.status = "diverged";
    row.mspe = std::nan("");
    row.final_train_loss = std::nan("");
    row.gamma = e.report().gamma;
    row.wall_ms = e.report().wall_ms;
  }
  if (trained != nullptr) *trained = std::move(m);
  return row;
}

std::vector<ResultRow> run_experiment(const ExperimentConfig& config,
                                      const std::function<void(const ResultRow&)>& on_row) {
  validate(config);
  std::map<CellKey, ResultRow> done;
  std::ofstream out;
  if (!config.out.empty()) {
    const bool exists = std::filesystem::exists(config.out) && std::filesystem::file_size(config.out) > 0;
    if (exists) {
      for (auto& r : read_results_csv(config.out)) done.emplace(key_of(r), std::move(r));
      // Rewrite the file without a possibly torn trailing line.
      std::ofstream rewrite(config.out, std::ios::trunc);
      rewrite << results_csv_header();
      for (const auto& [key, r] : done) rewrite << format_result_row(r);
    } else {
      std::ofstream fresh(config.out, std::ios::trunc);
      if (!fresh) throw Error(ErrorCode::ConfigInvalid, "cannot write " + config.out);
      fresh << results_csv_header();
    }
    out.open(config.out, std::ios::app);
  }

  std::mutex writer;
  auto record = [&](const ResultRow& r) {
    std::lock_guard lock(writer);
    if (out.is_open()) {
      out << format_result_row(r);
      out.flush();
    }
    done.emplace(key_of(r), r);
    if (on_row) on_row(r);
  };

  struct Cell {
    Head model;
    std::size_t T, K;
  };
  for (const auto& kernel : config.kernels) {
    for (std::size_t run = 0; run < config.runs; ++run) {
      std::vector<Cell> todo;
      for (Head model : config.models)
        for (std::size_t T : config.units)
          for (std::size_t K : config.dims)
            if (!done.contains(CellKey{kernel, to_string(model), T, K, run})) todo.push_back({model, T, K});
      if (todo.empty()) continue;
      const Dataset dataset = synth_dataset(dataset_spec_for(config, kernel, run));

      if (config.jobs <= 1 || todo.size() == 1) {
        for (const Cell& c : todo) record(run_cell(config, dataset, kernel, c.model, c.T, c.K, run));
        continue;
      }
      std::atomic<std::size_t> next{0};
      std::exception_ptr failure;
      std::mutex failure_mutex;
      std::vector<std::jthread> workers;
      const std::size_t nworkers = std::min(config.jobs, todo.size());
      for (std::size_t w = 0; w < nworkers; ++w) {
        workers.emplace_back([&] {
#ifdef _OPENMP
          omp_set_num_threads(1);
#endif
          for (std::size_t i = next++; i < todo.size(); i = next++) {
            try {
              const Cell& c = todo[i];
              record(run_cell(config, dataset, kernel, c.model, c.T, c.K, run));
            } catch (...) {
              std::lock_guard lock(failure_mutex);
              if (!failure) failure = std::current_exception();
            }
          }
        });
      }
      workers.clear();
      if (failure) std::rethrow_exception(failure);
    }
  }

  std::vector<ResultRow> rows;
  for (const auto& kernel : config.kernels)
    for (Head model : config.models)
      for (std::size_t T : config.units)
        for (std::size_t K : config.dims)
          for (std::size_t run = 0; run < config.runs; ++run)
            rows.push_back(done.at(CellKey{kernel, to_string(model), T, K, run}));

  if (!config.out.empty()) {
    std::ofstream summary(config.out + ".summary.json", std::ios::trunc);
    summary << summary_json(summarize(rows)) << '\n';
  }
  return rows;
}

std::vector<CellSummary> summarize(const std::vector<ResultRow>& rows) {
  std::map<std::tuple<std::string, std::string, std::size_t, std::size_t>, std::vector<double>> groups;
  std::vector<std::tuple<std::string, std::string, std::size_t, std::size_t>> order;
  for (const auto& r : rows) {
    auto key = std::make_tuple(r.kernel, r.model, r.T, r.K);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) order.push_back(key);
    if (r.status == "ok" && std::isfinite(r.mspe)) it->second.push_back(r.mspe);
  }
  std::vector<CellSummary> out;
  for (const auto& key : order) {
    const auto& v = groups.at(key);
    CellSummary s{std::get<0>(key), std::get<1>(key), std::get<2>(key), std::get<3>(key), v.size(), 0.0, 0.0};
    if (v.empty()) {
      s.mean = std::nan("");
    } else {
      double sum = 0.0;
      for (double x : v) sum += x;
      s.mean = sum / static_cast<double>(v.size());
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(v.size() - 1));
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string summary_json(const std::vector<CellSummary>& cells) {
  json arr = json::array();
  for (const auto& c : cells) {
    json j{{"kernel", c.kernel}, {"model", c.model}, {"T", c.T}, {"K", c.K}, {"runs", c.runs}};
    j["mspe_mean"] = std::isfinite(c.mean) ? json(c.mean) : json(nullptr);
    j["mspe_std"] = c.stddev;
    arr.push_back(std::move(j));
  }
  return json{{"schema", kResultsSchema}, {"cells", std::move(arr)}}.dump(2);
}

}  // namespace cpdlab

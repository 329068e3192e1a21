// SPDX-License-Identifier: Apache-2.0
#include "spikemba/cli/commands.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "spikemba/core/errors.hpp"
#include "spikemba/data/synth.hpp"
#include "spikemba/model/checkpoint.hpp"
#include "spikemba/train/trainer.hpp"

namespace spikemba::cli {

namespace fs = std::filesystem;

namespace {

// Accepts "1000", "1k" and "2K" entries separated by commas.
std::vector<std::size_t> parse_size_list(const std::string& text, const char* what) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t mult = 1;
    if (!item.empty() && (item.back() == 'k' || item.back() == 'K')) {
      mult = 1000;
      item.pop_back();
    }
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (item.empty() || pos != item.size() || v == 0)
      throw ParseError(std::string(what) + ": '" + text + "' is not a list of positive integers", 0);
    out.push_back(static_cast<std::size_t>(v) * mult);
  }
  if (out.empty()) throw ParseError(std::string(what) + ": empty list", 0);
  return out;
}

struct RunInputs {
  std::optional<std::string> config;
  std::string data;
  std::optional<std::string> val;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

void add_run_options(CLI::App* cmd, RunInputs& in) {
  cmd->add_option("--config", in.config, "flat JSON run configuration");
  cmd->add_option("--data", in.data, "training set (JSON Lines, optionally .gz)")->required();
  cmd->add_option("--val", in.val, "validation set; default holds out val_fraction of --data");
  cmd->add_option("--seed", in.seed, "seed for initialization and shuffling");
  cmd->add_option("--set", in.overrides, "key=value override applied after --config");
}

train::RunConfig resolve_config(const RunInputs& in) {
  train::RunConfig cfg = in.config ? train::load_run_config(*in.config) : train::RunConfig{};
  for (const auto& o : in.overrides) train::apply_override(cfg, o);
  if (in.seed) cfg.seed = *in.seed;
  cfg.validate();
  return cfg;
}

struct Split {
  std::vector<data::GroundingSample> train, val;
};

Split load_split(const RunInputs& in, const train::RunConfig& cfg) {
  Split s;
  s.train = data::read_dataset(in.data);
  if (in.val) {
    s.val = data::read_dataset(*in.val);
  } else {
    const auto held = static_cast<std::size_t>(std::ceil(cfg.val_fraction * static_cast<double>(s.train.size())));
    const auto keep = s.train.size() - std::min(held, s.train.size());
    s.val.assign(s.train.begin() + static_cast<std::ptrdiff_t>(keep), s.train.end());
    s.train.resize(keep);
  }
  if (s.train.empty()) throw ContractError("no training samples in " + in.data);
  for (const auto* set : {&s.train, &s.val})
    for (const auto& sample : *set)
      if (sample.video.cols() != cfg.model.input_dim)
        throw ContractError("sample " + sample.sample_id + " has " + std::to_string(sample.video.cols()) +
                            " feature channels; the config expects input_dim " + std::to_string(cfg.model.input_dim));
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw ContractError("cannot write " + path.string());
  os << text << '\n';
}

std::vector<std::string> ids_of(std::span<const data::GroundingSample> samples) {
  std::vector<std::string> ids;
  for (const auto& s : samples) ids.push_back(s.sample_id);
  return ids;
}

void write_report(const fs::path& dir, std::span<const data::GroundingSample> samples, const train::Evaluation& ev) {
  objectives::write_metrics_json(dir / "metrics.json", ev.report);
  const auto ids = ids_of(samples);
  objectives::write_per_query_csv(dir / "per_query.csv", ids, ev.results);
}

int cmd_gen(const std::optional<std::string>& spec_path, std::size_t n, std::size_t first,
            const std::optional<std::uint64_t>& seed, const std::string& out_path, std::ostream& out) {
  data::TaskSpec spec;
  if (spec_path) {
    std::ifstream is(*spec_path);
    if (!is) throw ContractError("spec file not found: " + *spec_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("spec " + *spec_path + ": " + e.what(), 0);
    }
    spec = data::task_spec_from_json(j);
  }
  if (seed) spec.seed = *seed;
  spec.validate();
  data::write_dataset(data::generate(spec, n, first), out_path);
  out << "wrote " << n << " samples to " << out_path << '\n';
  return kOk;
}

int cmd_train(const RunInputs& in, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  const train::RunConfig cfg = resolve_config(in);
  const Split split = load_split(in, cfg);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const auto resolved = train::to_json(cfg);
  write_text(dir / "config.json", resolved.dump(2));
  out << "config " << resolved.dump() << '\n';
  out << "train " << split.train.size() << " samples, val " << split.val.size() << " samples\n";

  std::ofstream log(dir / "train_log.jsonl");
  if (!log) throw ContractError("cannot write " + (dir / "train_log.jsonl").string());
  model::SpikeMbaModel model(cfg.model, cfg.seed);
  train::TrainOutcome outcome;
  try {
    outcome = train::train_model(model, cfg, split.train, split.val, [&](const train::EpochLog& e) {
      const std::string line = train::epoch_json(e);
      log << line << '\n' << std::flush;
      out << line << '\n' << std::flush;
    });
  } catch (const train::TrainingAborted& e) {
    nlohmann::ordered_json dump;
    dump["error"] = e.what();
    dump["epoch"] = e.epoch();
    dump["batch"] = e.batch();
    dump["sample_ids"] = e.sample_ids();
    write_text(dir / "nan_batch.json", dump.dump(2));
    err << "numerical failure: " << e.what() << "\nbatch dump written to " << (dir / "nan_batch.json").string() << '\n';
    return kNumerical;
  }

  model::save_checkpoint(dir / "checkpoint.bin", model);
  if (!split.val.empty()) write_report(dir, split.val, train::evaluate_model(model, split.val));
  out << "best epoch " << outcome.best_epoch << " val R1@0.5 " << outcome.best_val.r1_05 << " mIoU "
      << outcome.best_val.miou << (outcome.early_stopped ? " (early stop)" : "")
      << (outcome.budget_exhausted ? " (time budget)" : "") << '\n';
  return kOk;
}

int cmd_eval(const std::optional<std::string>& checkpoint, const std::string& data_path, const std::string& out_dir,
             bool oracle, std::ostream& out) {
  if (!oracle && !checkpoint) throw ContractError("eval needs --checkpoint (or --oracle)");
  const auto samples = data::read_dataset(data_path);
  train::Evaluation ev;
  if (oracle) {
    for (const auto& s : samples) {
      objectives::QueryResult r;
      for (const auto& m : s.moments) {
        r.ground_truth.push_back(objectives::clip_interval(m.begin, m.end));
        r.predictions.push_back({r.ground_truth.back(), 1.0});
      }
      ev.results.push_back(std::move(r));
      ev.saliency.push_back(s.clip_saliency);
    }
    ev.report = objectives::evaluate(ev.results, ev.saliency);
  } else {
    auto model = model::load_checkpoint(*checkpoint);
    if (!samples.empty() && samples.front().video.cols() != model->config().input_dim)
      throw ContractError("data has " + std::to_string(samples.front().video.cols()) +
                          " feature channels; the checkpoint expects " + std::to_string(model->config().input_dim));
    ev = train::evaluate_model(*model, samples);
  }
  fs::create_directories(out_dir);
  write_report(out_dir, samples, ev);
  out << objectives::to_json(ev.report) << '\n';
  return kOk;
}

}  // namespace

std::vector<AblationRow> run_ablation(const std::string& what, std::span<const std::size_t> grid,
                                      const train::RunConfig& base, std::span<const data::GroundingSample> train,
                                      std::span<const data::GroundingSample> val) {
  std::vector<std::pair<std::string, train::RunConfig>> variants;
  if (what == "ssd" || what == "slots") {
    variants.emplace_back("full", base);
    auto off = base;
    if (what == "ssd") off.model.use_ssd = false;
    else off.model.slots = 0;
    variants.emplace_back(what == "ssd" ? "no_ssd" : "no_slots", off);
  } else if (what == "timesteps") {
    if (grid.empty()) throw ContractError("ablate timesteps needs a --grid of step counts");
    for (std::size_t t : grid) {
      auto c = base;
      c.model.lif.time_steps = t;
      variants.emplace_back("T=" + std::to_string(t), c);
    }
  } else {
    throw ContractError("unknown ablation '" + what + "' (expected ssd, slots or timesteps)");
  }
  std::vector<AblationRow> rows;
  for (auto& [name, cfg] : variants) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    model::SpikeMbaModel model(cfg.model, cfg.seed);
    const auto outcome = train::train_model(model, cfg, train, val);
    rows.push_back({name, cfg, outcome.best_val, outcome.epochs.size(),
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()});
  }
  return rows;
}

void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
  os << "variant,use_ssd,slots,time_steps,r1_05,r1_07,map_075,map_avg,miou,epochs,seconds\n";
  const auto flags = os.flags();
  os << std::setprecision(10);
  for (const auto& r : rows)
    os << r.variant << ',' << (r.config.model.use_ssd ? 1 : 0) << ',' << r.config.model.slots << ','
       << r.config.model.lif.time_steps << ',' << r.val.r1_05 << ',' << r.val.r1_07 << ',' << r.val.map_075 << ','
       << r.val.map_avg << ',' << r.val.miou << ',' << r.epochs << ',' << r.seconds << '\n';
  os.flags(flags);
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking saliency Mamba: synthetic grounding data, training, evaluation and benchmarks"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a synthetic grounding dataset");
  std::optional<std::string> spec_path;
  std::size_t gen_n = 0, gen_first = 0;
  std::optional<std::uint64_t> gen_seed;
  std::string gen_out;
  gen->add_option("--spec", spec_path, "task spec JSON; defaults apply to missing keys");
  gen->add_option("--n", gen_n, "number of samples")->required();
  gen->add_option("--first", gen_first, "index of the first sample");
  gen->add_option("--seed", gen_seed, "overrides the spec seed");
  gen->add_option("--out", gen_out, "output path; a .gz suffix compresses")->required();

  auto* tr = app.add_subcommand("train", "train a model and write checkpoint, log and validation report");
  RunInputs train_in;
  std::string train_out;
  add_run_options(tr, train_in);
  tr->add_option("--out", train_out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
  std::optional<std::string> eval_ckpt;
  std::string eval_data, eval_out;
  bool oracle = false;
  ev->add_option("--checkpoint", eval_ckpt, "checkpoint.bin written by train");
  ev->add_option("--data", eval_data, "dataset to score")->required();
  ev->add_option("--out", eval_out, "output directory")->required();
  ev->add_flag("--oracle", oracle, "score the ground truth itself instead of a model");

  auto* ab = app.add_subcommand("ablate", "train matched variants and compare validation metrics");
  RunInputs ablate_in;
  std::string what, grid_text;
  std::optional<std::string> ablate_out;
  add_run_options(ab, ablate_in);
  ab->add_option("--what", what, "ssd, slots or timesteps")->required();
  ab->add_option("--grid", grid_text, "comma-separated step counts for timesteps");
  ab->add_option("--out", ablate_out, "directory for ablation.csv");

  auto* bench = app.add_subcommand("bench", "time a kernel across sequence lengths");
  std::string kernel, sizes_text = "1k,2k,4k,8k";
  std::size_t repeats = 5;
  std::optional<std::string> bench_out;
  bench->add_option("--kernel", kernel, "scan, conv or lif")->required();
  bench->add_option("--sizes", sizes_text, "comma-separated lengths; k multiplies by 1000");
  bench->add_option("--repeats", repeats, "timings per size; the best is kept");
  bench->add_option("--out", bench_out, "CSV output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen(spec_path, gen_n, gen_first, gen_seed, gen_out, out);
    if (*tr) return cmd_train(train_in, train_out, out, err);
    if (*ev) return cmd_eval(eval_ckpt, eval_data, eval_out, oracle, out);
    if (*ab) {
      if (what != "ssd" && what != "slots" && what != "timesteps")
        throw ContractError("unknown ablation '" + what + "' (expected ssd, slots or timesteps)");
      const auto grid = what == "timesteps" ? parse_size_list(grid_text, "--grid") : std::vector<std::size_t>{};
      const auto cfg = resolve_config(ablate_in);
      const auto split = load_split(ablate_in, cfg);
      const auto rows = run_ablation(what, grid, cfg, split.train, split.val);
      write_ablation_csv(out, rows);
      if (ablate_out) {
        fs::create_directories(*ablate_out);
        std::ofstream os(fs::path(*ablate_out) / "ablation.csv");
        if (!os) throw ContractError("cannot write ablation.csv under " + *ablate_out);
        write_ablation_csv(os, rows);
      }
      return kOk;
    }
    if (*bench) {
      const auto sizes = parse_size_list(sizes_text, "--sizes");
      const auto rows = bench_kernel(kernel, sizes, repeats);
      std::ostringstream csv;
      csv << "kernel,size,seconds\n" << std::setprecision(6);
      for (const auto& r : rows) csv << kernel << ',' << r.size << ',' << r.seconds << '\n';
      out << csv.str();
      if (bench_out) {
        std::ofstream os(*bench_out);
        if (!os) throw ContractError("cannot write " + *bench_out);
        os << csv.str();
      }
      if (rows.size() >= 2) {
        const double k = loglog_exponent(rows);
        out << "# loglog_exponent " << k << '\n';
        if (kernel == "scan") out << "# linear_scaling " << (k < 1.2 ? "PASS" : "FAIL") << " (exponent < 1.2)\n";
        if (kernel == "conv") out << "# quadratic_scaling " << (k >= 1.7 ? "PASS" : "FAIL") << " (exponent >= 1.7)\n";
      }
      return kOk;
    }
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const ParseError& e) {
    err << "error: " << e.what();
    if (e.line() > 0) err << " (line " << e.line() << ')';
    err << '\n';
    return kUsage;
  } catch (const std::logic_error& e) {  // ContractError, DomainError, DimensionError
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {  // I/O failures
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
  return kUsage;
}

}  // namespace spikemba::cli

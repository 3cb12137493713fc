// SPDX-License-Identifier: Apache-2.0
// mlasdi command-line front end: datagen, train, eval, predict.
#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mlasdi/mlasdi.hpp"

namespace {

using namespace mlasdi;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> stages;
  std::optional<std::size_t> threads;
  std::string out;
};

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("mlasdi");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("MLASDI_LOG");
  const std::string level = env == nullptr ? "info" : env;
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    fail(ErrorKind::config, "MLASDI_LOG must be error, info or debug, got '" + level + "'");
  }
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig cfg = f.config.empty() ? parse_run_config("") : load_run_config(f.config);
  if (f.seed) cfg.train.seed = *f.seed;
  if (f.threads) cfg.train.threads = *f.threads;
  validate_run_config(cfg);
  std::cout << "# resolved config\n" << to_string(cfg) << "# end config\n";
  return cfg;
}

std::string timing_path(const std::string& checkpoint) { return checkpoint + ".timing"; }

std::vector<double> read_timings(const std::string& checkpoint) {
  std::ifstream in(timing_path(checkpoint));
  std::vector<double> seconds;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || line.rfind("train_seconds_stage_", 0) != 0) continue;
    const std::size_t k = std::stoul(line.substr(20, eq - 20));
    if (seconds.size() < k) seconds.resize(k, 0.0);
    seconds[k - 1] = std::stod(line.substr(eq + 1));
  }
  return seconds;
}

void write_timings(const std::string& checkpoint, const std::vector<double>& seconds) {
  std::ostringstream o;
  double total = 0.0;
  for (std::size_t k = 0; k < seconds.size(); ++k) {
    o << "train_seconds_stage_" << (k + 1) << '=' << format_double(seconds[k]) << '\n';
    total += seconds[k];
  }
  o << "train_seconds_total=" << format_double(total) << '\n';
  const std::string s = o.str();
  io::write_file(timing_path(checkpoint), std::vector<std::uint8_t>(s.begin(), s.end()));
}

SnapshotTensor load_data(const RunConfig& cfg, const std::string& flag) {
  const std::string path = flag.empty() ? cfg.data.path : flag;
  if (path.empty()) fail(ErrorKind::config, "no data file: pass --data or set data.path");
  SnapshotTensor u = load_snapshots(path);
  spdlog::info("loaded {}: {} parameters, {} snapshots, state dim {}", path, u.n_params(), u.n_times(),
               u.state_dim());
  return u;
}

std::vector<std::size_t> training_indices(const RunConfig& cfg, const SnapshotTensor& u) {
  const ParamGrid& grid = cfg.data.grid;
  if (cfg.n_train > u.n_params()) {
    fail(ErrorKind::config, "n_train " + std::to_string(cfg.n_train) + " exceeds the " +
                                std::to_string(u.n_params()) + " parameters in the data file");
  }
  if (cfg.n_train == u.n_params()) {
    std::vector<std::size_t> all(u.n_params());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  if (grid.size() != u.n_params() || u.param_dims() != grid.dims()) {
    fail(ErrorKind::config, "data file holds " + std::to_string(u.n_params()) + " parameters but the configured grid has " +
                                std::to_string(grid.size()));
  }
  const DenseMatrix points = grid.points();
  for (std::size_t p = 0; p < points.rows(); ++p) {
    for (std::size_t d = 0; d < points.cols(); ++d) {
      if (std::abs(points(p, d) - u.params(p, d)) > 1e-9) {
        fail(ErrorKind::config, "data file parameters do not match the configured grid at index " + std::to_string(p));
      }
    }
  }
  return select_training_params(grid, cfg.n_train, cfg.train.seed);
}

void check_resume_compatible(const StageStack& stack, const TrainConfig& cfg, const SnapshotTensor& train) {
  const TrainConfig& c = stack.config;
  auto mismatch = [](const std::string& what) {
    fail(ErrorKind::config, "checkpoint/config mismatch: " + what + " differs");
  };
  if (c.beta1 != cfg.beta1) mismatch("train.beta1");
  if (c.beta2 != cfg.beta2) mismatch("train.beta2");
  if (c.lr != cfg.lr) mismatch("train.lr");
  if (c.iterations != cfg.iterations) mismatch("train.iterations");
  if (c.latent_dim != cfg.latent_dim) mismatch("model.latent_dim");
  if (c.hidden != cfg.hidden) mismatch("model.hidden");
  if (c.seed != cfg.seed) mismatch("train.seed");
  if (stack.state_dim != train.state_dim() || stack.train_params != train.params || stack.dt != train.dt) {
    mismatch("training data");
  }
}

int cmd_datagen(const CommonFlags& f) {
  const RunConfig cfg = resolve_config(f);
  if (cfg.data.source != "generate") fail(ErrorKind::config, "datagen needs data.source = generate");
  const std::string out = f.out.empty() ? "snapshots.mlsd" : f.out;
  const SnapshotTensor u = generate_pulse_dataset(cfg.data.grid, cfg.data.nx, cfg.data.nt, cfg.data.dt);
  save_snapshots(u, out);
  std::cout << "n_params=" << u.n_params() << "\nn_times=" << u.n_times() << "\nstate_dim=" << u.state_dim() << '\n';
  spdlog::info("wrote {}", out);
  return 0;
}

int cmd_train(const CommonFlags& f, const std::string& data_flag, const std::string& resume) {
  const RunConfig cfg = resolve_config(f);
  const std::string data_path = data_flag.empty() ? cfg.data.path : data_flag;
  const SnapshotTensor all = load_data(cfg, data_flag);
  const std::vector<std::size_t> idx = training_indices(cfg, all);
  const SnapshotTensor train = all.subset(idx);
  const std::size_t stages = f.stages.value_or(cfg.train.n_stages());
  const std::string out = f.out.empty() ? "model.mlck" : f.out;
  spdlog::info("training {} stage(s) on {} parameters", stages, idx.size());

  std::vector<StageTiming> timings;
  std::vector<double> seconds;
  StageStack stack;
  if (resume.empty()) {
    stack = train_stack(train, cfg.train, stages, &timings);
  } else {
    stack = load_checkpoint(resume);
    check_resume_compatible(stack, cfg.train, train);
    if (stack.data.indices != idx) fail(ErrorKind::config, "checkpoint/config mismatch: training parameters differ");
    stack.config.threads = cfg.train.threads;
    seconds = read_timings(resume);
    seconds.resize(stack.n_stages(), 0.0);
    spdlog::info("resuming from {} with {} stage(s)", resume, stack.n_stages());
    resume_training(stack, train, stages, &timings);
  }
  stack.data = {data_path, idx};
  for (const auto& t : timings) {
    spdlog::info("stage {}: {:.3f} s, final loss {:.6e}", t.stage, t.seconds, t.final_loss);
    seconds.resize(t.stage, 0.0);
    seconds[t.stage - 1] = t.seconds;
  }
  double total = 0.0;
  for (double s : seconds) total += s;
  spdlog::info("total training time {:.3f} s", total);
  save_checkpoint(stack, out);
  write_timings(out, seconds);
  std::cout << "stages=" << stack.n_stages() << "\nparam_count=" << stack.parameter_count() << '\n';
  spdlog::info("wrote {}", out);
  return 0;
}

int cmd_eval(const CommonFlags& f, const std::string& data_flag, const std::string& checkpoint,
             const std::string& summary_flag) {
  if (checkpoint.empty()) fail(ErrorKind::argument, "eval needs --checkpoint");
  const RunConfig cfg = resolve_config(f);
  const StageStack stack = load_checkpoint(checkpoint);
  const SnapshotTensor all = load_data(cfg, data_flag);
  std::vector<std::size_t> chosen;
  if (cfg.eval.test == "train") {
    chosen = stack.data.indices;
  } else {
    for (std::size_t p = 0; p < all.n_params(); ++p) {
      const bool trained =
          std::find(stack.data.indices.begin(), stack.data.indices.end(), p) != stack.data.indices.end();
      if (cfg.eval.test == "all" || !trained) chosen.push_back(p);
    }
  }
  const SnapshotTensor test = all.subset(chosen);
  std::optional<std::size_t> cutoff;
  if (f.stages) {
    cutoff = f.stages;
  } else if (cfg.eval.stage != 0) {
    cutoff = cfg.eval.stage;
  }
  ErrorReport report = evaluate_stack(stack, test, cutoff, cfg.train.threads);
  report.train_seconds = read_timings(checkpoint);
  if (report.train_seconds.size() > report.stage_cutoff) report.train_seconds.resize(report.stage_cutoff);

  const std::string csv_path = f.out.empty() ? cfg.eval.csv : f.out;
  const std::string summary_path = summary_flag.empty() ? cfg.eval.summary : summary_flag;
  std::ostringstream csv, summary;
  write_report_csv(report, csv);
  write_report_summary(report, summary);
  const std::string c = csv.str();
  io::write_file(csv_path, std::vector<std::uint8_t>(c.begin(), c.end()));
  const std::string s = summary.str();
  io::write_file(summary_path, std::vector<std::uint8_t>(s.begin(), s.end()));
  std::cout << "stage_cutoff=" << report.stage_cutoff << "\nn_test=" << test.n_params() << '\n' << s;
  spdlog::info("wrote {} and {}", csv_path, summary_path);
  return 0;
}

int cmd_predict(const CommonFlags& f, const std::string& data_flag, const std::string& checkpoint,
                const std::vector<double>& mu, std::optional<std::size_t> steps) {
  if (checkpoint.empty()) fail(ErrorKind::argument, "predict needs --checkpoint");
  const RunConfig cfg = resolve_config(f);
  const StageStack stack = load_checkpoint(checkpoint);
  if (mu.size() != stack.train_params.cols()) {
    fail(ErrorKind::argument, "--mu has " + std::to_string(mu.size()) + " components, checkpoint expects " +
                                  std::to_string(stack.train_params.cols()));
  }
  std::vector<double> u0;
  std::size_t n_steps = steps.value_or(cfg.data.nt);
  if (!data_flag.empty()) {
    const SnapshotTensor u = load_snapshots(data_flag);
    const std::size_t p = u.find_param(mu, 1e-12);
    if (p == u.n_params()) fail(ErrorKind::argument, "parameter not present in " + data_flag);
    const auto ic = u.initial_condition(p);
    u0.assign(ic.begin(), ic.end());
    if (!steps) n_steps = u.n_times() - 1;
  } else {
    u0 = pulse_initial_condition(mu, stack.state_dim);
  }
  const DenseMatrix traj = predict(stack, mu, u0, n_steps, f.stages);
  std::ostringstream o;
  o << 't';
  for (std::size_t i = 0; i < traj.cols(); ++i) o << ",u_" << (i + 1);
  o << '\n';
  for (std::size_t j = 0; j < traj.rows(); ++j) {
    o << format_double(static_cast<double>(j) * stack.dt);
    for (double v : traj.row(j)) o << ',' << format_double(v);
    o << '\n';
  }
  const std::string out = f.out.empty() ? "prediction.csv" : f.out;
  const std::string s = o.str();
  io::write_file(out, std::vector<std::uint8_t>(s.begin(), s.end()));
  spdlog::info("wrote {} ({} snapshots)", out, traj.rows());
  return 0;
}

void add_common(CLI::App* sub, CommonFlags& f, bool with_stages) {
  sub->add_option("--config", f.config, "run configuration file");
  sub->add_option("--seed", f.seed, "override train.seed");
  sub->add_option("--threads", f.threads, "override train.threads")->check(CLI::PositiveNumber);
  sub->add_option("--out", f.out, "output path");
  if (with_stages) sub->add_option("--stages", f.stages, "number of stages")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-stage latent space dynamics identification"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string data, checkpoint, resume, summary;
  std::vector<double> mu;
  std::optional<std::size_t> steps;

  auto* datagen = app.add_subcommand("datagen", "generate the pulse snapshot dataset");
  add_common(datagen, flags, false);
  auto* train = app.add_subcommand("train", "train a multi-stage model");
  add_common(train, flags, true);
  train->add_option("--data", data, "snapshot file");
  train->add_option("--resume", resume, "checkpoint to continue from");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a snapshot file");
  add_common(eval, flags, true);
  eval->add_option("--data", data, "snapshot file");
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval->add_option("--summary", summary, "summary output path");
  auto* pred = app.add_subcommand("predict", "predict one trajectory as CSV");
  add_common(pred, flags, true);
  pred->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  pred->add_option("--mu", mu, "parameter vector, comma separated")->delimiter(',')->required();
  pred->add_option("--data", data, "snapshot file providing the initial condition");
  pred->add_option("--steps", steps, "number of time steps");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[argument]: " << e.what() << '\n';
    return 2;
  }

  try {
    configure_logging();
    if (*datagen) return cmd_datagen(flags);
    if (*train) return cmd_train(flags, data, resume);
    if (*eval) return cmd_eval(flags, data, checkpoint, summary);
    return cmd_predict(flags, data, checkpoint, mu, steps);
  } catch (const Error& e) {
    std::cerr << "error[" << kind_name(e.kind()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << '\n';
    return 1;
  }
}

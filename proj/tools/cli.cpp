#include "cli.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <filesystem>
#include <fstream>
#include <optional>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <fmt/ranges.h>
#include <spdlog/spdlog.h>

#include "parkvision/bench.hpp"
#include "parkvision/config.hpp"
#include "parkvision/dataset.hpp"
#include "parkvision/errors.hpp"
#include "parkvision/experiment.hpp"
#include "parkvision/ingest.hpp"
#include "parkvision/metrics.hpp"
#include "parkvision/model.hpp"
#include "parkvision/registry.hpp"
#include "parkvision/scheduler.hpp"
#include "parkvision/train.hpp"
#include "parkvision/web.hpp"

namespace fs = std::filesystem;

namespace pv::cli {

namespace {

struct Globals {
  std::uint64_t seed = 0;
  std::string log_level = "info";
};

struct TrainArgs {
  fs::path data;
  fs::path out;
  std::vector<std::string> lots;
  Hyperparams hp;
  bool no_freeze = false;
  bool full_scale = false;
  double split_ratio = 0.5;
  std::uint64_t split_seed = 0;
};

struct EvalArgs {
  fs::path model;
  fs::path data = "data";
  fs::path out = ".";
  std::vector<std::string> train_lots;
  std::vector<std::string> test_lots;
  double split_ratio = 0.5;
  std::uint64_t split_seed = 0;
};

struct CrossEvalArgs {
  fs::path data;
  fs::path out = ".";
  std::vector<std::string> lots;
  Hyperparams hp;
  bool no_freeze = false;
  double split_ratio = 0.5;
  std::uint64_t split_seed = 0;
};

struct SynthArgs {
  fs::path out;
  std::vector<std::string> lots{"SYNTH"};
  std::size_t n = 100;
};

struct ServiceArgs {
  fs::path config;
  std::string listen;
  bool once = false;
};

struct BenchArgs {
  fs::path model;
  std::size_t n = 200;
  std::size_t stalls = 300;
  std::string machine;
};

// Blocks SIGINT/SIGTERM in every thread started afterwards and waits for one
// on a dedicated thread, then runs `on_signal`.
class SignalWatcher {
 public:
  explicit SignalWatcher(std::function<void()> on_signal) {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    sigaddset(&set_, SIGUSR1);
    pthread_sigmask(SIG_BLOCK, &set_, &old_);
    thread_ = std::thread([this, cb = std::move(on_signal)] {
      int sig = 0;
      sigwait(&set_, &sig);
      if (sig != SIGUSR1) {
        spdlog::info("received {}, shutting down", sig == SIGINT ? "SIGINT" : "SIGTERM");
        cb();
      }
    });
  }
  ~SignalWatcher() {
    pthread_kill(thread_.native_handle(), SIGUSR1);
    thread_.join();
    pthread_sigmask(SIG_SETMASK, &old_, nullptr);
  }
  SignalWatcher(const SignalWatcher&) = delete;
  SignalWatcher& operator=(const SignalWatcher&) = delete;

 private:
  sigset_t set_{};
  sigset_t old_{};
  std::thread thread_;
};

void add_hyperparams(CLI::App* cmd, Hyperparams& hp, bool& no_freeze) {
  cmd->add_option("--iterations", hp.iterations, "SGD iterations")->capture_default_str();
  cmd->add_option("--batch", hp.batch_size, "Mini-batch size")->capture_default_str();
  cmd->add_option("--lr", hp.lr, "Initial learning rate")->capture_default_str();
  cmd->add_option("--lr-decay", hp.lr_decay_factor, "Step decay factor")->capture_default_str();
  cmd->add_option("--lr-decay-every", hp.lr_decay_every, "Iterations between decays")->capture_default_str();
  cmd->add_option("--weight-decay", hp.weight_decay, "L2 weight decay")->capture_default_str();
  cmd->add_flag("--no-freeze", no_freeze, "Also train the convolutional layers");
}

std::vector<std::string> resolve_lots(const DatasetIndex& index, const std::vector<std::string>& requested) {
  if (requested.empty()) return index.lots();
  for (const auto& lot : requested) {
    if (!index.has_lot(lot)) {
      throw ConfigError(fmt::format("lot '{}' is not in the dataset (have: {})", lot, fmt::join(index.lots(), ", ")));
    }
  }
  return requested;
}

void print_reports(std::ostream& out, const std::vector<EvalReport>& reports) {
  fmt::print(out, "{:<20} {:<20} {:>8} {:>8} {:>8} {:>6} {:>6}\n", "train", "test", "auc", "fpr", "fnr", "pos", "neg");
  for (const auto& r : reports) {
    fmt::print(out, "{:<20} {:<20} {:>8.4f} {:>8.4f} {:>8.4f} {:>6} {:>6}\n", lot_set_name(r.train_lots),
               lot_set_name(r.test_lots), r.auc, r.fpr_at_half, r.fnr_at_half, r.positive_count, r.negative_count);
  }
}

int run_synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
  for (std::size_t i = 0; i < a.lots.size(); ++i) {
    SynthOptions opts;
    opts.n_per_label = a.n;
    opts.lot = a.lots[i];
    opts.seed = g.seed + i;
    const fs::path dir = synth_generate(a.out, opts);
    fmt::print(out, "wrote {} vacant + {} occupied crops to {}\n", a.n, a.n, dir.string());
  }
  return kExitOk;
}

int run_train(TrainArgs a, const Globals& g, std::ostream& out) {
  const DatasetIndex all = scan_tree(a.data);
  const auto lots = resolve_lots(all, a.lots);
  const Split parts = split(all.filter_lots(lots), a.split_ratio, a.split_seed);
  if (parts.train.empty()) throw ConfigError("the train split is empty");

  ModelSpec spec = a.full_scale ? ModelSpec::full_scale() : ModelSpec::desk();
  spec.seed = g.seed;
  a.hp.seed = g.seed;
  a.hp.freeze_conv = !a.no_freeze;
  Model model = build(spec);
  model.set_channel_means(channel_means(parts.train, model.input_format()));

  const TrainReport report = fine_tune(model, parts.train, a.hp);
  save(model, a.out);
  fmt::print(out, "trained on {} crops from {} in {:.1f} s; train accuracy {:.4f}; wrote {}\n", parts.train.size(),
             fmt::join(lots, "+"), report.wall_time_s, report.final_train_accuracy, a.out.string());
  return kExitOk;
}

int run_eval(const EvalArgs& a, std::ostream& out) {
  const Model model = load(a.model);
  const DatasetIndex all = scan_tree(a.data);
  const auto test_lots = resolve_lots(all, a.test_lots);
  const Split parts = split(all, a.split_ratio, a.split_seed);
  const auto reports = evaluate_model(model, parts.test, a.train_lots, test_lots);
  const auto files = emit(reports, a.out);
  print_reports(out, reports);
  for (const auto& f : files) fmt::print(out, "wrote {}\n", f.string());
  return kExitOk;
}

int run_cross_eval(CrossEvalArgs a, const Globals& g, std::ostream& out) {
  const DatasetIndex all = scan_tree(a.data);
  const auto lots = resolve_lots(all, a.lots);
  ExperimentPlan base;
  base.hp = a.hp;
  base.hp.seed = g.seed;
  base.hp.freeze_conv = !a.no_freeze;
  base.spec.seed = g.seed;
  base.split_ratio = a.split_ratio;
  base.split_seed = a.split_seed;
  std::vector<EvalReport> reports;
  for (const auto& plan : cross_lot_plans(lots, base)) {
    spdlog::info("training on {}", lot_set_name(plan.train_lots));
    auto result = run_experiment(plan, all);
    reports.insert(reports.end(), result.reports.begin(), result.reports.end());
  }
  const auto files = emit(reports, a.out);
  print_reports(out, reports);
  for (const auto& f : files) fmt::print(out, "wrote {}\n", f.string());
  return kExitOk;
}

struct Service {
  AppConfig config;
  std::unique_ptr<Registry> registry;
  std::unique_ptr<CnnDetector> detector;
  std::unique_ptr<Ingestor> ingestor;
};

Service open_service(const fs::path& config_path, bool need_model) {
  Service s;
  s.config = load_config(config_path);
  fs::create_directories(s.config.data_dir);
  s.registry = std::make_unique<Registry>(s.config.database_path());
  apply_config(s.config, *s.registry);
  if (s.config.model_path) {
    s.detector = std::make_unique<CnnDetector>(load(*s.config.model_path));
    s.ingestor = std::make_unique<Ingestor>(*s.registry, *s.detector);
  } else if (need_model) {
    throw ConfigError(fmt::format("{}: [detector] model is required for ingest", config_path.string()));
  }
  return s;
}

int run_serve(const ServiceArgs& a, std::ostream& out) {
  Service s = open_service(a.config, false);
  const ListenAddress addr = parse_listen(a.listen.empty() ? s.config.listen : a.listen);
  WebService web(*s.registry, {s.config.admin_token, s.config.static_dir});
  std::optional<Scheduler> scheduler;
  {
    SignalWatcher watcher([&web] { web.stop(); });
    const int port = web.bind(addr.host, addr.port);
    if (s.ingestor) {
      scheduler.emplace(*s.ingestor, Scheduler::persisted_cameras(*s.registry));
      scheduler->start();
    } else {
      spdlog::warn("no [detector] model configured; serving the registry without polling cameras");
    }
    fmt::print(out, "listening on http://{}:{}\n", addr.host, port);
    out.flush();
    web.serve();
  }
  if (scheduler) scheduler->stop();
  return kExitOk;
}

int run_ingest(const ServiceArgs& a, std::ostream& out) {
  Service s = open_service(a.config, true);
  if (a.once) {
    for (const auto& lot : s.registry->list_lots()) {
      if (lot.camera_ids.empty()) continue;
      const IngestStats st = s.ingestor->ingest_cycle(lot.lot_id);
      const LotSummary sum = s.registry->summary(lot.lot_id);
      fmt::print(out, "{}: {} stalls updated, {} failures; {}/{} free, {} unknown\n", lot.lot_id, st.stalls_updated,
                 st.failures, sum.free, sum.total, sum.unknown);
    }
    return kExitOk;
  }
  Scheduler scheduler(*s.ingestor, Scheduler::persisted_cameras(*s.registry));
  std::mutex m;
  std::condition_variable cv;
  bool stop = false;
  {
    SignalWatcher watcher([&] {
      std::lock_guard lock(m);
      stop = true;
      cv.notify_all();
    });
    scheduler.start();
    std::unique_lock lock(m);
    cv.wait(lock, [&] { return stop; });
  }
  scheduler.stop();
  return kExitOk;
}

int run_bench_cmd(const BenchArgs& a, const Globals& g, std::ostream& out) {
  const Model model = load(a.model);
  BenchOptions opts;
  opts.n = a.n;
  opts.stalls = a.stalls;
  opts.seed = g.seed;
  opts.machine = a.machine;
  write_bench_csv(out, run_bench(model, opts));
  return kExitOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Parking-stall vacancy detection: training, evaluation, serving and ingestion", "parkvision"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for initialisation, sampling and synthetic data")->capture_default_str();
  app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}))
      ->capture_default_str();

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth-data", "Write a synthetic labelled crop tree");
  synth_cmd->add_option("--out", synth.out, "Output root")->required();
  synth_cmd->add_option("--n", synth.n, "Crops per label per lot")->capture_default_str();
  synth_cmd->add_option("--lot", synth.lots, "Lot name (repeatable)")->capture_default_str();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Fine-tune a model on the train split of a crop tree");
  train_cmd->add_option("--data", train.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", train.out, "Model file to write")->required();
  train_cmd->add_option("--lots", train.lots, "Lots to train on (default: all)")->delimiter(',');
  train_cmd->add_option("--split-ratio", train.split_ratio, "Train fraction")->capture_default_str();
  train_cmd->add_option("--split-seed", train.split_seed, "Split seed")->capture_default_str();
  train_cmd->add_flag("--full-scale", train.full_scale, "Use the 224x224 full-scale network");
  add_hyperparams(train_cmd, train.hp, train.no_freeze);

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score a model on the held-out split and write report.csv");
  eval_cmd->add_option("--model", eval.model, "Model file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval.data, "Dataset root")->capture_default_str();
  eval_cmd->add_option("--out", eval.out, "Report directory")->capture_default_str();
  eval_cmd->add_option("--train-lots", eval.train_lots, "Lots the model was trained on (label only)")
      ->delimiter(',');
  eval_cmd->add_option("--test-lots", eval.test_lots, "Lots to evaluate (default: all)")->delimiter(',');
  eval_cmd->add_option("--split-ratio", eval.split_ratio, "Train fraction used when training")->capture_default_str();
  eval_cmd->add_option("--split-seed", eval.split_seed, "Split seed used when training")->capture_default_str();

  CrossEvalArgs cross;
  auto* cross_cmd = app.add_subcommand("cross-eval", "Train and evaluate every cross-lot design");
  cross_cmd->add_option("--data", cross.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
  cross_cmd->add_option("--out", cross.out, "Report directory")->capture_default_str();
  cross_cmd->add_option("--lots", cross.lots, "Lots to include (default: all)")->delimiter(',');
  cross_cmd->add_option("--split-ratio", cross.split_ratio, "Train fraction")->capture_default_str();
  cross_cmd->add_option("--split-seed", cross.split_seed, "Split seed")->capture_default_str();
  add_hyperparams(cross_cmd, cross.hp, cross.no_freeze);

  ServiceArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API (and camera polling when a model is configured)");
  serve_cmd->add_option("--config", serve.config, "Service config file")->required()->check(CLI::ExistingFile);
  serve_cmd->add_option("--listen", serve.listen, "host:port, overrides [server] listen");

  ServiceArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Poll cameras and update the stall registry");
  ingest_cmd->add_option("--config", ingest.config, "Service config file")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_flag("--once", ingest.once, "Run one ingest cycle per lot and exit");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time single-crop inference and print a CSV report");
  bench_cmd->add_option("--model", bench.model, "Model file")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--n", bench.n, "Warmup and timed runs")->capture_default_str()->check(CLI::PositiveNumber);
  bench_cmd->add_option("--stalls", bench.stalls, "Stall count for the projected refresh time")->capture_default_str();
  bench_cmd->add_option("--machine", bench.machine, "Machine label (default: CPU model name)");

  if (args.empty()) {
    fmt::print(err, "{}", app.help());
    return kExitUsage;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    fmt::print(out, "{}", app.help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    fmt::print(out, "{}", app.help("", CLI::AppFormatMode::All));
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    fmt::print(err, "error: {}\n\n{}", e.what(), app.help());
    return kExitUsage;
  }

  spdlog::set_level(spdlog::level::from_str(g.log_level));
  try {
    if (*synth_cmd) return run_synth(synth, g, out);
    if (*train_cmd) return run_train(train, g, out);
    if (*eval_cmd) return run_eval(eval, out);
    if (*cross_cmd) return run_cross_eval(cross, g, out);
    if (*serve_cmd) return run_serve(serve, out);
    if (*ingest_cmd) return run_ingest(ingest, out);
    if (*bench_cmd) return run_bench_cmd(bench, g, out);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    fmt::print(err, "error: {}\n", e.what());
    return kExitRuntime;
  }
  fmt::print(err, "{}", app.help());
  return kExitUsage;
}

}  // namespace pv::cli

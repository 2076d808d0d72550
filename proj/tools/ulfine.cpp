// ulfine: command-line front end for synthesis, splitting, training,
// evaluation, ablation and report handling.
//
// Exit codes: 0 success, 2 configuration/input error, 3 numeric abort.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ulfine/config.hpp"
#include "ulfine/data.hpp"
#include "ulfine/error.hpp"
#include "ulfine/metrics.hpp"
#include "ulfine/prototypes.hpp"
#include "ulfine/trainer.hpp"

namespace fs = std::filesystem;
using namespace ulfine;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "Flat key = value config file");
  cmd->add_option("--set", args.overrides, "Override one key (KEY=VALUE), repeatable");
  cmd->add_option("--seed", args.seed, "Seed (highest priority)");
  cmd->add_option("--out", args.out, "Output directory");
}

/// Precedence, lowest first: defaults, ULFINE_SEED, config file, --set, --seed.
TrainConfig effective_config(const CommonArgs& args, const std::map<std::string, std::string>& base = {}) {
  TrainConfig cfg;
  for (const auto& [k, v] : base) apply_setting(cfg, k, v);
  if (const char* env = std::getenv("ULFINE_SEED")) apply_setting(cfg, "train.seed", env);
  if (!args.config_path.empty()) apply_config_file(cfg, args.config_path);
  for (const auto& o : args.overrides) apply_override(cfg, o);
  if (args.seed) cfg.seed = *args.seed;
  cfg.data.split.class_count = cfg.data.classes;
  cfg.validate();
  return cfg;
}

void print_config(const TrainConfig& cfg) {
  std::cerr << "# effective configuration\n" << config_text(cfg);
}

void write_config(const TrainConfig& cfg, const fs::path& dir) {
  std::ofstream os(dir / "config.txt", std::ios::trunc);
  os << config_text(cfg);
}

fs::path require_file(const fs::path& p) {
  if (!fs::exists(p)) throw ConfigError("missing input file '" + p.string() + "'");
  return p;
}

TrainData load_train_data(const fs::path& dir, const TrainConfig& cfg) {
  TrainData data;
  data.labeled = load_embeddings(require_file(dir / "labeled.ulfe"));
  data.unlabeled = load_embeddings(require_file(dir / "unlabeled.ulfe"));
  data.test = load_embeddings(require_file(dir / "test.ulfe"));
  data.labeled.normalize();
  data.unlabeled.normalize();
  data.test.normalize();
  const auto text_path = dir / "text_prototypes.ulfe";
  if (fs::exists(text_path)) {
    data.text = load_text_prototypes(text_path, data.labeled.class_count(), data.labeled.dim());
  } else {
    data.text = synthetic_text_prototypes(data.labeled.class_count(), data.labeled.dim(), derive_seed(cfg.seed, 3));
  }
  return data;
}

int cmd_synth(const CommonArgs& args) {
  const TrainConfig cfg = effective_config(args);
  print_config(cfg);
  const fs::path out(args.out);
  fs::create_directories(out);
  const SyntheticCorpus corpus = synthesize_corpus(cfg.data, cfg.seed);
  save_embeddings(corpus.pool, out / "pool.ulfe");
  save_embeddings(corpus.test, out / "test.ulfe");
  save_text_prototypes(corpus.text, out / "text_prototypes.ulfe");
  write_config(cfg, out);
  std::cout << "wrote " << corpus.pool.rows() << " pool rows, " << corpus.test.rows() << " test rows, "
            << corpus.text.rows.rows() << " text prototypes (D=" << corpus.pool.dim() << ") to " << out << '\n';
  return kExitOk;
}

int cmd_split(const CommonArgs& args, const std::string& data_dir) {
  const TrainConfig cfg = effective_config(args);
  print_config(cfg);
  const fs::path in(data_dir);
  const fs::path out(args.out);
  fs::create_directories(out);
  const EmbeddingSet pool = load_embeddings(require_file(in / "pool.ulfe"));
  const SplitIndices split = build_split(pool, cfg.data.split, derive_seed(cfg.seed, 4));
  save_embeddings(subset(pool, split.labeled), out / "labeled.ulfe");
  save_embeddings(subset(pool, split.unlabeled), out / "unlabeled.ulfe");
  if (fs::absolute(in) != fs::absolute(out)) {
    for (const char* name : {"test.ulfe", "text_prototypes.ulfe"}) {
      if (fs::exists(in / name)) fs::copy_file(in / name, out / name, fs::copy_options::overwrite_existing);
    }
  }
  write_config(cfg, out);
  std::cout << "labeled " << split.labeled.size() << ", unlabeled " << split.unlabeled.size() << " -> " << out << '\n';
  return kExitOk;
}

int cmd_train(const CommonArgs& args, const std::string& data_dir, const std::string& resume_path, bool paper_scale) {
  std::optional<Checkpoint> resume;
  if (!resume_path.empty()) resume = load_checkpoint(require_file(resume_path));
  TrainConfig cfg = effective_config(args, resume ? resume->config : std::map<std::string, std::string>{});
  if (paper_scale) cfg.iterations = kPaperScaleIterations;
  print_config(cfg);
  const fs::path out(args.out);
  fs::create_directories(out);
  write_config(cfg, out);
  Trainer trainer(cfg, load_train_data(data_dir, cfg));
  try {
    RunResult result = trainer.run(resume ? std::optional<TrainState>(resume->state) : std::nullopt,
                                   [](const RunReport& r) {
                                     std::cerr << "iter " << r.iteration << " acc " << r.overall_accuracy << " S "
                                               << r.stability << '\n';
                                   });
    emit_report(result.reports, out / "report");
    save_checkpoint(result.final_state, trainer.config(), out / "checkpoint.ulfc");
    std::cout << "final iteration " << result.final_state.iteration << ", accuracy "
              << result.reports.back().overall_accuracy << ", reports in " << out / "report.jsonl" << '\n';
  } catch (const TrainingAborted& e) {
    save_checkpoint(e.state(), trainer.config(), out / "abort.ulfc");
    std::cerr << "numeric abort: " << e.what() << "\nstate dumped to " << out / "abort.ulfc" << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}

int cmd_eval(const CommonArgs& args, const std::string& data_dir, const std::string& checkpoint_path) {
  const Checkpoint ck = load_checkpoint(require_file(checkpoint_path));
  const TrainConfig cfg = effective_config(args, ck.config);
  TrainData data = load_train_data(data_dir, cfg);
  if (data.test.dim() != ck.state.params.dim() || data.test.class_count() != ck.state.params.classes()) {
    throw DimensionError("checkpoint is C=" + std::to_string(ck.state.params.classes()) + ", D=" +
                         std::to_string(ck.state.params.dim()) + " but the test set is C=" +
                         std::to_string(data.test.class_count()) + ", D=" + std::to_string(data.test.dim()));
  }
  Trainer trainer(cfg, std::move(data));
  const RunReport report = trainer.evaluate(ck.state);
  const fs::path out(args.out);
  fs::create_directories(out);
  std::vector<RunReport> series{report};
  emit_report(series, out / "eval");
  std::cout << to_jsonl_line(report) << '\n';
  return kExitOk;
}

int cmd_ablate(const CommonArgs& args, const std::string& data_dir, const std::string& arms_csv) {
  const TrainConfig cfg = effective_config(args);
  print_config(cfg);
  std::vector<std::string> arms;
  std::stringstream ss(arms_csv);
  for (std::string a; std::getline(ss, a, ',');) {
    if (!a.empty()) arms.push_back(a);
  }
  for (const auto& a : arms) (void)arm_config(cfg, a);
  const TrainData data = load_train_data(data_dir, cfg);
  const fs::path out(args.out);
  fs::create_directories(out);
  write_config(cfg, out);
  std::vector<ArmResult> results;
  try {
    results = ablation_matrix(cfg, data, arms);
  } catch (const TrainingAborted& e) {
    save_checkpoint(e.state(), cfg, out / "abort.ulfc");
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  }
  for (const auto& r : results) {
    fs::create_directories(out / r.arm);
    emit_report(r.reports, out / r.arm / "report");
  }
  const std::string table = ablation_table(results);
  std::ofstream(out / "ablation.txt", std::ios::trunc) << table;
  std::cout << table;
  return kExitOk;
}

int cmd_report(const std::string& in, const std::string& csv_out) {
  const auto reports = read_report_jsonl(require_file(in));
  if (reports.empty()) throw FormatError("'" + in + "' holds no records");
  std::cout << csv_header() << '\n';
  for (const auto& r : reports) std::cout << to_csv_row(r) << '\n';
  if (!csv_out.empty()) {
    fs::path stem(csv_out);
    stem.replace_extension();
    emit_report(reports, stem);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ulfine: long-tailed semi-supervised fine-tuning over frozen embeddings"};
  app.require_subcommand(1);

  CommonArgs synth_args, split_args, train_args, eval_args, ablate_args;
  std::string split_data = ".", train_data = ".", eval_data = ".", ablate_data = ".";
  std::string resume_path, checkpoint_path, report_in, report_csv;
  std::string arms = "lp,lp_adapter,paf,dlf,full";
  bool paper_scale = false;

  auto* synth = app.add_subcommand("synth", "Write synthetic pool/test embeddings and text prototypes");
  add_common(synth, synth_args);

  auto* split = app.add_subcommand("split", "Draw the long-tailed labeled/unlabeled split from pool.ulfe");
  add_common(split, split_args);
  split->add_option("--data", split_data, "Directory holding pool.ulfe");

  auto* train = app.add_subcommand("train", "Train and write reports plus a checkpoint");
  add_common(train, train_args);
  train->add_option("--data", train_data, "Directory with labeled/unlabeled/test(.ulfe) and optional text_prototypes.ulfe");
  train->add_option("--resume", resume_path, "Checkpoint to continue from");
  train->add_flag("--paper-scale", paper_scale, "Use the 15k-iteration schedule");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test set");
  add_common(eval, eval_args);
  eval->add_option("--data", eval_data, "Data directory");
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the component ablation arms");
  add_common(ablate, ablate_args);
  ablate->add_option("--data", ablate_data, "Data directory");
  ablate->add_option("--arms", arms, "Comma-separated arms (lp,lp_adapter,paf,dlf,full)");

  auto* report = app.add_subcommand("report", "Print a JSONL report as CSV, optionally re-emitting files");
  report->add_option("--in", report_in, "report.jsonl")->required();
  report->add_option("--csv", report_csv, "Write <stem>.csv and <stem>.jsonl here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(synth_args);
    if (*split) return cmd_split(split_args, split_data);
    if (*train) return cmd_train(train_args, train_data, resume_path, paper_scale);
    if (*eval) return cmd_eval(eval_args, eval_data, checkpoint_path);
    if (*ablate) return cmd_ablate(ablate_args, ablate_data, arms);
    if (*report) return cmd_report(report_in, report_csv);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "ulfine/data.hpp"
#include "ulfine/metrics.hpp"
#include "ulfine/trainer.hpp"

namespace fs = std::filesystem;
using namespace ulfine;

namespace {

const std::string kCli = ULFINE_CLI_PATH;
const std::string kSmall = " --set data.classes=4 --set data.dim=8 --set data.head_labeled=20 --set data.labeled_imbalance=5"
                           " --set data.head_unlabeled=40 --set data.unlabeled_imbalance=5 --set data.test_per_class=20"
                           " --set model.rank=2";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ulfine_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

/// synth + split into `dir`.
void prepare(const fs::path& dir, const std::string& extra = "") {
  ASSERT_EQ(run("synth --out " + dir.string() + kSmall + extra), 0);
  ASSERT_EQ(run("split --data " + dir.string() + " --out " + dir.string() + kSmall + extra), 0);
}

}  // namespace

TEST(Cli, SynthWritesLoadableFilesDeterministically) {
  const fs::path a = scratch("synth_a"), b = scratch("synth_b");
  ASSERT_EQ(run("synth --seed 7 --out " + a.string() + kSmall), 0);
  ASSERT_EQ(run("synth --seed 7 --out " + b.string() + kSmall), 0);
  for (const char* f : {"pool.ulfe", "test.ulfe", "text_prototypes.ulfe"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
  const EmbeddingSet pool = load_embeddings(a / "pool.ulfe");
  EXPECT_EQ(pool.dim(), 8u);
  EXPECT_EQ(pool.class_count(), 4u);
  EXPECT_EQ(pool.rows(), 4u * 60u);
  EXPECT_NE(slurp(a / "config.txt").find("train.seed = 7"), std::string::npos);
}

TEST(Cli, SplitProducesLongTailedCounts) {
  const fs::path dir = scratch("split");
  prepare(dir);
  const EmbeddingSet labeled = load_embeddings(dir / "labeled.ulfe");
  std::vector<std::size_t> counts(4, 0);
  for (auto y : labeled.labels()) ++counts[y];
  EXPECT_EQ(counts, class_counts(20, 5, 4));
  EXPECT_EQ(class_counts(40, 5, 4), (std::vector<std::size_t>{40, 23, 13, 8}));
  EXPECT_EQ(load_embeddings(dir / "unlabeled.ulfe").rows(), 40u + 23u + 13u + 8u);
}

TEST(Cli, TrainEvalAndReport) {
  const fs::path dir = scratch("train");
  prepare(dir);
  const fs::path out = dir / "run";
  const std::string train = "train --data " + dir.string() + " --out " + out.string() + kSmall +
                            " --set train.iterations=30 --set train.eval_every=10";
  ASSERT_EQ(run(train), 0);
  for (const char* f : {"report.jsonl", "report.csv", "checkpoint.ulfc", "config.txt"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  const auto reports = read_report_jsonl(out / "report.jsonl");
  ASSERT_EQ(reports.size(), 4u);
  EXPECT_EQ(reports.back().iteration, 30u);
  EXPECT_EQ(reports.back().config.at("train.iterations"), "30");

  // Same seed and config: identical report files.
  const fs::path again = dir / "run2";
  ASSERT_EQ(run("train --data " + dir.string() + " --out " + again.string() + kSmall +
                " --set train.iterations=30 --set train.eval_every=10"),
            0);
  EXPECT_EQ(slurp(out / "report.jsonl"), slurp(again / "report.jsonl"));
  EXPECT_EQ(slurp(out / "report.csv"), slurp(again / "report.csv"));
  EXPECT_EQ(slurp(out / "checkpoint.ulfc"), slurp(again / "checkpoint.ulfc"));

  // Standalone evaluation reproduces the final in-training record. The loss
  // fields are training-step means and the checkpoint starts a fresh window.
  const fs::path ev = dir / "eval";
  ASSERT_EQ(run("eval --checkpoint " + (out / "checkpoint.ulfc").string() + " --data " + dir.string() + " --out " +
                ev.string()),
            0);
  RunReport evaluated = read_report_jsonl(ev / "eval.jsonl").at(0);
  EXPECT_EQ(evaluated.loss.total, 0.0);
  evaluated.loss = reports.back().loss;
  EXPECT_EQ(evaluated, reports.back());
  const fs::path ev2 = dir / "eval2";
  ASSERT_EQ(run("eval --checkpoint " + (out / "checkpoint.ulfc").string() + " --data " + dir.string() + " --out " +
                ev2.string()),
            0);
  EXPECT_EQ(slurp(ev / "eval.jsonl"), slurp(ev2 / "eval.jsonl"));

  // Resume to 50 iterations equals a straight 50-iteration run.
  const fs::path resumed = dir / "resumed";
  ASSERT_EQ(run("train --data " + dir.string() + " --out " + resumed.string() + " --resume " +
                (out / "checkpoint.ulfc").string() + " --set train.iterations=50"),
            0);
  const fs::path straight = dir / "straight";
  ASSERT_EQ(run("train --data " + dir.string() + " --out " + straight.string() + kSmall +
                " --set train.iterations=50 --set train.eval_every=10"),
            0);
  const auto r_resumed = read_report_jsonl(resumed / "report.jsonl");
  const auto r_straight = read_report_jsonl(straight / "report.jsonl");
  ASSERT_EQ(r_resumed.size(), 2u);
  EXPECT_EQ(r_resumed[0], r_straight[4]);
  EXPECT_EQ(r_resumed[1], r_straight[5]);

  const fs::path rep = dir / "rep";
  fs::create_directories(rep);
  EXPECT_EQ(run("report --in " + (out / "report.jsonl").string() + " --csv " + (rep / "copy.csv").string()), 0);
  EXPECT_EQ(slurp(rep / "copy.csv"), slurp(out / "report.csv"));
}

TEST(Cli, ZeroIterationsEmitsInitialRecord) {
  const fs::path dir = scratch("zero");
  ASSERT_EQ(run("synth --out " + dir.string()), 0);
  ASSERT_EQ(run("split --data " + dir.string() + " --out " + dir.string()), 0);
  ASSERT_EQ(run("train --data " + dir.string() + " --out " + (dir / "run").string() + " --set train.iterations=0"), 0);
  const auto reports = read_report_jsonl(dir / "run" / "report.jsonl");
  ASSERT_EQ(reports.size(), 1u);
  EXPECT_EQ(reports[0].iteration, 0u);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("codes");
  EXPECT_EQ(run("train --data " + (dir / "missing").string() + " --out " + dir.string()), 2);
  EXPECT_EQ(run("train --set no.such.key=1 --out " + dir.string()), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_EQ(run("synth --set fusion.eta=2 --out " + dir.string()), 2);
  EXPECT_EQ(run("synth --set data.dim=1 --out " + dir.string()), 2);

  prepare(dir);
  EXPECT_EQ(run("train --data " + dir.string() + " --out " + (dir / "boom").string() + kSmall +
                " --set train.learning_rate=1e300 --set train.iterations=20"),
            3);
  EXPECT_TRUE(fs::exists(dir / "boom" / "abort.ulfc"));

  const fs::path other = scratch("codes_other");
  ASSERT_EQ(run("synth --out " + other.string() + " --set data.dim=6 --set data.classes=4 --set model.rank=2"), 0);
  EXPECT_EQ(run("train --data " + dir.string() + " --out " + (dir / "run").string() + kSmall +
                " --set train.iterations=5"),
            0);
  fs::copy_file(other / "test.ulfe", dir / "test.ulfe", fs::copy_options::overwrite_existing);
  EXPECT_EQ(run("eval --checkpoint " + (dir / "run" / "checkpoint.ulfc").string() + " --data " + dir.string() +
                " --out " + (dir / "ev").string()),
            2);
}

TEST(Cli, SeedPrecedence) {
  const fs::path dir = scratch("seed");
  std::ofstream(dir / "cfg.txt") << "train.seed = 5\n";
  const std::string base = "synth --out " + dir.string() + kSmall;
  ASSERT_EQ(std::system(("ULFINE_SEED=3 " + kCli + " " + base + " >/dev/null 2>&1").c_str()), 0);
  EXPECT_NE(slurp(dir / "config.txt").find("train.seed = 3"), std::string::npos);
  ASSERT_EQ(std::system(("ULFINE_SEED=3 " + kCli + " " + base + " --config " + (dir / "cfg.txt").string() +
                         " >/dev/null 2>&1")
                            .c_str()),
            0);
  EXPECT_NE(slurp(dir / "config.txt").find("train.seed = 5"), std::string::npos);
  ASSERT_EQ(run(base + " --config " + (dir / "cfg.txt").string() + " --set train.seed=6"), 0);
  EXPECT_NE(slurp(dir / "config.txt").find("train.seed = 6"), std::string::npos);
  ASSERT_EQ(run(base + " --set train.seed=6 --seed 9"), 0);
  EXPECT_NE(slurp(dir / "config.txt").find("train.seed = 9"), std::string::npos);
}

TEST(Cli, AblateWritesOneReportPerArmAndTable) {
  const fs::path dir = scratch("ablate");
  prepare(dir);
  const fs::path out = dir / "abl";
  ASSERT_EQ(run("ablate --data " + dir.string() + " --out " + out.string() + kSmall + " --set train.iterations=10"), 0);
  for (const auto& arm : kAblationArms) {
    EXPECT_TRUE(fs::exists(out / arm / "report.jsonl")) << arm;
    EXPECT_TRUE(fs::exists(out / arm / "report.csv")) << arm;
    EXPECT_EQ(read_report_jsonl(out / arm / "report.jsonl").back().arm, arm);
  }
  const std::string table = slurp(out / "ablation.txt");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 6);
  EXPECT_EQ(run("ablate --arms lp,nope --data " + dir.string() + " --out " + out.string() + kSmall), 2);
}

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "numcast_cli_test.log";
  const std::string cmd = std::string(NUMCAST_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::ostringstream s;
  s << in.rdbuf();
  r.out = s.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

double field(const std::string& text, const std::string& key) {
  std::smatch m;
  const std::regex re(key + ": (-?[0-9.]+)");
  REQUIRE(std::regex_search(text, m, re));
  return std::stod(m[1]);
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("numcast_cli_" + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("gen-data is deterministic and prints a summary") {
    TempDir d;
    const auto a = run("gen-data --calls 50 --seed 7 --out " + (d / "a.jsonl"));
    const auto b = run("gen-data --calls 50 --seed 7 --out " + (d / "b.jsonl"));
    CHECK(a.code == 0);
    CHECK(b.code == 0);
    CHECK(slurp(d / "a.jsonl") == slurp(d / "b.jsonl"));
    CHECK(a.out.find("calls=50") != std::string::npos);
    CHECK(a.out.find("numerals.percentage=") != std::string::npos);
  }

  TEST_CASE("zero calls writes an empty corpus with a header") {
    TempDir d;
    CHECK(run("gen-data --calls 0 --seed 1 --out " + (d / "e.jsonl")).code == 0);
    const std::string text = slurp(d / "e.jsonl");
    CHECK(text.find("\"schema\":\"numcast-corpus\"") != std::string::npos);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  }

  TEST_CASE("exit codes") {
    TempDir d;
    CHECK(run("pretrain --task bogus --corpus x").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("gen-data --calls 5 --seed 1 --out /nonexistent/dir/c.jsonl").code == 5);
    CHECK(run("train --corpus " + (d / "missing.jsonl") + " --out " + (d / "o")).code == 5);
    CHECK(run("train --set horizons=5 --corpus x").code == 2);
    {
      std::ofstream bad(d / "bad.jsonl");
      bad << "{\"schema\":\"numcast-corpus\",\"version\":2,\"calls\":0}\n";
    }
    CHECK(run("train --corpus " + (d / "bad.jsonl") + " --out " + (d / "o")).code == 3);
  }

  TEST_CASE("staged runs need their checkpoints") {
    TempDir d;
    REQUIRE(run("gen-data --calls 40 --seed 2 --out " + (d / "c.jsonl")).code == 0);
    const auto mc = run("pretrain --task mc --corpus " + (d / "c.jsonl") + " --out " + (d / "o"));
    CHECK(mc.code == 5);
    CHECK(mc.out.find("pretrain_ncc.ckpt") != std::string::npos);
    CHECK(run("train --corpus " + (d / "c.jsonl") + " --out " + (d / "o")).code == 5);
  }

  TEST_CASE("baseline strategies negate and random is reproducible") {
    TempDir d;
    REQUIRE(run("gen-data --calls 60 --seed 3 --out " + (d / "c.jsonl")).code == 0);
    const std::string common = " --corpus " + (d / "c.jsonl") + " --out " + (d / "o");
    const auto buy = run("simulate --strategy buy-all" + common);
    const auto shrt = run("simulate --strategy short-all" + common);
    REQUIRE(buy.code == 0);
    REQUIRE(shrt.code == 0);
    CHECK(field(buy.out, "Profit") == -field(shrt.out, "Profit"));
    CHECK(buy.out.find("Sharpe Ratio:") != std::string::npos);
    const auto r1 = run("simulate --strategy random --seed 5" + common);
    const auto r2 = run("simulate --strategy random --seed 5" + common);
    CHECK(r1.out == r2.out);
    CHECK(fs::exists(d / "o/ledger_random.jsonl"));
    CHECK(fs::exists(d / "o/manifest.json"));
  }

  TEST_CASE("full command sequence on a small corpus") {
    TempDir d;
    REQUIRE(run("gen-data --calls 50 --seed 4 --out " + (d / "c.jsonl")).code == 0);
    {
      std::ofstream cfg(d / "run.cfg");
      cfg << "# small run\ntoken_dim=8\nsentence_dim=8\nmax_sentences=8\nmax_tokens=16\n"
          << "preferences=3\nepochs=2\nncc_epochs=1\nmc_epochs=1\nmc_rounds=1\n";
    }
    const std::string common =
        " --config " + (d / "run.cfg") + " --corpus " + (d / "c.jsonl") + " --out " + (d / "o");
    const auto ncc = run("pretrain --task ncc" + common);
    REQUIRE(ncc.code == 0);
    CHECK(ncc.out.find("LRAP=") != std::string::npos);
    CHECK(ncc.out.find("ROC_AUC=") != std::string::npos);
    const auto mc = run("pretrain --task mc" + common);
    REQUIRE(mc.code == 0);
    for (const char* k : {"monetary", "temporal", "percentage", "all"}) {
      CHECK(mc.out.find(std::string("accuracy.") + k + "=") != std::string::npos);
    }
    const auto train = run("train" + common);
    REQUIRE(train.code == 0);
    const std::string traj = slurp(d / "o/trajectory_h3.jsonl");
    for (const char* k : {"\"step\"", "\"l1\"", "\"l2\"", "\"alpha1\"", "\"alpha2\"", "\"k\""}) {
      CHECK(traj.find(k) != std::string::npos);
    }
    const auto eval = run("evaluate --model " + (d / "o") + common);
    REQUIRE(eval.code == 0);
    for (const char* h : {"3", "7", "15", "30"}) {
      CHECK(eval.out.find(std::string("MCC_") + h + "=") != std::string::npos);
      CHECK(eval.out.find(std::string("F1_") + h + "=") != std::string::npos);
      CHECK(eval.out.find(std::string("volatility_MSE_") + h + "=") != std::string::npos);
    }
    const auto sim = run("simulate --strategy model --tau 3 --model " + (d / "o") + common);
    REQUIRE(sim.code == 0);
    CHECK(sim.out.find("Profit:") != std::string::npos);
    CHECK(sim.out.find("Sharpe Ratio:") != std::string::npos);
    const std::string manifest = slurp(d / "o/manifest.json");
    for (const char* k : {"\"train\"", "\"pretrain_ncc\"", "\"evaluate_test\"", "\"config_hash\"",
                          "\"git_sha1\""}) {
      CHECK(manifest.find(k) != std::string::npos);
    }
    // ablation flags
    CHECK(run("train --no-pareto --no-pretrain --text-only" + common).code == 0);
  }
}

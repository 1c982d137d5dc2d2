#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "genrank/cli.hpp"

namespace fs = std::filesystem;
using genrank::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "genrank");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("genrank-test-" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& f) const { return (path / f).string(); }
};

const std::vector<std::string> kTiny{"--d-model", "16", "--heads", "2", "--d-ff", "16", "--enc-layers", "1",
                                     "--dec-layers", "1", "--head-hidden", "16", "--k", "3", "--bank-size", "6",
                                     "--max-len", "12", "--lr", "3e-3"};

std::vector<std::string> train_args(const TempDir& d, const std::string& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> a{"train", "--train", d / "train.jsonl", "--out", d / out, "--finetune-epochs", "2",
                             "--joint-epochs", "2"};
  a.insert(a.end(), kTiny.begin(), kTiny.end());
  a.insert(a.end(), extra.begin(), extra.end());
  return a;
}

}  // namespace

TEST_CASE("synth writes identical bytes for identical seeds") {
  TempDir d("synth");
  REQUIRE(cli({"synth", "--n", "25", "--seed", "4", "--out", d / "a.jsonl"}).code == 0);
  REQUIRE(cli({"synth", "--n", "25", "--seed", "4", "--out", d / "b.jsonl"}).code == 0);
  REQUIRE(cli({"synth", "--n", "25", "--seed", "5", "--out", d / "c.jsonl"}).code == 0);
  CHECK(slurp(d / "a.jsonl") == slurp(d / "b.jsonl"));
  CHECK(slurp(d / "a.jsonl") != slurp(d / "c.jsonl"));
  CHECK(lines_of(d / "a.jsonl").size() == 25);

  REQUIRE(cli({"synth", "--n", "10", "--dist", "0,0,0,0,1", "--out", d / "five.jsonl"}).code == 0);
  for (const auto& line : lines_of(d / "five.jsonl")) {
    auto eq = nlohmann::json::parse(line)["equation"].get<std::string>();
    CHECK(std::count_if(eq.begin(), eq.end(), [](char c) { return std::string("+-*/").find(c) != std::string::npos; }) == 5);
  }
}

TEST_CASE("usage errors exit with 2") {
  TempDir d("usage");
  CHECK(cli({"synth", "--n", "0", "--out", d / "x.jsonl"}).code == genrank::cli::kExitUsage);
  CHECK(cli({"synth", "--n", "5", "--dist", "0.5,0.4", "--out", d / "x.jsonl"}).code == genrank::cli::kExitUsage);
  CHECK(cli({"synth"}).code == genrank::cli::kExitUsage);
  CHECK(cli({"frobnicate"}).code == genrank::cli::kExitUsage);
  CHECK(cli({}).code == genrank::cli::kExitUsage);
  CHECK(cli({"train", "--train", d / "missing.jsonl", "--out", d / "r"}).code == genrank::cli::kExitUsage);
  CHECK(cli({"--help"}).code == 0);
}

TEST_CASE("disturb") {
  auto swap = cli({"disturb", "--expr", "NUM0 + NUM1", "--numbers", "4,9", "--kind", "swap"});
  CHECK(swap.code == 0);
  CHECK(swap.out.find("after:  NUM1 + NUM0 = 13") != std::string::npos);
  CHECK(swap.out.find("label:  positive") != std::string::npos);

  auto edit = cli({"disturb", "--expr", "NUM0 * NUM1 / NUM2", "--numbers", "25,12,20", "--kind", "edit", "--seed", "3"});
  CHECK(edit.code == 0);
  CHECK(edit.out.find("before: NUM0 * NUM1 / NUM2 = 15") != std::string::npos);

  auto small = cli({"disturb", "--expr", "NUM0", "--numbers", "4", "--kind", "delete"});
  CHECK(small.code == genrank::cli::kExitUsage);
  CHECK(small.err.find("error") != std::string::npos);
  CHECK(cli({"disturb", "--expr", "NUM0 +", "--numbers", "4", "--kind", "swap"}).code == genrank::cli::kExitUsage);
  CHECK(cli({"disturb", "--expr", "NUM3", "--numbers", "4", "--kind", "expand"}).code == genrank::cli::kExitUsage);
}

TEST_CASE("train, resume, solve, eval and bank") {
  TempDir d("train");
  REQUIRE(cli({"synth", "--n", "30", "--seed", "1", "--dist", "0.5,0.5,0,0,0", "--out", d / "train.jsonl"}).code == 0);
  REQUIRE(cli({"synth", "--n", "12", "--seed", "2", "--dist", "0.5,0.5,0,0,0", "--out", d / "test.jsonl"}).code == 0);

  auto full = cli(train_args(d, "full"));
  REQUIRE(full.code == 0);
  CHECK(lines_of(d / "full/train_log.jsonl").size() == 4);
  for (const char* f : {"run.json", "checkpoint.bin", "bank.jsonl", "model.bin"}) CHECK(fs::exists(d.path / "full" / f));

  SUBCASE("resume continues an interrupted run to the same bytes") {
    auto part = cli(train_args(d, "part", {"--stop-after", "3"}));
    REQUIRE(part.code == 0);
    CHECK(part.out.find("stopped early") != std::string::npos);
    CHECK(lines_of(d / "part/train_log.jsonl").size() == 3);
    auto resumed = cli({"train", "--resume", "--out", d / "part"});
    REQUIRE(resumed.code == 0);
    CHECK(resumed.out.find("resuming from joint epoch 1") != std::string::npos);
    CHECK(slurp(d / "part/train_log.jsonl") == slurp(d / "full/train_log.jsonl"));
    CHECK(slurp(d / "part/model.bin") == slurp(d / "full/model.bin"));
  }

  SUBCASE("solve") {
    auto s = cli({"solve", "--checkpoint", d / "full/model.bin", "--text",
                  "a farmer has 12 apples and buys 30 more . how many apples now ?"});
    // A barely trained model may not emit a parseable expression; that is a runtime failure.
    CHECK(s.out.find("problem text: a farmer has NUM0 apples and buys NUM1 more") != std::string::npos);
    if (s.code == 0) {
      CHECK(s.out.find("expression:") != std::string::npos);
    } else {
      CHECK(s.code == genrank::cli::kExitRuntime);
      CHECK(s.out.find("no parseable candidate") != std::string::npos);
    }

    std::ofstream(d / "bad.jsonl") << "{\"text\": \"ok 1 and 2\"}\n{\"id\": 3}\n";
    auto bad = cli({"solve", "--checkpoint", d / "full/model.bin", "--input", d / "bad.jsonl"});
    CHECK(bad.code == genrank::cli::kExitUsage);
    CHECK(bad.err.find("line 2") != std::string::npos);
  }

  SUBCASE("eval writes a report that matches its verdicts") {
    auto e = cli({"eval", "--checkpoint", d / "full/model.bin", "--test", d / "test.jsonl", "--report",
                  d / "report.json", "--verdicts", d / "verdicts.jsonl", "--by-length"});
    REQUIRE(e.code == 0);
    CHECK(e.out.find("#op=1") != std::string::npos);
    auto report = nlohmann::json::parse(slurp(d / "report.json"));
    auto verdicts = lines_of(d / "verdicts.jsonl");
    CHECK(report["n"] == 12);
    CHECK(verdicts.size() == 12);
    int correct = 0;
    for (const auto& v : verdicts) correct += nlohmann::json::parse(v)["correct"].get<bool>();
    CHECK(report["correct"] == correct);
  }

  SUBCASE("bank dumps respect the capacity") {
    auto b = cli({"bank", "--checkpoint", d / "full/model.bin", "--data", d / "train.jsonl", "--k", "3",
                  "--bank-size", "5", "--out", d / "bank.jsonl"});
    REQUIRE(b.code == 0);
    std::map<std::string, int> per_problem;
    for (const auto& line : lines_of(d / "bank.jsonl")) ++per_problem[nlohmann::json::parse(line)["problem_id"]];
    CHECK(per_problem.size() == 30);
    for (const auto& [id, n] : per_problem) CHECK(n <= 6);
  }

  SUBCASE("resume refuses a changed configuration") {
    fs::copy(d.path / "full", d.path / "copy");
    CHECK(cli({"train", "--resume", "--out", d / "copy", "--seed", "99"}).code != 0);
  }
}

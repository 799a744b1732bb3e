#include "elsa/cli.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace elsa;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("gen-data is reproducible") {
  test::TempDir dir("cli_gen");
  const auto a = (dir / "a").string(), b = (dir / "b").string();
  REQUIRE(cli({"gen-data", "--preset", "default", "--seed", "7", "--out", a}).code == 0);
  REQUIRE(cli({"gen-data", "--preset", "default", "--seed", "7", "--out", b}).code == 0);
  for (const char* f : {"train.ds", "validation.ds", "test.ds", "config.json"}) {
    CHECK(slurp(dir / "a" / f) == slurp(dir / "b" / f));
  }
}

TEST_CASE("usage and validation errors") {
  const Run missing = cli({"gen-data"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("--out") != std::string::npos);
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);

  test::TempDir dir("cli_err");
  const Run s1 = cli({"gen-data", "--gamma-p", "0.1", "--scenario", "s1", "--out", dir.path().string()});
  CHECK(s1.code == 3);
  CHECK(s1.err.find("s1") != std::string::npos);
  CHECK(cli({"gen-data", "--set", "objective.tau", "--out", dir.path().string()}).code == 2);
  CHECK(cli({"score", "--input", (dir / "none.ds").string(), "--checkpoint", (dir / "none.ckpt").string()}).code ==
        4);
}

TEST_CASE("help exits cleanly") {
  const Run h = cli({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("gen-data") != std::string::npos);
}

TEST_CASE("tiny pipeline through every command") {
  test::TempDir dir("cli_pipe");
  const auto d = (dir / "data").string();
  const auto pre = (dir / "pre.ckpt").string(), fin = (dir / "fin.ckpt").string();
  REQUIRE(cli({"gen-data", "--preset", "tiny", "--out", d}).code == 0);
  REQUIRE(cli({"pretrain", "--data", d, "--out", pre, "--metrics", (dir / "pre.jsonl").string()}).code == 0);

  const std::string first = slurp(dir / "pre.jsonl").substr(0, 40);
  CHECK(first.find("\"schema\":1") != std::string::npos);
  CHECK(first.find("\"kind\":\"config\"") != std::string::npos);

  SUBCASE("prototype count conflict names both values") {
    const Run r = cli({"finetune", "--data", d, "--checkpoint", pre, "--out", fin, "--prototypes", "32"});
    CHECK(r.code == 3);
    CHECK(r.err.find("16") != std::string::npos);
    CHECK(r.err.find("32") != std::string::npos);
  }
  SUBCASE("finetune, score and eval") {
    const Run ft = cli({"finetune", "--data", d, "--checkpoint", pre, "--out", fin});
    REQUIRE(ft.code == 0);
    CHECK(ft.out.find("final test auroc") != std::string::npos);

    const Run sc = cli({"score", "--input", d + "/test.ds", "--checkpoint", fin});
    REQUIRE(sc.code == 0);
    std::istringstream lines(sc.out);
    std::string line;
    long prev = -1, count = 0;
    while (std::getline(lines, line)) {
      const auto tab = line.find('\t');
      REQUIRE(tab != std::string::npos);
      const long id = std::stol(line.substr(0, tab));
      CHECK(id > prev);
      prev = id;
      ++count;
    }
    CHECK(count == 96);
    CHECK(cli({"score", "--input", d + "/test.ds", "--checkpoint", fin}).out == sc.out);

    const Run ev = cli({"eval", "--input", d + "/test.ds", "--checkpoint", fin});
    CHECK(ev.code == 0);
    CHECK(ev.out.rfind("auroc ", 0) == 0);
  }
}

TEST_CASE("scenario and ablation reports") {
  test::TempDir dir("cli_grid");
  const auto out = (dir / "scen").string();
  REQUIRE(cli({"scenario", "--preset", "tiny", "--out", out, "--gamma-p-list", "0,0.1", "--data-seeds", "1",
               "--mixes", "1"})
              .code == 0);
  CHECK(std::filesystem::exists(dir / "scen" / "metrics.jsonl"));
  CHECK(std::filesystem::exists(dir / "scen" / "summary.json"));
  const std::string csv = slurp(dir / "scen" / "table.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const auto abl = (dir / "abl").string();
  REQUIRE(cli({"ablation", "--preset", "tiny", "--out", abl, "--seeds", "1", "--matrix", "energy:elsa,cosine:naive"})
              .code == 0);
  const std::string acsv = slurp(dir / "abl" / "table.csv");
  CHECK(std::count(acsv.begin(), acsv.end(), '\n') == 3);
  CHECK(cli({"ablation", "--preset", "tiny", "--out", abl, "--matrix", "energy"}).code == 2);
}

TEST_CASE("seed comes from the environment when not given") {
  test::TempDir dir("cli_env");
  ::setenv(kSeedEnv, "5", 1);
  REQUIRE(cli({"gen-data", "--preset", "tiny", "--out", (dir / "env").string()}).code == 0);
  ::unsetenv(kSeedEnv);
  REQUIRE(cli({"gen-data", "--preset", "tiny", "--seed", "5", "--out", (dir / "flag").string()}).code == 0);
  CHECK(slurp(dir / "env" / "train.ds") == slurp(dir / "flag" / "train.ds"));
  ::setenv(kSeedEnv, "five", 1);
  CHECK(cli({"gen-data", "--preset", "tiny", "--out", (dir / "bad").string()}).code == 2);
  ::unsetenv(kSeedEnv);
}

}

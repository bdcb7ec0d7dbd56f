#include <doctest.h>

#include <fstream>
#include <sstream>

#include "rulesmith/cli.hpp"
#include "rulesmith/metrics.hpp"
#include "rulesmith/rulebase.hpp"
#include "support/metric_fixtures.hpp"
#include "support/scenarios.hpp"

using namespace rulesmith;
using namespace rulesmith::testing;
using nlohmann::json;

namespace {

struct Run {
  int status;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = run_cli(args, out, err);
  return {status, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("induce is reproducible per seed") {
  const auto dir = temp_dir("cli_induce");
  auto corpus = planted_corpus(120, 3, 7);
  save_dataset(dir / "train.jsonl", corpus.samples);
  save_taxonomy(dir / "labels.json", corpus.taxonomy);

  auto induce = [&](const std::string& out) {
    return cli({"induce", "--train", (dir / "train.jsonl").string(), "--labels", (dir / "labels.json").string(),
                "--agent", "mock", "--seed", "7", "--iterations", "30", "--out", (dir / out).string()});
  };
  auto a = induce("a.json");
  REQUIRE_MESSAGE(a.status == 0, a.err);
  REQUIRE(induce("b.json").status == 0);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));

  const auto rb = load_rulebase(dir / "a.json");
  CHECK(rb.rules.size() == 90);
  for (const auto& r : rb.rules) CHECK(r.predicates.size() <= kMaxPredicates);
  CHECK(rb.metadata.provenance["stage"] == "harvest");
}

TEST_CASE("filter keeps the 0.8 boundary") {
  const auto dir = temp_dir("cli_filter");
  auto taxonomy = small_taxonomy();
  std::vector<DialogueSample> val{intent_sample("v1", "late parcel", "shipping"),
                                  intent_sample("v2", "late again", "shipping"),
                                  intent_sample("v3", "money back", "refund")};
  save_dataset(dir / "val.jsonl", val);
  save_taxonomy(dir / "labels.json", taxonomy);
  RuleBase rb;
  rb.rules = {make_rule("r79", "shipping", {pred(Field::user_text, Op::contains, "late")}, 0.79),
              make_rule("r80", "shipping", {pred(Field::any_text, Op::contains, "late")}, 0.80)};
  save_rulebase(rb, dir / "harvest.json");

  auto run = cli({"filter", "--rules", (dir / "harvest.json").string(), "--val", (dir / "val.jsonl").string(),
                  "--labels", (dir / "labels.json").string(), "--min-reward", "0.8", "--out",
                  (dir / "rb.json").string()});
  REQUIRE_MESSAGE(run.status == 0, run.err);
  const auto kept = load_rulebase(dir / "rb.json");
  REQUIRE(kept.rules.size() == 1);
  CHECK(kept.rules[0].id == "r80");
  CHECK(kept.rules[0].reward == 1.0);
}

TEST_CASE("predict then eval") {
  const auto dir = temp_dir("cli_predict");
  auto corpus = planted_corpus(200, 4, 3, 0.4);
  save_dataset(dir / "data.jsonl", corpus.samples);
  save_taxonomy(dir / "labels.json", corpus.taxonomy);
  save_rulebase(planted_rulebase(corpus), dir / "rb.json");

  auto predict = cli({"predict", "--rules", (dir / "rb.json").string(), "--data", (dir / "data.jsonl").string(),
                      "--labels", (dir / "labels.json").string(), "--predictor", "stub:0.7", "--seed", "3", "--out",
                      (dir / "preds.jsonl").string(), "--report", (dir / "run.json").string()});
  REQUIRE_MESSAGE(predict.status == 0, predict.err);
  CHECK(load_predictions(dir / "preds.jsonl").size() == 200);
  CHECK(json::parse(slurp(dir / "run.json")).contains("overrides"));

  auto eval = cli({"eval", "--predictions", (dir / "preds.jsonl").string(), "--data", (dir / "data.jsonl").string(),
                   "--labels", (dir / "labels.json").string()});
  REQUIRE_MESSAGE(eval.status == 0, eval.err);
  CHECK(json::parse(eval.out).contains("oss"));
}

TEST_CASE("eval on the balanced fixture reports OSS as the mean") {
  const auto dir = temp_dir("cli_eval");
  const auto f = balanced_two_task(500, 69, 120);
  save_dataset(dir / "gold.jsonl", f.gold);
  save_taxonomy(dir / "labels.json", f.taxonomy);
  save_predictions(dir / "preds.jsonl", f.predictions);
  auto run = cli({"eval", "--predictions", (dir / "preds.jsonl").string(), "--data", (dir / "gold.jsonl").string(),
                  "--labels", (dir / "labels.json").string(), "--report", (dir / "report.json").string()});
  REQUIRE_MESSAGE(run.status == 0, run.err);
  const auto report = report_from_json(json::parse(slurp(dir / "report.json")));
  // Independent recomputation: every class has F1 = 1 - swaps / 500.
  const double dis = 1.0 - 69.0 / 500.0;
  const double iss = 1.0 - 120.0 / 500.0;
  CHECK(std::abs(*report.dis - dis) <= 1e-12);
  CHECK(std::abs(*report.iss - iss) <= 1e-12);
  CHECK(std::abs(report.oss - (dis + iss) / 2) <= 1e-9);

  auto table = cli({"report", "--report", (dir / "report.json").string()});
  CHECK(table.status == 0);
  CHECK(table.out.find("OSS") != std::string::npos);
}

TEST_CASE("usage errors exit 2, runtime errors exit 1") {
  auto unknown = cli({"summon"});
  CHECK(unknown.status == 2);
  CHECK_FALSE(unknown.err.empty());

  CHECK(cli({"eval", "--frobnicate"}).status == 2);
  CHECK(cli({}).status == 2);

  auto missing = cli({"eval", "--predictions", "/nonexistent/p.jsonl", "--data", "/nonexistent/d.jsonl", "--labels",
                      "/nonexistent/l.json"});
  CHECK(missing.status == 1);
  const auto error = json::parse(missing.err);
  CHECK(error["error"].contains("kind"));
  CHECK(error["error"].contains("message"));
}

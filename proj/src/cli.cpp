#include "rulesmith/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rulesmith/agents.hpp"
#include "rulesmith/dataset.hpp"
#include "rulesmith/error.hpp"
#include "rulesmith/inference.hpp"
#include "rulesmith/mcts.hpp"
#include "rulesmith/metrics.hpp"
#include "rulesmith/rulebase.hpp"

namespace rulesmith {
namespace {

using nlohmann::ordered_json;

constexpr const char* kAgentKeyVariable = "RULESMITH_AGENT_KEY";
constexpr const char* kPredictorKeyVariable = "RULESMITH_PREDICTOR_KEY";

struct Options {
  std::string train;
  std::string val;
  std::string data;
  std::string labels;
  std::string rules;
  std::string predictions;
  std::string agent = "mock";
  std::string predictor = "stub:0.7";
  std::string model = "default";
  std::string out;
  std::string report;
  std::string trace;
  double min_reward = 0.8;
  double min_precision = 0.8;
  std::size_t min_support = 2;
  std::optional<std::size_t> max_rules;
  double override_threshold = 0.8;
  std::size_t iterations = 200;
  std::size_t proposals = 5;
  double exploration = std::sqrt(2.0);
  double epsilon = 0.05;
  double val_fraction = 0.2;
  std::size_t per_sample = 1;
  std::size_t context_exemplars = 8;
  std::size_t context_validation = 8;
  std::size_t jobs = 4;
  std::size_t concurrency = 4;
  std::size_t failure_budget = 10;
  double timeout_seconds = 30.0;
  std::uint64_t seed = 0;
  bool progress = false;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required flag ") + flag);
}

EndpointConfig endpoint(const std::string& url, const char* key_variable, const Options& o) {
  auto config = EndpointConfig::from_env(url, key_variable);
  config.model = o.model;
  config.max_concurrency = o.concurrency;
  config.timeout = std::chrono::milliseconds(static_cast<long long>(o.timeout_seconds * 1000.0));
  return config;
}

std::unique_ptr<Agent> make_agent(const Options& o, const std::vector<DialogueSample>& corpus) {
  if (o.agent == "mock") return std::make_unique<MockAgent>(corpus, MockAgentConfig{o.seed, o.epsilon});
  return std::make_unique<RemoteAgent>(endpoint(o.agent, kAgentKeyVariable, o),
                                       RemoteAgent::Options{o.context_exemplars, o.context_validation});
}

std::unique_ptr<Predictor> make_predictor(const Options& o, const LabelTaxonomy& taxonomy) {
  constexpr std::string_view stub = "stub:";
  if (o.predictor.starts_with(stub)) {
    double accuracy = 0.0;
    try {
      std::size_t used = 0;
      accuracy = std::stod(o.predictor.substr(stub.size()), &used);
      if (used != o.predictor.size() - stub.size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw UsageError("--predictor stub:<accuracy> needs a number, got '" + o.predictor + "'");
    }
    return std::make_unique<StubPredictor>(taxonomy, accuracy, o.seed);
  }
  return std::make_unique<RemotePredictor>(endpoint(o.predictor, kPredictorKeyVariable, o), taxonomy);
}

// Mock runs are pure functions of their inputs, so they get a fixed stamp
// unless SOURCE_DATE_EPOCH says otherwise.
std::string creation_stamp(bool deterministic) {
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    try {
      return iso8601_utc(std::stoll(epoch));
    } catch (const std::exception&) {
      throw UsageError("SOURCE_DATE_EPOCH must be an integer");
    }
  }
  if (deterministic) return iso8601_utc(0);
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  return iso8601_utc(std::chrono::duration_cast<std::chrono::seconds>(now).count());
}

void write_json(const std::string& path, const ordered_json& doc) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path);
  out << doc.dump(2) << '\n';
}

int cmd_rephrase(const Options& o, std::ostream& out) {
  require(o.train, "--train");
  require(o.labels, "--labels");
  require(o.out, "--out");
  const auto taxonomy = load_taxonomy(o.labels);
  const auto train = load_dataset(o.train, taxonomy);
  auto agent = make_agent(o, train);
  auto result = generate_validation(train, *agent, {o.per_sample, 3, o.concurrency});
  save_dataset(o.out, result.samples);
  out << ordered_json{{"written", result.samples.size()}, {"skipped", result.skipped}}.dump() << '\n';
  return 0;
}

int cmd_induce(const Options& o, std::ostream& out, std::ostream& err) {
  require(o.train, "--train");
  require(o.labels, "--labels");
  require(o.out, "--out");
  const auto taxonomy = load_taxonomy(o.labels);
  const auto train = load_dataset(o.train, taxonomy);
  DatasetSplit split;
  if (o.val.empty()) {
    split = stratified_split(train, o.val_fraction, o.seed);
  } else {
    split.train = train;
    split.validation = load_dataset(o.val, taxonomy);
  }
  auto agent = make_agent(o, split.train);

  SearchConfig config;
  config.max_iterations = o.iterations;
  config.exploration = o.exploration;
  config.proposals_per_expansion = o.proposals;
  config.seed = o.seed;
  config.context_exemplars = o.context_exemplars;
  config.context_validation = o.context_validation;

  struct Job {
    Task task;
    std::string label;
    SearchResult result;
    std::string trace;
  };
  std::vector<Job> jobs;
  for (auto task : {Task::intent, Task::image_scene}) {
    for (const auto& label : taxonomy.labels(task)) {
      const bool present = std::any_of(split.train.begin(), split.train.end(), [&](const DialogueSample& s) {
        return s.task == task && s.gold_label == label;
      });
      if (present) jobs.push_back({task, label, {}, {}});
    }
  }

  std::mutex log_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (auto i = next++; i < jobs.size(); i = next++) {
      auto& job = jobs[i];
      std::ostringstream trace;
      SearchObserver observer;
      if (!o.trace.empty()) observer.trace = &trace;
      if (o.progress) {
        observer.on_evaluation = [&](const SearchEvent& e) {
          if (e.iteration % 25 != 0 && e.iteration != config.max_iterations) return;
          std::lock_guard lock(log_mutex);
          err << ordered_json{{"event", "progress"},
                              {"label", e.label},
                              {"iteration", e.iteration},
                              {"best_reward", e.best_reward}}
                     .dump()
              << '\n';
        };
      }
      job.result = run_search(job.label, job.task, split, *agent, config, observer);
      job.trace = trace.str();
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < std::min(o.jobs, jobs.size()); ++t) pool.emplace_back(worker);
    worker();
  }

  RuleBase rb;
  ordered_json searches = ordered_json::array();
  bool aborted = false;
  std::string trace;
  for (auto& job : jobs) {
    for (auto& h : job.result.rules) rb.rules.push_back(std::move(h.rule));
    searches.push_back({{"label", job.label},
                        {"evaluations", job.result.evaluations},
                        {"harvested", job.result.rules.size()},
                        {"aborted", job.result.aborted},
                        {"error", job.result.error}});
    aborted = aborted || job.result.aborted;
    trace += job.trace;
  }

  ordered_json cfg{{"agent", o.agent},         {"iterations", o.iterations},
                   {"exploration", o.exploration}, {"proposals", o.proposals},
                   {"seed", o.seed},           {"epsilon", o.epsilon},
                   {"context_exemplars", o.context_exemplars},
                   {"context_validation", o.context_validation}};
  rb.metadata.created_at = creation_stamp(o.agent == "mock");
  rb.metadata.dataset_digest = file_sha256_hex(o.train);
  rb.metadata.config_digest = sha256_hex(cfg.dump());
  rb.metadata.provenance = nlohmann::json{{"stage", "harvest"}, {"config", cfg}, {"searches", searches}};
  save_rulebase(rb, o.out);
  if (!o.trace.empty()) {
    std::ofstream t(o.trace, std::ios::binary | std::ios::trunc);
    t << trace;
  }

  out << ordered_json{{"rules", rb.rules.size()}, {"searches", searches}}.dump() << '\n';
  if (aborted) {
    err << ordered_json{{"error", {{"kind", "AgentUnavailable"}, {"message", "one or more searches aborted"}}}}.dump()
        << '\n';
    return 1;
  }
  return 0;
}

int cmd_filter(const Options& o, std::ostream& out) {
  require(o.rules, "--rules");
  require(o.val, "--val");
  require(o.labels, "--labels");
  require(o.out, "--out");
  const auto taxonomy = load_taxonomy(o.labels);
  const auto validation = load_dataset(o.val, taxonomy);
  auto input = load_rulebase(o.rules);
  validate_rulebase(input, &taxonomy, false);

  FilterOptions options{o.min_reward, o.min_precision, o.min_support, o.max_rules};
  auto outcome = run_filter_pipeline(input.rules, validation, options);

  RuleBase rb;
  rb.rules = outcome.rules;
  rb.metadata = input.metadata;
  nlohmann::json revisions = nlohmann::json::array();
  for (const auto& r : outcome.validation.revisions) {
    revisions.push_back({{"rule_id", r.rule_id},
                         {"agent_reward", r.agent_reward},
                         {"measured_precision", r.measured_precision},
                         {"coverage", r.coverage}});
  }
  rb.metadata.provenance["stage"] = "filtered";
  rb.metadata.provenance["filter"] = {{"min_reward", o.min_reward},
                                      {"min_precision", o.min_precision},
                                      {"min_support", o.min_support},
                                      {"validation_digest", file_sha256_hex(o.val)},
                                      {"below_reward", outcome.below_reward},
                                      {"dominated", outcome.dominated},
                                      {"failed_validation", outcome.validation.dropped.size()},
                                      {"revisions", revisions}};
  validate_rulebase(rb, &taxonomy);
  save_rulebase(rb, o.out);
  out << ordered_json{{"input", input.rules.size()},
                      {"below_reward", outcome.below_reward},
                      {"dominated", outcome.dominated},
                      {"failed_validation", outcome.validation.dropped.size()},
                      {"kept", rb.rules.size()}}
             .dump()
      << '\n';
  return 0;
}

int cmd_predict(const Options& o, std::ostream& out) {
  require(o.rules, "--rules");
  require(o.data, "--data");
  require(o.labels, "--labels");
  require(o.out, "--out");
  const auto taxonomy = load_taxonomy(o.labels);
  const auto samples = load_dataset(o.data, taxonomy);
  const auto rb = load_rulebase(o.rules);
  validate_rulebase(rb, &taxonomy, false);
  auto predictor = make_predictor(o, taxonomy);

  auto batch = predict_batch(rb, *predictor, samples, {o.override_threshold, o.failure_budget, o.concurrency});
  save_predictions(o.out, batch.predictions);

  ordered_json report{{"samples", batch.report.samples},
                      {"overrides", batch.report.overrides},
                      {"predictor_failures", batch.report.predictor_failures},
                      {"rule_fallbacks", batch.report.rule_fallbacks},
                      {"abstained", batch.report.abstained},
                      {"abstain_label", kAbstainLabel},
                      {"failures", batch.report.failures}};
  if (!o.report.empty()) write_json(o.report, report);
  out << report.dump() << '\n';
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  require(o.predictions, "--predictions");
  require(o.data, "--data");
  require(o.labels, "--labels");
  const auto taxonomy = load_taxonomy(o.labels);
  const auto gold = load_dataset(o.data, taxonomy);
  const auto predictions = load_predictions(o.predictions);
  const auto doc = report_to_json(evaluate(predictions, gold, taxonomy));
  const auto& path = o.report.empty() ? o.out : o.report;
  if (!path.empty()) write_json(path, doc);
  out << doc.dump(2) << '\n';
  return 0;
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.report.empty() && o.rules.empty()) throw UsageError("report needs --report or --rules");
  out << std::fixed << std::setprecision(4);
  if (!o.report.empty()) {
    std::ifstream in(o.report, std::ios::binary);
    if (!in) throw Error("cannot open " + o.report);
    const auto report = report_from_json(nlohmann::json::parse(in));
    auto score = [](const std::optional<double>& v) {
      std::ostringstream s;
      if (v) {
        s << std::fixed << std::setprecision(4) << *v;
      } else {
        s << "n/a";
      }
      return s.str();
    };
    out << "DIS " << score(report.dis) << "  (" << report.intent_samples << " samples)\n"
        << "ISS " << score(report.iss) << "  (" << report.image_scene_samples << " samples)\n"
        << "OSS " << report.oss << "  (mean of DIS and ISS: " << report.oss_mean << ")\n\n"
        << std::left << std::setw(24) << "label" << std::right << std::setw(10) << "precision" << std::setw(10)
        << "recall" << std::setw(10) << "f1" << std::setw(10) << "support" << '\n';
    for (const auto& c : report.per_class) {
      out << std::left << std::setw(24) << c.label << std::right << std::setw(10) << c.precision << std::setw(10)
          << c.recall << std::setw(10) << c.f1 << std::setw(10) << c.support << '\n';
    }
  }
  if (!o.rules.empty()) {
    const auto rb = load_rulebase(o.rules);
    out << "rule base created " << rb.metadata.created_at << ", " << rb.rules.size() << " rules\n";
    for (const auto& r : rb.rules) {
      out << "  " << r.id << "  " << to_string(r.task) << "/" << r.label << "  reward " << r.reward
          << "  confidence " << r.confidence << '\n';
      for (const auto& p : r.predicates) out << "      " << render_predicate(p) << '\n';
    }
  }
  return 0;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message) {
  err << ordered_json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rule induction and rule-corrected classification for dialogue records", "rulesmith"};
  app.require_subcommand(1);
  Options o;

  auto labels = [&](CLI::App* cmd) { cmd->add_option("--labels", o.labels, "Taxonomy file"); };
  auto seed = [&](CLI::App* cmd) { cmd->add_option("--seed", o.seed, "Seed for every random choice"); };
  auto remote = [&](CLI::App* cmd) {
    cmd->add_option("--model", o.model, "Model name sent to remote endpoints");
    cmd->add_option("--timeout", o.timeout_seconds, "Per-request timeout in seconds");
    cmd->add_option("--concurrency", o.concurrency, "Requests in flight at once");
  };

  auto* rephrase = app.add_subcommand("rephrase", "Write rephrased validation copies of a training set");
  rephrase->add_option("--train", o.train, "Training dataset");
  labels(rephrase);
  rephrase->add_option("--agent", o.agent, "mock or an endpoint URL");
  rephrase->add_option("--per-sample", o.per_sample, "Copies per training sample");
  seed(rephrase);
  remote(rephrase);
  rephrase->add_option("--out", o.out, "Output dataset");

  auto* induce = app.add_subcommand("induce", "Search rules for every label in the training set");
  induce->add_option("--train", o.train, "Training dataset");
  induce->add_option("--val", o.val, "Validation dataset (default: split from --train)");
  induce->add_option("--val-fraction", o.val_fraction, "Validation share when splitting --train");
  labels(induce);
  induce->add_option("--agent", o.agent, "mock or an endpoint URL");
  induce->add_option("--iterations", o.iterations, "Evaluations per label");
  induce->add_option("--proposals", o.proposals, "Predicates requested per expansion");
  induce->add_option("--exploration", o.exploration, "UCT exploration constant");
  induce->add_option("--epsilon", o.epsilon, "Mock evaluator noise half-width");
  induce->add_option("--context-exemplars", o.context_exemplars, "Same-label exemplars shown to the agent");
  induce->add_option("--context-validation", o.context_validation, "Validation samples shown to the agent");
  induce->add_option("--jobs", o.jobs, "Labels searched in parallel");
  induce->add_option("--trace", o.trace, "Write one JSON record per evaluation");
  induce->add_flag("--progress", o.progress, "Log progress events to stderr");
  seed(induce);
  remote(induce);
  induce->add_option("--out", o.out, "Output rule file");

  auto* filter = app.add_subcommand("filter", "Filter, deduplicate and validate harvested rules");
  filter->add_option("--rules", o.rules, "Harvested rule file");
  filter->add_option("--val", o.val, "Validation dataset");
  labels(filter);
  filter->add_option("--min-reward", o.min_reward, "Drop rules with a lower reward");
  filter->add_option("--min-precision", o.min_precision, "Validation precision floor");
  filter->add_option("--min-support", o.min_support, "Validation coverage floor");
  filter->add_option("--max-rules", o.max_rules, "Keep at most this many rules");
  filter->add_option("--out", o.out, "Output rule base");

  auto* predict = app.add_subcommand("predict", "Label a dataset with a predictor corrected by rules");
  predict->add_option("--rules", o.rules, "Rule base");
  predict->add_option("--data", o.data, "Dataset to label");
  labels(predict);
  predict->add_option("--predictor", o.predictor, "stub:<accuracy> or an endpoint URL");
  predict->add_option("--override-threshold", o.override_threshold, "Minimum rule reward to override");
  predict->add_option("--failure-budget", o.failure_budget, "Predictor failures tolerated");
  seed(predict);
  remote(predict);
  predict->add_option("--out", o.out, "Output predictions");
  predict->add_option("--report", o.report, "Write the run report here");

  auto* eval = app.add_subcommand("eval", "Score predictions with class-weighted F1");
  eval->add_option("--predictions", o.predictions, "Prediction file");
  eval->add_option("--data,--gold", o.data, "Gold dataset");
  labels(eval);
  eval->add_option("--report,--out", o.report, "Write the evaluation report here");

  auto* report = app.add_subcommand("report", "Print an evaluation report or a rule base");
  report->add_option("--report", o.report, "Evaluation report");
  report->add_option("--rules", o.rules, "Rule base");

  std::vector<const char*> argv{"rulesmith"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (rephrase->parsed()) return cmd_rephrase(o, out);
    if (induce->parsed()) return cmd_induce(o, out, err);
    if (filter->parsed()) return cmd_filter(o, out);
    if (predict->parsed()) return cmd_predict(o, out);
    if (eval->parsed()) return cmd_eval(o, out);
    if (report->parsed()) return cmd_report(o, out);
  } catch (const UsageError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const DatasetError& e) {
    print_error(err, "DatasetError", e.what());
    return 1;
  } catch (const RuleBaseError& e) {
    print_error(err, "RuleBaseError", e.what());
    return 1;
  } catch (const AgentError& e) {
    print_error(err, "AgentUnavailable", e.what());
    return 1;
  } catch (const PredictorUnavailable& e) {
    print_error(err, "PredictorUnavailable", e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, "Error", e.what());
    return 1;
  }
  return 2;
}

}  // namespace rulesmith

#pragma once

#include <string>
#include <vector>

#include "rulesmith/inference.hpp"
#include "rulesmith/mcts.hpp"
#include "rulesmith/metrics.hpp"
#include "rulesmith/rulebase.hpp"
#include "support/fixtures.hpp"

namespace rulesmith::testing {

/// Hand-written rules `any_text contains "<planted token>"`, reward 1.0.
inline RuleBase planted_rulebase(const PlantedCorpus& corpus) {
  RuleBase rb;
  for (std::size_t k = 0; k < corpus.labels.size(); ++k) {
    auto rule = make_rule("planted-" + corpus.labels[k], corpus.labels[k],
                          {Predicate{Field::any_text, Op::contains, corpus.planted[k]}}, 1.0);
    rule.source = RuleSource::manual;
    rb.rules.push_back(std::move(rule));
  }
  return rb;
}

struct UpliftRun {
  PlantedCorpus corpus;
  std::vector<Prediction> baseline;
  std::vector<Prediction> arbitrated;
  double baseline_f1 = 0.0;
  double arbitrated_f1 = 0.0;
  double rule_coverage = 0.0;  // share of samples some rule fires on
};

/// Stub predictor of accuracy 0.70 with and without the planted rules.
inline UpliftRun uplift_run(std::uint64_t seed, std::size_t n = 1000, double planted_share = 0.4) {
  UpliftRun run;
  run.corpus = planted_corpus(n, 4, seed, planted_share);
  StubPredictor predictor(run.corpus.taxonomy, 0.70, seed);
  const auto rules = planted_rulebase(run.corpus);
  run.baseline = predict_batch(RuleBase{}, predictor, run.corpus.samples).predictions;
  run.arbitrated = predict_batch(rules, predictor, run.corpus.samples).predictions;

  std::vector<std::string> gold, base, arb;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < run.corpus.samples.size(); ++i) {
    gold.push_back(*run.corpus.samples[i].gold_label);
    base.push_back(run.baseline[i].label);
    arb.push_back(run.arbitrated[i].label);
    covered += !match_rules(rules, run.corpus.samples[i]).empty();
  }
  const auto& labels = run.corpus.taxonomy.labels(Task::intent);
  run.baseline_f1 = weighted_f1(gold, base, labels);
  run.arbitrated_f1 = weighted_f1(gold, arb, labels);
  run.rule_coverage = double(covered) / double(n);
  return run;
}

struct PlantedInduction {
  PlantedCorpus corpus;
  DatasetSplit split;
  std::vector<SearchResult> searches;  // one per label
  std::vector<Rule> filtered;
};

/// Mock agent with no noise, 200 iterations per label, then the default
/// filter pipeline on the validation split.
inline PlantedInduction planted_induction(std::uint64_t seed, std::size_t n = 500, std::size_t labels = 4) {
  PlantedInduction out;
  out.corpus = planted_corpus(n, labels, seed);
  out.split = stratified_split(out.corpus.samples, 0.3, seed);
  MockAgent agent(out.split.train, {seed, 0.0});
  std::vector<Rule> harvest;
  for (const auto& label : out.corpus.labels) {
    SearchConfig config;
    config.seed = seed;
    config.max_iterations = 200;
    out.searches.push_back(run_search(label, Task::intent, out.split, agent, config));
    for (const auto& h : out.searches.back().rules) harvest.push_back(h.rule);
  }
  out.filtered = run_filter_pipeline(std::move(harvest), out.split.validation).rules;
  return out;
}

}  // namespace rulesmith::testing

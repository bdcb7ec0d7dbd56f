#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulesmith/dataset.hpp"
#include "rulesmith/predicate.hpp"

namespace rulesmith {

inline constexpr int kRuleBaseVersion = 1;

struct RuleBaseMetadata {
  std::string created_at;      // ISO-8601 UTC
  std::string dataset_digest;  // sha256 hex of the training data
  std::string config_digest;   // sha256 hex of the run configuration
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const RuleBaseMetadata&) const = default;
};

struct RuleBase {
  std::vector<Rule> rules;
  RuleBaseMetadata metadata;

  bool operator==(const RuleBase&) const = default;
};

/// Keeps rules with reward >= min_reward, in order.
std::vector<Rule> filter_by_reward(std::vector<Rule> rules, double min_reward = 0.8);

/// Rules sharing task, label and predicate set collapse to the one with the
/// highest reward (earliest on ties), at that rule's position.
std::vector<Rule> collapse_duplicates(std::vector<Rule> rules);

/// Collapses duplicates, then removes every rule B for which some rule A of
/// the same task and label has predicates(A) a strict subset of
/// predicates(B) and reward(A) > reward(B). The result is a fixed point.
std::vector<Rule> remove_dominated(std::vector<Rule> rules);

struct RewardRevision {
  std::string rule_id;
  double agent_reward = 0.0;
  double measured_precision = 0.0;
  std::size_t coverage = 0;
};

struct OnlineValidation {
  std::vector<Rule> kept;  // reward replaced by measured precision
  std::vector<std::pair<Rule, RuleQuality>> dropped;
  std::vector<RewardRevision> revisions;  // one per kept rule
};

/// Re-measures every rule on held-out samples and drops those below the
/// support or precision floor. Throws RuleBaseError on an empty validation set.
OnlineValidation online_validate(const std::vector<Rule>& rules, std::span<const DialogueSample> validation,
                                 double min_precision = 0.8, std::size_t min_support = 2);

struct FilterOptions {
  double min_reward = 0.8;
  double min_precision = 0.8;
  std::size_t min_support = 2;
  std::optional<std::size_t> max_rules;  // keep the best N by (reward, size, id) when set
};

struct FilterOutcome {
  std::vector<Rule> rules;
  std::size_t below_reward = 0;
  std::size_t dominated = 0;
  OnlineValidation validation;
};

/// filter_by_reward, then remove_dominated, then online_validate.
FilterOutcome run_filter_pipeline(std::vector<Rule> rules, std::span<const DialogueSample> validation,
                                  const FilterOptions& options = {});

/// Checks id uniqueness and every rule invariant, and optionally that no rule
/// is dominated or duplicated. Throws RuleBaseError.
void validate_rulebase(const RuleBase& rb, const LabelTaxonomy* taxonomy = nullptr, bool check_dominance = true);

nlohmann::ordered_json rule_to_json(const Rule& rule);
nlohmann::ordered_json rulebase_to_json(const RuleBase& rb);
RuleBase rulebase_from_json(const nlohmann::json& doc);

void save_rulebase(const RuleBase& rb, const std::filesystem::path& path);
/// Loading checks the schema and per-rule invariants. Harvest files written
/// before filtering may still hold dominated rules, so dominance is left to
/// validate_rulebase.
RuleBase load_rulebase(const std::filesystem::path& path);

std::string sha256_hex(std::string_view data);
std::string file_sha256_hex(const std::filesystem::path& path);
/// Seconds since the Unix epoch rendered as YYYY-MM-DDTHH:MM:SSZ.
std::string iso8601_utc(long long epoch_seconds);

}  // namespace rulesmith

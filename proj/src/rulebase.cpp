#include "rulesmith/rulebase.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include <openssl/evp.h>

#include "rulesmith/error.hpp"

namespace rulesmith {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<Rule> filter_by_reward(std::vector<Rule> rules, double min_reward) {
  std::erase_if(rules, [&](const Rule& r) { return r.reward < min_reward; });
  return rules;
}

namespace {

using GroupKey = std::tuple<Task, std::string>;

std::map<GroupKey, std::vector<std::size_t>> group_by_label(const std::vector<Rule>& rules) {
  std::map<GroupKey, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rules.size(); ++i) groups[{rules[i].task, rules[i].label}].push_back(i);
  return groups;
}

std::vector<Rule> keep_marked(std::vector<Rule>& rules, const std::vector<bool>& keep) {
  std::vector<Rule> out;
  for (std::size_t i = 0; i < rules.size(); ++i) {
    if (keep[i]) out.push_back(std::move(rules[i]));
  }
  return out;
}

}  // namespace

std::vector<Rule> collapse_duplicates(std::vector<Rule> rules) {
  std::map<std::tuple<Task, std::string, std::vector<Predicate>>, std::size_t> best;
  std::vector<bool> keep(rules.size(), false);
  for (std::size_t i = 0; i < rules.size(); ++i) {
    auto key = std::make_tuple(rules[i].task, rules[i].label, rules[i].predicates);
    std::sort(std::get<2>(key).begin(), std::get<2>(key).end());
    auto [it, inserted] = best.emplace(std::move(key), i);
    if (inserted) {
      keep[i] = true;
    } else if (rules[i].reward > rules[it->second].reward) {
      keep[it->second] = false;
      keep[i] = true;
      it->second = i;
    }
  }
  return keep_marked(rules, keep);
}

std::vector<Rule> remove_dominated(std::vector<Rule> rules) {
  rules = collapse_duplicates(std::move(rules));
  for (auto& r : rules) std::sort(r.predicates.begin(), r.predicates.end());

  // Domination is transitive through strict subsets, so a rule dominated by
  // a removed rule is also dominated by that rule's own dominator, which
  // survives. One pass over the input therefore reaches the fixed point.
  std::vector<bool> keep(rules.size(), true);
  for (const auto& [key, members] : group_by_label(rules)) {
    for (auto b : members) {
      for (auto a : members) {
        if (rules[a].reward > rules[b].reward && strict_subset(rules[a].predicates, rules[b].predicates)) {
          keep[b] = false;
          break;
        }
      }
    }
  }
  return keep_marked(rules, keep);
}

OnlineValidation online_validate(const std::vector<Rule>& rules, std::span<const DialogueSample> validation,
                                 double min_precision, std::size_t min_support) {
  if (validation.empty()) throw RuleBaseError("online validation needs a non-empty validation set");
  const auto prepared = prepare(validation);
  OnlineValidation out;
  for (const auto& rule : rules) {
    const auto quality = measure_rule(rule, std::span<const PreparedSample>(prepared));
    if (quality.coverage < min_support || !quality.precision || *quality.precision < min_precision) {
      out.dropped.emplace_back(rule, quality);
      continue;
    }
    Rule kept = rule;
    kept.reward = *quality.precision;
    out.revisions.push_back({rule.id, rule.reward, *quality.precision, quality.coverage});
    out.kept.push_back(std::move(kept));
  }
  return out;
}

FilterOutcome run_filter_pipeline(std::vector<Rule> rules, std::span<const DialogueSample> validation,
                                  const FilterOptions& options) {
  FilterOutcome out;
  const auto harvested = rules.size();
  rules = filter_by_reward(std::move(rules), options.min_reward);
  out.below_reward = harvested - rules.size();
  const auto before = rules.size();
  rules = remove_dominated(std::move(rules));
  out.dominated = before - rules.size();
  out.validation = online_validate(rules, validation, options.min_precision, options.min_support);
  out.rules = out.validation.kept;
  if (options.max_rules && out.rules.size() > *options.max_rules) {
    std::stable_sort(out.rules.begin(), out.rules.end(), [](const Rule& a, const Rule& b) {
      if (a.reward != b.reward) return a.reward > b.reward;
      if (a.predicates.size() != b.predicates.size()) return a.predicates.size() > b.predicates.size();
      return a.id < b.id;
    });
    out.rules.resize(*options.max_rules);
  }
  return out;
}

void validate_rulebase(const RuleBase& rb, const LabelTaxonomy* taxonomy, bool check_dominance) {
  std::set<std::string> ids;
  for (const auto& rule : rb.rules) {
    if (rule.id.empty()) throw RuleBaseError("rule with empty id");
    if (!ids.insert(rule.id).second) throw RuleBaseError("duplicate rule id '" + rule.id + "'");
    Rule copy = rule;
    try {
      canonicalize_rule(copy, taxonomy);
    } catch (const InvalidRule& e) {
      throw RuleBaseError(e.what());
    }
    if (copy.predicates != rule.predicates) {
      throw RuleBaseError("rule '" + rule.id + "': predicates are not in canonical order");
    }
  }
  if (!check_dominance) return;
  const auto survivors = remove_dominated(rb.rules);
  if (survivors.size() != rb.rules.size()) {
    std::set<std::string> kept;
    for (const auto& r : survivors) kept.insert(r.id);
    for (const auto& r : rb.rules) {
      if (!kept.count(r.id)) throw RuleBaseError("rule '" + r.id + "' is dominated or duplicated");
    }
  }
}

ordered_json rule_to_json(const Rule& rule) {
  ordered_json out;
  out["id"] = rule.id;
  out["task"] = to_string(rule.task);
  out["label"] = rule.label;
  out["predicates"] = ordered_json::array();
  for (const auto& p : rule.predicates) out["predicates"].push_back(render_predicate(p));
  out["reward"] = rule.reward;
  out["confidence"] = rule.confidence;
  out["source"] = to_string(rule.source);
  return out;
}

ordered_json rulebase_to_json(const RuleBase& rb) {
  ordered_json doc;
  doc["version"] = kRuleBaseVersion;
  doc["metadata"] = {{"created_at", rb.metadata.created_at},
                     {"dataset_digest", rb.metadata.dataset_digest},
                     {"config_digest", rb.metadata.config_digest},
                     {"provenance", ordered_json::parse(rb.metadata.provenance.dump())}};
  doc["rules"] = ordered_json::array();
  for (const auto& rule : rb.rules) doc["rules"].push_back(rule_to_json(rule));
  return doc;
}

namespace {

const json& field(const json& object, const std::string& where, const char* name) {
  auto it = object.find(name);
  if (it == object.end()) throw RuleBaseError(where + ": missing field '" + name + "'");
  return *it;
}

std::string string_field(const json& object, const std::string& where, const char* name) {
  const auto& v = field(object, where, name);
  if (!v.is_string()) throw RuleBaseError(where + ": field '" + name + "' must be a string");
  return v.get<std::string>();
}

double number_field(const json& object, const std::string& where, const char* name) {
  const auto& v = field(object, where, name);
  if (!v.is_number()) throw RuleBaseError(where + ": field '" + name + "' must be a number");
  return v.get<double>();
}

Rule rule_from_json(const json& item, const std::string& where) {
  if (!item.is_object()) throw RuleBaseError(where + ": rule must be an object");
  Rule rule;
  rule.id = string_field(item, where, "id");
  const auto task = string_field(item, where, "task");
  if (auto t = parse_task(task)) {
    rule.task = *t;
  } else {
    throw RuleBaseError(where + ": field 'task' has unknown value '" + task + "'");
  }
  rule.label = string_field(item, where, "label");
  const auto& predicates = field(item, where, "predicates");
  if (!predicates.is_array()) throw RuleBaseError(where + ": field 'predicates' must be an array");
  if (predicates.empty() || predicates.size() > kMaxPredicates) {
    throw RuleBaseError(where + ": field 'predicates' holds " + std::to_string(predicates.size()) +
                        " predicates, a rule needs 1 to " + std::to_string(kMaxPredicates));
  }
  for (const auto& p : predicates) {
    if (!p.is_string()) throw RuleBaseError(where + ": field 'predicates' must hold strings");
    try {
      rule.predicates.push_back(parse_predicate(p.get<std::string>()));
    } catch (const PredicateParseError& e) {
      throw RuleBaseError(where + ": field 'predicates': " + e.what());
    }
  }
  rule.reward = number_field(item, where, "reward");
  rule.confidence = number_field(item, where, "confidence");
  const auto source = string_field(item, where, "source");
  if (auto s = parse_rule_source(source)) {
    rule.source = *s;
  } else {
    throw RuleBaseError(where + ": field 'source' has unknown value '" + source + "'");
  }
  try {
    canonicalize_rule(rule);
  } catch (const InvalidRule& e) {
    throw RuleBaseError(where + ": " + e.what());
  }
  return rule;
}

}  // namespace

RuleBase rulebase_from_json(const json& doc) {
  if (!doc.is_object()) throw RuleBaseError("rule base must be an object");
  const auto& version = field(doc, "rule base", "version");
  if (!version.is_number_integer()) throw RuleBaseError("rule base: field 'version' must be an integer");
  if (version.get<long long>() != kRuleBaseVersion) {
    throw RuleBaseError("unsupported rule base version " + version.dump() + ", expected " +
                        std::to_string(kRuleBaseVersion));
  }

  RuleBase rb;
  const auto& metadata = field(doc, "rule base", "metadata");
  if (!metadata.is_object()) throw RuleBaseError("rule base: field 'metadata' must be an object");
  rb.metadata.created_at = string_field(metadata, "metadata", "created_at");
  rb.metadata.dataset_digest = string_field(metadata, "metadata", "dataset_digest");
  rb.metadata.config_digest = string_field(metadata, "metadata", "config_digest");
  if (auto it = metadata.find("provenance"); it != metadata.end()) {
    if (!it->is_object()) throw RuleBaseError("metadata: field 'provenance' must be an object");
    rb.metadata.provenance = *it;
  }

  const auto& rules = field(doc, "rule base", "rules");
  if (!rules.is_array()) throw RuleBaseError("rule base: field 'rules' must be an array");
  for (std::size_t i = 0; i < rules.size(); ++i) {
    rb.rules.push_back(rule_from_json(rules[i], "rules[" + std::to_string(i) + "]"));
  }
  validate_rulebase(rb, nullptr, false);
  return rb;
}

void save_rulebase(const RuleBase& rb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuleBaseError("cannot write rule base " + path.string());
  out << rulebase_to_json(rb).dump(2) << '\n';
}

RuleBase load_rulebase(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuleBaseError("cannot open rule base " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw RuleBaseError(std::string("malformed rule base: ") + e.what());
  }
  return rulebase_from_json(doc);
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream hex;
  hex << std::hex << std::setfill('0');
  for (unsigned int i = 0; i < length; ++i) hex << std::setw(2) << static_cast<int>(digest[i]);
  return hex.str();
}

std::string file_sha256_hex(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return sha256_hex(buffer.str());
}

std::string iso8601_utc(long long epoch_seconds) {
  const auto t = static_cast<std::time_t>(epoch_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace rulesmith

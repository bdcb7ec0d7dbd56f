#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rulesmith/dataset.hpp"

namespace rulesmith {

enum class Field { user_text, service_text, ocr_text, any_text };
enum class Op { contains, not_contains, starts_with, ends_with };

std::string_view to_string(Field field);
std::string_view to_string(Op op);
std::optional<Field> parse_field(std::string_view s);
std::optional<Op> parse_op(std::string_view s);

inline constexpr std::size_t kMaxPredicates = 5;
inline constexpr std::size_t kMaxValueScalars = 128;

struct Predicate {
  Field field = Field::any_text;
  Op op = Op::contains;
  std::string value;

  auto operator<=>(const Predicate&) const = default;
  bool operator==(const Predicate&) const = default;
};

/// Canonical text form: `<field> <op> "<value>"`, with `"` and `\` escaped.
std::string render_predicate(const Predicate& p);

/// Parses the canonical form. Runs of spaces/tabs separate tokens and
/// surrounding whitespace is ignored. Throws PredicateParseError.
Predicate parse_predicate(std::string_view text);

/// Throws InvalidRule if the value is empty, too long, or not UTF-8.
void validate_predicate(const Predicate& p);

enum class RuleSource { mcts, manual };
std::string_view to_string(RuleSource source);
std::optional<RuleSource> parse_rule_source(std::string_view s);

/// A conjunction of predicates implying `label`. `predicates` is kept sorted,
/// which makes set comparisons a linear merge.
struct Rule {
  std::string id;
  Task task = Task::intent;
  std::string label;
  std::vector<Predicate> predicates;
  double reward = 0.0;
  double confidence = 0.0;
  RuleSource source = RuleSource::mcts;

  bool operator==(const Rule&) const = default;
};

/// Sorts the predicate set in place and checks every rule invariant. The
/// taxonomy check is skipped when `taxonomy` is null.
void canonicalize_rule(Rule& rule, const LabelTaxonomy* taxonomy = nullptr);

/// True when `a` is a strict subset of `b` (both sorted).
bool strict_subset(std::span<const Predicate> a, std::span<const Predicate> b);

struct RuleQuality {
  std::optional<double> precision;  // empty when coverage == 0
  std::size_t coverage = 0;
  std::size_t correct = 0;

  bool operator==(const RuleQuality&) const = default;
};

/// Text extraction before normalization.
std::string extract_field(const DialogueSample& sample, Field field);

/// A sample with all four fields extracted and normalized once, for repeated
/// evaluation. Holds a pointer to the source; the sample must outlive it.
class PreparedSample {
 public:
  explicit PreparedSample(const DialogueSample& sample);

  const DialogueSample& sample() const noexcept { return *sample_; }
  const std::string& field(Field f) const noexcept { return fields_[static_cast<std::size_t>(f)]; }

 private:
  const DialogueSample* sample_;
  std::array<std::string, 4> fields_;
};

std::vector<PreparedSample> prepare(std::span<const DialogueSample> samples);

bool eval_predicate(const Predicate& p, const DialogueSample& sample);
bool eval_predicate(const Predicate& p, const PreparedSample& sample);

/// Same as eval_predicate, with the predicate value already normalized.
bool matches_normalized(Op op, std::string_view haystack, std::string_view needle);

bool eval_rule(const Rule& rule, const DialogueSample& sample);
bool eval_rule(const Rule& rule, const PreparedSample& sample);

/// Counts over samples of the rule's task; other tasks are ignored.
RuleQuality measure_rule(const Rule& rule, std::span<const DialogueSample> validation);
RuleQuality measure_rule(const Rule& rule, std::span<const PreparedSample> validation);

}  // namespace rulesmith

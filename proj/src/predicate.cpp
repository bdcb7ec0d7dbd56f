#include "rulesmith/predicate.hpp"

#include <algorithm>
#include <type_traits>

#include "rulesmith/error.hpp"
#include "rulesmith/text.hpp"

namespace rulesmith {

std::string_view to_string(Field field) {
  switch (field) {
    case Field::user_text: return "user_text";
    case Field::service_text: return "service_text";
    case Field::ocr_text: return "ocr_text";
    case Field::any_text: return "any_text";
  }
  return "?";
}

std::string_view to_string(Op op) {
  switch (op) {
    case Op::contains: return "contains";
    case Op::not_contains: return "not_contains";
    case Op::starts_with: return "starts_with";
    case Op::ends_with: return "ends_with";
  }
  return "?";
}

std::optional<Field> parse_field(std::string_view s) {
  for (auto f : {Field::user_text, Field::service_text, Field::ocr_text, Field::any_text}) {
    if (s == to_string(f)) return f;
  }
  return std::nullopt;
}

std::optional<Op> parse_op(std::string_view s) {
  for (auto op : {Op::contains, Op::not_contains, Op::starts_with, Op::ends_with}) {
    if (s == to_string(op)) return op;
  }
  return std::nullopt;
}

std::string_view to_string(RuleSource source) { return source == RuleSource::mcts ? "mcts" : "manual"; }

std::optional<RuleSource> parse_rule_source(std::string_view s) {
  if (s == "mcts") return RuleSource::mcts;
  if (s == "manual") return RuleSource::manual;
  return std::nullopt;
}

std::string render_predicate(const Predicate& p) {
  std::string out;
  out.reserve(p.value.size() + 32);
  out += to_string(p.field);
  out += ' ';
  out += to_string(p.op);
  out += " \"";
  for (char c : p.value) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

namespace {

class PredicateParser {
 public:
  explicit PredicateParser(std::string_view text) : text_(text) {}

  Predicate parse() {
    skip_space();
    Predicate p;
    const auto field_at = pos_;
    const auto field_name = identifier("field name");
    auto field = parse_field(field_name);
    if (!field) throw PredicateParseError("unknown field '" + std::string(field_name) + "'", field_at);
    p.field = *field;

    require_space("operator");
    const auto op_at = pos_;
    const auto op_name = identifier("operator");
    auto op = parse_op(op_name);
    if (!op) throw PredicateParseError("unknown op '" + std::string(op_name) + "'", op_at);
    p.op = *op;

    require_space("quoted value");
    const auto value_at = pos_;
    p.value = quoted();
    skip_space();
    if (pos_ != text_.size()) throw PredicateParseError("expected end of input", pos_);

    if (!text::is_valid_utf8(p.value)) throw PredicateParseError("value is not valid UTF-8", value_at);
    if (p.value.empty()) throw PredicateParseError("expected non-empty value", value_at);
    if (text::scalar_count(p.value) > kMaxValueScalars) {
      throw PredicateParseError("value exceeds " + std::to_string(kMaxValueScalars) + " characters", value_at);
    }
    return p;
  }

 private:
  static bool is_space(char c) { return c == ' ' || c == '\t'; }
  static bool is_ident(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
  }

  void skip_space() {
    while (pos_ < text_.size() && (is_space(text_[pos_]) || text_[pos_] == '\n' || text_[pos_] == '\r')) ++pos_;
  }

  void require_space(const char* next) {
    if (pos_ >= text_.size() || !is_space(text_[pos_])) {
      throw PredicateParseError(std::string("expected whitespace before ") + next, pos_);
    }
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  std::string_view identifier(const char* what) {
    const auto start = pos_;
    while (pos_ < text_.size() && is_ident(text_[pos_])) ++pos_;
    if (pos_ == start) throw PredicateParseError(std::string("expected ") + what, start);
    return text_.substr(start, pos_ - start);
  }

  std::string quoted() {
    if (pos_ >= text_.size() || text_[pos_] != '"') throw PredicateParseError("expected '\"'", pos_);
    ++pos_;
    std::string value;
    while (true) {
      if (pos_ >= text_.size()) throw PredicateParseError("unterminated string, expected '\"'", pos_);
      const char c = text_[pos_];
      if (c == '"') {
        ++pos_;
        return value;
      }
      if (c == '\\') {
        if (pos_ + 1 >= text_.size()) throw PredicateParseError("expected escaped '\"' or '\\'", pos_ + 1);
        const char next = text_[pos_ + 1];
        if (next != '"' && next != '\\') {
          throw PredicateParseError(std::string("invalid escape '\\") + next + "', expected '\\\"' or '\\\\'",
                                    pos_);
        }
        value += next;
        pos_ += 2;
        continue;
      }
      value += c;
      ++pos_;
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

Predicate parse_predicate(std::string_view text) { return PredicateParser(text).parse(); }

void validate_predicate(const Predicate& p) {
  if (p.value.empty()) throw InvalidRule("predicate value must be non-empty");
  if (!text::is_valid_utf8(p.value)) throw InvalidRule("predicate value is not valid UTF-8");
  if (text::scalar_count(p.value) > kMaxValueScalars) {
    throw InvalidRule("predicate value exceeds " + std::to_string(kMaxValueScalars) + " characters");
  }
}

void canonicalize_rule(Rule& rule, const LabelTaxonomy* taxonomy) {
  const auto where = "rule '" + rule.id + "': ";
  if (rule.predicates.empty() || rule.predicates.size() > kMaxPredicates) {
    throw InvalidRule(where + "has " + std::to_string(rule.predicates.size()) + " predicates, expected 1 to " +
                      std::to_string(kMaxPredicates));
  }
  for (const auto& p : rule.predicates) validate_predicate(p);
  std::sort(rule.predicates.begin(), rule.predicates.end());
  if (std::adjacent_find(rule.predicates.begin(), rule.predicates.end()) != rule.predicates.end()) {
    throw InvalidRule(where + "repeats a predicate");
  }
  if (!(rule.reward >= 0.0 && rule.reward <= 1.0)) throw InvalidRule(where + "reward outside [0, 1]");
  if (!(rule.confidence >= 0.0 && rule.confidence <= 1.0)) throw InvalidRule(where + "confidence outside [0, 1]");
  if (taxonomy && !taxonomy->contains(rule.task, rule.label)) {
    throw InvalidRule(where + "unknown label '" + rule.label + "' for task " + std::string(to_string(rule.task)));
  }
}

bool strict_subset(std::span<const Predicate> a, std::span<const Predicate> b) {
  return a.size() < b.size() && std::includes(b.begin(), b.end(), a.begin(), a.end());
}

std::string extract_field(const DialogueSample& sample, Field field) {
  auto join = [&](Speaker who) {
    std::string out;
    bool first = true;
    for (const auto& turn : sample.turns) {
      if (turn.speaker != who) continue;
      if (!first) out += '\n';
      out += turn.text;
      first = false;
    }
    return out;
  };
  switch (field) {
    case Field::user_text: return join(Speaker::user);
    case Field::service_text: return join(Speaker::service_rep);
    case Field::ocr_text: return sample.ocr_text;
    case Field::any_text: return join(Speaker::user) + '\n' + join(Speaker::service_rep) + '\n' + sample.ocr_text;
  }
  return {};
}

PreparedSample::PreparedSample(const DialogueSample& sample) : sample_(&sample) {
  for (auto f : {Field::user_text, Field::service_text, Field::ocr_text, Field::any_text}) {
    fields_[static_cast<std::size_t>(f)] = text::normalize(extract_field(sample, f));
  }
}

std::vector<PreparedSample> prepare(std::span<const DialogueSample> samples) {
  std::vector<PreparedSample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.emplace_back(s);
  return out;
}

bool matches_normalized(Op op, std::string_view haystack, std::string_view needle) {
  switch (op) {
    case Op::contains: return haystack.find(needle) != std::string_view::npos;
    case Op::not_contains: return haystack.find(needle) == std::string_view::npos;
    case Op::starts_with: return haystack.starts_with(needle);
    case Op::ends_with: return haystack.ends_with(needle);
  }
  return false;
}

bool eval_predicate(const Predicate& p, const DialogueSample& sample) {
  return matches_normalized(p.op, text::normalize(extract_field(sample, p.field)), text::normalize(p.value));
}

bool eval_predicate(const Predicate& p, const PreparedSample& sample) {
  return matches_normalized(p.op, sample.field(p.field), text::normalize(p.value));
}

bool eval_rule(const Rule& rule, const DialogueSample& sample) {
  return std::all_of(rule.predicates.begin(), rule.predicates.end(),
                     [&](const Predicate& p) { return eval_predicate(p, sample); });
}

bool eval_rule(const Rule& rule, const PreparedSample& sample) {
  return std::all_of(rule.predicates.begin(), rule.predicates.end(),
                     [&](const Predicate& p) { return eval_predicate(p, sample); });
}

namespace {

template <typename Sample, typename Get>
RuleQuality measure(const Rule& rule, std::span<const Sample> samples, Get get) {
  // Normalize predicate values once for the whole pass.
  std::vector<std::string> needles;
  needles.reserve(rule.predicates.size());
  for (const auto& p : rule.predicates) needles.push_back(text::normalize(p.value));

  RuleQuality q;
  for (const auto& item : samples) {
    const DialogueSample& s = get(item);
    if (s.task != rule.task) continue;
    bool fired = true;
    for (std::size_t i = 0; i < rule.predicates.size() && fired; ++i) {
      if constexpr (std::is_same_v<Sample, PreparedSample>) {
        fired = matches_normalized(rule.predicates[i].op, item.field(rule.predicates[i].field), needles[i]);
      } else {
        fired = matches_normalized(rule.predicates[i].op,
                                   text::normalize(extract_field(s, rule.predicates[i].field)), needles[i]);
      }
    }
    if (!fired) continue;
    ++q.coverage;
    if (s.gold_label && *s.gold_label == rule.label) ++q.correct;
  }
  if (q.coverage > 0) q.precision = static_cast<double>(q.correct) / static_cast<double>(q.coverage);
  return q;
}

}  // namespace

RuleQuality measure_rule(const Rule& rule, std::span<const DialogueSample> validation) {
  return measure(rule, validation, [](const DialogueSample& s) -> const DialogueSample& { return s; });
}

RuleQuality measure_rule(const Rule& rule, std::span<const PreparedSample> validation) {
  return measure(rule, validation, [](const PreparedSample& s) -> const DialogueSample& { return s.sample(); });
}

}  // namespace rulesmith

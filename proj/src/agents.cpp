#include "rulesmith/agents.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include "rulesmith/random.hpp"
#include "rulesmith/text.hpp"

namespace rulesmith {

using nlohmann::json;

RewardEstimate make_estimate(double reward, double confidence, std::string rationale) {
  if (!std::isfinite(reward) || reward < 0.0 || reward > 1.0) {
    throw ProtocolError("field 'reward' must lie in [0, 1], got " + std::to_string(reward), "reward");
  }
  if (!std::isfinite(confidence) || confidence < 0.0 || confidence > 1.0) {
    throw ProtocolError("field 'confidence' must lie in [0, 1], got " + std::to_string(confidence), "confidence");
  }
  return RewardEstimate{reward, confidence, std::move(rationale)};
}

Proposals finalize_proposals(const std::vector<std::string>& raw, const AgentContext& ctx, std::size_t k) {
  Proposals out;
  std::set<Predicate> seen(ctx.current.begin(), ctx.current.end());
  seen.insert(ctx.siblings.begin(), ctx.siblings.end());
  for (const auto& candidate : raw) {
    if (out.predicates.size() >= k) break;
    Predicate p;
    try {
      p = parse_predicate(candidate);
    } catch (const PredicateParseError&) {
      ++out.dropped;
      continue;
    }
    if (seen.insert(p).second) out.predicates.push_back(std::move(p));
  }
  return out;
}

// --- MockAgent ---

MockAgent::MockAgent(std::vector<DialogueSample> corpus, MockAgentConfig config)
    : corpus_(std::move(corpus)), config_(config) {
  prepared_ = prepare(corpus_);
  entries_.reserve(corpus_.size());
  for (std::size_t i = 0; i < corpus_.size(); ++i) {
    auto tokens = text::keyword_tokens(prepared_[i].field(Field::any_text));
    std::sort(tokens.begin(), tokens.end());
    tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
    std::erase_if(tokens, [](const std::string& t) { return text::scalar_count(t) > kMaxValueScalars; });
    entries_.push_back({i, std::move(tokens)});
  }
}

std::vector<std::string> MockAgent::ranked_tokens(const AgentContext& ctx) const {
  Rule partial;
  partial.task = ctx.task;
  partial.predicates = ctx.current;

  struct Counts {
    std::size_t in = 0;
    std::size_t out = 0;
  };
  std::unordered_map<std::string_view, Counts> df;
  std::size_t n_in = 0;
  std::size_t n_out = 0;
  for (const auto& entry : entries_) {
    const auto& sample = corpus_[entry.index];
    if (sample.task != ctx.task || !sample.gold_label) continue;
    if (!partial.predicates.empty() && !eval_rule(partial, prepared_[entry.index])) continue;
    const bool in_label = *sample.gold_label == ctx.label;
    (in_label ? n_in : n_out) += 1;
    for (const auto& token : entry.tokens) {
      auto& c = df[token];
      (in_label ? c.in : c.out) += 1;
    }
  }
  if (n_in == 0) return {};

  struct Scored {
    std::string_view token;
    double score;
    std::size_t df_in;
  };
  std::vector<Scored> scored;
  for (const auto& [token, c] : df) {
    if (c.in == 0) continue;
    const double p_in = static_cast<double>(c.in) / static_cast<double>(n_in);
    const double p_out = static_cast<double>(c.out + 1) / static_cast<double>(n_out + 1);
    scored.push_back({token, p_in / p_out, c.in});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.df_in != b.df_in) return a.df_in > b.df_in;
    return a.token < b.token;
  });
  std::vector<std::string> out;
  out.reserve(scored.size());
  for (const auto& s : scored) out.emplace_back(s.token);
  return out;
}

Proposals MockAgent::propose_predicates(const AgentContext& ctx, std::size_t k) {
  const auto tokens = ranked_tokens(ctx);
  Proposals result;
  std::set<Predicate> taken(ctx.current.begin(), ctx.current.end());
  taken.insert(ctx.siblings.begin(), ctx.siblings.end());
  for (const auto& token : tokens) {
    if (result.predicates.size() >= k) break;
    Predicate p{Field::any_text, Op::contains, token};
    if (taken.insert(p).second) result.predicates.push_back(std::move(p));
  }
  return result;
}

RewardEstimate MockAgent::evaluate_rule(const AgentContext& ctx, const Rule& rule) {
  const auto quality = measure_rule(rule, ctx.validation);
  if (quality.coverage == 0) return make_estimate(0.0, 0.0, "rule matches no validation example");

  std::string key = rule.label;
  for (const auto& p : rule.predicates) key += '\x1f' + render_predicate(p);
  Rng rng(mix_seed(config_.seed, stable_hash(key)));
  const double noise = config_.epsilon * (2.0 * rng.unit() - 1.0);
  const double reward = std::clamp(*quality.precision + noise, 0.0, 1.0);
  const double confidence = std::min(1.0, static_cast<double>(quality.coverage) / 10.0);

  std::ostringstream why;
  why << quality.correct << " of " << quality.coverage << " matched validation examples carry the label";
  return make_estimate(reward, confidence, why.str());
}

std::string MockAgent::rephrase(const std::string& text) { return text; }

// --- RemoteAgent ---

std::string describe_sample(const DialogueSample& sample, bool with_label) {
  std::ostringstream out;
  out << "[" << sample.id << "]";
  if (with_label && sample.gold_label) out << " label=" << *sample.gold_label;
  out << '\n';
  for (const auto& turn : sample.turns) out << "  " << to_string(turn.speaker) << ": " << turn.text << '\n';
  if (!sample.ocr_text.empty()) out << "  ocr: " << sample.ocr_text << '\n';
  return out.str();
}

namespace {

constexpr std::string_view kGrammar =
    "A predicate is one line of the form: <field> <op> \"<value>\"\n"
    "  field: user_text | service_text | ocr_text | any_text\n"
    "  op: contains | not_contains | starts_with | ends_with\n"
    "  value: 1 to 128 characters; escape \" and \\ with a backslash.\n"
    "Matching is case-insensitive after NFKC normalization. user_text joins the user turns with newlines, "
    "service_text the service_rep turns, any_text joins user_text, service_text and ocr_text.\n";

std::string render_predicates(const std::vector<Predicate>& predicates) {
  if (predicates.empty()) return "  (none)\n";
  std::string out;
  for (const auto& p : predicates) out += "  " + render_predicate(p) + '\n';
  return out;
}

template <typename Samples>
std::string render_samples(const Samples& samples, std::size_t limit, bool with_label) {
  std::string out;
  for (std::size_t i = 0; i < samples.size() && i < limit; ++i) out += describe_sample(samples[i], with_label);
  return out;
}

}  // namespace

RewardEstimate parse_estimate_object(const json& object) {
  auto number = [&](const char* field) {
    auto it = object.find(field);
    if (it == object.end()) throw ProtocolError(std::string("missing field '") + field + "'", field);
    if (!it->is_number()) throw ProtocolError(std::string("field '") + field + "' must be a number", field);
    return it->get<double>();
  };
  const double reward = number("reward");
  const double confidence = number("confidence");
  std::string rationale;
  if (auto it = object.find("rationale"); it != object.end()) {
    if (!it->is_string()) throw ProtocolError("field 'rationale' must be a string", "rationale");
    rationale = it->get<std::string>();
  }
  return make_estimate(reward, confidence, std::move(rationale));
}

RemoteAgent::RemoteAgent(EndpointConfig endpoint) : RemoteAgent(std::move(endpoint), Options{}) {}

RemoteAgent::RemoteAgent(EndpointConfig endpoint, Options options)
    : transport_(std::make_unique<ChatTransport>(std::move(endpoint))), options_(options) {}

Proposals RemoteAgent::propose_predicates(const AgentContext& ctx, std::size_t k) {
  std::ostringstream prompt;
  prompt << "You write keyword rules that identify the " << to_string(ctx.task) << " label \"" << ctx.label
         << "\" in e-commerce customer-service records.\n"
         << kGrammar << "\nExamples carrying this label:\n"
         << render_samples(ctx.exemplars, options_.exemplars_in_prompt, false)
         << "\nThe rule currently requires all of:\n"
         << render_predicates(ctx.current) << "Already tried as alternatives (do not repeat):\n"
         << render_predicates(ctx.siblings) << "\nPropose up to " << k
         << " new predicates that would make the rule more precise for this label. "
         << "Reply with one fenced block holding {\"predicates\": [\"<predicate>\", ...]}.";

  std::vector<ChatMessage> messages{{"system", "You are a careful rule-mining assistant."},
                                    {"user", prompt.str()}};
  return transport_->converse(std::move(messages), [&](const std::string& reply) {
    auto object = parse_fenced_object(reply);
    auto it = object.find("predicates");
    if (it == object.end()) throw ProtocolError("missing field 'predicates'", "predicates");
    if (!it->is_array()) throw ProtocolError("field 'predicates' must be an array", "predicates");
    std::vector<std::string> raw;
    for (const auto& v : *it) {
      if (!v.is_string()) throw ProtocolError("field 'predicates' must hold strings", "predicates");
      raw.push_back(v.get<std::string>());
    }
    return finalize_proposals(raw, ctx, k);
  });
}

RewardEstimate RemoteAgent::evaluate_rule(const AgentContext& ctx, const Rule& rule) {
  std::ostringstream prompt;
  prompt << "Assess a keyword rule that predicts the " << to_string(ctx.task) << " label \"" << rule.label
         << "\".\n"
         << kGrammar << "\nThe rule fires when all of these hold:\n"
         << render_predicates(rule.predicates) << "\nLabelled validation examples:\n"
         << render_samples(ctx.validation, options_.validation_in_prompt, true)
         << "\nEstimate the rule's accuracy on these examples (share of examples it fires on that carry the "
            "label) as reward in [0, 1], and your confidence in that estimate in [0, 1]. "
         << "Reply with one fenced block holding {\"reward\": number, \"confidence\": number, \"rationale\": string}.";

  std::vector<ChatMessage> messages{{"system", "You are a strict evaluator of classification rules."},
                                    {"user", prompt.str()}};
  return transport_->converse(std::move(messages),
                              [](const std::string& reply) { return parse_estimate_object(parse_fenced_object(reply)); });
}

std::string RemoteAgent::rephrase(const std::string& text) {
  std::vector<ChatMessage> messages{
      {"system", "You rephrase customer-service utterances. Keep the meaning, language and any product details."},
      {"user", "Rephrase the following text. Reply with the rephrased text only.\n\n" + text}};
  return transport_->converse(std::move(messages), [](const std::string& reply) {
    auto out = text::trim(reply);
    if (out.empty()) throw ProtocolError("rephrase reply is empty", "content");
    return out;
  });
}

}  // namespace rulesmith

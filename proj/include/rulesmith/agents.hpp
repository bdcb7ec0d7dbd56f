#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "rulesmith/dataset.hpp"
#include "rulesmith/predicate.hpp"
#include "rulesmith/transport.hpp"

namespace rulesmith {

/// Agent self-assessment of a rule. Construct through `make_estimate`, which
/// rejects out-of-range values instead of clamping them.
struct RewardEstimate {
  double reward = 0.0;
  double confidence = 0.0;
  std::string rationale;

  bool operator==(const RewardEstimate&) const = default;
};

RewardEstimate make_estimate(double reward, double confidence, std::string rationale = {});

struct AgentContext {
  Task task = Task::intent;
  std::string label;
  std::vector<DialogueSample> exemplars;   // same-label training samples
  std::vector<DialogueSample> validation;  // labelled samples the evaluator may score against
  std::vector<Predicate> current;          // the partial rule being extended
  std::vector<Predicate> siblings;         // actions already taken at sibling nodes
};

struct Proposals {
  std::vector<Predicate> predicates;
  std::size_t dropped = 0;  // proposals that failed to parse
};

/// Parses raw proposal strings, drops duplicates of `ctx.current`,
/// `ctx.siblings` and earlier proposals, and keeps at most `k`.
Proposals finalize_proposals(const std::vector<std::string>& raw, const AgentContext& ctx, std::size_t k);

/// One model behind three roles. Implementations must be safe to call from
/// several threads at once.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual Proposals propose_predicates(const AgentContext& ctx, std::size_t k) = 0;
  virtual RewardEstimate evaluate_rule(const AgentContext& ctx, const Rule& rule) = 0;
  virtual std::string rephrase(const std::string& text) = 0;
};

struct MockAgentConfig {
  std::uint64_t seed = 0;
  double epsilon = 0.05;
};

/// Deterministic stand-in for a model endpoint.
///
/// Proposals mine keyword tokens from the corpus samples of the context's
/// task that the current partial rule already matches, ranked by
///   (df_label / n_label) / ((df_other + 1) / (n_other + 1))
/// where df counts samples containing the token. Evaluation scores the rule
/// against the context's validation samples: reward is measured precision
/// (0 when nothing matches) plus uniform noise in [-epsilon, epsilon] seeded
/// by the rule; confidence is min(1, coverage / 10). Rephrase echoes.
class MockAgent final : public Agent {
 public:
  MockAgent(std::vector<DialogueSample> corpus, MockAgentConfig config = {});

  Proposals propose_predicates(const AgentContext& ctx, std::size_t k) override;
  RewardEstimate evaluate_rule(const AgentContext& ctx, const Rule& rule) override;
  std::string rephrase(const std::string& text) override;

  /// The full ranked candidate list behind `propose_predicates`, best first.
  std::vector<std::string> ranked_tokens(const AgentContext& ctx) const;

  const MockAgentConfig& config() const noexcept { return config_; }

 private:
  struct Entry {
    std::size_t index;
    std::vector<std::string> tokens;  // distinct, sorted
  };

  std::vector<DialogueSample> corpus_;
  std::vector<PreparedSample> prepared_;
  std::vector<Entry> entries_;
  MockAgentConfig config_;
};

/// Chat-completions backed agent. Replies must carry one fenced JSON block:
/// `{"predicates": [...]}` for proposals and
/// `{"reward": r, "confidence": c, "rationale": "..."}` for evaluations.
/// Rephrase replies are plain text.
class RemoteAgent final : public Agent {
 public:
  struct Options {
    std::size_t exemplars_in_prompt = 8;
    std::size_t validation_in_prompt = 8;
  };

  explicit RemoteAgent(EndpointConfig endpoint);
  RemoteAgent(EndpointConfig endpoint, Options options);

  Proposals propose_predicates(const AgentContext& ctx, std::size_t k) override;
  RewardEstimate evaluate_rule(const AgentContext& ctx, const Rule& rule) override;
  std::string rephrase(const std::string& text) override;

 private:
  std::unique_ptr<ChatTransport> transport_;
  Options options_;
};

/// Parses an evaluation reply object; throws ProtocolError naming the field.
RewardEstimate parse_estimate_object(const nlohmann::json& object);

/// Human-readable rendering used inside prompts.
std::string describe_sample(const DialogueSample& sample, bool with_label);

}  // namespace rulesmith

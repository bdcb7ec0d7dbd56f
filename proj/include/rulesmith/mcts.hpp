#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rulesmith/agents.hpp"
#include "rulesmith/dataset.hpp"
#include "rulesmith/predicate.hpp"

namespace rulesmith {

struct SearchConfig {
  std::size_t max_iterations = 200;
  double exploration = std::sqrt(2.0);
  std::size_t proposals_per_expansion = 5;
  std::uint64_t seed = 0;
  std::size_t context_exemplars = 8;
  std::size_t context_validation = 8;  // 0 = every same-task validation sample
};

inline constexpr std::size_t kNoParent = static_cast<std::size_t>(-1);

struct SearchNode {
  std::vector<Predicate> state;  // sorted
  std::size_t parent = kNoParent;
  std::optional<Predicate> action;  // edge from the parent; empty at the root
  std::size_t visits = 0;
  double total_value = 0.0;
  std::vector<std::size_t> children;  // creation order
  std::vector<Predicate> untried;
  bool fetched = false;    // proposals requested for this node
  bool exhausted = false;  // nothing left to expand anywhere below
  std::optional<RewardEstimate> evaluation;
};

class SearchTree {
 public:
  SearchTree();

  const SearchNode& root() const { return nodes_.front(); }
  const SearchNode& node(std::size_t index) const { return nodes_.at(index); }
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<SearchNode>& nodes() const noexcept { return nodes_; }

 private:
  friend class TreeSearch;
  std::vector<SearchNode> nodes_;
};

/// +infinity for an unvisited child, otherwise Q/N + c * sqrt(ln(parent_visits) / N).
double uct_score(const SearchNode& child, std::size_t parent_visits, double exploration);

struct HarvestedRule {
  Rule rule;
  RewardEstimate estimate;
};

struct SearchEvent {
  std::string label;
  std::size_t iteration = 0;  // 1-based count of completed evaluations
  std::size_t node = 0;
  double value = 0.0;
  double best_reward = 0.0;
};

struct SearchObserver {
  std::function<void(const SearchEvent&)> on_evaluation;
  std::ostream* trace = nullptr;  // one JSON record per evaluation
};

struct SearchResult {
  std::vector<HarvestedRule> rules;  // evaluation order
  SearchTree tree;
  AgentContext context;  // exemplars and validation the agent saw
  std::size_t evaluations = 0;
  bool aborted = false;
  std::string error;
};

/// Builds the context handed to the agent: seeded picks of same-label
/// training exemplars and of validation samples (half same label when
/// available, the rest other labels of the task).
AgentContext build_context(std::string_view label, Task task, const DatasetSplit& split, const SearchConfig& config);

/// Grows rules for one label by tree search. Selection descends by UCT
/// through fully expanded nodes (ties go to the first-created child);
/// expansion asks the agent for candidate predicates once per node; each new
/// child is evaluated once by the agent, and reward * confidence is
/// backpropagated to the root. Nodes holding kMaxPredicates predicates are
/// terminal. Every evaluated node is harvested as a rule.
///
/// An AgentUnavailable error stops the search; rules harvested so far are
/// returned with `aborted` set.
SearchResult run_search(std::string_view label, Task task, const DatasetSplit& split, Agent& agent,
                        const SearchConfig& config, const SearchObserver& observer = {});

}  // namespace rulesmith

#include "rulesmith/mcts.hpp"

#include <algorithm>
#include <limits>
#include <ostream>

#include <nlohmann/json.hpp>

#include "rulesmith/error.hpp"
#include "rulesmith/random.hpp"

namespace rulesmith {

SearchTree::SearchTree() { nodes_.emplace_back(); }

double uct_score(const SearchNode& child, std::size_t parent_visits, double exploration) {
  if (child.visits == 0) return std::numeric_limits<double>::infinity();
  const auto n = static_cast<double>(child.visits);
  return child.total_value / n + exploration * std::sqrt(std::log(static_cast<double>(parent_visits)) / n);
}

AgentContext build_context(std::string_view label, Task task, const DatasetSplit& split, const SearchConfig& config) {
  AgentContext ctx;
  ctx.task = task;
  ctx.label = std::string(label);

  auto take = [](std::vector<const DialogueSample*> pool, std::size_t n, Rng& rng) {
    rng.shuffle(pool.begin(), pool.end());
    if (n != 0 && pool.size() > n) pool.resize(n);
    return pool;
  };

  Rng rng(mix_seed(config.seed, stable_hash(label)));

  std::vector<const DialogueSample*> same_label;
  for (const auto& s : split.train) {
    if (s.task == task && s.gold_label && *s.gold_label == label) same_label.push_back(&s);
  }
  for (const auto* s : take(same_label, config.context_exemplars, rng)) ctx.exemplars.push_back(*s);

  std::vector<const DialogueSample*> positives;
  std::vector<const DialogueSample*> negatives;
  for (const auto& s : split.validation) {
    if (s.task != task || !s.gold_label) continue;
    (*s.gold_label == label ? positives : negatives).push_back(&s);
  }
  std::vector<const DialogueSample*> picked;
  if (config.context_validation == 0) {
    for (const auto& s : split.validation) {
      if (s.task == task && s.gold_label) picked.push_back(&s);
    }
  } else {
    const auto n = config.context_validation;
    rng.shuffle(positives.begin(), positives.end());
    rng.shuffle(negatives.begin(), negatives.end());
    auto want_pos = std::min(positives.size(), (n + 1) / 2);
    const auto want_neg = std::min(negatives.size(), n - want_pos);
    want_pos = std::min(positives.size(), n - want_neg);
    picked.assign(positives.begin(), positives.begin() + static_cast<std::ptrdiff_t>(want_pos));
    picked.insert(picked.end(), negatives.begin(), negatives.begin() + static_cast<std::ptrdiff_t>(want_neg));
    std::sort(picked.begin(), picked.end(),
              [](const DialogueSample* a, const DialogueSample* b) { return a->id < b->id; });
  }
  for (const auto* s : picked) ctx.validation.push_back(*s);
  return ctx;
}

class TreeSearch {
 public:
  TreeSearch(std::string_view label, Task task, Agent& agent, const SearchConfig& config,
             const SearchObserver& observer, SearchResult& result)
      : label_(label), task_(task), agent_(agent), config_(config), observer_(observer), result_(result),
        nodes_(result.tree.nodes_) {}

  void run() {
    while (result_.evaluations < config_.max_iterations && !nodes_[0].exhausted) {
      const auto leaf = select_and_expand();
      if (!leaf) {
        if (result_.aborted) return;
        continue;
      }
      if (!evaluate(*leaf)) return;
    }
  }

 private:
  bool terminal(const SearchNode& node) const { return node.state.size() >= kMaxPredicates; }

  // Walks down from the root and returns a freshly created child, or nothing
  // when this pass only marked nodes exhausted (or the agent failed).
  std::optional<std::size_t> select_and_expand() {
    std::size_t current = 0;
    while (true) {
      if (terminal(nodes_[current])) {
        mark_exhausted(current);
        return std::nullopt;
      }
      if (!nodes_[current].fetched && !fetch(current)) return std::nullopt;
      if (!nodes_[current].untried.empty()) return expand(current);

      const auto next = best_child(current);
      if (!next) {
        mark_exhausted(current);
        return std::nullopt;
      }
      current = *next;
    }
  }

  bool fetch(std::size_t index) {
    auto ctx = result_.context;
    ctx.current = nodes_[index].state;
    if (const auto parent = nodes_[index].parent; parent != kNoParent) {
      for (auto sibling : nodes_[parent].children) {
        if (sibling != index) ctx.siblings.push_back(*nodes_[sibling].action);
      }
    }
    Proposals proposals;
    try {
      proposals = agent_.propose_predicates(ctx, config_.proposals_per_expansion);
    } catch (const AgentUnavailable& e) {
      result_.aborted = true;
      result_.error = e.what();
      return false;
    }
    auto& node = nodes_[index];
    node.fetched = true;
    for (auto& p : proposals.predicates) {
      if (std::binary_search(node.state.begin(), node.state.end(), p)) continue;
      if (std::find(node.untried.begin(), node.untried.end(), p) != node.untried.end()) continue;
      node.untried.push_back(std::move(p));
    }
    return true;
  }

  std::size_t expand(std::size_t index) {
    Predicate action = nodes_[index].untried.front();
    nodes_[index].untried.erase(nodes_[index].untried.begin());

    SearchNode child;
    child.state = nodes_[index].state;
    child.state.insert(std::upper_bound(child.state.begin(), child.state.end(), action), action);
    child.parent = index;
    child.action = std::move(action);
    nodes_.push_back(std::move(child));
    const auto created = nodes_.size() - 1;
    nodes_[index].children.push_back(created);
    return created;
  }

  std::optional<std::size_t> best_child(std::size_t index) const {
    const auto& node = nodes_[index];
    std::optional<std::size_t> best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (auto c : node.children) {
      if (nodes_[c].exhausted) continue;
      const double score = uct_score(nodes_[c], std::max<std::size_t>(node.visits, 1), config_.exploration);
      if (!best || score > best_score) {
        best = c;
        best_score = score;
      }
    }
    return best;
  }

  void mark_exhausted(std::size_t index) {
    while (index != kNoParent) {
      auto& node = nodes_[index];
      const bool open = !terminal(node) && (!node.fetched || !node.untried.empty() ||
                                            std::any_of(node.children.begin(), node.children.end(),
                                                        [&](std::size_t c) { return !nodes_[c].exhausted; }));
      if (open) return;
      node.exhausted = true;
      index = node.parent;
    }
  }

  bool evaluate(std::size_t index) {
    Rule rule;
    rule.id = label_ + "#" + std::to_string(result_.evaluations + 1);
    rule.task = task_;
    rule.label = label_;
    rule.predicates = nodes_[index].state;
    rule.source = RuleSource::mcts;

    auto ctx = result_.context;
    ctx.current = rule.predicates;
    RewardEstimate estimate;
    try {
      estimate = agent_.evaluate_rule(ctx, rule);
    } catch (const AgentUnavailable& e) {
      result_.aborted = true;
      result_.error = e.what();
      return false;
    }

    const double value = estimate.reward * estimate.confidence;
    nodes_[index].evaluation = estimate;
    for (auto i = index; i != kNoParent; i = nodes_[i].parent) {
      nodes_[i].visits += 1;
      nodes_[i].total_value += value;
    }
    ++result_.evaluations;
    best_reward_ = std::max(best_reward_, estimate.reward);

    rule.reward = estimate.reward;
    rule.confidence = estimate.confidence;
    result_.rules.push_back({std::move(rule), estimate});

    if (terminal(nodes_[index])) mark_exhausted(index);
    report(index, value);
    return true;
  }

  void report(std::size_t index, double value) {
    if (observer_.on_evaluation) {
      observer_.on_evaluation({label_, result_.evaluations, index, value, best_reward_});
    }
    if (observer_.trace) {
      nlohmann::ordered_json record;
      record["label"] = label_;
      record["iteration"] = result_.evaluations;
      record["node"] = index;
      record["parent"] = nodes_[index].parent;
      record["state"] = nlohmann::json::array();
      for (const auto& p : nodes_[index].state) record["state"].push_back(render_predicate(p));
      record["reward"] = nodes_[index].evaluation->reward;
      record["confidence"] = nodes_[index].evaluation->confidence;
      record["value"] = value;
      record["root_visits"] = nodes_[0].visits;
      *observer_.trace << record.dump() << '\n';
    }
  }

  std::string label_;
  Task task_;
  Agent& agent_;
  const SearchConfig& config_;
  const SearchObserver& observer_;
  SearchResult& result_;
  std::vector<SearchNode>& nodes_;
  double best_reward_ = 0.0;
};

SearchResult run_search(std::string_view label, Task task, const DatasetSplit& split, Agent& agent,
                        const SearchConfig& config, const SearchObserver& observer) {
  if (config.max_iterations == 0) throw Error("max_iterations must be at least 1");
  if (!(config.exploration > 0.0)) throw Error("exploration constant must be positive");
  const bool has_label = std::any_of(split.train.begin(), split.train.end(), [&](const DialogueSample& s) {
    return s.task == task && s.gold_label && *s.gold_label == label;
  });
  if (!has_label) throw Error("no training sample carries label '" + std::string(label) + "'");

  SearchResult result;
  result.context = build_context(label, task, split, config);
  TreeSearch(label, task, agent, config, observer, result).run();
  return result;
}

}  // namespace rulesmith

#include <algorithm>
#include <atomic>
#include <optional>
#include <thread>

#include "rulesmith/agents.hpp"
#include "rulesmith/dataset.hpp"
#include "rulesmith/error.hpp"

namespace rulesmith {

RephraseResult generate_validation(const std::vector<DialogueSample>& train, Agent& rephraser,
                                   const RephraseOptions& options) {
  if (options.per_sample == 0) throw DatasetError("per_sample must be at least 1");
  for (const auto& s : train) {
    if (!s.gold_label) throw DatasetError("sample '" + s.id + "' has no gold_label");
  }

  const std::size_t jobs = train.size() * options.per_sample;
  std::vector<std::optional<DialogueSample>> slots(jobs);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      const auto& source = train[job / options.per_sample];
      const auto attempts = std::max<std::size_t>(options.max_attempts, 1);
      for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
        try {
          DialogueSample copy = source;
          copy.id = derived_id(source.id, job % options.per_sample);
          for (auto& turn : copy.turns) turn.text = rephraser.rephrase(turn.text);
          slots[job] = std::move(copy);
          break;
        } catch (const Error&) {
          // next attempt
        }
      }
    }
  };

  const auto threads = std::clamp<std::size_t>(options.concurrency, 1, std::max<std::size_t>(jobs, 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t i = 1; i < threads; ++i) pool.emplace_back(worker);
    worker();
  }

  RephraseResult result;
  for (auto& slot : slots) {
    if (slot) {
      result.samples.push_back(std::move(*slot));
    } else {
      ++result.skipped;
    }
  }
  std::sort(result.samples.begin(), result.samples.end(),
            [](const DialogueSample& a, const DialogueSample& b) { return a.id < b.id; });
  return result;
}

}  // namespace rulesmith

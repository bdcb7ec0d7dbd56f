#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rulesmith/dataset.hpp"
#include "rulesmith/error.hpp"
#include "rulesmith/predicate.hpp"
#include "rulesmith/rulebase.hpp"
#include "rulesmith/transport.hpp"

namespace rulesmith {

enum class PredictionSource { predictor, rule };
std::string_view to_string(PredictionSource source);

/// Emitted when neither the predictor nor any rule produced a label.
inline constexpr std::string_view kAbstainLabel = "__abstain__";

struct Prediction {
  std::string id;
  std::string label;
  PredictionSource source = PredictionSource::predictor;
  std::optional<std::string> fired_rule_id;
  std::string predictor_label;

  bool operator==(const Prediction&) const = default;
};

/// A predictor failed on one sample.
class PredictorError : public Error {
 public:
  using Error::Error;
};

/// Too many per-sample failures; the batch was abandoned.
class PredictorUnavailable : public Error {
 public:
  using Error::Error;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  /// One label from the sample's task taxonomy. Throws on failure.
  virtual std::string predict(const DialogueSample& sample) = 0;
};

/// Returns the gold label with probability `accuracy` and a different label
/// of the same task otherwise. Each draw is seeded by (seed, sample id), so
/// results do not depend on call order.
class StubPredictor final : public Predictor {
 public:
  StubPredictor(LabelTaxonomy taxonomy, double accuracy, std::uint64_t seed);
  std::string predict(const DialogueSample& sample) override;

 private:
  LabelTaxonomy taxonomy_;
  double accuracy_;
  std::uint64_t seed_;
};

/// Chat-completions classifier; the reply carries one fenced `{"label": "..."}`.
class RemotePredictor final : public Predictor {
 public:
  RemotePredictor(EndpointConfig endpoint, LabelTaxonomy taxonomy);
  std::string predict(const DialogueSample& sample) override;

 private:
  std::unique_ptr<ChatTransport> transport_;
  LabelTaxonomy taxonomy_;
};

/// Same-task rules that fire on the sample, ordered by reward (desc), then
/// predicate count (desc), then id.
std::vector<Rule> match_rules(const RuleBase& rb, const DialogueSample& sample);

/// The top fired rule overrides the predictor when its reward reaches the
/// threshold.
Prediction arbitrate(std::string_view sample_id, std::span<const Rule> fired, std::string predictor_label,
                     double override_threshold = 0.8);

struct BatchOptions {
  double override_threshold = 0.8;
  std::size_t failure_budget = 10;  // per-sample predictor failures tolerated
  std::size_t concurrency = 4;
};

struct BatchReport {
  std::size_t samples = 0;
  std::size_t overrides = 0;           // rule label replaced the predictor's
  std::size_t predictor_failures = 0;
  std::size_t rule_fallbacks = 0;      // predictor failed, top fired rule used
  std::size_t abstained = 0;           // predictor failed, no rule fired
  std::vector<std::string> failures;   // "<id>: <message>"
};

struct BatchResult {
  std::vector<Prediction> predictions;  // input order
  BatchReport report;
};

BatchResult predict_batch(const RuleBase& rb, Predictor& predictor, std::span<const DialogueSample> samples,
                          const BatchOptions& options = {});

void write_predictions(std::ostream& out, std::span<const Prediction> predictions);
std::vector<Prediction> read_predictions(std::istream& in);
void save_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace rulesmith

#include "rulesmith/inference.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "rulesmith/agents.hpp"
#include "rulesmith/random.hpp"
#include "rulesmith/text.hpp"

namespace rulesmith {

using nlohmann::json;

std::string_view to_string(PredictionSource source) {
  return source == PredictionSource::rule ? "rule" : "predictor";
}

StubPredictor::StubPredictor(LabelTaxonomy taxonomy, double accuracy, std::uint64_t seed)
    : taxonomy_(std::move(taxonomy)), accuracy_(accuracy), seed_(seed) {
  if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw Error("stub accuracy must lie in [0, 1]");
}

std::string StubPredictor::predict(const DialogueSample& sample) {
  const auto& labels = taxonomy_.labels(sample.task);
  if (labels.empty()) throw PredictorError("taxonomy has no labels for task " + std::string(to_string(sample.task)));
  Rng rng(mix_seed(seed_, stable_hash(sample.id)));
  const double draw = rng.unit();
  if (!sample.gold_label) return labels[rng.index(labels.size())];
  if (draw < accuracy_ || labels.size() == 1) return *sample.gold_label;

  std::vector<std::string_view> wrong;
  for (const auto& l : labels) {
    if (l != *sample.gold_label) wrong.push_back(l);
  }
  return std::string(wrong[rng.index(wrong.size())]);
}

RemotePredictor::RemotePredictor(EndpointConfig endpoint, LabelTaxonomy taxonomy)
    : transport_(std::make_unique<ChatTransport>(std::move(endpoint))), taxonomy_(std::move(taxonomy)) {}

std::string RemotePredictor::predict(const DialogueSample& sample) {
  std::ostringstream prompt;
  prompt << "Classify this customer-service record for the " << to_string(sample.task) << " task.\nLabels:";
  for (const auto& l : taxonomy_.labels(sample.task)) prompt << ' ' << json(l).dump();
  prompt << "\n\n" << describe_sample(sample, false)
         << "\nReply with one fenced block holding {\"label\": \"<one of the labels>\"}.";
  std::vector<ChatMessage> messages{{"system", "You are an e-commerce customer-service intent classifier."},
                                    {"user", prompt.str()}};
  try {
    return transport_->converse(std::move(messages), [&](const std::string& reply) {
      auto object = parse_fenced_object(reply);
      auto it = object.find("label");
      if (it == object.end()) throw ProtocolError("missing field 'label'", "label");
      if (!it->is_string()) throw ProtocolError("field 'label' must be a string", "label");
      auto label = it->get<std::string>();
      if (!taxonomy_.contains(sample.task, label)) {
        throw ProtocolError("field 'label' holds unknown label '" + label + "'", "label");
      }
      return label;
    });
  } catch (const AgentUnavailable& e) {
    throw PredictorError(e.what());
  }
}

std::vector<Rule> match_rules(const RuleBase& rb, const DialogueSample& sample) {
  std::vector<Rule> fired;
  std::optional<PreparedSample> prepared;
  for (const auto& rule : rb.rules) {
    if (rule.task != sample.task) continue;
    if (!prepared) prepared.emplace(sample);
    if (eval_rule(rule, *prepared)) fired.push_back(rule);
  }
  std::sort(fired.begin(), fired.end(), [](const Rule& a, const Rule& b) {
    if (a.reward != b.reward) return a.reward > b.reward;
    if (a.predicates.size() != b.predicates.size()) return a.predicates.size() > b.predicates.size();
    return a.id < b.id;
  });
  return fired;
}

Prediction arbitrate(std::string_view sample_id, std::span<const Rule> fired, std::string predictor_label,
                     double override_threshold) {
  Prediction p;
  p.id = std::string(sample_id);
  p.predictor_label = std::move(predictor_label);
  if (!fired.empty() && fired.front().reward >= override_threshold) {
    p.label = fired.front().label;
    p.source = PredictionSource::rule;
    p.fired_rule_id = fired.front().id;
  } else {
    p.label = p.predictor_label;
    p.source = PredictionSource::predictor;
  }
  return p;
}

BatchResult predict_batch(const RuleBase& rb, Predictor& predictor, std::span<const DialogueSample> samples,
                          const BatchOptions& options) {
  BatchResult result;
  result.predictions.resize(samples.size());
  result.report.samples = samples.size();

  std::mutex report_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abandoned{false};
  std::string abandon_reason;

  auto worker = [&] {
    for (std::size_t i = next++; i < samples.size() && !abandoned; i = next++) {
      const auto& sample = samples[i];
      const auto fired = match_rules(rb, sample);
      std::string predictor_label;
      try {
        predictor_label = predictor.predict(sample);
      } catch (const Error& e) {
        std::lock_guard lock(report_mutex);
        auto& report = result.report;
        ++report.predictor_failures;
        report.failures.push_back(sample.id + ": " + e.what());
        if (report.predictor_failures > options.failure_budget) {
          abandoned = true;
          abandon_reason = e.what();
          return;
        }
        Prediction p;
        p.id = sample.id;
        p.predictor_label = std::string(kAbstainLabel);
        if (!fired.empty()) {
          p.label = fired.front().label;
          p.source = PredictionSource::rule;
          p.fired_rule_id = fired.front().id;
          ++report.rule_fallbacks;
        } else {
          p.label = std::string(kAbstainLabel);
          ++report.abstained;
        }
        result.predictions[i] = std::move(p);
        continue;
      }
      auto p = arbitrate(sample.id, fired, std::move(predictor_label), options.override_threshold);
      if (p.source == PredictionSource::rule && p.label != p.predictor_label) {
        std::lock_guard lock(report_mutex);
        ++result.report.overrides;
      }
      result.predictions[i] = std::move(p);
    }
  };

  const auto threads = std::clamp<std::size_t>(options.concurrency, 1, std::max<std::size_t>(samples.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }
  if (abandoned) {
    throw PredictorUnavailable("predictor failed on " + std::to_string(result.report.predictor_failures) +
                               " samples, over the budget of " + std::to_string(options.failure_budget) +
                               ": " + abandon_reason);
  }
  return result;
}

void write_predictions(std::ostream& out, std::span<const Prediction> predictions) {
  for (const auto& p : predictions) {
    nlohmann::ordered_json record;
    record["id"] = p.id;
    record["label"] = p.label;
    record["source"] = to_string(p.source);
    record["fired_rule_id"] = p.fired_rule_id ? nlohmann::ordered_json(*p.fired_rule_id) : nlohmann::ordered_json(nullptr);
    record["predictor_label"] = p.predictor_label;
    out << record.dump() << '\n';
  }
}

std::vector<Prediction> read_predictions(std::istream& in) {
  std::vector<Prediction> out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    json record;
    try {
      record = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw DatasetError(std::string("malformed prediction: ") + e.what(), line);
    }
    auto str = [&](const char* name) {
      auto it = record.find(name);
      if (it == record.end() || !it->is_string()) {
        throw DatasetError(std::string("field '") + name + "' must be a string", line, name);
      }
      return it->get<std::string>();
    };
    Prediction p;
    p.id = str("id");
    p.label = str("label");
    const auto source = str("source");
    if (source == "rule") {
      p.source = PredictionSource::rule;
    } else if (source == "predictor") {
      p.source = PredictionSource::predictor;
    } else {
      throw DatasetError("field 'source' has unknown value '" + source + "'", line, "source");
    }
    if (auto it = record.find("fired_rule_id"); it != record.end() && !it->is_null()) {
      if (!it->is_string()) throw DatasetError("field 'fired_rule_id' must be a string", line, "fired_rule_id");
      p.fired_rule_id = it->get<std::string>();
    }
    if (p.source == PredictionSource::rule && !p.fired_rule_id) {
      throw DatasetError("rule prediction without 'fired_rule_id'", line, "fired_rule_id");
    }
    p.predictor_label = str("predictor_label");
    out.push_back(std::move(p));
  }
  return out;
}

void save_predictions(const std::filesystem::path& path, std::span<const Prediction> predictions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write predictions " + path.string());
  write_predictions(out, predictions);
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open predictions " + path.string());
  return read_predictions(in);
}

}  // namespace rulesmith

#include "rulesmith/metrics.hpp"

#include <unordered_map>

#include "rulesmith/error.hpp"

namespace rulesmith {

F1Breakdown f1_breakdown(std::span<const std::string> gold, std::span<const std::string> pred,
                         std::span<const std::string> labels) {
  if (gold.size() != pred.size()) {
    throw Error("gold and predicted label lists differ in length (" + std::to_string(gold.size()) + " vs " +
                std::to_string(pred.size()) + ")");
  }
  if (gold.empty()) throw Error("cannot score an empty label list");

  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], i);

  std::vector<std::size_t> tp(labels.size(), 0), predicted(labels.size(), 0), support(labels.size(), 0);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto g = index.find(gold[i]);
    if (g == index.end()) throw Error("gold label '" + gold[i] + "' is not in the label set");
    ++support[g->second];
    if (auto p = index.find(pred[i]); p != index.end()) {
      ++predicted[p->second];
      if (p->second == g->second) ++tp[g->second];
    }
  }

  F1Breakdown out;
  const auto n = static_cast<double>(gold.size());
  for (std::size_t c = 0; c < labels.size(); ++c) {
    ClassScore s;
    s.label = labels[c];
    s.support = support[c];
    s.precision = predicted[c] ? static_cast<double>(tp[c]) / static_cast<double>(predicted[c]) : 0.0;
    s.recall = support[c] ? static_cast<double>(tp[c]) / static_cast<double>(support[c]) : 0.0;
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    if (support[c]) out.weighted += static_cast<double>(support[c]) / n * s.f1;
    out.classes.push_back(std::move(s));
  }
  return out;
}

double weighted_f1(std::span<const std::string> gold, std::span<const std::string> pred,
                   std::span<const std::string> labels) {
  return f1_breakdown(gold, pred, labels).weighted;
}

EvalReport evaluate(std::span<const Prediction> predictions, std::span<const DialogueSample> gold,
                    const LabelTaxonomy& taxonomy) {
  std::unordered_map<std::string_view, const Prediction*> by_id;
  for (const auto& p : predictions) by_id.emplace(p.id, &p);

  std::vector<std::string> gold_intent, pred_intent, gold_image, pred_image, gold_all, pred_all;
  for (const auto& sample : gold) {
    if (!sample.gold_label) continue;
    auto it = by_id.find(sample.id);
    if (it == by_id.end()) throw Error("no prediction for sample '" + sample.id + "'");
    const auto& label = it->second->label;
    if (sample.task == Task::intent) {
      gold_intent.push_back(*sample.gold_label);
      pred_intent.push_back(label);
    } else {
      gold_image.push_back(*sample.gold_label);
      pred_image.push_back(label);
    }
    gold_all.push_back(*sample.gold_label);
    pred_all.push_back(label);
  }
  if (gold_all.empty()) throw Error("no labelled gold samples to evaluate");

  EvalReport report;
  report.intent_samples = gold_intent.size();
  report.image_scene_samples = gold_image.size();
  if (!gold_intent.empty()) report.dis = weighted_f1(gold_intent, pred_intent, taxonomy.labels(Task::intent));
  if (!gold_image.empty()) report.iss = weighted_f1(gold_image, pred_image, taxonomy.labels(Task::image_scene));

  const auto joint = taxonomy.joint();
  auto all = f1_breakdown(gold_all, pred_all, joint);
  report.oss = all.weighted;
  report.per_class = std::move(all.classes);
  if (report.dis && report.iss) {
    report.oss_mean = (*report.dis + *report.iss) / 2.0;
  } else {
    report.oss_mean = report.dis ? *report.dis : *report.iss;
  }
  return report;
}

nlohmann::ordered_json report_to_json(const EvalReport& report) {
  nlohmann::ordered_json doc;
  doc["dis"] = report.dis ? nlohmann::ordered_json(*report.dis) : nlohmann::ordered_json(nullptr);
  doc["iss"] = report.iss ? nlohmann::ordered_json(*report.iss) : nlohmann::ordered_json(nullptr);
  doc["oss"] = report.oss;
  doc["oss_mean"] = report.oss_mean;
  doc["samples"] = {{"intent", report.intent_samples}, {"image_scene", report.image_scene_samples}};
  doc["per_class"] = nlohmann::ordered_json::array();
  for (const auto& c : report.per_class) {
    doc["per_class"].push_back({{"label", c.label},
                                {"precision", c.precision},
                                {"recall", c.recall},
                                {"f1", c.f1},
                                {"support", c.support}});
  }
  return doc;
}

EvalReport report_from_json(const nlohmann::json& doc) {
  try {
    EvalReport report;
    if (!doc.at("dis").is_null()) report.dis = doc.at("dis").get<double>();
    if (!doc.at("iss").is_null()) report.iss = doc.at("iss").get<double>();
    report.oss = doc.at("oss").get<double>();
    report.oss_mean = doc.at("oss_mean").get<double>();
    report.intent_samples = doc.at("samples").at("intent").get<std::size_t>();
    report.image_scene_samples = doc.at("samples").at("image_scene").get<std::size_t>();
    for (const auto& c : doc.at("per_class")) {
      report.per_class.push_back({c.at("label").get<std::string>(), c.at("precision").get<double>(),
                                  c.at("recall").get<double>(), c.at("f1").get<double>(),
                                  c.at("support").get<std::size_t>()});
    }
    return report;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed evaluation report: ") + e.what());
  }
}

}  // namespace rulesmith

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rulesmith/dataset.hpp"
#include "rulesmith/inference.hpp"

namespace rulesmith {

struct ClassScore {
  std::string label;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct F1Breakdown {
  double weighted = 0.0;
  std::vector<ClassScore> classes;  // order of `labels`
};

/// Support-weighted F1 over `labels`. A class's F1 is 0 when its precision
/// and recall are both 0; classes without support carry no weight.
/// Throws Error on empty input, mismatched lengths, or a gold label missing
/// from `labels`.
F1Breakdown f1_breakdown(std::span<const std::string> gold, std::span<const std::string> pred,
                         std::span<const std::string> labels);
double weighted_f1(std::span<const std::string> gold, std::span<const std::string> pred,
                   std::span<const std::string> labels);

struct EvalReport {
  std::optional<double> dis;  // intent samples
  std::optional<double> iss;  // image_scene samples
  double oss = 0.0;           // union of both, joint label space
  double oss_mean = 0.0;      // (dis + iss) / 2, or the single present score
  std::vector<ClassScore> per_class;
  std::size_t intent_samples = 0;
  std::size_t image_scene_samples = 0;
};

/// Scores predictions against every gold sample that carries a label.
/// Throws Error naming the first gold id without a prediction.
EvalReport evaluate(std::span<const Prediction> predictions, std::span<const DialogueSample> gold,
                    const LabelTaxonomy& taxonomy);

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

}  // namespace rulesmith

#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rulesmith/dataset.hpp"
#include "rulesmith/predicate.hpp"
#include "rulesmith/random.hpp"

namespace rulesmith::testing {

inline DialogueSample intent_sample(std::string id, std::string user, std::optional<std::string> label,
                                    std::string service = {}) {
  DialogueSample s;
  s.id = std::move(id);
  s.task = Task::intent;
  s.turns.push_back({Speaker::user, std::move(user)});
  if (!service.empty()) s.turns.push_back({Speaker::service_rep, std::move(service)});
  s.gold_label = std::move(label);
  return s;
}

inline DialogueSample image_sample(std::string id, std::string ocr, std::optional<std::string> label) {
  DialogueSample s;
  s.id = std::move(id);
  s.task = Task::image_scene;
  s.ocr_text = std::move(ocr);
  s.gold_label = std::move(label);
  return s;
}

inline LabelTaxonomy small_taxonomy() {
  return LabelTaxonomy({"refund", "shipping", "other"}, {"logistics_page", "order_page"});
}

inline Predicate pred(Field f, Op op, std::string value) { return Predicate{f, op, std::move(value)}; }

inline Rule make_rule(std::string id, std::string label, std::vector<Predicate> ps, double reward,
                      Task task = Task::intent) {
  Rule r;
  r.id = std::move(id);
  r.task = task;
  r.label = std::move(label);
  r.predicates = std::move(ps);
  std::sort(r.predicates.begin(), r.predicates.end());
  r.reward = reward;
  r.confidence = 1.0;
  return r;
}

/// Synthetic corpus: `labels` intent labels L0..; each sample carries a few
/// filler words shared by all labels. A fraction `planted_share` of each
/// label's samples also carries the token `plantk` for its label k, and no
/// sample of another label ever does.
struct PlantedCorpus {
  LabelTaxonomy taxonomy;
  std::vector<DialogueSample> samples;
  std::vector<std::string> labels;
  std::vector<std::string> planted;
};

inline PlantedCorpus planted_corpus(std::size_t n, std::size_t labels, std::uint64_t seed,
                                    double planted_share = 1.0, bool with_images = false) {
  PlantedCorpus c;
  std::vector<std::string> image_labels;
  for (std::size_t k = 0; k < labels; ++k) {
    c.labels.push_back("L" + std::to_string(k));
    c.planted.push_back("plant" + std::string(1, static_cast<char>('a' + k)));
    if (with_images) image_labels.push_back("S" + std::to_string(k));
  }
  c.taxonomy = LabelTaxonomy(c.labels, image_labels);

  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = i % labels;
    const bool image = with_images && (i / labels) % 2 == 1;
    std::string text;
    const auto words = 3 + rng.index(4);
    for (std::size_t w = 0; w < words; ++w) text += "w" + std::to_string(rng.index(30)) + " ";
    const bool plant = rng.unit() < planted_share;
    if (plant) text += (image ? "scene" : "") + c.planted[k] + " ";
    text += "w" + std::to_string(rng.index(30));
    const auto id = "s" + std::to_string(i);
    if (image) {
      c.samples.push_back(image_sample(id, text, image_labels[k]));
    } else {
      DialogueSample s;
      s.id = id;
      s.task = Task::intent;
      s.turns.push_back({Speaker::user, text});
      s.turns.push_back({Speaker::service_rep, "w" + std::to_string(rng.index(30)) + " how can i help"});
      s.gold_label = c.labels[k];
      c.samples.push_back(std::move(s));
    }
  }
  return c;
}

/// Values mix quotes, backslashes, newlines and multi-byte characters.
inline Predicate random_predicate(Rng& rng) {
  static const std::vector<std::string> alphabet{"a", "b", "Z", " ", "\"", "\\", "\n", "\xE7\x89\xA9", "\xC3\xA9", "7"};
  Predicate p;
  p.field = static_cast<Field>(rng.index(4));
  p.op = static_cast<Op>(rng.index(4));
  const auto length = 1 + rng.index(12);
  for (std::size_t i = 0; i < length; ++i) p.value += alphabet[rng.index(alphabet.size())];
  return p;
}

/// Random rules over a small predicate pool so that subsets, duplicates and
/// reward ties are common.
inline std::vector<Rule> random_rules(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> words{"a", "b", "c", "d", "e", "f", "g"};
  static const std::vector<double> rewards{0.7, 0.8, 0.85, 0.9, 0.95, 1.0};
  Rng rng(seed);
  std::vector<Rule> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Predicate> ps;
    const auto size = 1 + rng.index(4);
    while (ps.size() < size) {
      Predicate p{rng.index(2) ? Field::any_text : Field::user_text, Op::contains, words[rng.index(words.size())]};
      if (std::find(ps.begin(), ps.end(), p) == ps.end()) ps.push_back(p);
    }
    out.push_back(make_rule("r" + std::to_string(i), rng.index(2) ? "refund" : "shipping", std::move(ps),
                            rewards[rng.index(rewards.size())]));
  }
  return out;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("rulesmith_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace rulesmith::testing

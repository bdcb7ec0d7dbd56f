#include "rulesmith/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "rulesmith/error.hpp"
#include "rulesmith/random.hpp"
#include "rulesmith/text.hpp"

namespace rulesmith {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view to_string(Task task) {
  return task == Task::intent ? "intent" : "image_scene";
}

std::string_view to_string(Speaker speaker) {
  return speaker == Speaker::user ? "user" : "service_rep";
}

std::optional<Task> parse_task(std::string_view s) {
  if (s == "intent") return Task::intent;
  if (s == "image_scene") return Task::image_scene;
  return std::nullopt;
}

std::optional<Speaker> parse_speaker(std::string_view s) {
  if (s == "user") return Speaker::user;
  if (s == "service_rep") return Speaker::service_rep;
  return std::nullopt;
}

LabelTaxonomy::LabelTaxonomy(std::vector<std::string> intent, std::vector<std::string> image_scene)
    : intent_(std::move(intent)), image_scene_(std::move(image_scene)) {
  std::set<std::string_view> seen;
  for (const auto* list : {&intent_, &image_scene_}) {
    std::set<std::string_view> local;
    for (const auto& label : *list) {
      if (label.empty()) throw DatasetError("taxonomy contains an empty label");
      if (!local.insert(label).second) throw DatasetError("duplicate label in taxonomy: " + label);
      if (!seen.insert(label).second) {
        throw DatasetError("label shared between intent and image_scene: " + label);
      }
    }
  }
}

const std::vector<std::string>& LabelTaxonomy::labels(Task task) const {
  return task == Task::intent ? intent_ : image_scene_;
}

bool LabelTaxonomy::contains(Task task, std::string_view label) const {
  const auto& list = labels(task);
  return std::find(list.begin(), list.end(), label) != list.end();
}

std::optional<Task> LabelTaxonomy::task_of(std::string_view label) const {
  if (contains(Task::intent, label)) return Task::intent;
  if (contains(Task::image_scene, label)) return Task::image_scene;
  return std::nullopt;
}

std::vector<std::string> LabelTaxonomy::joint() const {
  std::vector<std::string> all = intent_;
  all.insert(all.end(), image_scene_.begin(), image_scene_.end());
  return all;
}

ordered_json sample_to_json(const DialogueSample& sample) {
  ordered_json turns = ordered_json::array();
  for (const auto& turn : sample.turns) {
    turns.push_back({{"speaker", to_string(turn.speaker)}, {"text", turn.text}});
  }
  ordered_json record;
  record["id"] = sample.id;
  record["task"] = to_string(sample.task);
  record["turns"] = std::move(turns);
  record["ocr_text"] = sample.ocr_text;
  record["image_ref"] = sample.image_ref ? ordered_json(*sample.image_ref) : ordered_json(nullptr);
  record["gold_label"] = sample.gold_label ? ordered_json(*sample.gold_label) : ordered_json(nullptr);
  return record;
}

namespace {

const json& require(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end()) throw DatasetError(std::string("missing field '") + field + "'", line, field);
  return *it;
}

std::string require_string(const json& value, const std::string& field, std::size_t line) {
  if (!value.is_string()) throw DatasetError("field '" + field + "' must be a string", line, field);
  auto s = value.get<std::string>();
  if (!text::is_valid_utf8(s)) throw DatasetError("field '" + field + "' is not valid UTF-8", line, field);
  return s;
}

std::optional<std::string> optional_string(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end() || it->is_null()) return std::nullopt;
  return require_string(*it, field, line);
}

}  // namespace

DialogueSample sample_from_json(const json& record, std::size_t line) {
  if (!record.is_object()) throw DatasetError("record must be an object", line);

  DialogueSample sample;
  sample.id = require_string(require(record, "id", line), "id", line);
  if (sample.id.empty()) throw DatasetError("field 'id' must be non-empty", line, "id");

  const auto task_name = require_string(require(record, "task", line), "task", line);
  auto task = parse_task(task_name);
  if (!task) throw DatasetError("field 'task' has unknown value '" + task_name + "'", line, "task");
  sample.task = *task;

  const auto& turns = require(record, "turns", line);
  if (!turns.is_array()) throw DatasetError("field 'turns' must be an array", line, "turns");
  for (std::size_t i = 0; i < turns.size(); ++i) {
    const auto& turn = turns[i];
    const std::string where = "turns[" + std::to_string(i) + "]";
    if (!turn.is_object()) throw DatasetError("field '" + where + "' must be an object", line, "turns");
    auto speaker_it = turn.find("speaker");
    auto text_it = turn.find("text");
    if (speaker_it == turn.end()) throw DatasetError("missing field '" + where + ".speaker'", line, "speaker");
    if (text_it == turn.end()) throw DatasetError("missing field '" + where + ".text'", line, "text");
    const auto speaker_name = require_string(*speaker_it, where + ".speaker", line);
    auto speaker = parse_speaker(speaker_name);
    if (!speaker) {
      throw DatasetError("field '" + where + ".speaker' has unknown value '" + speaker_name + "'", line,
                         "speaker");
    }
    sample.turns.push_back({*speaker, require_string(*text_it, where + ".text", line)});
  }

  if (auto it = record.find("ocr_text"); it != record.end() && !it->is_null()) {
    sample.ocr_text = require_string(*it, "ocr_text", line);
  }
  sample.image_ref = optional_string(record, "image_ref", line);
  sample.gold_label = optional_string(record, "gold_label", line);
  return sample;
}

void validate_sample(const DialogueSample& sample, const LabelTaxonomy& taxonomy, std::size_t line) {
  if (sample.task == Task::intent && sample.turns.empty()) {
    throw DatasetError("intent sample '" + sample.id + "' has no turns", line, "turns");
  }
  if (sample.task == Task::image_scene && sample.ocr_text.empty() &&
      (!sample.image_ref || sample.image_ref->empty())) {
    throw DatasetError("image_scene sample '" + sample.id + "' has neither ocr_text nor image_ref", line,
                       "ocr_text");
  }
  if (sample.gold_label && !taxonomy.contains(sample.task, *sample.gold_label)) {
    throw DatasetError("unknown label '" + *sample.gold_label + "' for task " +
                           std::string(to_string(sample.task)),
                       line, "gold_label");
  }
}

std::vector<DialogueSample> read_dataset(std::istream& in, const LabelTaxonomy& taxonomy) {
  std::vector<DialogueSample> samples;
  std::unordered_set<std::string> ids;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    json record;
    try {
      record = json::parse(raw);
    } catch (const json::parse_error& e) {
      throw DatasetError(std::string("malformed record: ") + e.what(), line);
    }
    auto sample = sample_from_json(record, line);
    validate_sample(sample, taxonomy, line);
    if (!ids.insert(sample.id).second) throw DatasetError("duplicate id '" + sample.id + "'", line, "id");
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<DialogueSample> load_dataset(const std::filesystem::path& path, const LabelTaxonomy& taxonomy) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset file " + path.string());
  return read_dataset(in, taxonomy);
}

void write_dataset(std::ostream& out, const std::vector<DialogueSample>& samples) {
  for (const auto& sample : samples) out << sample_to_json(sample).dump() << '\n';
}

void save_dataset(const std::filesystem::path& path, const std::vector<DialogueSample>& samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write dataset file " + path.string());
  write_dataset(out, samples);
}

LabelTaxonomy taxonomy_from_json(const json& doc) {
  if (!doc.is_object()) throw DatasetError("taxonomy must be an object");
  auto read = [&](const char* key) {
    auto it = doc.find(key);
    if (it == doc.end()) throw DatasetError(std::string("taxonomy missing key '") + key + "'", 0, key);
    if (!it->is_array()) throw DatasetError(std::string("taxonomy key '") + key + "' must be an array", 0, key);
    std::vector<std::string> labels;
    for (const auto& v : *it) {
      if (!v.is_string()) throw DatasetError(std::string("taxonomy key '") + key + "' holds a non-string", 0, key);
      labels.push_back(v.get<std::string>());
    }
    return labels;
  };
  return LabelTaxonomy(read("intent"), read("image_scene"));
}

ordered_json taxonomy_to_json(const LabelTaxonomy& taxonomy) {
  ordered_json doc;
  doc["intent"] = taxonomy.labels(Task::intent);
  doc["image_scene"] = taxonomy.labels(Task::image_scene);
  return doc;
}

LabelTaxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open taxonomy file " + path.string());
  try {
    return taxonomy_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw DatasetError(std::string("malformed taxonomy file: ") + e.what());
  }
}

void save_taxonomy(const std::filesystem::path& path, const LabelTaxonomy& taxonomy) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DatasetError("cannot write taxonomy file " + path.string());
  out << taxonomy_to_json(taxonomy).dump(2) << '\n';
}

DatasetSplit stratified_split(const std::vector<DialogueSample>& samples, double validation_fraction,
                              std::uint64_t seed) {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw DatasetError("validation fraction must lie in (0, 1)");
  }
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].gold_label) throw DatasetError("sample '" + samples[i].id + "' has no gold_label");
    by_label[*samples[i].gold_label].push_back(i);
  }

  std::vector<bool> in_validation(samples.size(), false);
  for (auto& [label, members] : by_label) {
    if (members.size() < 2) throw DatasetError("label '" + label + "' has fewer than 2 samples", 0, "gold_label");
    const auto n = members.size();
    auto take = static_cast<std::size_t>(std::llround(static_cast<double>(n) * validation_fraction));
    take = std::clamp<std::size_t>(take, 1, n - 1);
    Rng rng(mix_seed(seed, stable_hash(label)));
    rng.shuffle(members.begin(), members.end());
    for (std::size_t i = 0; i < take; ++i) in_validation[members[i]] = true;
  }

  DatasetSplit split;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (in_validation[i] ? split.validation : split.train).push_back(samples[i]);
  }
  return split;
}

std::string derived_id(std::string_view source_id, std::size_t copy_index) {
  return std::string(source_id) + "#rp" + std::to_string(copy_index);
}

}  // namespace rulesmith

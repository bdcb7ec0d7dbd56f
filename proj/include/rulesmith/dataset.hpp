#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace rulesmith {

enum class Task { intent, image_scene };
enum class Speaker { user, service_rep };

std::string_view to_string(Task task);
std::string_view to_string(Speaker speaker);
std::optional<Task> parse_task(std::string_view s);
std::optional<Speaker> parse_speaker(std::string_view s);

struct Turn {
  Speaker speaker = Speaker::user;
  std::string text;

  bool operator==(const Turn&) const = default;
};

/// One multimodal dialogue record. OCR arrives precomputed; an empty
/// `ocr_text` is legal.
struct DialogueSample {
  std::string id;
  Task task = Task::intent;
  std::vector<Turn> turns;
  std::string ocr_text;
  std::optional<std::string> image_ref;
  std::optional<std::string> gold_label;

  bool operator==(const DialogueSample&) const = default;
};

class LabelTaxonomy {
 public:
  LabelTaxonomy() = default;
  /// Throws DatasetError if labels repeat within a task or the two tasks share a label.
  LabelTaxonomy(std::vector<std::string> intent, std::vector<std::string> image_scene);

  const std::vector<std::string>& labels(Task task) const;
  bool contains(Task task, std::string_view label) const;
  std::optional<Task> task_of(std::string_view label) const;
  /// Both tasks' labels, intent first.
  std::vector<std::string> joint() const;

  bool operator==(const LabelTaxonomy&) const = default;

 private:
  std::vector<std::string> intent_;
  std::vector<std::string> image_scene_;
};

struct DatasetSplit {
  std::vector<DialogueSample> train;
  std::vector<DialogueSample> validation;
};

nlohmann::ordered_json sample_to_json(const DialogueSample& sample);
/// Parses one record; `line` is used only for error messages.
DialogueSample sample_from_json(const nlohmann::json& record, std::size_t line = 0);

/// Checks the per-sample invariants; throws DatasetError naming the field.
void validate_sample(const DialogueSample& sample, const LabelTaxonomy& taxonomy, std::size_t line = 0);

std::vector<DialogueSample> read_dataset(std::istream& in, const LabelTaxonomy& taxonomy);
std::vector<DialogueSample> load_dataset(const std::filesystem::path& path, const LabelTaxonomy& taxonomy);
void write_dataset(std::ostream& out, const std::vector<DialogueSample>& samples);
void save_dataset(const std::filesystem::path& path, const std::vector<DialogueSample>& samples);

LabelTaxonomy taxonomy_from_json(const nlohmann::json& doc);
nlohmann::ordered_json taxonomy_to_json(const LabelTaxonomy& taxonomy);
LabelTaxonomy load_taxonomy(const std::filesystem::path& path);
void save_taxonomy(const std::filesystem::path& path, const LabelTaxonomy& taxonomy);

class Agent;

struct RephraseOptions {
  std::size_t per_sample = 1;
  std::size_t max_attempts = 3;
  std::size_t concurrency = 4;
};

struct RephraseResult {
  std::vector<DialogueSample> samples;  // sorted by derived id
  std::size_t skipped = 0;              // copies abandoned after max_attempts
};

std::string derived_id(std::string_view source_id, std::size_t copy_index);

/// Builds validation copies of `train` whose turn texts are rewritten by the
/// agent. Task, label, OCR text and image reference are carried over.
RephraseResult generate_validation(const std::vector<DialogueSample>& train, Agent& rephraser,
                                   const RephraseOptions& options = {});

/// Per-label stratified split. Throws DatasetError if a sample lacks a label
/// or a label has fewer than two samples.
DatasetSplit stratified_split(const std::vector<DialogueSample>& samples, double validation_fraction,
                              std::uint64_t seed);

}  // namespace rulesmith

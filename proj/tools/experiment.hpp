#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "seqcirc/dataset.hpp"
#include "seqcirc/discovery.hpp"
#include "seqcirc/lexicon.hpp"
#include "seqcirc/model.hpp"
#include "seqcirc/tokenizer.hpp"

namespace seqcirc::cli {

/// Bad flags, bad config files, missing inputs. Exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string model_path;
  std::string vocab_dir;
  std::string data_dir;
  std::string task = "numerals";
  std::size_t n_samples = 1536;
  std::uint64_t seed = 0;
  double t_node = 80.0;
  double t_edge = 80.0;
  std::string mode = "mean";
  std::size_t sample_cap = 128;
  int max_sweeps = 10;
  std::string out_dir = "out";
  std::size_t workers = 0;
  std::string dataset_path;
  std::size_t reuse_budget_mb = 3072;

  /// Overwrites fields present in a JSON object; unknown keys are errors.
  void merge_json(const nlohmann::json& j);
  /// Every field that can influence results (not out_dir or workers).
  nlohmann::json to_json() const;
  /// FNV-1a of the canonical to_json() dump, as 16 hex digits.
  std::string hash() const;
  /// Thresholds in (0, 100], known mode and task, existing input files.
  void validate() const;

  SearchConfig search() const;
  SequenceLexicon lexicon() const;
};

SequenceLexicon lexicon_for_task(const std::string& task);

/// Files written by one command. Everything lands in a private staging
/// directory first and is moved into the output directory by commit(); if the
/// command fails, the staging directory is removed and nothing is published.
class ArtifactSet {
 public:
  ArtifactSet(std::filesystem::path out_dir, std::string command);
  ~ArtifactSet();
  ArtifactSet(const ArtifactSet&) = delete;
  ArtifactSet& operator=(const ArtifactSet&) = delete;

  /// Staged location for artifact `name`.
  std::filesystem::path path(const std::string& name);
  /// Writes `<command>.manifest.json` and publishes every staged file.
  void commit(const ExperimentConfig& config, nlohmann::json extra = nlohmann::json::object());

 private:
  std::filesystem::path out_dir_;
  std::filesystem::path staging_;
  std::string command_;
  std::vector<std::string> names_;
  std::chrono::steady_clock::time_point started_;
  std::string started_utc_;
  bool committed_ = false;
};

/// Throws LoadError when no model path is configured or the file is unusable.
Model load_model(const ExperimentConfig& config);
Tokenizer load_tokenizer(const ExperimentConfig& config);

/// Reads --dataset when given, else generates and corrupts a fresh dataset.
TaskDataset obtain_dataset(const ExperimentConfig& config, const Model& model, const Tokenizer* tok,
                           const std::string& task, const std::string& dataset_path);

const char* git_revision();

}  // namespace seqcirc::cli

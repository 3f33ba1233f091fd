#include "experiment.hpp"

#include <unistd.h>

#include <ctime>
#include <fstream>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "seqcirc/errors.hpp"
#include "seqcirc/patching.hpp"

namespace seqcirc::cli {

namespace fs = std::filesystem;

const char* git_revision() { return SEQCIRC_GIT_REVISION; }

void ExperimentConfig::merge_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "model") model_path = v.get<std::string>();
      else if (key == "vocab_dir") vocab_dir = v.get<std::string>();
      else if (key == "data_dir") data_dir = v.get<std::string>();
      else if (key == "task") task = v.get<std::string>();
      else if (key == "n") n_samples = v.get<std::size_t>();
      else if (key == "seed") seed = v.get<std::uint64_t>();
      else if (key == "t_node") t_node = v.get<double>();
      else if (key == "t_edge") t_edge = v.get<double>();
      else if (key == "mode") mode = v.get<std::string>();
      else if (key == "sample_cap") sample_cap = v.get<std::size_t>();
      else if (key == "max_sweeps") max_sweeps = v.get<int>();
      else if (key == "out") out_dir = v.get<std::string>();
      else if (key == "workers") workers = v.get<std::size_t>();
      else if (key == "dataset") dataset_path = v.get<std::string>();
      else if (key == "reuse_budget_mb") reuse_budget_mb = v.get<std::size_t>();
      else throw ConfigError(fmt::format("unknown config key '{}'", key));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("config key '{}': {}", key, e.what()));
    }
  }
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"model", model_path},   {"task", task},         {"n", n_samples},
          {"seed", seed},          {"t_node", t_node},     {"t_edge", t_edge},
          {"mode", mode},          {"sample_cap", sample_cap}, {"max_sweeps", max_sweeps},
          {"dataset", dataset_path}, {"data_dir", data_dir}, {"vocab_dir", vocab_dir}};
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : to_json().dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return fmt::format("{:016x}", h);
}

SequenceLexicon lexicon_for_task(const std::string& task) {
  constexpr std::string_view kCustom = "custom:";
  if (task.rfind(kCustom, 0) == 0) {
    const fs::path path = task.substr(kCustom.size());
    if (!fs::exists(path)) throw ConfigError(fmt::format("custom lexicon '{}' does not exist", path.string()));
    return SequenceLexicon::custom(path.stem().string(), load_word_list(path));
  }
  try {
    return SequenceLexicon::by_name(task);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
}

void ExperimentConfig::validate() const {
  auto threshold = [](double t, const char* name) {
    if (!(t > 0.0 && t <= 100.0)) throw ConfigError(fmt::format("{} must lie in (0, 100], got {}", name, t));
  };
  threshold(t_node, "--t-node");
  threshold(t_edge, "--t-edge");
  if (max_sweeps <= 0) throw ConfigError("max_sweeps must be positive");
  try {
    parse_mode(mode);
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  lexicon_for_task(task);
  if (!dataset_path.empty() && !fs::exists(dataset_path)) {
    throw ConfigError(fmt::format("dataset '{}' does not exist", dataset_path));
  }
  if (!data_dir.empty() && !fs::is_directory(data_dir)) {
    throw ConfigError(fmt::format("data directory '{}' does not exist", data_dir));
  }
}

SearchConfig ExperimentConfig::search() const {
  SearchConfig s;
  s.t_node = t_node;
  s.t_edge = t_edge;
  s.max_sweeps = max_sweeps;
  s.mode = parse_mode(mode);
  s.reuse_budget_bytes = reuse_budget_mb << 20;
  return s;
}

SequenceLexicon ExperimentConfig::lexicon() const { return lexicon_for_task(task); }

ArtifactSet::ArtifactSet(fs::path out_dir, std::string command)
    : out_dir_(std::move(out_dir)), command_(std::move(command)), started_(std::chrono::steady_clock::now()) {
  started_utc_ = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr)));
  std::error_code ec;
  fs::create_directories(out_dir_, ec);
  if (ec) throw ConfigError(fmt::format("cannot create output directory '{}': {}", out_dir_.string(), ec.message()));
  staging_ = out_dir_ / fmt::format(".staging-{}-{}", command_, static_cast<long>(::getpid()));
  fs::remove_all(staging_, ec);
  fs::create_directories(staging_, ec);
  if (ec) throw ConfigError(fmt::format("cannot create '{}': {}", staging_.string(), ec.message()));
}

ArtifactSet::~ArtifactSet() {
  std::error_code ec;
  fs::remove_all(staging_, ec);
}

fs::path ArtifactSet::path(const std::string& name) {
  names_.push_back(name);
  return staging_ / name;
}

void ArtifactSet::commit(const ExperimentConfig& config, nlohmann::json extra) {
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  nlohmann::json manifest = {{"command", command_},
                             {"config", config.to_json()},
                             {"config_hash", config.hash()},
                             {"seed", config.seed},
                             {"git_revision", git_revision()},
                             {"started_utc", started_utc_},
                             {"wall_time_s", wall},
                             {"artifacts", names_}};
  if (!extra.empty()) manifest["details"] = std::move(extra);
  {
    std::ofstream out(staging_ / (command_ + ".manifest.json"));
    out << manifest.dump(2) << '\n';
    if (!out) throw std::runtime_error("failed writing the manifest");
  }
  for (const auto& entry : fs::directory_iterator(staging_)) {
    fs::rename(entry.path(), out_dir_ / entry.path().filename());
  }
  committed_ = true;
}

Model load_model(const ExperimentConfig& config) {
  if (config.model_path.empty()) {
    throw LoadError("no model given: pass --model or set SEQCIRC_MODEL to a GPT-2 safetensors file");
  }
  return Model::load(config.model_path);
}

Tokenizer load_tokenizer(const ExperimentConfig& config) {
  const fs::path dir = config.vocab_dir.empty() ? fs::path(SEQCIRC_DATA_DIR) / "gpt2" : fs::path(config.vocab_dir);
  return Tokenizer::load_dir(dir);
}

TaskDataset obtain_dataset(const ExperimentConfig& config, const Model& model, const Tokenizer* tok,
                           const std::string& task, const std::string& dataset_path) {
  if (!dataset_path.empty()) {
    TaskDataset ds = read_jsonl(dataset_path);
    for (const auto& s : ds.clean) {
      for (TokenId t : s.tokens) {
        if (t < 0 || t >= model.config().vocab_size) {
          throw ConfigError(fmt::format("dataset '{}' holds token {} outside the model vocabulary", dataset_path, t));
        }
      }
    }
    return ds;
  }
  if (!tok) throw ConfigError("generating a dataset needs the tokenizer");
  const fs::path data_dir = config.data_dir.empty() ? fs::path(SEQCIRC_DATA_DIR) : fs::path(config.data_dir);
  const SequenceLexicon lex = lexicon_for_task(task);
  GenerationOptions opt;
  TaskDataset ds = generate_clean(model_scorer(model, config.workers), *tok, lex, default_templates(data_dir),
                                  config.n_samples, config.seed, opt);
  corrupt(ds, config.seed, *tok);
  return ds;
}

}  // namespace seqcirc::cli

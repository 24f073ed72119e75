#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvseg/embednet.hpp"
#include "curvseg/evalx.hpp"
#include "curvseg/gradcheck.hpp"
#include "curvseg/pipeline.hpp"
#include "curvseg/synthgen.hpp"
#include "curvseg/tensorio.hpp"

namespace curvseg {

/// Everything a command needs. Missing JSON keys keep these defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  /// Scenes written by `synth`.
  std::size_t count = 10;
  SceneSpec scene;
  LossConfig loss;
  OptimConfig optim;
  AugmentParams augment;
  bool use_augmentation = true;
  PipelineConfig pipeline;
  std::filesystem::path output_dir = "out";

  /// Throws ConfigError.
  void validate() const;
};

/// Throws ConfigError on malformed JSON, unknown keys or wrong value types.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

struct ManifestEntry {
  std::string name;
  std::uint64_t seed = 0;
  std::size_t instances = 0;
  bool crossing = false;
};

struct DatasetItem {
  std::string name;
  ImageGrid image;
  InstanceSet instances;
};

/// Writes scene_NNNN.{pgm,json,segt} and manifest.json into `out_dir`.
std::vector<ManifestEntry> cmd_synth(const RunConfig& cfg, std::size_t count,
                                     const std::filesystem::path& out_dir);

/// Reads a directory produced by cmd_synth. Throws IoError / ParseError, and
/// ConfigError when a scene disagrees with the manifest.
std::vector<DatasetItem> load_dataset(const std::filesystem::path& dir);

/// Seeded 80/20 split of indices 0..n-1 into (train, val). Needs n >= 2.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            std::uint64_t seed);

/// Writes model.segt, model.json and loss_log.csv into `out_dir`.
TrainResult cmd_train(const RunConfig& cfg, const std::filesystem::path& dataset_dir,
                      const std::filesystem::path& out_dir);

TensorContainer params_to_container(const ModelParams& params);
/// Throws ConfigError when the tensors do not fit the default architecture.
ModelParams params_from_container(const TensorContainer& tc);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

enum class EvalMethod { kEmbedding, kConnectedComponents, kOracle };
/// "embedding", "cc" or "oracle"; anything else throws ConfigError.
EvalMethod parse_eval_method(const std::string& name);
std::string to_string(EvalMethod m);

struct EvalResult {
  MetricReport micro;
  MetricReport macro;
  std::vector<std::string> names;
  std::vector<MetricReport> per_image;
};

/// Runs the chosen method over the dataset. The oracle method scores the
/// ground truth against itself and ignores `checkpoint`.
EvalResult evaluate_dataset(const RunConfig& cfg, const std::optional<ModelParams>& checkpoint,
                            const std::vector<DatasetItem>& data, EvalMethod method);

/// evaluate_dataset plus metrics_<method>.json in `out_dir`.
EvalResult cmd_eval(const RunConfig& cfg, const std::optional<std::filesystem::path>& checkpoint,
                    const std::filesystem::path& dataset_dir, EvalMethod method,
                    const std::filesystem::path& out_dir);
nlohmann::json eval_json(const EvalResult& r, EvalMethod method);

/// Writes instances.segt, similarity.segt and diagnostics.json into `out_dir`.
InferenceResult cmd_infer(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                          const std::filesystem::path& image, const std::filesystem::path& out_dir);

/// Overlay PPM of `instances` (a SEGT masks container) on `image`.
void cmd_render(const std::filesystem::path& image, const std::filesystem::path& instances,
                const std::filesystem::path& out);

}  // namespace curvseg

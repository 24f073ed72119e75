#include "curvseg/commands.hpp"

#include <algorithm>
#include <cinttypes>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>

#include "curvseg/errors.hpp"
#include "curvseg/render.hpp"
#include "curvseg/tensorio.hpp"

namespace curvseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kSceneStream = 0x5CE7E;
constexpr std::uint64_t kSplitStream = 0x5B117;
constexpr std::uint64_t kTrainStream = 0x7EA1;
constexpr std::uint64_t kClusterStream = 0xC1u;

/// Reads the keys of one JSON object, rejecting unknown ones on finish().
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  void get(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void get(const char* key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  const json* section(const char* key) { return take(key); }
  std::string path(const char* key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(where_ + ": unknown key '" + item.key() + "'");
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  [[noreturn]] void fail(const char* key, const char* what) const {
    throw ConfigError(path(key) + ": " + what);
  }

  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_size(Fields& f, const char* key, std::size_t& out) {
  std::uint64_t v = out;
  f.get(key, v);
  out = static_cast<std::size_t>(v);
}

void read_scene(const json& j, SceneSpec& s) {
  Fields f(j, "scene");
  read_size(f, "height", s.height);
  read_size(f, "width", s.width);
  f.get("min_instances", s.min_instances);
  f.get("max_instances", s.max_instances);
  f.get("min_stroke_width", s.min_stroke_width);
  f.get("max_stroke_width", s.max_stroke_width);
  f.get("min_control_points", s.min_control_points);
  f.get("max_control_points", s.max_control_points);
  f.get("max_turn_degrees", s.max_turn_degrees);
  f.get("min_contrast", s.min_contrast);
  f.get("max_contrast", s.max_contrast);
  f.get("background", s.background);
  f.get("noise_amplitude", s.noise_amplitude);
  f.get("require_crossing", s.require_crossing);
  f.get("min_crossing_angle_degrees", s.min_crossing_angle_degrees);
  f.get("max_retries", s.max_retries);
  f.finish();
}

void read_loss(const json& j, LossConfig& l) {
  Fields f(j, "loss");
  f.get("delta_v", l.delta_v);
  f.get("delta_d", l.delta_d);
  f.get("w_var", l.w_var);
  f.get("w_dist", l.w_dist);
  f.get("w_dice", l.w_dice);
  f.get("w_disc", l.w_disc);
  f.get("dice_smooth", l.dice_smooth);
  f.finish();
}

void read_optim(const json& j, OptimConfig& o) {
  Fields f(j, "optim");
  f.get("learning_rate", o.learning_rate);
  f.get("weight_decay", o.weight_decay);
  read_size(f, "batch_size", o.batch_size);
  read_size(f, "epochs", o.epochs);
  f.get("beta1", o.beta1);
  f.get("beta2", o.beta2);
  f.get("epsilon", o.epsilon);
  f.finish();
}

void read_augment(const json& j, AugmentParams& a) {
  Fields f(j, "augment");
  f.get("rotation_degrees", a.rotation_degrees);
  f.get("flip", a.flip);
  f.get("brightness_delta", a.brightness_delta);
  f.get("contrast_delta", a.contrast_delta);
  f.get("per_transform_probability", a.per_transform_probability);
  f.finish();
}

void read_pipeline(const json& j, PipelineConfig& p) {
  Fields f(j, "pipeline");
  f.get("seg_threshold", p.seg_threshold);
  if (const json* ms = f.section("mean_shift")) {
    Fields m(*ms, "pipeline.mean_shift");
    m.get("bandwidth", p.mean_shift.bandwidth);
    read_size(m, "max_iterations", p.mean_shift.max_iterations);
    m.get("convergence_tol", p.mean_shift.convergence_tol);
    m.get("merge_radius", p.mean_shift.merge_radius);
    read_size(m, "seed_cap", p.mean_shift.seed_cap);
    m.get("coord_scale", p.mean_shift.coord_scale);
    m.get("min_cluster_fraction", p.mean_shift.min_cluster_fraction);
    m.finish();
  }
  if (const json* rs = f.section("resolve")) {
    Fields r(*rs, "pipeline.resolve");
    r.get("beta", p.resolve.beta);
    r.get("threshold_a", p.resolve.threshold_a);
    r.finish();
  }
  f.finish();
}

std::string scene_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04zu", i);
  return buf;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory '" + dir.string() + "'" +
                  (ec ? ": " + ec.message() : std::string()));
  }
}

json read_json_file(const fs::path& path) {
  const std::string text = read_file_bytes(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::validate() const {
  try {
    scene.validate();
    loss.validate();
    optim.validate();
    augment.validate();
    pipeline.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (scene.height % Architecture::kDownsample != 0 || scene.width % Architecture::kDownsample != 0) {
    throw ConfigError("scene: height and width must be even");
  }
}

RunConfig parse_run_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  RunConfig cfg;
  Fields f(j, "config");
  f.get("seed", cfg.seed);
  read_size(f, "count", cfg.count);
  f.get("use_augmentation", cfg.use_augmentation);
  std::string out = cfg.output_dir.string();
  f.get("output_dir", out);
  cfg.output_dir = out;
  if (const json* s = f.section("scene")) read_scene(*s, cfg.scene);
  if (const json* s = f.section("loss")) read_loss(*s, cfg.loss);
  if (const json* s = f.section("optim")) read_optim(*s, cfg.optim);
  if (const json* s = f.section("augment")) read_augment(*s, cfg.augment);
  if (const json* s = f.section("pipeline")) read_pipeline(*s, cfg.pipeline);
  f.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file_bytes(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_run_config(text);
}

json to_json(const RunConfig& c) {
  const auto& s = c.scene;
  const auto& ms = c.pipeline.mean_shift;
  return {
      {"seed", c.seed},
      {"count", c.count},
      {"use_augmentation", c.use_augmentation},
      {"output_dir", c.output_dir.string()},
      {"scene",
       {{"height", s.height},
        {"width", s.width},
        {"min_instances", s.min_instances},
        {"max_instances", s.max_instances},
        {"min_stroke_width", s.min_stroke_width},
        {"max_stroke_width", s.max_stroke_width},
        {"min_control_points", s.min_control_points},
        {"max_control_points", s.max_control_points},
        {"max_turn_degrees", s.max_turn_degrees},
        {"min_contrast", s.min_contrast},
        {"max_contrast", s.max_contrast},
        {"background", s.background},
        {"noise_amplitude", s.noise_amplitude},
        {"require_crossing", s.require_crossing},
        {"min_crossing_angle_degrees", s.min_crossing_angle_degrees},
        {"max_retries", s.max_retries}}},
      {"loss",
       {{"delta_v", c.loss.delta_v},
        {"delta_d", c.loss.delta_d},
        {"w_var", c.loss.w_var},
        {"w_dist", c.loss.w_dist},
        {"w_dice", c.loss.w_dice},
        {"w_disc", c.loss.w_disc},
        {"dice_smooth", c.loss.dice_smooth}}},
      {"optim",
       {{"learning_rate", c.optim.learning_rate},
        {"weight_decay", c.optim.weight_decay},
        {"batch_size", c.optim.batch_size},
        {"epochs", c.optim.epochs},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"epsilon", c.optim.epsilon}}},
      {"augment",
       {{"rotation_degrees", c.augment.rotation_degrees},
        {"flip", c.augment.flip},
        {"brightness_delta", c.augment.brightness_delta},
        {"contrast_delta", c.augment.contrast_delta},
        {"per_transform_probability", c.augment.per_transform_probability}}},
      {"pipeline",
       {{"seg_threshold", c.pipeline.seg_threshold},
        {"mean_shift",
         {{"bandwidth", ms.bandwidth},
          {"max_iterations", ms.max_iterations},
          {"convergence_tol", ms.convergence_tol},
          {"merge_radius", ms.merge_radius},
          {"seed_cap", ms.seed_cap},
          {"coord_scale", ms.coord_scale},
          {"min_cluster_fraction", ms.min_cluster_fraction}}},
        {"resolve", {{"beta", c.pipeline.resolve.beta}, {"threshold_a", c.pipeline.resolve.threshold_a}}}}},
  };
}

// ---------------------------------------------------------------------------
// synth

std::vector<ManifestEntry> cmd_synth(const RunConfig& cfg, std::size_t count, const fs::path& out_dir) {
  cfg.validate();
  ensure_dir(out_dir);
  std::vector<ManifestEntry> entries;
  json scenes = json::array();
  for (std::size_t i = 0; i < count; ++i) {
    SceneSpec spec = cfg.scene;
    spec.rng_seed = derive_seed(cfg.seed, kSceneStream, i);
    const Scene scene = generate_scene(spec);
    const std::string name = scene_name(i);
    write_pgm(out_dir / (name + ".pgm"), scene.image);
    write_file_atomic(out_dir / (name + ".json"),
                      write_annotations({spec.height, spec.width, scene.annotations}));
    instances_to_container(scene.instances).write_file(out_dir / (name + ".segt"));
    entries.push_back({name, spec.rng_seed, scene.instances.size(), scene.crossing});
    scenes.push_back({{"name", name},
                      {"image", name + ".pgm"},
                      {"annotations", name + ".json"},
                      {"masks", name + ".segt"},
                      {"seed", spec.rng_seed},
                      {"instances", scene.instances.size()},
                      {"crossing", scene.crossing}});
  }
  const json manifest = {{"seed", cfg.seed},
                         {"height", cfg.scene.height},
                         {"width", cfg.scene.width},
                         {"scenes", scenes}};
  write_file_atomic(out_dir / "manifest.json", dump(manifest));
  return entries;
}

std::vector<DatasetItem> load_dataset(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  std::vector<DatasetItem> items;
  try {
    for (const auto& s : manifest.at("scenes")) {
      DatasetItem item;
      item.name = s.at("name").get<std::string>();
      item.image = read_pgm(dir / s.at("image").get<std::string>());
      item.instances = instances_from_container(TensorContainer::read_file(dir / s.at("masks").get<std::string>()));
      if (item.instances.size() != s.at("instances").get<std::size_t>()) {
        throw ConfigError(item.name + ": manifest instance count disagrees with its masks");
      }
      if (!item.instances.masks.empty() &&
          !item.image.same_shape(item.instances.height, item.instances.width)) {
        throw ConfigError(item.name + ": image and masks differ in dimensions");
      }
      items.push_back(std::move(item));
    }
  } catch (const json::exception& e) {
    throw ParseError((dir / "manifest.json").string() + ": " + e.what());
  }
  return items;
}

// ---------------------------------------------------------------------------
// train

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n,
                                                                            std::uint64_t seed) {
  if (n < 2) throw ConfigError("dataset needs at least 2 scenes for a train/validation split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = std::max<std::size_t>(1, n / 5);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

TensorContainer params_to_container(const ModelParams& params) {
  TensorContainer tc;
  for (const auto& info : params.layout()) {
    std::vector<std::uint32_t> dims;
    for (auto d : info.shape) dims.push_back(static_cast<std::uint32_t>(d));
    std::vector<float> data;
    data.reserve(info.size);
    for (std::size_t i = 0; i < info.size; ++i) {
      data.push_back(static_cast<float>(params.flat()[info.offset + i]));
    }
    tc.add(info.name, std::move(dims), std::move(data));
  }
  return tc;
}

ModelParams params_from_container(const TensorContainer& tc) {
  ModelParams params{Architecture{}};
  if (tc.entries().size() != kSlotCount) {
    throw ConfigError("checkpoint: expected " + std::to_string(kSlotCount) + " tensors, found " +
                      std::to_string(tc.entries().size()));
  }
  for (const auto& info : params.layout()) {
    const TensorEntry* e = tc.find(info.name);
    if (e == nullptr) throw ConfigError("checkpoint: missing tensor '" + info.name + "'");
    if (!std::equal(e->dims.begin(), e->dims.end(), info.shape.begin(), info.shape.end(),
                    [](std::uint32_t a, std::size_t b) { return a == b; })) {
      throw ConfigError("checkpoint: tensor '" + info.name + "' does not fit the architecture");
    }
    for (std::size_t i = 0; i < info.size; ++i) params.flat()[info.offset + i] = e->data[i];
  }
  if (!params.all_finite()) throw NumericError("checkpoint: non-finite parameters");
  return params;
}

void save_checkpoint(const fs::path& path, const ModelParams& params) {
  params_to_container(params).write_file(path);
}

ModelParams load_checkpoint(const fs::path& path) {
  return params_from_container(TensorContainer::read_file(path));
}

TrainResult cmd_train(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir) {
  cfg.validate();
  const std::vector<DatasetItem> data = load_dataset(dataset_dir);
  if (data.empty()) throw ConfigError("dataset '" + dataset_dir.string() + "' is empty");
  for (const auto& d : data) {
    if (d.image.height() % 2 != 0 || d.image.width() % 2 != 0) {
      throw ConfigError(d.name + ": image dimensions must be even");
    }
  }
  const auto [tr_idx, val_idx] = split_indices(data.size(), derive_seed(cfg.seed, kSplitStream));
  std::vector<TrainSample> tr;
  std::vector<TrainSample> val;
  for (auto i : tr_idx) tr.push_back({data[i].image, data[i].instances});
  for (auto i : val_idx) val.push_back({data[i].image, data[i].instances});

  TrainConfig tc;
  tc.loss = cfg.loss;
  tc.optim = cfg.optim;
  tc.augment = cfg.augment;
  tc.use_augmentation = cfg.use_augmentation;
  tc.seed = derive_seed(cfg.seed, kTrainStream);
  TrainResult result = train(tr, val, tc);

  ensure_dir(out_dir);
  save_checkpoint(out_dir / "model.segt", result.params);
  const Architecture& a = result.params.arch();
  const json sidecar = {
      {"architecture",
       {{"in_channels", a.in_channels},
        {"channels", a.channels},
        {"embedding_dim", a.embedding_dim},
        {"downsample", Architecture::kDownsample}}},
      {"loss", to_json(cfg)["loss"]},
      {"optim", to_json(cfg)["optim"]},
      {"seed", cfg.seed},
      {"best_epoch", result.best_epoch},
      {"train_scenes", tr_idx.size()},
      {"val_scenes", val_idx.size()},
  };
  write_file_atomic(out_dir / "model.json", dump(sidecar));
  std::string csv = "epoch,train_loss,val_loss\n";
  for (const auto& r : result.log) {
    csv += std::to_string(r.epoch) + "," + format_double(r.train_loss) + "," +
           format_double(r.val_loss) + "\n";
  }
  write_file_atomic(out_dir / "loss_log.csv", csv);
  return result;
}

// ---------------------------------------------------------------------------
// eval

EvalMethod parse_eval_method(const std::string& name) {
  if (name == "embedding") return EvalMethod::kEmbedding;
  if (name == "cc") return EvalMethod::kConnectedComponents;
  if (name == "oracle") return EvalMethod::kOracle;
  throw ConfigError("unknown method '" + name + "' (expected embedding, cc or oracle)");
}

std::string to_string(EvalMethod m) {
  switch (m) {
    case EvalMethod::kEmbedding:
      return "embedding";
    case EvalMethod::kConnectedComponents:
      return "cc";
    case EvalMethod::kOracle:
      return "oracle";
  }
  return "?";
}

EvalResult evaluate_dataset(const RunConfig& cfg, const std::optional<ModelParams>& checkpoint,
                            const std::vector<DatasetItem>& data, EvalMethod method) {
  if (method != EvalMethod::kOracle && !checkpoint) {
    throw ConfigError("method '" + to_string(method) + "' needs a checkpoint");
  }
  MetricAccumulator acc;
  EvalResult r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const DatasetItem& d = data[i];
    if (method == EvalMethod::kOracle) {
      r.per_image.push_back(acc.add(d.instances, d.instances));
      r.names.push_back(d.name);
      continue;
    }
    if (d.image.height() % 2 != 0 || d.image.width() % 2 != 0) {
      throw ConfigError(d.name + ": image dimensions do not fit the checkpoint (must be even)");
    }
    InferenceResult pred;
    if (method == EvalMethod::kEmbedding) {
      PipelineConfig pc = cfg.pipeline;
      pc.mean_shift.rng_seed = derive_seed(cfg.seed, kClusterStream, i);
      pred = infer(*checkpoint, d.image, pc);
    } else {
      pred = infer_cc_baseline(*checkpoint, d.image, cfg.pipeline.seg_threshold);
    }
    InstanceSet gt = d.instances;
    if (gt.masks.empty()) gt = InstanceSet(d.image.height(), d.image.width());
    r.per_image.push_back(acc.add(pred.instances, gt));
    r.names.push_back(d.name);
  }
  r.micro = acc.micro();
  r.macro = acc.macro();
  return r;
}

json eval_json(const EvalResult& r, EvalMethod method) {
  json images = json::array();
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    json row = to_json(r.per_image[i]);
    row["name"] = r.names[i];
    images.push_back(std::move(row));
  }
  return {{"method", to_string(method)},
          {"images_evaluated", r.per_image.size()},
          {"micro", to_json(r.micro)},
          {"macro", to_json(r.macro)},
          {"per_image", images}};
}

EvalResult cmd_eval(const RunConfig& cfg, const std::optional<fs::path>& checkpoint,
                    const fs::path& dataset_dir, EvalMethod method, const fs::path& out_dir) {
  cfg.validate();
  std::optional<ModelParams> params;
  if (checkpoint) params = load_checkpoint(*checkpoint);
  const std::vector<DatasetItem> data = load_dataset(dataset_dir);
  EvalResult r = evaluate_dataset(cfg, params, data, method);
  ensure_dir(out_dir);
  write_file_atomic(out_dir / ("metrics_" + to_string(method) + ".json"), dump(eval_json(r, method)));
  return r;
}

// ---------------------------------------------------------------------------
// infer / render

InferenceResult cmd_infer(const RunConfig& cfg, const fs::path& checkpoint, const fs::path& image,
                          const fs::path& out_dir) {
  cfg.validate();
  const ModelParams params = load_checkpoint(checkpoint);
  const ImageGrid img = read_pgm(image);
  if (img.height() % 2 != 0 || img.width() % 2 != 0) {
    throw ConfigError(image.string() + ": image dimensions must be even");
  }
  PipelineConfig pc = cfg.pipeline;
  pc.mean_shift.rng_seed = derive_seed(cfg.seed, kClusterStream, 0);
  InferenceResult r = infer(params, img, pc);

  ensure_dir(out_dir);
  InstanceSet out = r.instances;
  if (out.masks.empty()) out = InstanceSet(img.height(), img.width());
  instances_to_container(out).write_file(out_dir / "instances.segt");
  TensorContainer sim;
  std::vector<float> values;
  for (double v : r.diagnostics.min_similarity.values()) values.push_back(static_cast<float>(v));
  sim.add("min_similarity",
          {static_cast<std::uint32_t>(img.height()), static_cast<std::uint32_t>(img.width())},
          std::move(values));
  sim.write_file(out_dir / "similarity.segt");
  write_file_atomic(out_dir / "diagnostics.json", dump(diagnostics_json(r.diagnostics)));
  return r;
}

void cmd_render(const fs::path& image, const fs::path& instances, const fs::path& out) {
  const ImageGrid img = read_pgm(image);
  const InstanceSet set = instances_from_container(TensorContainer::read_file(instances));
  if (!set.masks.empty() && !img.same_shape(set.height, set.width)) {
    throw ConfigError("render: image and instances differ in dimensions");
  }
  if (out.has_parent_path()) ensure_dir(out.parent_path());
  write_file_atomic(out, encode_ppm(render_overlay(img, set)));
}

}  // namespace curvseg

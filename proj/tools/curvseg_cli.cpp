// curvseg command-line entry point.
//
//   curvseg synth     --config cfg.json --seed 7 --out data/ [--count N]
//   curvseg train     --data data/ --out run/ [--epochs E]
//   curvseg eval      --data data/ --checkpoint run/model.segt --method embedding|cc|oracle
//   curvseg infer     --checkpoint run/model.segt --image scene.pgm --out pred/
//   curvseg render    --image scene.pgm --instances pred/instances.segt --out overlay.ppm
//   curvseg gradcheck [--fixtures 10]
//
// Exit codes: 0 ok, 2 config, 3 I/O, 4 numeric.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "curvseg/commands.hpp"
#include "curvseg/errors.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> count;
  std::string data;
  std::string checkpoint;
  std::string image;
  std::string instances;
  std::string method = "embedding";
  std::optional<std::size_t> epochs;
  std::optional<double> threshold_a;
  std::optional<double> beta;
  std::optional<double> bandwidth;
  std::size_t fixtures = 10;
};

curvseg::RunConfig resolve_config(const Options& o) {
  curvseg::RunConfig cfg = o.config.empty() ? curvseg::RunConfig{} : curvseg::load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.epochs) cfg.optim.epochs = *o.epochs;
  if (o.threshold_a) cfg.pipeline.resolve.threshold_a = *o.threshold_a;
  if (o.beta) cfg.pipeline.resolve.beta = *o.beta;
  if (o.bandwidth) cfg.pipeline.mean_shift.bandwidth = *o.bandwidth;
  cfg.validate();
  return cfg;
}

void print_report(const char* label, const curvseg::MetricReport& r) {
  std::printf("%s  iou %.4f  dice %.4f  ap %.4f  ar %.4f\n", label, r.semantic_iou, r.semantic_dice,
              r.ap, r.ar);
}

int run(const std::string& command, const Options& o) {
  using namespace curvseg;
  if (command == "synth") {
    const RunConfig cfg = resolve_config(o);
    const auto entries = cmd_synth(cfg, o.count.value_or(cfg.count), cfg.output_dir);
    std::printf("wrote %zu scenes to %s\n", entries.size(), cfg.output_dir.string().c_str());
  } else if (command == "train") {
    const RunConfig cfg = resolve_config(o);
    const TrainResult r = cmd_train(cfg, o.data, cfg.output_dir);
    for (const auto& e : r.log) {
      std::printf("epoch %3zu  train %.6f  val %.6f\n", e.epoch, e.train_loss, e.val_loss);
    }
    std::printf("best epoch %zu, checkpoint %s\n", r.best_epoch,
                (cfg.output_dir / "model.segt").string().c_str());
  } else if (command == "eval") {
    const RunConfig cfg = resolve_config(o);
    std::optional<std::filesystem::path> ckpt;
    if (!o.checkpoint.empty()) ckpt = o.checkpoint;
    const EvalMethod m = parse_eval_method(o.method);
    const EvalResult r = cmd_eval(cfg, ckpt, o.data, m, cfg.output_dir);
    print_report("micro", r.micro);
    print_report("macro", r.macro);
  } else if (command == "infer") {
    const RunConfig cfg = resolve_config(o);
    const InferenceResult r = cmd_infer(cfg, o.checkpoint, o.image, cfg.output_dir);
    std::printf("clusters %zu  fg_pixels %zu  multi_assigned %zu\n", r.diagnostics.clusters,
                r.diagnostics.fg_pixels, r.diagnostics.multi_assigned_pixels);
  } else if (command == "render") {
    if (o.out.empty()) throw ConfigError("render: --out is required");
    cmd_render(o.image, o.instances, o.out);
    std::printf("wrote %s\n", o.out.c_str());
  } else if (command == "gradcheck") {
    const RunConfig cfg = resolve_config(o);
    const GradcheckReport r = run_gradcheck(o.fixtures, cfg.seed, 1e-3, cfg.loss);
    std::printf("fixtures %zu  max relative error  discriminative %.3e  total %.3e\n", r.fixtures,
                r.max_error_discriminative, r.max_error_total);
    if (r.max_error_discriminative > 1e-4 || r.max_error_total > 1e-4) return kExitNumeric;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Curvilinear instance segmentation with pixel embeddings"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration");
    sub->add_option("--seed", o.seed, "Global seed");
    sub->add_option("--out", o.out, "Output directory");
  };
  const auto pipeline_flags = [&o](CLI::App* sub) {
    sub->add_option("--threshold-a", o.threshold_a, "Similarity threshold a");
    sub->add_option("--beta", o.beta, "Similarity sharpness beta");
    sub->add_option("--bandwidth", o.bandwidth, "Mean-shift bandwidth");
  };

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  common(synth);
  synth->add_option("--count", o.count, "Number of scenes");

  CLI::App* train = app.add_subcommand("train", "Train the embedding network");
  common(train);
  train->add_option("--data", o.data, "Dataset directory")->required();
  train->add_option("--epochs", o.epochs, "Override optim.epochs");

  CLI::App* eval = app.add_subcommand("eval", "Score a method on a dataset");
  common(eval);
  pipeline_flags(eval);
  eval->add_option("--data", o.data, "Dataset directory")->required();
  eval->add_option("--checkpoint", o.checkpoint, "model.segt");
  eval->add_option("--method", o.method, "embedding, cc or oracle");

  CLI::App* inf = app.add_subcommand("infer", "Segment one image");
  common(inf);
  pipeline_flags(inf);
  inf->add_option("--checkpoint", o.checkpoint, "model.segt")->required();
  inf->add_option("--image", o.image, "PGM image")->required();

  CLI::App* render = app.add_subcommand("render", "Overlay instances on an image");
  render->add_option("--image", o.image, "PGM image")->required();
  render->add_option("--instances", o.instances, "SEGT masks")->required();
  render->add_option("--out", o.out, "Output PPM")->required();

  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  common(grad);
  grad->add_option("--fixtures", o.fixtures, "Number of random fixtures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, o);
  } catch (const curvseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const curvseg::GenerationError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const curvseg::IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const curvseg::ParseError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const curvseg::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  }
}

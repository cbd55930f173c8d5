#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lcgn/dataset.hpp"
#include "lcgn/inspect.hpp"
#include "lcgn/trainer.hpp"

namespace {

using namespace lcgn;

struct CommonFlags {
  std::string task = "vqa";
  std::string feature_mode = "symbolic";
  std::int64_t steps = 4;
  std::string ablation = "none";
  std::uint64_t seed = 0;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--task", flags.task, "Task: vqa or ref")
      ->check(CLI::IsMember({"vqa", "ref"}));
  sub->add_option("--feature-mode", flags.feature_mode,
                  "Entity features: symbolic or grid")
      ->check(CLI::IsMember({"symbolic", "grid"}));
  sub->add_option("--steps", flags.steps, "Message passing rounds T");
  sub->add_option("--ablation", flags.ablation,
                  "Model ablation: none, no-text, static-w, no-lcgn")
      ->check(CLI::IsMember({"none", "no-text", "static-w", "no-lcgn"}));
  sub->add_option("--seed", flags.seed, "Random seed");
  sub->set_config("--config", "", "Key-value config file; flags override it");
}

int cmd_gen_data(const CommonFlags& flags, const std::string& out,
                 std::int64_t train_scenes, std::int64_t val_scenes,
                 int questions_per_scene, int val_questions_per_scene,
                 const std::string& template_set) {
  GenConfig cfg;
  cfg.task = task_from_string(flags.task);
  cfg.templates = template_set_from_string(template_set);
  cfg.train_scenes = train_scenes;
  cfg.val_scenes = val_scenes;
  cfg.questions_per_scene = questions_per_scene;
  cfg.val_questions_per_scene = val_questions_per_scene;
  cfg.seed = flags.seed;
  generate_dataset(cfg, out);
  const auto data = load_dataset(out);
  std::cout << "wrote " << out << ": " << data.train.size() << " train / "
            << data.val.size() << " val samples over "
            << data.scenes.size() << " scenes, vocab "
            << data.vocab.size() << ", answers " << data.answers.size()
            << "\n";
  return 0;
}

TrainConfig build_train_config(const CommonFlags& flags, std::int64_t d_txt,
                               std::int64_t d_ctx, std::int64_t d_loc,
                               double lr, int batch_size,
                               const std::string& loss, double ema_decay,
                               int epochs, int grid_g) {
  TrainConfig cfg;
  cfg.task = task_from_string(flags.task);
  cfg.feature_mode = feature_mode_from_string(flags.feature_mode);
  cfg.grid_g = grid_g;
  cfg.iterations = flags.steps;
  cfg.d_txt = d_txt;
  cfg.d_ctx = d_ctx;
  cfg.d_loc = d_loc;
  cfg.ablation = ablation_from_string(flags.ablation);
  cfg.loss_kind = loss_kind_from_string(loss);
  cfg.lr = lr;
  cfg.batch_size = batch_size;
  cfg.ema_decay = ema_decay;
  cfg.epochs = epochs;
  cfg.seed = flags.seed;
  return cfg;
}

int cmd_train(const TrainConfig& cfg, const std::string& data_dir,
              const std::string& out, const std::string& metrics) {
  const auto data = load_dataset(data_dir);
  if (data.task != cfg.task)
    throw ContractError("dataset task does not match --task");
  const auto result = train(cfg, data, out, metrics);
  for (const auto& log : result.epochs)
    std::cout << "epoch " << log.epoch << ": train loss " << log.train.loss
              << " acc " << log.train.acc << " | val acc " << log.val.acc
              << " (relational " << log.val.acc_relational << ")\n";
  std::cout << "best val acc " << result.best_val_acc << " at epoch "
            << result.best_epoch << "; checkpoint " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& split, bool no_ema, const std::string& out) {
  const auto eval = evaluate_checkpoint(ckpt, data_dir, !no_ema, split);
  const auto record =
      metrics_record(-1, split, eval.metrics, config_hash(eval.config),
                     eval.config.seed);
  if (out.empty()) {
    std::cout << record << "\n";
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << record << '\n';
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& ckpt, const std::string& data_dir,
                const std::string& split, const std::string& out,
                bool analyze) {
  const auto loaded = load_checkpoint(ckpt);
  const auto cfg = train_config_from_json(loaded.config_json).resolved();
  const auto data = load_dataset(data_dir);
  const auto model_config = model_config_for(cfg, data);
  auto params = ModelParams<float>::init(model_config, 0);
  unpack_params(loaded.ema, params);

  const auto& samples = split == "train" ? data.train : data.val;
  const auto dumps = collect_traces(params, model_config, cfg, data, samples);
  if (!out.empty()) {
    write_traces(out, dumps);
    std::cout << "wrote " << dumps.size() << " traces to " << out << "\n";
  }
  if (analyze) {
    const auto dep = edge_dependence(dumps);
    nlohmann::ordered_json j;
    j["scenes"] = dep.scenes;
    j["mean_unique_argmax"] = dep.mean_unique_argmax;
    std::cout << j.dump() << "\n";
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tolerance) {
  const auto report = pipeline_gradcheck(seed);
  for (const auto& e : report)
    std::printf("%-12s max rel err %.3e over %d coords\n", e.name.c_str(),
                e.max_rel_err, e.checked);
  const double worst = max_gradcheck_error(report);
  std::printf("worst %.3e (tolerance %.1e)\n", worst, tolerance);
  return worst < tolerance ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Language-conditioned graph network trainer"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data",
                                 "Generate synthetic scenes and samples");
  CommonFlags gen_flags;
  add_common(gen, gen_flags);
  std::string gen_out;
  std::int64_t train_scenes = 10000, val_scenes = 400;
  int questions_per_scene = 2, val_questions_per_scene = 10;
  std::string template_set = "all";
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--train-scenes", train_scenes, "Training scene count");
  gen->add_option("--val-scenes", val_scenes, "Validation scene count");
  gen->add_option("--questions-per-scene", questions_per_scene,
                  "Samples generated per training scene");
  gen->add_option("--val-questions-per-scene", val_questions_per_scene,
                  "Samples generated per validation scene");
  gen->add_option("--template-set", template_set, "Template set")
      ->check(CLI::IsMember({"all", "twohop"}));

  // train
  auto* tr = app.add_subcommand("train", "Train a model");
  CommonFlags train_flags;
  add_common(tr, train_flags);
  std::string train_data, train_out = "model.ckpt", train_metrics;
  std::int64_t d_txt = 512, d_ctx = 512, d_loc = 512;
  double lr = 0, ema_decay = 0.999;
  int batch_size = 0, epochs = 20, grid_g = 8;
  std::string loss = "softmax";
  tr->add_option("--data", train_data, "Dataset directory")->required();
  tr->add_option("--out", train_out, "Checkpoint output path");
  tr->add_option("--metrics", train_metrics, "Metrics log path (jsonl)");
  tr->add_option("--d-txt", d_txt, "Text feature width");
  tr->add_option("--d-ctx", d_ctx, "Context feature width");
  tr->add_option("--d-loc", d_loc, "Local feature width");
  tr->add_option("--lr", lr, "Learning rate (0: per-mode default)");
  tr->add_option("--batch-size", batch_size, "Batch size (0: per-mode default)");
  tr->add_option("--epochs", epochs, "Training epochs");
  tr->add_option("--loss", loss, "VQA loss kind: softmax or sigmoid")
      ->check(CLI::IsMember({"softmax", "sigmoid"}));
  tr->add_option("--ema-decay", ema_decay, "Parameter EMA decay");
  tr->add_option("--grid-g", grid_g, "Grid size G for grid feature mode");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string eval_ckpt, eval_data, eval_split = "val", eval_out;
  bool no_ema = false;
  ev->add_option("--ckpt", eval_ckpt, "Checkpoint path")->required();
  ev->add_option("--data", eval_data, "Dataset directory")->required();
  ev->add_option("--split", eval_split, "Split: train or val")
      ->check(CLI::IsMember({"train", "val"}));
  ev->add_flag("--no-ema", no_ema, "Evaluate raw weights instead of the EMA");
  ev->add_option("--out", eval_out, "Write the metrics record here");
  ev->set_config("--config");

  // inspect-edges
  auto* ins = app.add_subcommand("inspect-edges",
                                 "Dump per-sample edge traces");
  std::string ins_ckpt, ins_data, ins_split = "val", ins_out;
  bool analyze = false;
  ins->add_option("--ckpt", ins_ckpt, "Checkpoint path")->required();
  ins->add_option("--data", ins_data, "Dataset directory")->required();
  ins->add_option("--split", ins_split, "Split: train or val")
      ->check(CLI::IsMember({"train", "val"}));
  ins->add_option("--out", ins_out, "Trace dump path (jsonl)");
  ins->add_flag("--analyze", analyze,
                "Print the mean unique-argmax-sender count");
  ins->set_config("--config");

  // gradcheck
  auto* gc = app.add_subcommand(
      "gradcheck", "Finite-difference check of the full VQA pipeline");
  std::uint64_t gc_seed = 1;
  double tolerance = 1e-4;
  gc->add_option("--seed", gc_seed, "Random seed");
  gc->add_option("--tolerance", tolerance, "Maximum relative error");
  gc->set_config("--config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(gen_flags, gen_out, train_scenes, val_scenes,
                          questions_per_scene, val_questions_per_scene,
                          template_set);
    if (tr->parsed())
      return cmd_train(
          build_train_config(train_flags, d_txt, d_ctx, d_loc, lr, batch_size,
                             loss, ema_decay, epochs, grid_g),
          train_data, train_out, train_metrics);
    if (ev->parsed())
      return cmd_eval(eval_ckpt, eval_data, eval_split, no_ema, eval_out);
    if (ins->parsed())
      return cmd_inspect(ins_ckpt, ins_data, ins_split, ins_out, analyze);
    if (gc->parsed()) return cmd_gradcheck(gc_seed, tolerance);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// Command-line front end for the segmentation pipeline. Every subcommand
// shares the same config resolution: defaults, then --config file, then
// --seed / --data-root overrides.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imfseg/augmentation.hpp"
#include "imfseg/config.hpp"
#include "imfseg/io.hpp"
#include "imfseg/phantom.hpp"
#include "imfseg/pipeline.hpp"
#include "imfseg/version.hpp"

namespace fs = std::filesystem;
using namespace imfseg;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_root;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Config file (key = value lines)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "Override the config seed");
    cmd->add_option("--data-root", data_root,
                    "Directory manifest paths are relative to (IMFSEG_DATA_ROOT overrides)");
  }

  TrainingConfig resolve() const {
    TrainingConfig cfg = config_path.empty() ? TrainingConfig{} : load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (data_root) cfg.data_root = *data_root;
    validate_config(cfg);
    return cfg;
  }
};

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot thigh-muscle segmentation pipeline"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // phantom-generate
  auto* gen = app.add_subcommand("phantom-generate", "Generate the synthetic MRI dataset");
  CommonOpts gen_opts;
  gen_opts.attach(gen);
  std::string gen_out;
  bool gen_degraded = false;
  gen->add_option("--out-dir", gen_out, "Dataset output directory")->required();
  gen->add_flag("--write-degraded", gen_degraded,
                "Also write muscle-plus-structure masks for inspection");

  // plg-train
  auto* plg = app.add_subcommand("plg-train", "Stage 1: train on sparse precise labels");
  CommonOpts plg_opts;
  plg_opts.attach(plg);
  std::string plg_manifest, plg_out, plg_resume;
  plg->add_option("--manifest", plg_manifest, "Dataset manifest")->required();
  plg->add_option("--out-dir", plg_out, "Run directory")->required();
  plg->add_option("--resume", plg_resume, "Checkpoint with optimizer state to continue from");

  // pseudo-generate
  auto* pg = app.add_subcommand("pseudo-generate",
                                "Run the stage-1 model over the train split and store "
                                "corrected pseudo-labels");
  CommonOpts pg_opts;
  pg_opts.attach(pg);
  std::string pg_manifest, pg_ckpt, pg_out;
  pg->add_option("--manifest", pg_manifest, "Dataset manifest")->required();
  pg->add_option("--checkpoint", pg_ckpt, "Stage-1 checkpoint")->required();
  pg->add_option("--out-dir", pg_out, "Record store directory")->required();

  // pld-train
  auto* pld = app.add_subcommand("pld-train", "Stage 2: retrain on corrected pseudo-labels");
  CommonOpts pld_opts;
  pld_opts.attach(pld);
  std::string pld_manifest, pld_records, pld_out, pld_resume, pld_warm;
  pld->add_option("--manifest", pld_manifest, "Dataset manifest")->required();
  pld->add_option("--records", pld_records, "Record store from pseudo-generate")->required();
  pld->add_option("--out-dir", pld_out, "Run directory")->required();
  pld->add_option("--resume", pld_resume, "Checkpoint with optimizer state to continue from");
  pld->add_option("--warm-start", pld_warm, "Initialize from this checkpoint instead of fresh");

  // predict
  auto* pred = app.add_subcommand("predict", "Write ensemble masks for a set of images");
  CommonOpts pred_opts;
  pred_opts.attach(pred);
  std::string pred_ckpt, pred_out;
  std::vector<std::string> pred_inputs;
  pred->add_option("--checkpoint", pred_ckpt, "Trained checkpoint")->required();
  pred->add_option("--out-dir", pred_out, "Mask output directory")->required();
  pred->add_option("images", pred_inputs, "Input image files")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on the manifest's test split");
  CommonOpts ev_opts;
  ev_opts.attach(ev);
  std::string ev_manifest, ev_ckpt, ev_out, ev_label = "model";
  bool ev_overlays = false;
  ev->add_option("--manifest", ev_manifest, "Dataset manifest")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint to score")->required();
  ev->add_option("--out-dir", ev_out, "Report directory")->required();
  ev->add_option("--label", ev_label, "Method label written into the report");
  ev->add_flag("--overlays", ev_overlays, "Write boundary overlay images");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Train and score on/off combinations of loss "
                                          "and augmentation mechanisms");
  CommonOpts ab_opts;
  ab_opts.attach(ab);
  std::string ab_manifest, ab_out, ab_axes, ab_seeds = "1";
  ab->add_option("--manifest", ab_manifest, "Dataset manifest")->required();
  ab->add_option("--out-dir", ab_out, "Output directory")->required();
  ab->add_option("--axes", ab_axes, "Comma list from: ce,lr,aug,ca")->required();
  ab->add_option("--seeds", ab_seeds, "Comma list of seeds (default: 1)");

  // dump-augmented (debug aid)
  auto* dump = app.add_subcommand("dump-augmented",
                                  "Write augmented copies of train slices for inspection");
  CommonOpts dump_opts;
  dump_opts.attach(dump);
  std::string dump_manifest, dump_out;
  int dump_epoch = 0, dump_count = 8;
  dump->add_option("--manifest", dump_manifest, "Dataset manifest")->required();
  dump->add_option("--out-dir", dump_out, "Output directory")->required();
  dump->add_option("--epoch", dump_epoch, "Epoch whose draws to replay");
  dump->add_option("--count", dump_count, "Number of train slices to dump");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      TrainingConfig cfg = gen_opts.resolve();
      cfg.phantom_write_degraded = cfg.phantom_write_degraded || gen_degraded;
      DatasetManifest m = generate_phantom_dataset(cfg, gen_out);
      std::printf("wrote %zu slices under %s\n", m.entries.size(), gen_out.c_str());
    } else if (*plg) {
      TrainingConfig cfg = plg_opts.resolve();
      TrainResult r = plg_train(cfg, plg_manifest, plg_out, plg_resume);
      std::printf("stage 1 done: %d epochs, final checkpoint %s\n", r.epochs_completed,
                  r.final_checkpoint.c_str());
    } else if (*pg) {
      TrainingConfig cfg = pg_opts.resolve();
      auto records = pseudo_generate(cfg, pg_manifest, pg_ckpt, pg_out);
      std::size_t eligible = 0;
      for (const auto& r : records) eligible += r.eligible ? 1 : 0;
      std::printf("wrote %zu records (%zu eligible) under %s\n", records.size(), eligible,
                  pg_out.c_str());
    } else if (*pld) {
      TrainingConfig cfg = pld_opts.resolve();
      TrainResult r = pld_train(cfg, pld_manifest, pld_records, pld_out, pld_warm, pld_resume);
      std::printf("stage 2 done: %d epochs, final checkpoint %s\n", r.epochs_completed,
                  r.final_checkpoint.c_str());
    } else if (*pred) {
      TrainingConfig cfg = pred_opts.resolve();
      predict(cfg, pred_ckpt, pred_inputs, pred_out);
      std::printf("wrote %zu masks under %s\n", pred_inputs.size(), pred_out.c_str());
    } else if (*ev) {
      TrainingConfig cfg = ev_opts.resolve();
      cfg.save_overlays = cfg.save_overlays || ev_overlays;
      EvaluationReport rep = evaluate_checkpoint(cfg, ev_manifest, ev_ckpt, ev_out, ev_label);
      std::printf("%s: dice_tm %.4f  dice_imf %.4f  (%zu slices, %d skipped)\n",
                  rep.method_label.c_str(), rep.mean_dice_tm, rep.mean_dice_imf,
                  rep.slices.size(), rep.skipped);
    } else if (*ab) {
      TrainingConfig cfg = ab_opts.resolve();
      std::vector<std::uint64_t> seeds;
      for (const std::string& s : split_csv(ab_seeds)) seeds.push_back(std::stoull(s));
      auto rows = run_ablation(cfg, ab_manifest, split_csv(ab_axes), seeds, ab_out);
      for (const AblationRow& r : rows)
        if (r.seed == "mean")
          std::printf("%-28s dice_tm %.4f  dice_imf %.4f\n", r.label.c_str(), r.dice_tm,
                      r.dice_imf);
      std::printf("full table: %s/ablation.tsv\n", ab_out.c_str());
    } else if (*dump) {
      TrainingConfig cfg = dump_opts.resolve();
      DatasetManifest m = load_manifest(dump_manifest);
      std::string root = effective_data_root(cfg.data_root);
      fs::create_directories(dump_out);
      int written = 0;
      for (const ManifestEntry* e : entries_for_split(m, "train")) {
        if (written >= dump_count) break;
        ImageSlice image = load_image(resolve_data_path(e->image_path, root), cfg.slice_size);
        AugmentationSpec spec = draw_spec(cfg.seed, e->image_path, dump_epoch, cfg);
        ImageSlice out_img;
        BinaryMask out_mask;
        if (!e->label_path.empty()) {
          BinaryMask mask = load_mask(resolve_data_path(e->label_path, root), cfg.slice_size);
          apply_geometric(spec, image, &mask, out_img, &out_mask);
        } else {
          out_img = apply_geometric(spec, image);
        }
        if (cfg.use_contrast_adjust) out_img = apply_contrast(spec, out_img, cfg.contrast_mode);
        std::string stem = fs::path(e->image_path).stem().string();
        save_image((fs::path(dump_out) / (stem + "_aug.pgm")).string(), out_img);
        if (!e->label_path.empty())
          save_mask((fs::path(dump_out) / (stem + "_aug_mask.pgm")).string(), out_mask);
        ++written;
      }
      std::printf("wrote %d augmented slices under %s\n", written, dump_out.c_str());
    }
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 0;
}

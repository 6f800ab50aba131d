#include "imfseg/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

#include <json.hpp>

#include "imfseg/augmentation.hpp"
#include "imfseg/losses.hpp"
#include "imfseg/optimizer.hpp"
#include "imfseg/pseudolabel.hpp"
#include "imfseg/rng.hpp"
#include "imfseg/version.hpp"

namespace fs = std::filesystem;

namespace imfseg {

namespace {

enum class Stage { Plg, Pld };

struct TrainSample {
  ImageSlice image;
  BinaryMask label;        // precise mask (stage 1) or corrected pseudo-label (stage 2)
  bool has_label = false;  // stage 1: only precisely labeled slices carry one
  bool precise = false;    // oversampling pool membership
  double s = 1.0;          // stage 2 confidence; 1 for precise slices
  std::string sample_id;   // manifest image path, the stable identity
};

// Per-batch-slot scratch. Gradients are kept per sample and reduced in slot
// order afterwards, so results do not depend on the worker count.
struct SampleWork {
  Workspace ws;
  std::vector<double> grad;
  std::vector<double> dpa, dpb, dla, dlb;
};

std::vector<TrainSample> load_plg_samples(const DatasetManifest& manifest,
                                          const TrainingConfig& config) {
  std::string root = effective_data_root(config.data_root);
  std::vector<TrainSample> samples;
  for (const ManifestEntry* e : entries_for_split(manifest, "train")) {
    TrainSample s;
    s.image = load_image(resolve_data_path(e->image_path, root), config.slice_size);
    s.sample_id = e->image_path;
    if (e->precisely_labeled) {
      s.label = load_mask(resolve_data_path(e->label_path, root), config.slice_size);
      s.has_label = true;
      s.precise = true;
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<TrainSample> load_pld_samples(const DatasetManifest& manifest,
                                          const std::vector<PseudoLabelRecord>& records,
                                          const TrainingConfig& config) {
  std::string root = effective_data_root(config.data_root);
  std::map<std::string, const PseudoLabelRecord*> by_id;
  for (const PseudoLabelRecord& r : records) by_id[r.source_id] = &r;
  std::vector<TrainSample> samples;
  for (const ManifestEntry* e : entries_for_split(manifest, "train")) {
    auto it = by_id.find(e->image_path);
    if (it == by_id.end())
      throw std::runtime_error("no pseudo-label record for '" + e->image_path + "'");
    TrainSample s;
    s.image = load_image(resolve_data_path(e->image_path, root), config.slice_size);
    s.sample_id = e->image_path;
    s.label = it->second->y_corrected;
    s.has_label = true;
    s.precise = e->precisely_labeled;
    s.s = it->second->confidence;
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<int> precise_indices(const std::vector<TrainSample>& samples) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].precise) idx.push_back(static_cast<int>(i));
  return idx;
}

// Shuffled sample order chunked into batches. With oversampling on, any
// batch without a precisely labeled sample gets one spliced into a random
// slot; both draws come from a stream keyed on (epoch, batch) so resumed
// runs reproduce them.
std::vector<std::vector<int>> make_batches(std::size_t n, const std::vector<int>& labeled_idx,
                                           const std::vector<TrainSample>& samples,
                                           int epoch, const TrainingConfig& config) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng = derive_rng(config.seed, "epoch-order", static_cast<std::uint64_t>(epoch));
  shuffle_rng.shuffle(order);

  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < n; start += config.batch_size) {
    std::size_t stop = std::min(n, start + config.batch_size);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  if (config.oversample_labeled && !labeled_idx.empty()) {
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<int>& batch = batches[b];
      bool has_precise = std::any_of(batch.begin(), batch.end(),
                                     [&](int i) { return samples[i].precise; });
      if (has_precise) continue;
      Rng r = derive_rng(config.seed, "oversample", static_cast<std::uint64_t>(epoch), b);
      std::size_t slot = r.uniform_index(batch.size());
      batch[slot] = labeled_idx[r.uniform_index(labeled_idx.size())];
    }
  }
  return batches;
}

// Forward, per-sample objective, gradients back to the parameter vector.
// w.grad must be zeroed by the caller.
LossBreakdown compute_sample(const DualDecoderNet& net, const std::vector<double>& params,
                             const TrainSample& sample, int epoch, Stage stage,
                             const TrainingConfig& config, SampleWork& w) {
  const ImageSlice* img = &sample.image;
  const BinaryMask* lab = sample.has_label ? &sample.label : nullptr;
  ImageSlice aug_img;
  BinaryMask aug_lab;
  if (config.use_augmentation) {
    AugmentationSpec spec = draw_spec(config.seed, sample.sample_id, epoch, config);
    apply_geometric(spec, sample.image, lab, aug_img, lab ? &aug_lab : nullptr);
    if (config.use_contrast_adjust) aug_img = apply_contrast(spec, aug_img, config.contrast_mode);
    img = &aug_img;
    if (lab) lab = &aug_lab;
  }

  DecoderOutputs out = net.forward(params, *img, w.ws);
  const std::size_t n = out.p_a.size();
  w.dpa.assign(n, 0.0);
  w.dpb.assign(n, 0.0);

  // Cross-decoder targets are each decoder's own thresholded prediction;
  // gradients flow only through the probabilities.
  BinaryMask pl_a = binarize(out.p_a, config.prob_threshold);
  BinaryMask pl_b = binarize(out.p_b, config.prob_threshold);
  double l_c = consistency_loss(out.p_a, out.p_b, pl_a, pl_b, config.loss_norm);

  LossBreakdown bd;
  if (stage == Stage::Plg) {
    bd.l_c = l_c;
    bd.seg_active = sample.has_label;
    if (sample.has_label) {
      bd.l_seg = dice_loss(out.p_a, *lab) + dice_loss(out.p_b, *lab);
      dice_loss_grad(out.p_a, *lab, 1.0, w.dpa);
      dice_loss_grad(out.p_b, *lab, 1.0, w.dpb);
    }
    bd.total = bd.l_seg + config.consistency_weight * bd.l_c;
  } else {
    double l_seg = dice_loss(out.p_a, *lab) + dice_loss(out.p_b, *lab);
    double l_r = noise_robust_loss(out.p_a, out.p_b, *lab, config.loss_norm);
    bd = combined_pld_loss(l_seg, l_c, l_r, sample.s, config);
    double seg_w = bd.seg_active ? (config.use_confidence_gate ? sample.s : 1.0) : 0.0;
    if (seg_w > 0.0) {
      dice_loss_grad(out.p_a, *lab, seg_w, w.dpa);
      dice_loss_grad(out.p_b, *lab, seg_w, w.dpb);
    }
    if (config.use_noise_robust)
      noise_robust_loss_grads(out.p_a, out.p_b, *lab, 1.0, w.dpa, w.dpb, config.loss_norm);
  }
  consistency_loss_grads(out.p_a, out.p_b, pl_a, pl_b, config.consistency_weight, w.dpa,
                         w.dpb, config.loss_norm);

  w.dla.resize(n);
  w.dlb.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double pa = out.p_a.pixels[i], pb = out.p_b.pixels[i];
    w.dla[i] = w.dpa[i] * pa * (1.0 - pa);
    w.dlb[i] = w.dpb[i] * pb * (1.0 - pb);
  }
  net.backward(params, w.ws, w.dla, w.dlb, w.grad);
  return bd;
}

std::string metrics_text(const std::vector<StepMetrics>& steps) {
  std::ostringstream os;
  os << "step\tepoch\tl_seg\tl_c\tl_r\ttotal\ts\tseg_active\n";
  char buf[224];
  for (const StepMetrics& m : steps) {
    std::snprintf(buf, sizeof(buf), "%llu\t%d\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\t%.10g\n",
                  static_cast<unsigned long long>(m.step), m.epoch, m.l_seg, m.l_c, m.l_r,
                  m.total, m.s, m.seg_active);
    os << buf;
  }
  return os.str();
}

void save_stage_checkpoint(const std::string& path, const std::string& stage_name,
                           const TrainingConfig& config, const std::vector<double>& params,
                           int epochs_completed, const Adam* adam) {
  Checkpoint ck;
  ck.header.stage = stage_name;
  ck.header.depth = config.depth;
  ck.header.base_channels = config.base_channels;
  ck.header.epochs_completed = epochs_completed;
  ck.header.adam_step = adam ? static_cast<std::int64_t>(adam->steps_taken()) : 0;
  ck.header.has_optimizer = adam != nullptr;
  ck.header.config_entries = config_to_entries(config);
  ck.params = params;
  if (adam) {
    ck.adam_m = adam->m();
    ck.adam_v = adam->v();
  }
  save_checkpoint(path, ck);
}

// Loads a resume checkpoint and restores optimizer state. Returns the epoch
// to continue from.
int restore_for_resume(const std::string& path, const std::string& stage_name,
                       const TrainingConfig& config, std::vector<double>& params,
                       Adam& adam) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.header.stage != stage_name)
    throw std::runtime_error("checkpoint stage mismatch: expected " + stage_name + ", found " +
                             ck.header.stage);
  if (ck.header.depth != config.depth || ck.header.base_channels != config.base_channels)
    throw std::runtime_error("checkpoint architecture mismatch");
  if (!ck.header.has_optimizer)
    throw std::runtime_error("checkpoint lacks optimizer state, cannot resume");
  params = std::move(ck.params);
  adam.restore(std::move(ck.adam_m), std::move(ck.adam_v),
               static_cast<std::uint64_t>(ck.header.adam_step));
  return ck.header.epochs_completed;
}

TrainResult train_loop(const DualDecoderNet& net, const std::vector<TrainSample>& samples,
                       Stage stage, const std::string& stage_name,
                       const TrainingConfig& config, const std::string& run_dir,
                       std::vector<double> params, Adam& adam, int start_epoch,
                       int total_epochs) {
  const std::vector<int> labeled_idx = precise_indices(samples);
  const std::size_t n_params = net.param_count();
  const std::string metrics_path = run_dir + "/metrics.tsv";
  const std::string latest_path = run_dir + "/checkpoints/" + stage_name + "_latest.ck";
  const std::string final_path = run_dir + "/checkpoints/" + stage_name + "_final.ck";

  std::vector<SampleWork> works(static_cast<std::size_t>(config.batch_size));
  for (SampleWork& w : works) {
    w.ws = net.make_workspace();
    w.grad.assign(n_params, 0.0);
  }
  std::vector<double> batch_grad(n_params);

  TrainResult result;
  for (int epoch = start_epoch; epoch < total_epochs; ++epoch) {
    double lr_scale = lr_schedule_scale(config.lr_schedule, epoch, total_epochs);
    std::vector<std::vector<int>> batches =
        make_batches(samples.size(), labeled_idx, samples, epoch, config);
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const std::vector<int>& batch = batches[b];
      std::vector<LossBreakdown> bds(batch.size());

      int workers = std::max(1, config.worker_threads);
      workers = std::min<int>(workers, static_cast<int>(batch.size()));
      auto run_slot = [&](std::size_t k) {
        works[k].grad.assign(n_params, 0.0);
        bds[k] = compute_sample(net, params, samples[static_cast<std::size_t>(batch[k])],
                                epoch, stage, config, works[k]);
      };
      if (workers <= 1) {
        for (std::size_t k = 0; k < batch.size(); ++k) run_slot(k);
      } else {
        std::exception_ptr first_error;
        std::mutex error_mutex;
        std::vector<std::thread> threads;
        for (int t = 0; t < workers; ++t) {
          threads.emplace_back([&, t]() {
            try {
              for (std::size_t k = static_cast<std::size_t>(t); k < batch.size();
                   k += static_cast<std::size_t>(workers))
                run_slot(k);
            } catch (...) {
              std::lock_guard<std::mutex> lock(error_mutex);
              if (!first_error) first_error = std::current_exception();
            }
          });
        }
        for (std::thread& th : threads) th.join();
        if (first_error) std::rethrow_exception(first_error);
      }

      // Slot-ordered reduction keeps the sum independent of scheduling.
      std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
      for (std::size_t k = 0; k < batch.size(); ++k)
        for (std::size_t i = 0; i < n_params; ++i) batch_grad[i] += works[k].grad[i];
      double inv = 1.0 / static_cast<double>(batch.size());
      for (double& g : batch_grad) g *= inv;
      adam.step(params, batch_grad, lr_scale);

      StepMetrics m;
      m.step = adam.steps_taken();
      m.epoch = epoch;
      m.l_seg = m.l_c = m.l_r = m.total = m.s = m.seg_active = 0.0;
      for (const LossBreakdown& bd : bds) {
        m.l_seg += bd.l_seg;
        m.l_c += bd.l_c;
        m.l_r += bd.l_r;
        m.total += bd.total;
        m.seg_active += bd.seg_active ? 1.0 : 0.0;
      }
      if (stage == Stage::Pld)
        for (std::size_t k = 0; k < batch.size(); ++k)
          m.s += samples[static_cast<std::size_t>(batch[k])].s;
      else
        m.s = static_cast<double>(batch.size());
      m.l_seg *= inv;
      m.l_c *= inv;
      m.l_r *= inv;
      m.total *= inv;
      m.s *= inv;
      m.seg_active *= inv;
      result.steps.push_back(m);
      epoch_total += m.total;
    }
    result.epoch_mean_total.push_back(batches.empty() ? 0.0
                                                      : epoch_total / batches.size());
    result.epochs_completed = epoch + 1;
    save_stage_checkpoint(latest_path, stage_name, config, params, epoch + 1, &adam);
    atomic_write_file(metrics_path, metrics_text(result.steps));
  }

  if (result.epochs_completed == 0) result.epochs_completed = start_epoch;
  atomic_write_file(metrics_path, metrics_text(result.steps));
  save_stage_checkpoint(final_path, stage_name, config, params, result.epochs_completed,
                        nullptr);
  result.params = std::move(params);
  result.final_checkpoint = final_path;
  return result;
}

DatasetManifest load_and_check_manifest(const std::string& path) {
  DatasetManifest manifest = load_manifest(path);
  ValidationResult check = validate_manifest(manifest);
  if (!check.ok())
    throw std::runtime_error("invalid manifest '" + path + "': " + check.violations.front());
  return manifest;
}

std::string slug(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)))
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!out.empty() && out.back() != '-')
      out += '-';
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "variant" : out;
}

}  // namespace

void write_run_provenance(const TrainingConfig& config, const std::string& manifest_path,
                          const std::string& run_dir) {
  atomic_write_file(run_dir + "/config.txt", config_to_text(config));
  nlohmann::json j;
  j["library_version"] = kVersion;
  j["manifest_path"] = manifest_path;
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(hash_file(manifest_path)));
  j["manifest_hash"] = hash;
  atomic_write_file(run_dir + "/provenance.json", j.dump(2) + "\n");
}

TrainResult plg_train(const TrainingConfig& config, const std::string& manifest_path,
                      const std::string& run_dir, const std::string& resume_from) {
  validate_config(config);
  DatasetManifest manifest = load_and_check_manifest(manifest_path);
  std::vector<TrainSample> samples = load_plg_samples(manifest, config);
  if (precise_indices(samples).empty())
    throw std::runtime_error("PLG requires precise labels");
  write_run_provenance(config, manifest_path, run_dir);

  DualDecoderNet net(ArchConfig{config.depth, config.base_channels});
  Adam adam(net.param_count(), config.learning_rate, config.beta1, config.beta2);
  std::vector<double> params;
  int start_epoch = 0;
  if (!resume_from.empty())
    start_epoch = restore_for_resume(resume_from, "plg", config, params, adam);
  else
    params = net.init_params(derive_key(config.seed, "plg-init"));
  return train_loop(net, samples, Stage::Plg, "plg", config, run_dir, std::move(params),
                    adam, start_epoch, config.plg_epochs);
}

std::vector<PseudoLabelRecord> pseudo_generate(const TrainingConfig& config,
                                               const std::string& manifest_path,
                                               const std::string& plg_checkpoint,
                                               const std::string& records_dir) {
  validate_config(config);
  DatasetManifest manifest = load_and_check_manifest(manifest_path);
  Checkpoint ck = load_checkpoint(plg_checkpoint);
  DualDecoderNet net(ArchConfig{ck.header.depth, ck.header.base_channels});
  std::vector<PseudoLabelRecord> records = build_records(net, ck.params, manifest, config);
  save_records(records_dir, records);
  return records;
}

TrainResult pld_train(const TrainingConfig& config, const std::string& manifest_path,
                      const std::string& records_dir, const std::string& run_dir,
                      const std::string& init_checkpoint, const std::string& resume_from) {
  validate_config(config);
  DatasetManifest manifest = load_and_check_manifest(manifest_path);
  std::vector<PseudoLabelRecord> records =
      load_records(records_dir, config.confidence_threshold, config.slice_size);
  if (records.empty()) throw std::runtime_error("PLD requires pseudo-label records");
  std::vector<TrainSample> samples = load_pld_samples(manifest, records, config);
  write_run_provenance(config, manifest_path, run_dir);

  DualDecoderNet net(ArchConfig{config.depth, config.base_channels});
  Adam adam(net.param_count(), config.learning_rate, config.beta1, config.beta2);
  std::vector<double> params;
  int start_epoch = 0;
  if (!resume_from.empty()) {
    start_epoch = restore_for_resume(resume_from, "pld", config, params, adam);
  } else if (!init_checkpoint.empty()) {
    Checkpoint warm = load_checkpoint(init_checkpoint);
    if (warm.header.depth != config.depth ||
        warm.header.base_channels != config.base_channels)
      throw std::runtime_error("checkpoint architecture mismatch");
    params = std::move(warm.params);
  } else if (!config.pld_fresh_init) {
    throw std::runtime_error("warm start requested but no checkpoint given");
  } else {
    params = net.init_params(derive_key(config.seed, "pld-init"));
  }
  return train_loop(net, samples, Stage::Pld, "pld", config, run_dir, std::move(params),
                    adam, start_epoch, config.pld_epochs);
}

BinaryMask predict_mask(const DualDecoderNet& net, const std::vector<double>& params,
                        const ImageSlice& image, const TrainingConfig& config,
                        Workspace& ws) {
  DecoderOutputs out = net.forward(params, image, ws);
  ProbabilityMap fused = ensemble_probability(out, config.pseudo_mode);
  return binarize(fused, config.prob_threshold);
}

void predict(const TrainingConfig& config, const std::string& checkpoint_path,
             const std::vector<std::string>& image_paths, const std::string& out_dir) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  DualDecoderNet net(ArchConfig{ck.header.depth, ck.header.base_channels});
  Workspace ws = net.make_workspace();
  fs::create_directories(out_dir);
  for (const std::string& path : image_paths) {
    ImageSlice image = load_image(path);
    BinaryMask mask = predict_mask(net, ck.params, image, config, ws);
    std::string stem = fs::path(path).stem().string();
    save_mask((fs::path(out_dir) / (stem + "_mask.pgm")).string(), mask);
  }
}

EvaluationReport evaluate_checkpoint(const TrainingConfig& config,
                                     const std::string& manifest_path,
                                     const std::string& checkpoint_path,
                                     const std::string& out_dir,
                                     const std::string& method_label) {
  validate_config(config);
  DatasetManifest manifest = load_and_check_manifest(manifest_path);
  Checkpoint ck = load_checkpoint(checkpoint_path);
  DualDecoderNet net(ArchConfig{ck.header.depth, ck.header.base_channels});
  EvaluationReport report = evaluate_model(net, ck.params, manifest, config, method_label);
  write_report(out_dir, report);
  if (config.save_overlays) {
    std::string root = effective_data_root(config.data_root);
    Workspace ws = net.make_workspace();
    for (const ManifestEntry* e : entries_for_split(manifest, "test")) {
      if (e->label_path.empty()) continue;
      try {
        ImageSlice image = load_image(resolve_data_path(e->image_path, root), config.slice_size);
        BinaryMask gt = load_mask(resolve_data_path(e->label_path, root), config.slice_size);
        BinaryMask pred = predict_mask(net, ck.params, image, config, ws);
        std::string stem = fs::path(e->image_path).stem().string();
        save_overlay((fs::path(out_dir) / "overlays" / (stem + ".ppm")).string(), image,
                     pred, gt);
      } catch (const std::exception& ex) {
        std::fprintf(stderr, "warning: overlay for '%s' failed: %s\n", e->image_path.c_str(),
                     ex.what());
      }
    }
  }
  return report;
}

std::vector<AblationRow> run_ablation(const TrainingConfig& base_config,
                                      const std::string& manifest_path,
                                      const std::vector<std::string>& axes,
                                      const std::vector<std::uint64_t>& seeds,
                                      const std::string& out_dir) {
  struct AxisDef {
    const char* token;
    const char* name;
    bool TrainingConfig::*flag;
  };
  static constexpr AxisDef kAxisDefs[] = {
      {"ce", "CE", &TrainingConfig::use_confidence_gate},
      {"lr", "L_r", &TrainingConfig::use_noise_robust},
      {"aug", "aug", &TrainingConfig::use_augmentation},
      {"ca", "contrast-adjust", &TrainingConfig::use_contrast_adjust},
  };
  if (axes.empty()) throw std::runtime_error("no ablation axes given");
  if (seeds.empty()) throw std::runtime_error("no seeds given");
  std::vector<const AxisDef*> active;
  for (const AxisDef& def : kAxisDefs) {
    auto hits = std::count(axes.begin(), axes.end(), def.token);
    if (hits > 1) throw std::runtime_error(std::string("duplicate ablation axis: ") + def.token);
    if (hits == 1) active.push_back(&def);
  }
  if (active.size() != axes.size()) {
    for (const std::string& token : axes) {
      bool known = std::any_of(std::begin(kAxisDefs), std::end(kAxisDefs),
                               [&](const AxisDef& d) { return token == d.token; });
      if (!known) throw std::runtime_error("unknown ablation axis: " + token);
    }
  }

  validate_config(base_config);
  write_run_provenance(base_config, manifest_path, out_dir);

  // Variant list, all-on first. Bit i of the combo controls active[i].
  struct Variant {
    std::string label;
    TrainingConfig overrides_applied(const TrainingConfig& base,
                                     const std::vector<const AxisDef*>& defs,
                                     unsigned bits) const {
      TrainingConfig cfg = base;
      for (std::size_t i = 0; i < defs.size(); ++i)
        cfg.*(defs[i]->flag) = ((bits >> i) & 1u) != 0;
      return cfg;
    }
    unsigned bits = 0;
  };
  std::vector<Variant> variants;
  unsigned all_on = (1u << active.size()) - 1u;
  for (unsigned combo = all_on + 1; combo-- > 0;) {
    Variant v;
    v.bits = combo;
    std::string label;
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (!label.empty()) label += " + ";
      if (!((combo >> i) & 1u)) label += "w/o ";
      label += active[i]->name;
    }
    v.label = label;
    variants.push_back(std::move(v));
  }

  std::vector<AblationRow> rows;
  std::vector<std::string> label_order;
  label_order.push_back("PLG only");
  for (const Variant& v : variants) label_order.push_back(v.label);

  for (std::uint64_t seed : seeds) {
    TrainingConfig seed_cfg = base_config;
    seed_cfg.seed = seed;
    std::string seed_dir = out_dir + "/seed_" + std::to_string(seed);

    // Stage 1 depends only on the augmentation flags: one run per group.
    struct PlgRun {
      std::string checkpoint;
      std::string records;
    };
    std::map<int, PlgRun> groups;
    auto ensure_group = [&](bool aug, bool ca) -> PlgRun& {
      int key = (aug ? 2 : 0) | (ca ? 1 : 0);
      auto it = groups.find(key);
      if (it != groups.end()) return it->second;
      TrainingConfig cfg = seed_cfg;
      cfg.use_augmentation = aug;
      cfg.use_contrast_adjust = ca;
      std::string dir = seed_dir + "/plg_" + (aug ? "aug" : "noaug") + (ca ? "_ca" : "_noca");
      TrainResult tr = plg_train(cfg, manifest_path, dir);
      PlgRun run;
      run.checkpoint = tr.final_checkpoint;
      run.records = dir + "/records";
      pseudo_generate(cfg, manifest_path, run.checkpoint, run.records);
      return groups.emplace(key, std::move(run)).first->second;
    };

    const PlgRun& baseline =
        ensure_group(seed_cfg.use_augmentation, seed_cfg.use_contrast_adjust);
    EvaluationReport plg_report = evaluate_checkpoint(
        seed_cfg, manifest_path, baseline.checkpoint, seed_dir + "/plg_eval", "PLG only");
    rows.push_back({"PLG only", std::to_string(seed), plg_report.mean_dice_tm,
                    plg_report.mean_dice_imf});

    for (const Variant& v : variants) {
      TrainingConfig cfg = v.overrides_applied(seed_cfg, active, v.bits);
      const PlgRun& group = ensure_group(cfg.use_augmentation, cfg.use_contrast_adjust);
      std::string vdir = seed_dir + "/" + slug(v.label);
      TrainResult tr = pld_train(cfg, manifest_path, group.records, vdir);
      EvaluationReport rep =
          evaluate_checkpoint(cfg, manifest_path, tr.final_checkpoint, vdir + "/eval", v.label);
      rows.push_back({v.label, std::to_string(seed), rep.mean_dice_tm, rep.mean_dice_imf});
    }
  }

  for (const std::string& label : label_order) {
    double tm = 0.0, imf = 0.0;
    int n = 0;
    for (const AblationRow& r : rows) {
      if (r.label != label || r.seed == "mean") continue;
      tm += r.dice_tm;
      imf += r.dice_imf;
      ++n;
    }
    if (n > 0) rows.push_back({label, "mean", tm / n, imf / n});
  }

  std::ostringstream table;
  table << "label\tseed\tdice_tm\tdice_imf\n";
  char buf[160];
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%s\t%.6f\t%.6f\n", r.label.c_str(), r.seed.c_str(),
                  r.dice_tm, r.dice_imf);
    table << buf;
  }
  atomic_write_file(out_dir + "/ablation.tsv", table.str());
  return rows;
}

}  // namespace imfseg

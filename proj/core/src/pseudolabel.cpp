#include "imfseg/pseudolabel.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "imfseg/rng.hpp"

namespace fs = std::filesystem;

namespace imfseg {

namespace {

// Filesystem-safe name for a record keyed by manifest image path. The hash
// suffix keeps distinct paths distinct after sanitization.
std::string slug(const std::string& source_id) {
  std::string s;
  s.reserve(source_id.size() + 9);
  for (char c : source_id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '.' || c == '-' || c == '_';
    s.push_back(ok ? c : '_');
  }
  char hex[12];
  std::snprintf(hex, sizeof(hex), "-%08x",
                static_cast<unsigned>(fnv1a64(source_id) & 0xffffffffu));
  return s + hex;
}

std::string fmt_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

ProbabilityMap ensemble_probability(const DecoderOutputs& outputs, PseudoMode mode) {
  ProbabilityMap out = ProbabilityMap::zeros(outputs.p_a.height, outputs.p_a.width);
  if (mode == PseudoMode::LogitMean) {
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] =
          sigmoid(0.5 * (outputs.logits_a.values[i] + outputs.logits_b.values[i]));
  } else {
    for (std::size_t i = 0; i < out.pixels.size(); ++i)
      out.pixels[i] = 0.5 * (outputs.p_a.pixels[i] + outputs.p_b.pixels[i]);
  }
  return out;
}

BinaryMask generate_pseudo(const DualDecoderNet& net, const std::vector<double>& params,
                           const ImageSlice& image, const TrainingConfig& config,
                           Workspace& ws) {
  if (params.empty())
    throw std::runtime_error("generate_pseudo: untrained network (no parameters)");
  DecoderOutputs out = net.forward(params, image, ws);
  return binarize(ensemble_probability(out, config.pseudo_mode), config.prob_threshold);
}

BinaryMask coarse_mask(const ImageSlice& image, double low, double high) {
  if (!(low > 0.0 && low < high && high < 1.0))
    throw std::runtime_error("coarse_mask: requires 0 < low < high < 1");
  BinaryMask m = BinaryMask::zeros(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    m.pixels[i] = (image.pixels[i] > low && image.pixels[i] < high) ? 1 : 0;
  return m;
}

BinaryMask correct(const BinaryMask& y_pseudo, const BinaryMask& y_coarse) {
  if (!same_shape(y_pseudo, y_coarse)) throw std::runtime_error("correct: shape mismatch");
  BinaryMask out = BinaryMask::zeros(y_pseudo.height, y_pseudo.width);
  for (std::size_t i = 0; i < out.pixels.size(); ++i)
    out.pixels[i] = y_pseudo.pixels[i] & y_coarse.pixels[i];
  return out;
}

double confidence(const BinaryMask& y_pseudo, const BinaryMask& y_coarse) {
  if (!same_shape(y_pseudo, y_coarse)) throw std::runtime_error("confidence: shape mismatch");
  std::size_t inter = 0, sum = 0;
  for (std::size_t i = 0; i < y_pseudo.pixels.size(); ++i) {
    inter += static_cast<std::size_t>(y_pseudo.pixels[i] & y_coarse.pixels[i]);
    sum += y_pseudo.pixels[i] + y_coarse.pixels[i];
  }
  if (sum == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sum);
}

PseudoLabelRecord make_record(const std::string& source_id, BinaryMask y_pseudo,
                              BinaryMask y_coarse, double confidence_threshold) {
  PseudoLabelRecord r;
  r.source_id = source_id;
  r.y_corrected = correct(y_pseudo, y_coarse);
  r.confidence = confidence(y_pseudo, y_coarse);
  r.eligible = r.confidence >= confidence_threshold;
  r.y_pseudo = std::move(y_pseudo);
  r.y_coarse = std::move(y_coarse);
  return r;
}

std::vector<PseudoLabelRecord> build_records(const DualDecoderNet& net,
                                             const std::vector<double>& params,
                                             const DatasetManifest& manifest,
                                             const TrainingConfig& config) {
  std::string root = effective_data_root(config.data_root);
  Workspace ws = net.make_workspace();
  std::vector<PseudoLabelRecord> records;
  std::size_t attempted = 0, failed = 0;
  for (const ManifestEntry* e : entries_for_split(manifest, "train")) {
    ++attempted;
    try {
      ImageSlice image =
          load_image(resolve_data_path(e->image_path, root), config.slice_size);
      if (e->precisely_labeled) {
        // A precise label needs no correction: both inputs are the truth, so
        // the corrected mask is the truth and the gate passes (S = 1).
        BinaryMask precise =
            load_mask(resolve_data_path(e->label_path, root), config.slice_size);
        records.push_back(
            make_record(e->image_path, precise, precise, config.confidence_threshold));
        continue;
      }
      BinaryMask pseudo = generate_pseudo(net, params, image, config, ws);
      BinaryMask coarse = coarse_mask(image, config.coarse_low, config.coarse_high);
      records.push_back(make_record(e->image_path, std::move(pseudo), std::move(coarse),
                                    config.confidence_threshold));
    } catch (const std::exception& ex) {
      ++failed;
      std::fprintf(stderr, "warning: skipping '%s': %s\n", e->image_path.c_str(), ex.what());
    }
  }
  if (attempted > 0 && records.empty())
    throw std::runtime_error("build_records: every train slice failed");
  return records;
}

void save_records(const std::string& dir, const std::vector<PseudoLabelRecord>& records) {
  fs::create_directories(dir);
  std::ostringstream index;
  index << "source_id\tS\teligible\n";
  for (const auto& r : records) {
    std::string base = (fs::path(dir) / slug(r.source_id)).string();
    save_mask(base + "_pseudo.pgm", r.y_pseudo);
    save_mask(base + "_coarse.pgm", r.y_coarse);
    save_mask(base + "_corrected.pgm", r.y_corrected);
    index << r.source_id << '\t' << fmt_exact(r.confidence) << '\t' << (r.eligible ? 1 : 0)
          << '\n';
  }
  atomic_write_file((fs::path(dir) / "index.tsv").string(), index.str());
}

std::vector<PseudoLabelRecord> load_records(const std::string& dir,
                                            double confidence_threshold, int expected_size) {
  std::string index_path = (fs::path(dir) / "index.tsv").string();
  std::istringstream in(read_file(index_path));
  std::string line;
  if (!std::getline(in, line) || line != "source_id\tS\teligible")
    throw std::runtime_error("record store '" + dir + "': unexpected index header");
  std::vector<PseudoLabelRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t t1 = line.find('\t');
    std::size_t t2 = line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw std::runtime_error("record store '" + dir + "': malformed index line");
    PseudoLabelRecord r;
    r.source_id = line.substr(0, t1);
    r.confidence = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
    std::string elig = line.substr(t2 + 1);
    if (elig != "0" && elig != "1")
      throw std::runtime_error("record store '" + dir + "': eligible must be 0/1");
    r.eligible = elig == "1";
    std::string base = (fs::path(dir) / slug(r.source_id)).string();
    r.y_pseudo = load_mask(base + "_pseudo.pgm", expected_size);
    r.y_coarse = load_mask(base + "_coarse.pgm", expected_size);
    r.y_corrected = load_mask(base + "_corrected.pgm", expected_size);
    ValidationResult check = validate(r, confidence_threshold);
    if (!check.ok())
      throw std::runtime_error("record store '" + dir + "': record '" + r.source_id +
                               "' invalid: " + check.violations.front());
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace imfseg

#include "imfseg/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "imfseg/pseudolabel.hpp"

namespace fs = std::filesystem;

namespace imfseg {

namespace {

struct Offsets {
  std::vector<std::pair<int, int>> v;  // (dr, dc) relative to the anchor
};

Offsets se_offsets(const BinaryMask& se) {
  if (se.height % 2 == 0 || se.width % 2 == 0)
    throw std::runtime_error("morphology: structuring element sides must be odd");
  Offsets off;
  int ar = se.height / 2, ac = se.width / 2;
  for (int r = 0; r < se.height; ++r)
    for (int c = 0; c < se.width; ++c)
      if (se.at(r, c)) off.v.push_back({r - ar, c - ac});
  if (off.v.empty()) throw std::runtime_error("morphology: empty structuring element");
  return off;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

bool on_boundary(const BinaryMask& m, int r, int c) {
  if (!m.at(r, c)) return false;
  if (r == 0 || c == 0 || r == m.height - 1 || c == m.width - 1) return true;
  return !m.at(r - 1, c) || !m.at(r + 1, c) || !m.at(r, c - 1) || !m.at(r, c + 1);
}

}  // namespace

double dice_similarity(const BinaryMask& a, const BinaryMask& b) {
  if (!same_shape(a, b)) throw std::runtime_error("dice_similarity: shape mismatch");
  std::size_t inter = 0, total = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    inter += static_cast<std::size_t>(a.pixels[i] & b.pixels[i]);
    total += a.pixels[i] + b.pixels[i];
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

BinaryMask make_disk(int radius) {
  if (radius < 1) throw std::runtime_error("make_disk: radius must be >= 1");
  int side = 2 * radius + 1;
  BinaryMask se = BinaryMask::zeros(side, side);
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c) {
      int dr = r - radius, dc = c - radius;
      if (dr * dr + dc * dc <= radius * radius) se.at(r, c) = 1;
    }
  return se;
}

BinaryMask dilate(const BinaryMask& m, const BinaryMask& se) {
  Offsets off = se_offsets(se);
  BinaryMask out = BinaryMask::zeros(m.height, m.width);
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      for (auto [dr, dc] : off.v) {
        int rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= m.height || cc >= m.width) continue;
        if (m.at(rr, cc)) {
          out.at(r, c) = 1;
          break;
        }
      }
    }
  }
  return out;
}

BinaryMask erode(const BinaryMask& m, const BinaryMask& se) {
  Offsets off = se_offsets(se);
  BinaryMask out = BinaryMask::zeros(m.height, m.width);
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      bool all = true;
      for (auto [dr, dc] : off.v) {
        int rr = r + dr, cc = c + dc;
        if (rr < 0 || cc < 0 || rr >= m.height || cc >= m.width) continue;
        if (!m.at(rr, cc)) {
          all = false;
          break;
        }
      }
      out.at(r, c) = all ? 1 : 0;
    }
  }
  return out;
}

BinaryMask binary_closing(const BinaryMask& m, const BinaryMask& se) {
  return erode(dilate(m, se), se);
}

BinaryMask extract_imf(const BinaryMask& y, int struct_radius) {
  if (struct_radius < 1) throw std::runtime_error("extract_imf: radius must be >= 1");
  BinaryMask closed = binary_closing(y, make_disk(struct_radius));
  BinaryMask imf = BinaryMask::zeros(y.height, y.width);
  for (std::size_t i = 0; i < y.pixels.size(); ++i)
    imf.pixels[i] = closed.pixels[i] & static_cast<std::uint8_t>(~y.pixels[i] & 1);
  return imf;
}

int auto_struct_radius(int slice_size, int configured) {
  if (configured > 0) return configured;
  return std::max(1, static_cast<int>(std::lround(5.0 * slice_size / 256.0)));
}

SliceScore score_slice(const std::string& source_id, const BinaryMask& prediction,
                       const BinaryMask& ground_truth, int struct_radius) {
  SliceScore s;
  s.source_id = source_id;
  s.dice_tm = dice_similarity(prediction, ground_truth);
  s.dice_imf = dice_similarity(extract_imf(prediction, struct_radius),
                               extract_imf(ground_truth, struct_radius));
  return s;
}

EvaluationReport fold_scores(const std::string& method_label, std::vector<SliceScore> slices,
                             int skipped) {
  EvaluationReport rep;
  rep.method_label = method_label;
  rep.skipped = skipped;
  double tm = 0.0, imf = 0.0;
  for (const auto& s : slices) {
    tm += s.dice_tm;
    imf += s.dice_imf;
  }
  if (!slices.empty()) {
    rep.mean_dice_tm = tm / static_cast<double>(slices.size());
    rep.mean_dice_imf = imf / static_cast<double>(slices.size());
  }
  rep.slices = std::move(slices);
  return rep;
}

EvaluationReport evaluate_model(const DualDecoderNet& net, const std::vector<double>& params,
                                const DatasetManifest& manifest, const TrainingConfig& config,
                                const std::string& method_label) {
  std::string root = effective_data_root(config.data_root);
  int radius = auto_struct_radius(config.slice_size, config.struct_radius);
  Workspace ws = net.make_workspace();
  std::vector<SliceScore> slices;
  int skipped = 0;
  for (const ManifestEntry* e : entries_for_split(manifest, "test")) {
    if (e->label_path.empty()) {
      ++skipped;
      std::fprintf(stderr, "warning: no ground truth for '%s', skipping\n",
                   e->image_path.c_str());
      continue;
    }
    try {
      ImageSlice image = load_image(resolve_data_path(e->image_path, root), config.slice_size);
      BinaryMask gt = load_mask(resolve_data_path(e->label_path, root), config.slice_size);
      DecoderOutputs out = net.forward(params, image, ws);
      BinaryMask pred =
          binarize(ensemble_probability(out, config.pseudo_mode), config.prob_threshold);
      slices.push_back(score_slice(e->image_path, pred, gt, radius));
    } catch (const std::exception& ex) {
      ++skipped;
      std::fprintf(stderr, "warning: skipping '%s': %s\n", e->image_path.c_str(), ex.what());
    }
  }
  if (slices.empty()) throw std::runtime_error("evaluate_model: no test slice could be scored");
  return fold_scores(method_label, std::move(slices), skipped);
}

void write_report(const std::string& dir, const EvaluationReport& report) {
  fs::create_directories(dir);
  std::ostringstream head;
  head << "method\tdice_tm\tdice_imf\tslices\tskipped\n"
       << report.method_label << '\t' << fmt(report.mean_dice_tm) << '\t'
       << fmt(report.mean_dice_imf) << '\t' << report.slices.size() << '\t' << report.skipped
       << '\n';
  atomic_write_file((fs::path(dir) / "report.tsv").string(), head.str());

  std::ostringstream rows;
  rows << "source_id\tdice_tm\tdice_imf\n";
  for (const auto& s : report.slices)
    rows << s.source_id << '\t' << fmt(s.dice_tm) << '\t' << fmt(s.dice_imf) << '\n';
  atomic_write_file((fs::path(dir) / "report_slices.tsv").string(), rows.str());
}

void append_report_row(const std::string& path, const EvaluationReport& report) {
  std::string existing;
  if (fs::exists(path)) existing = read_file(path);
  if (existing.empty()) existing = "method\tdice_tm\tdice_imf\tslices\tskipped\n";
  std::ostringstream row;
  row << report.method_label << '\t' << fmt(report.mean_dice_tm) << '\t'
      << fmt(report.mean_dice_imf) << '\t' << report.slices.size() << '\t' << report.skipped
      << '\n';
  atomic_write_file(path, existing + row.str());
}

void save_overlay(const std::string& path, const ImageSlice& image, const BinaryMask& pred,
                  const BinaryMask& gt) {
  if (!same_shape(image, pred) || !same_shape(pred, gt))
    throw std::runtime_error("save_overlay: shape mismatch");
  std::string bytes = "P6\n" + std::to_string(image.width) + " " +
                      std::to_string(image.height) + "\n255\n";
  bytes.reserve(bytes.size() + image.pixels.size() * 3);
  for (int r = 0; r < image.height; ++r) {
    for (int c = 0; c < image.width; ++c) {
      auto g = static_cast<unsigned char>(
          std::lround(std::clamp(image.at(r, c), 0.0, 1.0) * 255.0));
      unsigned char rgb[3] = {g, g, g};
      if (on_boundary(pred, r, c)) {
        rgb[0] = 255;
        rgb[1] = rgb[2] = 0;
      } else if (on_boundary(gt, r, c)) {
        rgb[1] = 255;
        rgb[0] = rgb[2] = 0;
      }
      bytes.append(reinterpret_cast<char*>(rgb), 3);
    }
  }
  atomic_write_file(path, bytes);
}

}  // namespace imfseg

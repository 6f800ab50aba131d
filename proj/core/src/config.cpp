#include "imfseg/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace imfseg {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& expected) {
  throw std::runtime_error("config: invalid value '" + value + "' for key '" +
                           key + "' (expected " + expected + ")");
}

struct KeyHandler {
  std::string name;
  std::function<void(TrainingConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainingConfig&)> get;
};

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) bad_value(key, v, "integer");
    return x;
  } catch (const std::invalid_argument&) {
    bad_value(key, v, "integer");
  } catch (const std::out_of_range&) {
    bad_value(key, v, "integer");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) bad_value(key, v, "unsigned integer");
    return static_cast<std::uint64_t>(x);
  } catch (const std::invalid_argument&) {
    bad_value(key, v, "unsigned integer");
  } catch (const std::out_of_range&) {
    bad_value(key, v, "unsigned integer");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size() || !std::isfinite(x)) bad_value(key, v, "number");
    return x;
  } catch (const std::invalid_argument&) {
    bad_value(key, v, "number");
  } catch (const std::out_of_range&) {
    bad_value(key, v, "number");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "boolean (true/false)");
}

#define INT_KEY(key, field) \
  {#key, [](TrainingConfig& c, const std::string& k, const std::string& v) { c.field = parse_int(k, v); }, \
   [](const TrainingConfig& c) { return std::to_string(c.field); }}
#define U64_KEY(key, field) \
  {#key, [](TrainingConfig& c, const std::string& k, const std::string& v) { c.field = parse_u64(k, v); }, \
   [](const TrainingConfig& c) { return std::to_string(c.field); }}
#define DBL_KEY(key, field) \
  {#key, [](TrainingConfig& c, const std::string& k, const std::string& v) { c.field = parse_double(k, v); }, \
   [](const TrainingConfig& c) { return fmt_double(c.field); }}
#define BOOL_KEY(key, field) \
  {#key, [](TrainingConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }, \
   [](const TrainingConfig& c) { return c.field ? std::string("true") : std::string("false"); }}
#define STR_KEY(key, field) \
  {#key, [](TrainingConfig& c, const std::string&, const std::string& v) { c.field = v; }, \
   [](const TrainingConfig& c) { return c.field; }}

template <typename Enum>
KeyHandler enum_key(std::string name, Enum TrainingConfig::* field,
                    std::vector<std::pair<std::string, Enum>> options) {
  auto set = [field, options](TrainingConfig& c, const std::string& k,
                              const std::string& v) {
    for (const auto& [s, e] : options) {
      if (s == v) {
        c.*field = e;
        return;
      }
    }
    std::string expected = "one of:";
    for (const auto& [s, e] : options) expected += " " + s;
    bad_value(k, v, expected);
  };
  auto get = [field, options](const TrainingConfig& c) {
    for (const auto& [s, e] : options)
      if (c.*field == e) return s;
    return std::string("?");
  };
  return {std::move(name), std::move(set), std::move(get)};
}

const std::vector<KeyHandler>& schema() {
  static const std::vector<KeyHandler> s = {
      INT_KEY(slice_size, slice_size),
      DBL_KEY(labeled_fraction, labeled_fraction),
      enum_key<NormMode>("norm_mode", &TrainingConfig::norm_mode,
                         {{"minmax", NormMode::MinMax}, {"percentile", NormMode::Percentile}}),
      DBL_KEY(percentile_low, percentile_low),
      DBL_KEY(percentile_high, percentile_high),
      STR_KEY(data_root, data_root),
      INT_KEY(plg_epochs, plg_epochs),
      INT_KEY(pld_epochs, pld_epochs),
      INT_KEY(batch_size, batch_size),
      U64_KEY(seed, seed),
      DBL_KEY(learning_rate, learning_rate),
      DBL_KEY(beta1, beta1),
      DBL_KEY(beta2, beta2),
      enum_key<LrSchedule>("lr_schedule", &TrainingConfig::lr_schedule,
                           {{"constant", LrSchedule::Constant},
                            {"linear_decay", LrSchedule::LinearDecay}}),
      BOOL_KEY(oversample_labeled, oversample_labeled),
      BOOL_KEY(pld_fresh_init, pld_fresh_init),
      INT_KEY(worker_threads, worker_threads),
      INT_KEY(depth, depth),
      INT_KEY(base_channels, base_channels),
      DBL_KEY(consistency_weight, consistency_weight),
      DBL_KEY(confidence_threshold, confidence_threshold),
      DBL_KEY(coarse_low, coarse_low),
      DBL_KEY(coarse_high, coarse_high),
      DBL_KEY(prob_threshold, prob_threshold),
      enum_key<NormKind>("loss_norm", &TrainingConfig::loss_norm,
                         {{"mse", NormKind::Mse}, {"euclidean", NormKind::Euclidean}}),
      enum_key<PseudoMode>("pseudo_mode", &TrainingConfig::pseudo_mode,
                           {{"logit_mean", PseudoMode::LogitMean},
                            {"prob_mean", PseudoMode::ProbMean}}),
      BOOL_KEY(use_confidence_gate, use_confidence_gate),
      BOOL_KEY(use_noise_robust, use_noise_robust),
      BOOL_KEY(use_augmentation, use_augmentation),
      BOOL_KEY(use_contrast_adjust, use_contrast_adjust),
      enum_key<ContrastMode>("contrast_mode", &TrainingConfig::contrast_mode,
                             {{"power", ContrastMode::Power}, {"linear", ContrastMode::Linear}}),
      DBL_KEY(gamma_min, gamma_min),
      DBL_KEY(gamma_max, gamma_max),
      DBL_KEY(rotation_max_deg, rotation_max_deg),
      DBL_KEY(scale_min, scale_min),
      DBL_KEY(scale_max, scale_max),
      DBL_KEY(shear_max_deg, shear_max_deg),
      DBL_KEY(translate_max_px, translate_max_px),
      INT_KEY(struct_radius, struct_radius),
      BOOL_KEY(save_overlays, save_overlays),
      INT_KEY(phantom_image_size, phantom_image_size),
      INT_KEY(phantom_train_subjects, phantom_train_subjects),
      INT_KEY(phantom_test_subjects, phantom_test_subjects),
      INT_KEY(phantom_slices_per_subject, phantom_slices_per_subject),
      DBL_KEY(phantom_muscle_low, phantom_muscle_low),
      DBL_KEY(phantom_muscle_high, phantom_muscle_high),
      DBL_KEY(phantom_fat_low, phantom_fat_low),
      DBL_KEY(phantom_fat_high, phantom_fat_high),
      DBL_KEY(phantom_bone_low, phantom_bone_low),
      DBL_KEY(phantom_bone_high, phantom_bone_high),
      INT_KEY(phantom_imf_branches, phantom_imf_branches),
      INT_KEY(phantom_imf_branch_width, phantom_imf_branch_width),
      DBL_KEY(phantom_inhomogeneity, phantom_inhomogeneity),
      DBL_KEY(phantom_noise_sigma, phantom_noise_sigma),
      DBL_KEY(phantom_invert_fraction, phantom_invert_fraction),
      DBL_KEY(phantom_shading_fraction, phantom_shading_fraction),
      DBL_KEY(phantom_shading, phantom_shading),
      BOOL_KEY(phantom_write_degraded, phantom_write_degraded),
  };
  return s;
}

#undef INT_KEY
#undef U64_KEY
#undef DBL_KEY
#undef BOOL_KEY
#undef STR_KEY

const KeyHandler* find_key(const std::string& name) {
  for (const auto& h : schema())
    if (h.name == name) return &h;
  return nullptr;
}

}  // namespace

void apply_config_entries(TrainingConfig& cfg,
                          const std::map<std::string, std::string>& entries) {
  for (const auto& [k, v] : entries) {
    const KeyHandler* h = find_key(k);
    if (!h) throw std::runtime_error("config: unknown key '" + k + "'");
    h->set(cfg, k, v);
  }
  validate_config(cfg);
}

TrainingConfig parse_config_text(const std::string& text) {
  TrainingConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(lineno) +
                               " is not 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    const KeyHandler* h = find_key(key);
    if (!h) throw std::runtime_error("config: unknown key '" + key + "'");
    h->set(cfg, key, value);
  }
  validate_config(cfg);
  return cfg;
}

TrainingConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void validate_config(const TrainingConfig& c) {
  auto fail = [](const std::string& msg) {
    throw std::runtime_error("config: " + msg);
  };
  if (!(c.coarse_low > 0.0 && c.coarse_low < c.coarse_high && c.coarse_high < 1.0))
    fail("requires 0 < coarse_low < coarse_high < 1");
  if (!(c.confidence_threshold > 0.0 && c.confidence_threshold <= 1.0))
    fail("requires 0 < confidence_threshold <= 1");
  if (!(c.prob_threshold > 0.0 && c.prob_threshold < 1.0))
    fail("requires 0 < prob_threshold < 1");
  if (!(c.labeled_fraction > 0.0 && c.labeled_fraction <= 1.0))
    fail("requires 0 < labeled_fraction <= 1");
  if (c.slice_size <= 0) fail("slice_size must be positive");
  if (c.depth < 1 || c.depth > 8) fail("depth must be in [1,8]");
  if (c.base_channels < 1) fail("base_channels must be positive");
  if (c.batch_size < 1) fail("batch_size must be positive");
  if (c.plg_epochs < 1 || c.pld_epochs < 1) fail("epoch counts must be positive");
  if (!(c.gamma_min <= c.gamma_max)) fail("requires gamma_min <= gamma_max");
  if (!(c.gamma_min > 0.0)) fail("gamma_min must be positive");
  if (!(c.scale_min > 0.0 && c.scale_min <= c.scale_max))
    fail("requires 0 < scale_min <= scale_max");
  if (!(c.percentile_low >= 0.0 && c.percentile_low < c.percentile_high &&
        c.percentile_high <= 100.0))
    fail("requires 0 <= percentile_low < percentile_high <= 100");
  if (c.learning_rate <= 0.0) fail("learning_rate must be positive");
  if (!(c.beta1 >= 0.0 && c.beta1 < 1.0 && c.beta2 >= 0.0 && c.beta2 < 1.0))
    fail("adam betas must be in [0,1)");
  if (c.consistency_weight < 0.0) fail("consistency_weight must be >= 0");
  if (c.worker_threads < 1) fail("worker_threads must be >= 1");
  if (c.struct_radius < 0) fail("struct_radius must be >= 0");
  if (!(c.phantom_muscle_low < c.phantom_muscle_high))
    fail("phantom muscle intensity range is empty");
  if (!(c.phantom_fat_low < c.phantom_fat_high))
    fail("phantom fat intensity range is empty");
  if (!(c.phantom_muscle_high < c.phantom_fat_low))
    fail("phantom muscle and fat intensity ranges must be disjoint");
  if (c.phantom_imf_branches < 0) fail("phantom_imf_branches must be >= 0");
  if (c.phantom_imf_branch_width < 1) fail("phantom_imf_branch_width must be >= 1");
  if (c.phantom_invert_fraction < 0.0 || c.phantom_invert_fraction > 1.0)
    fail("phantom_invert_fraction must be in [0, 1]");
  if (c.phantom_shading_fraction < 0.0 || c.phantom_shading_fraction > 1.0)
    fail("phantom_shading_fraction must be in [0, 1]");
  if (c.phantom_shading < 0.0) fail("phantom_shading must be >= 0");
  if (c.phantom_train_subjects < 1 || c.phantom_test_subjects < 1 ||
      c.phantom_slices_per_subject < 1)
    fail("phantom subject/slice counts must be positive");
}

std::map<std::string, std::string> config_to_entries(const TrainingConfig& cfg) {
  std::map<std::string, std::string> out;
  for (const auto& h : schema()) out[h.name] = h.get(cfg);
  return out;
}

std::string config_to_text(const TrainingConfig& cfg) {
  std::ostringstream os;
  for (const auto& h : schema()) os << h.name << " = " << h.get(cfg) << "\n";
  return os.str();
}

}  // namespace imfseg

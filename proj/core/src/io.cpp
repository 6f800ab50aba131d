#include "imfseg/io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "imfseg/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace imfseg {

namespace {

void append_raw(std::string& out, const void* p, std::size_t n) {
  out.append(static_cast<const char*>(p), n);
}

void append_u16be(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v >> 8));
  out.push_back(static_cast<char>(v & 0xff));
}

void append_u16le(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void append_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t read_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t read_u64le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void append_doubles(std::string& out, const std::vector<double>& v) {
  append_raw(out, v.data(), v.size() * sizeof(double));
}

// Skips PGM whitespace and '#' comments, then parses one unsigned integer.
int parse_pnm_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c))
    throw std::runtime_error("malformed PGM header in '" + path + "'");
  int v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    c = in.get();
  }
  return v;
}

double percentile_interp(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) return 0.0;
  double idx = p / 100.0 * static_cast<double>(sorted.size() - 1);
  double lo = std::floor(idx);
  double hi = std::ceil(idx);
  if (lo == hi) return sorted[static_cast<std::size_t>(lo)];
  double w = idx - lo;
  return sorted[static_cast<std::size_t>(lo)] * (1.0 - w) +
         sorted[static_cast<std::size_t>(hi)] * w;
}

std::string split_token(const std::string& line, std::size_t& pos) {
  std::size_t tab = line.find('\t', pos);
  std::string tok = (tab == std::string::npos) ? line.substr(pos) : line.substr(pos, tab - pos);
  pos = (tab == std::string::npos) ? std::string::npos : tab + 1;
  return tok;
}

constexpr char kCheckpointMagic[8] = {'I', 'M', 'F', 'S', 'E', 'G', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

json header_to_json(const CheckpointHeader& h, std::size_t param_count) {
  json j;
  j["stage"] = h.stage;
  j["depth"] = h.depth;
  j["base_channels"] = h.base_channels;
  j["epochs_completed"] = h.epochs_completed;
  j["adam_step"] = h.adam_step;
  j["has_optimizer"] = h.has_optimizer;
  j["param_count"] = param_count;
  j["config"] = h.config_entries;
  return j;
}

CheckpointHeader header_from_json(const json& j, std::uint64_t* param_count) {
  CheckpointHeader h;
  h.stage = j.at("stage").get<std::string>();
  h.depth = j.at("depth").get<int>();
  h.base_channels = j.at("base_channels").get<int>();
  h.epochs_completed = j.at("epochs_completed").get<int>();
  h.adam_step = j.at("adam_step").get<std::int64_t>();
  h.has_optimizer = j.at("has_optimizer").get<bool>();
  if (j.contains("config"))
    h.config_entries = j.at("config").get<std::map<std::string, std::string>>();
  if (param_count) *param_count = j.at("param_count").get<std::uint64_t>();
  return h;
}

}  // namespace

// ---- generic file helpers ----

void atomic_write_file(const std::string& path, const std::string& bytes) {
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  fs::path tmp = target;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::uint64_t hash_file(const std::string& path) {
  std::string bytes = read_file(path);
  return fnv1a64(bytes.data(), bytes.size());
}

std::string effective_data_root(const std::string& configured) {
  const char* env = std::getenv("IMFSEG_DATA_ROOT");
  if (env && *env) return env;
  return configured;
}

std::string resolve_data_path(const std::string& path, const std::string& data_root) {
  if (path.empty() || data_root.empty()) return path;
  if (fs::path(path).is_absolute()) return path;
  return (fs::path(data_root) / path).string();
}

// ---- normalization ----

ImageSlice normalize(const Array2D& raw, NormMode mode, double percentile_low,
                     double percentile_high, NormalizationInfo* info) {
  if (raw.height <= 0 || raw.width <= 0 || raw.values.size() !=
      static_cast<std::size_t>(raw.height) * static_cast<std::size_t>(raw.width))
    throw std::runtime_error("normalize: malformed input array");
  for (double v : raw.values)
    if (!std::isfinite(v)) throw std::runtime_error("normalize: non-finite input value");

  double lo, hi;
  if (mode == NormMode::MinMax) {
    auto [mn, mx] = std::minmax_element(raw.values.begin(), raw.values.end());
    lo = *mn;
    hi = *mx;
  } else {
    std::vector<double> sorted = raw.values;
    std::sort(sorted.begin(), sorted.end());
    lo = percentile_interp(sorted, percentile_low);
    hi = percentile_interp(sorted, percentile_high);
  }
  if (!(hi > lo)) throw std::runtime_error("normalize: degenerate intensity range");

  ImageSlice out = ImageSlice::zeros(raw.height, raw.width);
  double inv = 1.0 / (hi - lo);
  for (std::size_t i = 0; i < raw.values.size(); ++i)
    out.pixels[i] = std::clamp((raw.values[i] - lo) * inv, 0.0, 1.0);
  if (info) *info = {lo, hi};
  return out;
}

// ---- manifest ----

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest '" + path + "'");
  DatasetManifest m;
  std::string line;
  bool header_seen = false;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "image_path\tlabel_path\tsubject_id\tsplit\tprecisely_labeled")
        throw std::runtime_error("manifest '" + path + "': unexpected header row");
      header_seen = true;
      continue;
    }
    std::size_t pos = 0;
    ManifestEntry e;
    e.image_path = split_token(line, pos);
    e.label_path = split_token(line, pos);
    e.subject_id = split_token(line, pos);
    e.split = split_token(line, pos);
    std::string labeled = split_token(line, pos);
    if (pos != std::string::npos || e.image_path.empty() || e.subject_id.empty())
      throw std::runtime_error("manifest '" + path + "': malformed line " +
                               std::to_string(lineno));
    if (labeled == "1")
      e.precisely_labeled = true;
    else if (labeled == "0")
      e.precisely_labeled = false;
    else
      throw std::runtime_error("manifest '" + path + "': precisely_labeled must be 0/1 on line " +
                               std::to_string(lineno));
    m.entries.push_back(std::move(e));
  }
  if (!header_seen) throw std::runtime_error("manifest '" + path + "': missing header row");
  return m;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
  std::ostringstream os;
  os << "image_path\tlabel_path\tsubject_id\tsplit\tprecisely_labeled\n";
  for (const auto& e : manifest.entries)
    os << e.image_path << '\t' << e.label_path << '\t' << e.subject_id << '\t' << e.split
       << '\t' << (e.precisely_labeled ? '1' : '0') << '\n';
  atomic_write_file(path, os.str());
}

ValidationResult validate_manifest(const DatasetManifest& manifest) {
  ValidationResult r;
  std::map<std::string, std::string> subject_split;
  std::map<std::string, int> image_seen;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    std::string where = "entry " + std::to_string(i);
    if (e.split != "train" && e.split != "test")
      r.violations.push_back(where + ": split '" + e.split + "' is not train/test");
    if (e.image_path.empty()) r.violations.push_back(where + ": empty image_path");
    if (e.subject_id.empty()) r.violations.push_back(where + ": empty subject_id");
    if (e.precisely_labeled && e.label_path.empty())
      r.violations.push_back(where + ": precisely labeled but no label_path");
    if (e.precisely_labeled && e.split != "train")
      r.violations.push_back(where + ": precisely labeled entry outside train split");
    auto [it, inserted] = subject_split.emplace(e.subject_id, e.split);
    if (!inserted && it->second != e.split)
      r.violations.push_back(where + ": subject '" + e.subject_id +
                             "' appears in both train and test");
    if (++image_seen[e.image_path] == 2)
      r.violations.push_back(where + ": duplicate image_path '" + e.image_path + "'");
  }
  return r;
}

DatasetManifest select_labeled_subset(const DatasetManifest& manifest, double fraction,
                                      std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::runtime_error("select_labeled_subset: fraction must be in (0,1]");
  DatasetManifest out = manifest;
  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < out.entries.size(); ++i) {
    out.entries[i].precisely_labeled = false;
    if (out.entries[i].split == "train") train_idx.push_back(i);
  }
  auto count = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(train_idx.size())));
  if (count == 0) throw std::runtime_error("select_labeled_subset: empty labeled set");
  Rng rng = derive_rng(seed, "labeled-subset");
  rng.shuffle(train_idx);
  for (std::size_t k = 0; k < count; ++k) {
    auto& e = out.entries[train_idx[k]];
    if (e.label_path.empty())
      throw std::runtime_error("select_labeled_subset: train entry '" + e.image_path +
                               "' has no label to promote");
    e.precisely_labeled = true;
  }
  return out;
}

std::vector<const ManifestEntry*> entries_for_split(const DatasetManifest& manifest,
                                                    const std::string& split) {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : manifest.entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

// ---- rasters ----

void save_image(const std::string& path, const ImageSlice& image) {
  std::string bytes;
  bytes.reserve(32 + image.pixels.size() * 2);
  bytes += "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
           "\n65535\n";
  for (double v : image.pixels) {
    double clamped = std::clamp(v, 0.0, 1.0);
    append_u16be(bytes, static_cast<std::uint16_t>(std::lround(clamped * 65535.0)));
  }
  atomic_write_file(path, bytes);
}

ImageSlice load_image(const std::string& path, int expected_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image '" + path + "'");
  char p, five;
  in.get(p);
  in.get(five);
  if (p != 'P' || five != '5') throw std::runtime_error("'" + path + "' is not binary PGM");
  int w = parse_pnm_int(in, path);
  int h = parse_pnm_int(in, path);
  int maxval = parse_pnm_int(in, path);
  if (maxval != 65535)
    throw std::runtime_error("'" + path + "': expected 16-bit PGM, maxval " +
                             std::to_string(maxval));
  if (expected_size > 0 && (w != expected_size || h != expected_size))
    throw std::runtime_error("'" + path + "': size " + std::to_string(w) + "x" +
                             std::to_string(h) + " does not match expected " +
                             std::to_string(expected_size));
  ImageSlice img = ImageSlice::zeros(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 2);
  for (int r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error("'" + path + "': truncated pixel data");
    for (int c = 0; c < w; ++c) {
      unsigned v = (static_cast<unsigned>(row[2 * c]) << 8) | row[2 * c + 1];
      img.at(r, c) = static_cast<double>(v) / 65535.0;
    }
  }
  return img;
}

void save_mask(const std::string& path, const BinaryMask& mask) {
  std::string bytes;
  bytes.reserve(32 + mask.pixels.size());
  bytes += "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) + "\n255\n";
  for (std::uint8_t v : mask.pixels) bytes.push_back(v ? '\xff' : '\0');
  atomic_write_file(path, bytes);
}

BinaryMask load_mask(const std::string& path, int expected_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mask '" + path + "'");
  char p, five;
  in.get(p);
  in.get(five);
  if (p != 'P' || five != '5') throw std::runtime_error("'" + path + "' is not binary PGM");
  int w = parse_pnm_int(in, path);
  int h = parse_pnm_int(in, path);
  int maxval = parse_pnm_int(in, path);
  if (maxval != 255)
    throw std::runtime_error("'" + path + "': expected 8-bit PGM, maxval " +
                             std::to_string(maxval));
  if (expected_size > 0 && (w != expected_size || h != expected_size))
    throw std::runtime_error("'" + path + "': size " + std::to_string(w) + "x" +
                             std::to_string(h) + " does not match expected " +
                             std::to_string(expected_size));
  BinaryMask mask = BinaryMask::zeros(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!in) throw std::runtime_error("'" + path + "': truncated pixel data");
    for (int c = 0; c < w; ++c) {
      if (row[c] != 0 && row[c] != 255)
        throw std::runtime_error("'" + path + "': mask pixel " + std::to_string(row[c]) +
                                 " is neither 0 nor 255");
      mask.at(r, c) = row[c] ? 1 : 0;
    }
  }
  return mask;
}

std::string sidecar_path(const std::string& image_path) { return image_path + ".json"; }

void save_slice_meta(const std::string& path, const SliceMeta& meta) {
  json j;
  j["source_id"] = meta.source_id;
  j["orig_min"] = meta.orig_min;
  j["orig_max"] = meta.orig_max;
  atomic_write_file(path, j.dump(2) + "\n");
}

SliceMeta load_slice_meta(const std::string& path) {
  json j = json::parse(read_file(path));
  SliceMeta m;
  m.source_id = j.at("source_id").get<std::string>();
  m.orig_min = j.at("orig_min").get<double>();
  m.orig_max = j.at("orig_max").get<double>();
  return m;
}

// ---- float arrays (NPY v1.0, '<f8', C order) ----

void save_array(const std::string& path, const Array2D& array) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" +
                       std::to_string(array.height) + ", " + std::to_string(array.width) +
                       "), }";
  std::size_t unpadded = 10 + header.size() + 1;
  std::size_t padded = (unpadded + 63) / 64 * 64;
  header.append(padded - unpadded, ' ');
  header.push_back('\n');

  std::string bytes;
  bytes.reserve(padded + array.values.size() * sizeof(double));
  bytes += "\x93NUMPY";
  bytes.push_back('\x01');
  bytes.push_back('\x00');
  append_u16le(bytes, static_cast<std::uint16_t>(header.size()));
  bytes += header;
  append_doubles(bytes, array.values);
  atomic_write_file(path, bytes);
}

Array2D load_array(const std::string& path) {
  std::string bytes = read_file(path);
  if (bytes.size() < 10 || bytes.compare(0, 6, "\x93NUMPY") != 0)
    throw std::runtime_error("'" + path + "' is not an NPY file");
  if (bytes[6] != '\x01')
    throw std::runtime_error("'" + path + "': unsupported NPY version");
  std::size_t hlen = static_cast<unsigned char>(bytes[8]) |
                     (static_cast<std::size_t>(static_cast<unsigned char>(bytes[9])) << 8);
  if (bytes.size() < 10 + hlen) throw std::runtime_error("'" + path + "': truncated header");
  std::string header = bytes.substr(10, hlen);
  if (header.find("'<f8'") == std::string::npos ||
      header.find("'fortran_order': False") == std::string::npos)
    throw std::runtime_error("'" + path + "': expected C-order '<f8' array");
  std::size_t sp = header.find("'shape': (");
  if (sp == std::string::npos) throw std::runtime_error("'" + path + "': missing shape");
  int h = 0, w = 0;
  if (std::sscanf(header.c_str() + sp, "'shape': (%d, %d)", &h, &w) != 2 || h <= 0 || w <= 0)
    throw std::runtime_error("'" + path + "': expected 2D shape");

  Array2D out;
  out.height = h;
  out.width = w;
  std::size_t n = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  if (bytes.size() != 10 + hlen + n * sizeof(double))
    throw std::runtime_error("'" + path + "': payload size mismatch");
  out.values.resize(n);
  std::memcpy(out.values.data(), bytes.data() + 10 + hlen, n * sizeof(double));
  return out;
}

void save_probability_map(const std::string& path, const ProbabilityMap& map) {
  Array2D a;
  a.height = map.height;
  a.width = map.width;
  a.values = map.pixels;
  save_array(path, a);
}

ProbabilityMap load_probability_map(const std::string& path, int expected_size) {
  Array2D a = load_array(path);
  if (expected_size > 0 && (a.height != expected_size || a.width != expected_size))
    throw std::runtime_error("'" + path + "': size does not match expected " +
                             std::to_string(expected_size));
  ProbabilityMap m;
  m.height = a.height;
  m.width = a.width;
  m.pixels = std::move(a.values);
  return m;
}

// ---- checkpoints ----

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  if (ckpt.header.has_optimizer &&
      (ckpt.adam_m.size() != ckpt.params.size() || ckpt.adam_v.size() != ckpt.params.size()))
    throw std::runtime_error("checkpoint: optimizer state size mismatch");
  std::string js = header_to_json(ckpt.header, ckpt.params.size()).dump();
  std::string bytes;
  bytes.reserve(20 + js.size() + ckpt.params.size() * sizeof(double) * 3);
  append_raw(bytes, kCheckpointMagic, sizeof(kCheckpointMagic));
  append_u32le(bytes, kCheckpointVersion);
  append_u64le(bytes, js.size());
  bytes += js;
  append_doubles(bytes, ckpt.params);
  if (ckpt.header.has_optimizer) {
    append_doubles(bytes, ckpt.adam_m);
    append_doubles(bytes, ckpt.adam_v);
  }
  atomic_write_file(path, bytes);
}

namespace {

// Parses the fixed-size preamble + JSON header; returns the payload offset.
CheckpointHeader parse_checkpoint_header(const std::string& path, const std::string& head,
                                         std::uint64_t* param_count, std::size_t* payload_off,
                                         std::uint64_t* json_len) {
  if (head.size() < 20 || std::memcmp(head.data(), kCheckpointMagic, 8) != 0)
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  auto* u = reinterpret_cast<const unsigned char*>(head.data());
  std::uint32_t version = read_u32le(u + 8);
  if (version != kCheckpointVersion)
    throw std::runtime_error("'" + path + "': checkpoint format version " +
                             std::to_string(version) + " is not supported");
  std::uint64_t jlen = read_u64le(u + 12);
  if (head.size() < 20 + jlen) throw std::runtime_error("'" + path + "': truncated header");
  CheckpointHeader h = header_from_json(json::parse(head.substr(20, jlen)), param_count);
  if (payload_off) *payload_off = 20 + static_cast<std::size_t>(jlen);
  if (json_len) *json_len = jlen;
  return h;
}

}  // namespace

Checkpoint load_checkpoint(const std::string& path) {
  std::string bytes = read_file(path);
  Checkpoint ckpt;
  std::uint64_t param_count = 0;
  std::size_t off = 0;
  ckpt.header = parse_checkpoint_header(path, bytes, &param_count, &off, nullptr);
  std::size_t blocks = ckpt.header.has_optimizer ? 3 : 1;
  std::size_t need = off + blocks * param_count * sizeof(double);
  if (bytes.size() != need)
    throw std::runtime_error("'" + path + "': payload size mismatch");
  auto read_block = [&](std::vector<double>& dst) {
    dst.resize(param_count);
    std::memcpy(dst.data(), bytes.data() + off, param_count * sizeof(double));
    off += param_count * sizeof(double);
  };
  read_block(ckpt.params);
  if (ckpt.header.has_optimizer) {
    read_block(ckpt.adam_m);
    read_block(ckpt.adam_v);
  }
  return ckpt;
}

CheckpointHeader load_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string pre(20, '\0');
  in.read(pre.data(), 20);
  if (!in) throw std::runtime_error("'" + path + "': truncated header");
  auto* u = reinterpret_cast<const unsigned char*>(pre.data());
  if (std::memcmp(pre.data(), kCheckpointMagic, 8) != 0)
    throw std::runtime_error("'" + path + "' is not a checkpoint file");
  std::uint64_t jlen = read_u64le(u + 12);
  std::string js(jlen, '\0');
  in.read(js.data(), static_cast<std::streamsize>(jlen));
  if (!in) throw std::runtime_error("'" + path + "': truncated header");
  return parse_checkpoint_header(path, pre + js, nullptr, nullptr, nullptr);
}

}  // namespace imfseg

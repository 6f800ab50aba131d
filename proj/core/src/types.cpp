#include "imfseg/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace imfseg {

ImageSlice ImageSlice::zeros(int h, int w, std::string id) {
  ImageSlice s;
  s.height = h;
  s.width = w;
  s.pixels.assign(static_cast<std::size_t>(h) * w, 0.0);
  s.source_id = std::move(id);
  return s;
}

BinaryMask BinaryMask::zeros(int h, int w) {
  BinaryMask m;
  m.height = h;
  m.width = w;
  m.pixels.assign(static_cast<std::size_t>(h) * w, 0);
  return m;
}

std::size_t BinaryMask::count() const {
  std::size_t n = 0;
  for (auto v : pixels) n += v;
  return n;
}

Array2D Array2D::zeros(int h, int w) {
  Array2D a;
  a.height = h;
  a.width = w;
  a.values.assign(static_cast<std::size_t>(h) * w, 0.0);
  return a;
}

ProbabilityMap ProbabilityMap::zeros(int h, int w) {
  ProbabilityMap p;
  p.height = h;
  p.width = w;
  p.pixels.assign(static_cast<std::size_t>(h) * w, 0.0);
  return p;
}

namespace {

void check_dims(int h, int w, std::size_t n, ValidationResult& out) {
  if (h <= 0 || w <= 0) out.violations.push_back("non-positive dimensions");
  if (n != static_cast<std::size_t>(h) * static_cast<std::size_t>(w))
    out.violations.push_back("pixel buffer size does not match dimensions");
}

void check_square_size(int h, int w, int expected, ValidationResult& out) {
  if (h != w) out.violations.push_back("non-square slice");
  if (expected > 0 && (h != expected || w != expected))
    out.violations.push_back("size differs from configured slice size");
}

}  // namespace

ValidationResult validate(const ImageSlice& s, int expected_size) {
  ValidationResult res;
  check_dims(s.height, s.width, s.pixels.size(), res);
  check_square_size(s.height, s.width, expected_size, res);
  for (double v : s.pixels) {
    if (!std::isfinite(v)) {
      res.violations.push_back("non-finite pixel");
      break;
    }
    if (v < 0.0 || v > 1.0) {
      res.violations.push_back("pixel out of [0,1]");
      break;
    }
  }
  return res;
}

ValidationResult validate(const BinaryMask& m, int expected_size) {
  ValidationResult res;
  check_dims(m.height, m.width, m.pixels.size(), res);
  check_square_size(m.height, m.width, expected_size, res);
  for (auto v : m.pixels) {
    if (v != 0 && v != 1) {
      res.violations.push_back("non-binary pixel");
      break;
    }
  }
  return res;
}

ValidationResult validate(const ProbabilityMap& p, int expected_size) {
  ValidationResult res;
  check_dims(p.height, p.width, p.pixels.size(), res);
  check_square_size(p.height, p.width, expected_size, res);
  for (double v : p.pixels) {
    if (!std::isfinite(v)) {
      res.violations.push_back("non-finite value");
      break;
    }
    if (v < 0.0 || v > 1.0) {
      res.violations.push_back("value out of [0,1]");
      break;
    }
  }
  return res;
}

ValidationResult validate(const PseudoLabelRecord& r, double confidence_threshold) {
  ValidationResult res;
  for (const auto* m : {&r.y_pseudo, &r.y_coarse, &r.y_corrected}) {
    auto sub = validate(*m);
    res.violations.insert(res.violations.end(), sub.violations.begin(),
                          sub.violations.end());
  }
  if (!same_shape(r.y_pseudo, r.y_coarse) || !same_shape(r.y_pseudo, r.y_corrected)) {
    res.violations.push_back("mask shapes differ");
    return res;
  }
  for (std::size_t i = 0; i < r.y_corrected.pixels.size(); ++i) {
    if (r.y_corrected.pixels[i] != (r.y_pseudo.pixels[i] & r.y_coarse.pixels[i])) {
      res.violations.push_back("y_corrected is not the intersection of y_pseudo and y_coarse");
      break;
    }
  }
  if (!(r.confidence >= 0.0 && r.confidence <= 1.0))
    res.violations.push_back("confidence out of [0,1]");
  if (r.eligible != (r.confidence >= confidence_threshold))
    res.violations.push_back("eligible flag inconsistent with confidence threshold");
  return res;
}

bool same_shape(const BinaryMask& a, const BinaryMask& b) {
  return a.height == b.height && a.width == b.width;
}
bool same_shape(const ProbabilityMap& a, const BinaryMask& b) {
  return a.height == b.height && a.width == b.width;
}
bool same_shape(const ProbabilityMap& a, const ProbabilityMap& b) {
  return a.height == b.height && a.width == b.width;
}
bool same_shape(const ImageSlice& a, const BinaryMask& b) {
  return a.height == b.height && a.width == b.width;
}

}  // namespace imfseg

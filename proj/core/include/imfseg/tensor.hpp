#pragma once

#include <cstddef>
#include <vector>

namespace imfseg {

// Channel-major (C, H, W) activation block, double precision throughout.
struct Tensor {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const { return static_cast<std::size_t>(c) * plane(); }

  double* chan(int ci) { return data.data() + plane() * ci; }
  const double* chan(int ci) const { return data.data() + plane() * ci; }

  // Resizes and zero-fills.
  void reset(int c_, int h_, int w_);

  static Tensor zeros(int c, int h, int w);
};

// dst += src; shapes must match.
void add_into(Tensor& dst, const Tensor& src);

}  // namespace imfseg

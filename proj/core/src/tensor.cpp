#include "imfseg/tensor.hpp"

#include <stdexcept>

namespace imfseg {

void Tensor::reset(int c_, int h_, int w_) {
  c = c_;
  h = h_;
  w = w_;
  data.assign(size(), 0.0);
}

Tensor Tensor::zeros(int c, int h, int w) {
  Tensor t;
  t.reset(c, h, w);
  return t;
}

void add_into(Tensor& dst, const Tensor& src) {
  if (dst.c != src.c || dst.h != src.h || dst.w != src.w)
    throw std::runtime_error("tensor: add_into shape mismatch");
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace imfseg

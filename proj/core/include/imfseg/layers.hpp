#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imfseg/tensor.hpp"

namespace imfseg {

enum class ParamKind { Weight, Bias, Gamma, Beta };

struct ParamSegment {
  std::string name;
  std::size_t offset = 0;
  std::size_t count = 0;
  ParamKind kind = ParamKind::Weight;
  int fan_in = 0;  // meaningful for Weight segments only
};

// Flat parameter layout shared by the network, the optimizer and
// checkpoints. Layers hold offsets into one contiguous double buffer, so
// gradients reduce as plain vector sums.
class ParameterStore {
 public:
  std::size_t add(std::string name, std::size_t count, ParamKind kind, int fan_in = 0);
  std::size_t total() const { return total_; }
  const std::vector<ParamSegment>& segments() const { return segs_; }

 private:
  std::vector<ParamSegment> segs_;
  std::size_t total_ = 0;
};

// Assigns parameter offsets and forward-cache slots while the network graph
// is being built.
struct LayerBuilder {
  ParameterStore& store;
  int n_tensor = 0;
  int n_norm = 0;
  int n_relu = 0;
  int n_pool = 0;
};

struct TensorCtx {
  Tensor in;
};
struct NormCtx {
  Tensor xhat;
  std::vector<double> invstd;
};
struct ReluCtx {
  std::vector<std::uint8_t> pos;
};
struct PoolCtx {
  std::vector<std::int32_t> argmax;
  int in_h = 0;
  int in_w = 0;
};

// Forward caches for one sample plus gemm scratch. One Workspace per
// concurrently processed sample; reuse across steps avoids reallocation.
struct Workspace {
  std::vector<TensorCtx> tctx;
  std::vector<NormCtx> nctx;
  std::vector<ReluCtx> rctx;
  std::vector<PoolCtx> pctx;
  std::vector<double> scratch;
  std::vector<double> scratch2;

  void prepare(const LayerBuilder& shape);
  void prepare(int n_tensor, int n_norm, int n_relu, int n_pool);
};

// 3x3 (pad 1) or 1x1 (pad 0) convolution, stride 1, via im2col + gemm.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(LayerBuilder& b, const std::string& name, int in_c, int out_c, int ksize, int pad);

  void forward(const double* p, const Tensor& in, Tensor& out, Workspace& ws) const;
  void backward(const double* p, const Tensor& grad_out, Tensor& grad_in, double* grad,
                Workspace& ws) const;

  int out_channels() const { return out_c_; }

 private:
  int in_c_ = 0, out_c_ = 0, k_ = 0, pad_ = 0, slot_ = -1;
  std::size_t w_off_ = 0, b_off_ = 0;
};

class InstanceNorm {
 public:
  InstanceNorm() = default;
  InstanceNorm(LayerBuilder& b, const std::string& name, int channels);

  void forward(const double* p, const Tensor& in, Tensor& out, Workspace& ws) const;
  void backward(const double* p, const Tensor& grad_out, Tensor& grad_in, double* grad,
                Workspace& ws) const;

 private:
  int channels_ = 0, slot_ = -1;
  std::size_t g_off_ = 0, b_off_ = 0;
};

class ReLU {
 public:
  ReLU() = default;
  explicit ReLU(LayerBuilder& b);

  void forward(Tensor& t, Workspace& ws) const;   // in place
  void backward(Tensor& grad, Workspace& ws) const;  // in place

 private:
  int slot_ = -1;
};

class MaxPool2 {
 public:
  MaxPool2() = default;
  explicit MaxPool2(LayerBuilder& b);

  void forward(const Tensor& in, Tensor& out, Workspace& ws) const;
  void backward(const Tensor& grad_out, Tensor& grad_in, Workspace& ws) const;

 private:
  int slot_ = -1;
};

// 2x2 stride-2 transposed convolution (decoder A's up-sampling).
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(LayerBuilder& b, const std::string& name, int in_c, int out_c);

  void forward(const double* p, const Tensor& in, Tensor& out, Workspace& ws) const;
  void backward(const double* p, const Tensor& grad_out, Tensor& grad_in, double* grad,
                Workspace& ws) const;

 private:
  int in_c_ = 0, out_c_ = 0, slot_ = -1;
  std::size_t w_off_ = 0, b_off_ = 0;
};

// Nearest-neighbor x2 (decoder B's up-sampling). Parameter-free.
class UpsampleNearest2 {
 public:
  void forward(const Tensor& in, Tensor& out) const;
  void backward(const Tensor& grad_out, Tensor& grad_in) const;
};

// conv3x3 -> instance norm -> relu, twice.
struct DoubleConv {
  Conv2d c1;
  InstanceNorm n1;
  ReLU r1;
  Conv2d c2;
  InstanceNorm n2;
  ReLU r2;

  DoubleConv() = default;
  DoubleConv(LayerBuilder& b, const std::string& name, int in_c, int out_c);

  void forward(const double* p, const Tensor& in, Tensor& out, Workspace& ws) const;
  void backward(const double* p, Tensor grad_out, Tensor& grad_in, double* grad,
                Workspace& ws) const;
};

}  // namespace imfseg

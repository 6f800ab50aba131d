#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "imfseg/layers.hpp"
#include "imfseg/types.hpp"

namespace imfseg {

struct ArchConfig {
  int depth = 4;
  int base_channels = 16;
};

struct DecoderOutputs {
  Array2D logits_a;
  Array2D logits_b;
  ProbabilityMap p_a;
  ProbabilityMap p_b;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// U-shaped encoder with two decoders that share the encoder feature pyramid
// and differ only in up-sampling: decoder A uses 2x2 stride-2 transposed
// convolutions, decoder B nearest-neighbor x2 followed by a 3x3 convolution.
// Each decoder ends in a 1x1 convolution producing single-channel logits.
class DualDecoderNet {
 public:
  explicit DualDecoderNet(ArchConfig arch);

  const ArchConfig& arch() const { return arch_; }
  std::size_t param_count() const { return store_.total(); }
  const ParameterStore& store() const { return store_; }

  // He-normal weights, zero biases, unit norm scales. Encoder and the two
  // decoders draw from independent streams, so the decoders start apart.
  std::vector<double> init_params(std::uint64_t seed) const;

  Workspace make_workspace() const;

  // Input sides must be divisible by 2^depth.
  DecoderOutputs forward(const std::vector<double>& params, const ImageSlice& image,
                         Workspace& ws) const;

  // Accumulates d(loss)/d(params) into grad given d(loss)/d(logits) for both
  // heads. Must be called with the Workspace the forward pass filled.
  void backward(const std::vector<double>& params, Workspace& ws,
                const std::vector<double>& dlogits_a, const std::vector<double>& dlogits_b,
                std::vector<double>& grad) const;

 private:
  int channels(int level) const { return arch_.base_channels << level; }

  ArchConfig arch_;
  ParameterStore store_;
  std::vector<DoubleConv> enc_;           // levels 0..depth
  std::vector<MaxPool2> pool_;            // between levels
  std::vector<ConvTranspose2x2> up_a_;    // applied top-down, j = 0 is deepest
  std::vector<DoubleConv> dec_a_;
  Conv2d head_a_;
  UpsampleNearest2 up_nn_;
  std::vector<Conv2d> up_b_;
  std::vector<DoubleConv> dec_b_;
  Conv2d head_b_;
  int n_tensor_ = 0, n_norm_ = 0, n_relu_ = 0, n_pool_ = 0;
};

// pixel = 1 iff p > threshold (strict).
BinaryMask binarize(const ProbabilityMap& p, double threshold);

}  // namespace imfseg

#include "imfseg/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "imfseg/rng.hpp"

namespace imfseg {

namespace {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.h != b.h || a.w != b.w) throw std::runtime_error("concat: spatial shape mismatch");
  Tensor out = Tensor::zeros(a.c + b.c, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

void split_channels(const Tensor& cat, int c_first, Tensor& first, Tensor& second) {
  first.reset(c_first, cat.h, cat.w);
  second.reset(cat.c - c_first, cat.h, cat.w);
  std::copy(cat.data.begin(), cat.data.begin() + first.data.size(), first.data.begin());
  std::copy(cat.data.begin() + first.data.size(), cat.data.end(), second.data.begin());
}

// dst += src, moving when dst is still empty.
void accumulate(Tensor& dst, Tensor&& src) {
  if (dst.data.empty())
    dst = std::move(src);
  else
    add_into(dst, src);
}

}  // namespace

DualDecoderNet::DualDecoderNet(ArchConfig arch) : arch_(arch) {
  if (arch_.depth < 1 || arch_.base_channels < 1)
    throw std::runtime_error("network: invalid architecture");
  LayerBuilder b{store_};
  const int depth = arch_.depth;

  enc_.reserve(depth + 1);
  enc_.emplace_back(b, "enc0", 1, channels(0));
  for (int l = 1; l <= depth; ++l) {
    pool_.emplace_back(b);
    enc_.emplace_back(b, "enc" + std::to_string(l), channels(l - 1), channels(l));
  }

  for (int j = 0; j < depth; ++j) {
    int l = depth - 1 - j;
    up_a_.emplace_back(b, "deca.up" + std::to_string(l), channels(l + 1), channels(l));
    dec_a_.emplace_back(b, "deca.dc" + std::to_string(l), 2 * channels(l), channels(l));
  }
  head_a_ = Conv2d(b, "deca.head", channels(0), 1, 1, 0);

  for (int j = 0; j < depth; ++j) {
    int l = depth - 1 - j;
    up_b_.emplace_back(b, "decb.up" + std::to_string(l), channels(l + 1), channels(l), 3, 1);
    dec_b_.emplace_back(b, "decb.dc" + std::to_string(l), 2 * channels(l), channels(l));
  }
  head_b_ = Conv2d(b, "decb.head", channels(0), 1, 1, 0);

  n_tensor_ = b.n_tensor;
  n_norm_ = b.n_norm;
  n_relu_ = b.n_relu;
  n_pool_ = b.n_pool;
}

std::vector<double> DualDecoderNet::init_params(std::uint64_t seed) const {
  std::vector<double> params(store_.total(), 0.0);
  for (const auto& seg : store_.segments()) {
    switch (seg.kind) {
      case ParamKind::Weight: {
        Rng rng = derive_rng(seed, "init", fnv1a64(seg.name));
        double std = std::sqrt(2.0 / static_cast<double>(seg.fan_in));
        for (std::size_t i = 0; i < seg.count; ++i)
          params[seg.offset + i] = rng.normal() * std;
        break;
      }
      case ParamKind::Gamma:
        for (std::size_t i = 0; i < seg.count; ++i) params[seg.offset + i] = 1.0;
        break;
      case ParamKind::Bias:
      case ParamKind::Beta:
        break;  // already zero
    }
  }
  return params;
}

Workspace DualDecoderNet::make_workspace() const {
  Workspace ws;
  ws.prepare(n_tensor_, n_norm_, n_relu_, n_pool_);
  return ws;
}

DecoderOutputs DualDecoderNet::forward(const std::vector<double>& params,
                                       const ImageSlice& image, Workspace& ws) const {
  if (params.size() != store_.total())
    throw std::runtime_error("network: parameter buffer size mismatch");
  const int depth = arch_.depth;
  const int div = 1 << depth;
  if (image.height <= 0 || image.width <= 0 || image.height % div != 0 ||
      image.width % div != 0)
    throw std::runtime_error("network: shape/depth mismatch (input " +
                             std::to_string(image.height) + "x" + std::to_string(image.width) +
                             " not divisible by " + std::to_string(div) + ")");
  ws.prepare(n_tensor_, n_norm_, n_relu_, n_pool_);
  const double* p = params.data();

  Tensor x = Tensor::zeros(1, image.height, image.width);
  x.data = image.pixels;

  std::vector<Tensor> skips(depth + 1);
  enc_[0].forward(p, x, skips[0], ws);
  for (int l = 1; l <= depth; ++l) {
    Tensor pooled;
    pool_[l - 1].forward(skips[l - 1], pooled, ws);
    enc_[l].forward(p, pooled, skips[l], ws);
  }

  auto run_decoder = [&](bool is_a, Tensor& logits) {
    Tensor cur = skips[depth];
    for (int j = 0; j < depth; ++j) {
      int l = depth - 1 - j;
      Tensor up;
      if (is_a) {
        up_a_[j].forward(p, cur, up, ws);
      } else {
        Tensor nn;
        up_nn_.forward(cur, nn);
        up_b_[j].forward(p, nn, up, ws);
      }
      Tensor cat = concat_channels(up, skips[l]);
      (is_a ? dec_a_ : dec_b_)[j].forward(p, cat, cur, ws);
    }
    (is_a ? head_a_ : head_b_).forward(p, cur, logits, ws);
  };

  Tensor la, lb;
  run_decoder(true, la);
  run_decoder(false, lb);

  DecoderOutputs out;
  out.logits_a.height = out.logits_b.height = image.height;
  out.logits_a.width = out.logits_b.width = image.width;
  out.logits_a.values = std::move(la.data);
  out.logits_b.values = std::move(lb.data);
  out.p_a = ProbabilityMap::zeros(image.height, image.width);
  out.p_b = ProbabilityMap::zeros(image.height, image.width);
  for (std::size_t i = 0; i < out.logits_a.values.size(); ++i) {
    out.p_a.pixels[i] = sigmoid(out.logits_a.values[i]);
    out.p_b.pixels[i] = sigmoid(out.logits_b.values[i]);
  }
  return out;
}

void DualDecoderNet::backward(const std::vector<double>& params, Workspace& ws,
                              const std::vector<double>& dlogits_a,
                              const std::vector<double>& dlogits_b,
                              std::vector<double>& grad) const {
  if (grad.size() != store_.total())
    throw std::runtime_error("network: gradient buffer size mismatch");
  const int depth = arch_.depth;
  const double* p = params.data();
  // Shape of the head's input is cached in its ctx; logits share that grid.
  const Tensor& head_in = ws.tctx.back().in;
  const int h = head_in.h, w = head_in.w;
  if (dlogits_a.size() != static_cast<std::size_t>(h) * w ||
      dlogits_b.size() != dlogits_a.size())
    throw std::runtime_error("network: logit gradient size mismatch");

  std::vector<Tensor> skip_grads(depth + 1);

  auto run_decoder = [&](bool is_a, const std::vector<double>& dlogits) {
    Tensor g = Tensor::zeros(1, h, w);
    g.data = dlogits;
    Tensor gcur;
    (is_a ? head_a_ : head_b_).backward(p, g, gcur, grad.data(), ws);
    for (int j = depth - 1; j >= 0; --j) {
      int l = depth - 1 - j;
      Tensor gcat;
      (is_a ? dec_a_ : dec_b_)[j].backward(p, std::move(gcur), gcat, grad.data(), ws);
      Tensor gup, gskip;
      split_channels(gcat, channels(l), gup, gskip);
      accumulate(skip_grads[l], std::move(gskip));
      Tensor gprev;
      if (is_a) {
        up_a_[j].backward(p, gup, gprev, grad.data(), ws);
      } else {
        Tensor gnn;
        up_b_[j].backward(p, gup, gnn, grad.data(), ws);
        up_nn_.backward(gnn, gprev);
      }
      gcur = std::move(gprev);
    }
    accumulate(skip_grads[depth], std::move(gcur));
  };

  // Reverse order of the forward pass: decoder B first.
  run_decoder(false, dlogits_b);
  run_decoder(true, dlogits_a);

  Tensor gx = std::move(skip_grads[depth]);
  for (int l = depth; l >= 1; --l) {
    Tensor gpooled;
    enc_[l].backward(p, std::move(gx), gpooled, grad.data(), ws);
    Tensor gprev;
    pool_[l - 1].backward(gpooled, gprev, ws);
    gx = std::move(gprev);
    add_into(gx, skip_grads[l - 1]);
  }
  Tensor gimage;
  enc_[0].backward(p, std::move(gx), gimage, grad.data(), ws);
}

BinaryMask binarize(const ProbabilityMap& p, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw std::runtime_error("binarize: threshold must lie in (0,1)");
  BinaryMask m = BinaryMask::zeros(p.height, p.width);
  for (std::size_t i = 0; i < p.pixels.size(); ++i)
    m.pixels[i] = p.pixels[i] > threshold ? 1 : 0;
  return m;
}

}  // namespace imfseg

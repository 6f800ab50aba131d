#include "imfseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include <Eigen/Dense>

namespace imfseg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapCRow = Eigen::Map<const RowMat>;

constexpr double kNormEps = 1e-5;

// Unrolls k x k patches into rows of a (c*k*k) x (h*w) row-major matrix.
// Stride 1; pad must keep the output grid equal to the input grid.
void im2col(const Tensor& in, int k, int pad, std::vector<double>& cols) {
  const int H = in.h, W = in.w;
  const std::size_t hw = in.plane();
  cols.resize(static_cast<std::size_t>(in.c) * k * k * hw);
  for (int ci = 0; ci < in.c; ++ci) {
    const double* src_chan = in.chan(ci);
    for (int dr = 0; dr < k; ++dr) {
      for (int dc = 0; dc < k; ++dc) {
        double* row = cols.data() + (static_cast<std::size_t>(ci) * k * k + dr * k + dc) * hw;
        int lo = std::max(0, pad - dc);
        int hi = std::min(W, W + pad - dc);
        for (int r = 0; r < H; ++r) {
          int sr = r + dr - pad;
          double* dst = row + static_cast<std::size_t>(r) * W;
          if (sr < 0 || sr >= H || lo >= hi) {
            std::memset(dst, 0, sizeof(double) * W);
            continue;
          }
          if (lo > 0) std::memset(dst, 0, sizeof(double) * lo);
          if (hi < W) std::memset(dst + hi, 0, sizeof(double) * (W - hi));
          std::memcpy(dst + lo, src_chan + static_cast<std::size_t>(sr) * W + lo + dc - pad,
                      sizeof(double) * (hi - lo));
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds rows back onto the input grid.
void col2im_add(const std::vector<double>& cols, int k, int pad, Tensor& grad_in) {
  const int H = grad_in.h, W = grad_in.w;
  const std::size_t hw = grad_in.plane();
  for (int ci = 0; ci < grad_in.c; ++ci) {
    double* dst_chan = grad_in.chan(ci);
    for (int dr = 0; dr < k; ++dr) {
      for (int dc = 0; dc < k; ++dc) {
        const double* row =
            cols.data() + (static_cast<std::size_t>(ci) * k * k + dr * k + dc) * hw;
        int lo = std::max(0, pad - dc);
        int hi = std::min(W, W + pad - dc);
        for (int r = 0; r < H; ++r) {
          int sr = r + dr - pad;
          if (sr < 0 || sr >= H || lo >= hi) continue;
          const double* g = row + static_cast<std::size_t>(r) * W + lo;
          double* dst = dst_chan + static_cast<std::size_t>(sr) * W + lo + dc - pad;
          for (int i = 0; i < hi - lo; ++i) dst[i] += g[i];
        }
      }
    }
  }
}

}  // namespace

std::size_t ParameterStore::add(std::string name, std::size_t count, ParamKind kind,
                                int fan_in) {
  for (const auto& s : segs_)
    if (s.name == name) throw std::runtime_error("duplicate parameter segment '" + name + "'");
  std::size_t off = total_;
  segs_.push_back({std::move(name), off, count, kind, fan_in});
  total_ += count;
  return off;
}

void Workspace::prepare(const LayerBuilder& shape) {
  prepare(shape.n_tensor, shape.n_norm, shape.n_relu, shape.n_pool);
}

void Workspace::prepare(int n_tensor, int n_norm, int n_relu, int n_pool) {
  tctx.resize(n_tensor);
  nctx.resize(n_norm);
  rctx.resize(n_relu);
  pctx.resize(n_pool);
}

// ---- Conv2d ----

Conv2d::Conv2d(LayerBuilder& b, const std::string& name, int in_c, int out_c, int ksize,
               int pad)
    : in_c_(in_c), out_c_(out_c), k_(ksize), pad_(pad), slot_(b.n_tensor++) {
  if (!((ksize == 3 && pad == 1) || (ksize == 1 && pad == 0)))
    throw std::runtime_error("conv: unsupported kernel/pad combination");
  w_off_ = b.store.add(name + ".w", static_cast<std::size_t>(out_c) * in_c * ksize * ksize,
                       ParamKind::Weight, in_c * ksize * ksize);
  b_off_ = b.store.add(name + ".b", static_cast<std::size_t>(out_c), ParamKind::Bias);
}

void Conv2d::forward(const double* p, const Tensor& in, Tensor& out, Workspace& ws) const {
  if (in.c != in_c_) throw std::runtime_error("conv: channel mismatch");
  const std::size_t hw = in.plane();
  const int rows = in_c_ * k_ * k_;
  out.reset(out_c_, in.h, in.w);

  const double* colp;
  if (k_ == 1) {
    colp = in.data.data();
  } else {
    im2col(in, k_, pad_, ws.scratch);
    colp = ws.scratch.data();
  }
  MapCRow K(colp, rows, static_cast<Eigen::Index>(hw));
  MapCRow W(p + w_off_, out_c_, rows);
  MapRow O(out.data.data(), out_c_, static_cast<Eigen::Index>(hw));
  O.noalias() = W * K;
  for (int oc = 0; oc < out_c_; ++oc) O.row(oc).array() += p[b_off_ + oc];

  ws.tctx[slot_].in = in;
}

void Conv2d::backward(const double* p, const Tensor& grad_out, Tensor& grad_in, double* grad,
                      Workspace& ws) const {
  const Tensor& in = ws.tctx[slot_].in;
  const std::size_t hw = in.plane();
  const int rows = in_c_ * k_ * k_;

  MapCRow G(grad_out.data.data(), out_c_, static_cast<Eigen::Index>(hw));

  const double* colp;
  if (k_ == 1) {
    colp = in.data.data();
  } else {
    im2col(in, k_, pad_, ws.scratch);
    colp = ws.scratch.data();
  }
  MapCRow K(colp, rows, static_cast<Eigen::Index>(hw));
  MapRow dW(grad + w_off_, out_c_, rows);
  dW.noalias() += G * K.transpose();
  // Strict-order accumulation: Eigen's redux reassociates based on buffer
  // alignment, which makes repeated runs in one process disagree in the
  // last bits.
  for (int oc = 0; oc < out_c_; ++oc) {
    const double* gr = grad_out.data.data() + static_cast<std::size_t>(oc) * hw;
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += gr[i];
    grad[b_off_ + oc] += s;
  }

  MapCRow W(p + w_off_, out_c_, rows);
  grad_in.reset(in_c_, in.h, in.w);
  if (k_ == 1) {
    MapRow GI(grad_in.data.data(), rows, static_cast<Eigen::Index>(hw));
    GI.noalias() = W.transpose() * G;
  } else {
    ws.scratch2.resize(static_cast<std::size_t>(rows) * hw);
    MapRow C(ws.scratch2.data(), rows, static_cast<Eigen::Index>(hw));
    C.noalias() = W.transpose() * G;
    col2im_add(ws.scratch2, k_, pad_, grad_in);
  }
}

// ---- InstanceNorm ----

InstanceNorm::InstanceNorm(LayerBuilder& b, const std::string& name, int channels)
    : channels_(channels), slot_(b.n_norm++) {
  g_off_ = b.store.add(name + ".gamma", static_cast<std::size_t>(channels), ParamKind::Gamma);
  b_off_ = b.store.add(name + ".beta", static_cast<std::size_t>(channels), ParamKind::Beta);
}

void InstanceNorm::forward(const double* p, const Tensor& in, Tensor& out,
                           Workspace& ws) const {
  if (in.c != channels_) throw std::runtime_error("instance norm: channel mismatch");
  const std::size_t n = in.plane();
  out.reset(in.c, in.h, in.w);
  NormCtx& ctx = ws.nctx[slot_];
  ctx.xhat.reset(in.c, in.h, in.w);
  ctx.invstd.assign(channels_, 0.0);

  for (int ci = 0; ci < channels_; ++ci) {
    const double* x = in.chan(ci);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = x[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double invstd = 1.0 / std::sqrt(var + kNormEps);
    ctx.invstd[ci] = invstd;

    double gamma = p[g_off_ + ci], beta = p[b_off_ + ci];
    double* xh = ctx.xhat.chan(ci);
    double* o = out.chan(ci);
    for (std::size_t i = 0; i < n; ++i) {
      xh[i] = (x[i] - mean) * invstd;
      o[i] = gamma * xh[i] + beta;
    }
  }
}

void InstanceNorm::backward(const double* p, const Tensor& grad_out, Tensor& grad_in,
                            double* grad, Workspace& ws) const {
  const NormCtx& ctx = ws.nctx[slot_];
  const std::size_t n = ctx.xhat.plane();
  grad_in.reset(grad_out.c, grad_out.h, grad_out.w);

  for (int ci = 0; ci < channels_; ++ci) {
    const double* g = grad_out.chan(ci);
    const double* xh = ctx.xhat.chan(ci);
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_g += g[i];
      sum_gx += g[i] * xh[i];
    }
    grad[g_off_ + ci] += sum_gx;
    grad[b_off_ + ci] += sum_g;

    double gamma = p[g_off_ + ci];
    double scale = gamma * ctx.invstd[ci];
    double mg = sum_g / static_cast<double>(n);
    double mgx = sum_gx / static_cast<double>(n);
    double* gi = grad_in.chan(ci);
    for (std::size_t i = 0; i < n; ++i) gi[i] = scale * (g[i] - mg - xh[i] * mgx);
  }
}

// ---- ReLU ----

ReLU::ReLU(LayerBuilder& b) : slot_(b.n_relu++) {}

void ReLU::forward(Tensor& t, Workspace& ws) const {
  ReluCtx& ctx = ws.rctx[slot_];
  ctx.pos.assign(t.data.size(), 0);
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (t.data[i] > 0.0)
      ctx.pos[i] = 1;
    else
      t.data[i] = 0.0;
  }
}

void ReLU::backward(Tensor& grad, Workspace& ws) const {
  const ReluCtx& ctx = ws.rctx[slot_];
  for (std::size_t i = 0; i < grad.data.size(); ++i)
    if (!ctx.pos[i]) grad.data[i] = 0.0;
}

// ---- MaxPool2 ----

MaxPool2::MaxPool2(LayerBuilder& b) : slot_(b.n_pool++) {}

void MaxPool2::forward(const Tensor& in, Tensor& out, Workspace& ws) const {
  if (in.h % 2 != 0 || in.w % 2 != 0) throw std::runtime_error("maxpool: odd input size");
  const int oh = in.h / 2, ow = in.w / 2;
  out.reset(in.c, oh, ow);
  PoolCtx& ctx = ws.pctx[slot_];
  ctx.argmax.assign(out.size(), 0);
  ctx.in_h = in.h;
  ctx.in_w = in.w;

  std::size_t oi = 0;
  for (int ci = 0; ci < in.c; ++ci) {
    const double* x = in.chan(ci);
    std::size_t base = in.plane() * ci;
    for (int r = 0; r < oh; ++r) {
      for (int c = 0; c < ow; ++c, ++oi) {
        std::size_t i00 = static_cast<std::size_t>(2 * r) * in.w + 2 * c;
        std::size_t idx = i00;
        double best = x[i00];
        const std::size_t cand[3] = {i00 + 1, i00 + in.w, i00 + in.w + 1};
        for (std::size_t k : cand)
          if (x[k] > best) {
            best = x[k];
            idx = k;
          }
        out.data[oi] = best;
        ctx.argmax[oi] = static_cast<std::int32_t>(base + idx);
      }
    }
  }
}

void MaxPool2::backward(const Tensor& grad_out, Tensor& grad_in, Workspace& ws) const {
  const PoolCtx& ctx = ws.pctx[slot_];
  grad_in.reset(grad_out.c, ctx.in_h, ctx.in_w);
  for (std::size_t i = 0; i < grad_out.data.size(); ++i)
    grad_in.data[ctx.argmax[i]] += grad_out.data[i];
}

// ---- ConvTranspose2x2 ----

ConvTranspose2x2::ConvTranspose2x2(LayerBuilder& b, const std::string& name, int in_c,
                                   int out_c)
    : in_c_(in_c), out_c_(out_c), slot_(b.n_tensor++) {
  w_off_ = b.store.add(name + ".w", static_cast<std::size_t>(out_c) * 4 * in_c,
                       ParamKind::Weight, in_c);
  b_off_ = b.store.add(name + ".b", static_cast<std::size_t>(out_c), ParamKind::Bias);
}

void ConvTranspose2x2::forward(const double* p, const Tensor& in, Tensor& out,
                               Workspace& ws) const {
  if (in.c != in_c_) throw std::runtime_error("transposed conv: channel mismatch");
  const std::size_t hw = in.plane();
  out.reset(out_c_, in.h * 2, in.w * 2);

  // Each input pixel expands into a 2x2 block: one gemm onto 4*out_c rows,
  // then a pixel-shuffle scatter.
  ws.scratch.resize(static_cast<std::size_t>(out_c_) * 4 * hw);
  MapCRow W(p + w_off_, out_c_ * 4, in_c_);
  MapCRow I(in.data.data(), in_c_, static_cast<Eigen::Index>(hw));
  MapRow M(ws.scratch.data(), out_c_ * 4, static_cast<Eigen::Index>(hw));
  M.noalias() = W * I;

  for (int oc = 0; oc < out_c_; ++oc) {
    double bias = p[b_off_ + oc];
    double* o = out.chan(oc);
    for (int q = 0; q < 4; ++q) {
      const double* m = ws.scratch.data() + (static_cast<std::size_t>(oc) * 4 + q) * hw;
      int di = q / 2, dj = q % 2;
      for (int r = 0; r < in.h; ++r) {
        double* orow = o + static_cast<std::size_t>(2 * r + di) * out.w + dj;
        const double* mrow = m + static_cast<std::size_t>(r) * in.w;
        for (int c = 0; c < in.w; ++c) orow[2 * c] = mrow[c] + bias;
      }
    }
  }
  ws.tctx[slot_].in = in;
}

void ConvTranspose2x2::backward(const double* p, const Tensor& grad_out, Tensor& grad_in,
                                double* grad, Workspace& ws) const {
  const Tensor& in = ws.tctx[slot_].in;
  const std::size_t hw = in.plane();

  ws.scratch.resize(static_cast<std::size_t>(out_c_) * 4 * hw);
  for (int oc = 0; oc < out_c_; ++oc) {
    const double* g = grad_out.chan(oc);
    double bsum = 0.0;
    for (std::size_t i = 0; i < grad_out.plane(); ++i) bsum += g[i];
    grad[b_off_ + oc] += bsum;
    for (int q = 0; q < 4; ++q) {
      double* m = ws.scratch.data() + (static_cast<std::size_t>(oc) * 4 + q) * hw;
      int di = q / 2, dj = q % 2;
      for (int r = 0; r < in.h; ++r) {
        const double* grow = g + static_cast<std::size_t>(2 * r + di) * grad_out.w + dj;
        double* mrow = m + static_cast<std::size_t>(r) * in.w;
        for (int c = 0; c < in.w; ++c) mrow[c] = grow[2 * c];
      }
    }
  }

  MapCRow dM(ws.scratch.data(), out_c_ * 4, static_cast<Eigen::Index>(hw));
  MapCRow I(in.data.data(), in_c_, static_cast<Eigen::Index>(hw));
  MapRow dW(grad + w_off_, out_c_ * 4, in_c_);
  dW.noalias() += dM * I.transpose();

  MapCRow W(p + w_off_, out_c_ * 4, in_c_);
  grad_in.reset(in_c_, in.h, in.w);
  MapRow GI(grad_in.data.data(), in_c_, static_cast<Eigen::Index>(hw));
  GI.noalias() = W.transpose() * dM;
}

// ---- UpsampleNearest2 ----

void UpsampleNearest2::forward(const Tensor& in, Tensor& out) const {
  out.reset(in.c, in.h * 2, in.w * 2);
  for (int ci = 0; ci < in.c; ++ci) {
    const double* x = in.chan(ci);
    double* o = out.chan(ci);
    for (int r = 0; r < in.h; ++r) {
      const double* xrow = x + static_cast<std::size_t>(r) * in.w;
      double* o0 = o + static_cast<std::size_t>(2 * r) * out.w;
      double* o1 = o0 + out.w;
      for (int c = 0; c < in.w; ++c) {
        o0[2 * c] = o0[2 * c + 1] = xrow[c];
        o1[2 * c] = o1[2 * c + 1] = xrow[c];
      }
    }
  }
}

void UpsampleNearest2::backward(const Tensor& grad_out, Tensor& grad_in) const {
  grad_in.reset(grad_out.c, grad_out.h / 2, grad_out.w / 2);
  for (int ci = 0; ci < grad_in.c; ++ci) {
    const double* g = grad_out.chan(ci);
    double* gi = grad_in.chan(ci);
    for (int r = 0; r < grad_in.h; ++r) {
      const double* g0 = g + static_cast<std::size_t>(2 * r) * grad_out.w;
      const double* g1 = g0 + grad_out.w;
      double* grow = gi + static_cast<std::size_t>(r) * grad_in.w;
      for (int c = 0; c < grad_in.w; ++c)
        grow[c] = g0[2 * c] + g0[2 * c + 1] + g1[2 * c] + g1[2 * c + 1];
    }
  }
}

// ---- DoubleConv ----

DoubleConv::DoubleConv(LayerBuilder& b, const std::string& name, int in_c, int out_c)
    : c1(b, name + ".c1", in_c, out_c, 3, 1),
      n1(b, name + ".n1", out_c),
      r1(b),
      c2(b, name + ".c2", out_c, out_c, 3, 1),
      n2(b, name + ".n2", out_c),
      r2(b) {}

void DoubleConv::forward(const double* p, const Tensor& in, Tensor& out,
                         Workspace& ws) const {
  Tensor t1, t2;
  c1.forward(p, in, t1, ws);
  n1.forward(p, t1, t2, ws);
  r1.forward(t2, ws);
  c2.forward(p, t2, t1, ws);
  n2.forward(p, t1, out, ws);
  r2.forward(out, ws);
}

void DoubleConv::backward(const double* p, Tensor grad_out, Tensor& grad_in, double* grad,
                          Workspace& ws) const {
  Tensor g1, g2;
  r2.backward(grad_out, ws);
  n2.backward(p, grad_out, g1, grad, ws);
  c2.backward(p, g1, g2, grad, ws);
  r1.backward(g2, ws);
  n1.backward(p, g2, g1, grad, ws);
  c1.backward(p, g1, grad_in, grad, ws);
}

}  // namespace imfseg

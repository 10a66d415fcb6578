#include "vseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "vseg/error.hpp"
#include "vseg/parallel.hpp"

namespace vseg {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Weight-gradient reductions are split into fixed groups of work items whose
// partial sums are added in group order, independent of the worker count.
constexpr std::size_t kReductionGroup = 4;

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.dim() != rank) {
    throw ShapeError(std::string(what) + " must be " + std::to_string(rank) + "-D, got " +
                     shape_to_string(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t batch, in_channels, out_channels, kernel, padding;
  std::size_t d, h, w;     // input extents
  std::size_t od, oh, ow;  // output extents

  std::size_t patch() const { return in_channels * kernel * kernel * kernel; }
  std::size_t in_plane() const { return h * w; }
  std::size_t out_plane() const { return oh * ow; }
};

ConvGeometry make_conv_geometry(std::size_t batch, std::size_t cin, std::size_t cout,
                                std::size_t k, std::size_t pad, std::size_t d, std::size_t h,
                                std::size_t w) {
  auto out_extent = [&](std::size_t n, const char* axis) {
    if (n + 2 * pad < k) {
      throw ShapeError(std::string("conv3d: ") + axis + " extent " + std::to_string(n) +
                       " too small for kernel " + std::to_string(k));
    }
    return n + 2 * pad - k + 1;
  };
  return {batch, cin, cout, k, pad, d, h, w, out_extent(d, "depth"), out_extent(h, "height"),
          out_extent(w, "width")};
}

// Patch matrix for output slice `oz` of one batch item: rows are
// (ci, kz, ky, kx), columns are output voxels of the slice.
void im2col_slice(const double* in, const ConvGeometry& g, std::size_t oz, double* col) {
  const auto k = g.kernel;
  const auto pad = static_cast<long>(g.padding);
  const auto plane = g.out_plane();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
    for (std::size_t kz = 0; kz < k; ++kz) {
      const long iz = static_cast<long>(oz + kz) - pad;
      for (std::size_t ky = 0; ky < k; ++ky) {
        for (std::size_t kx = 0; kx < k; ++kx) {
          double* dst = col + (((ci * k + kz) * k + ky) * k + kx) * plane;
          if (iz < 0 || iz >= static_cast<long>(g.d)) {
            std::fill(dst, dst + plane, 0.0);
            continue;
          }
          const double* src_plane = in + (ci * g.d + static_cast<std::size_t>(iz)) * g.in_plane();
          // Valid ox satisfy 0 <= ox + kx - pad < w.
          const long shift = static_cast<long>(kx) - pad;
          const long lo = std::clamp(-shift, 0L, static_cast<long>(g.ow));
          const long hi = std::clamp(static_cast<long>(g.w) - shift, lo, static_cast<long>(g.ow));
          for (std::size_t oy = 0; oy < g.oh; ++oy) {
            double* row = dst + oy * g.ow;
            const long iy = static_cast<long>(oy + ky) - pad;
            if (iy < 0 || iy >= static_cast<long>(g.h)) {
              std::fill(row, row + g.ow, 0.0);
              continue;
            }
            const double* src = src_plane + static_cast<std::size_t>(iy) * g.w;
            std::fill(row, row + lo, 0.0);
            if (hi > lo) std::memcpy(row + lo, src + lo + shift, sizeof(double) * (hi - lo));
            std::fill(row + hi, row + g.ow, 0.0);
          }
        }
      }
    }
  }
}

std::vector<double>& scratch() {
  thread_local std::vector<double> buffer;
  return buffer;
}

// out = weight (Cout x patch) * im2col(in) + bias, one output slice per work item.
void conv_forward_raw(const double* in, const ConvGeometry& g, const double* weight,
                      const double* bias, double* out) {
  const auto patch = g.patch();
  const auto plane = g.out_plane();
  Eigen::Map<const RowMat> wmat(weight, g.out_channels, patch);
  parallel_for(g.batch * g.od, [&](std::size_t item) {
    const std::size_t b = item / g.od;
    const std::size_t oz = item % g.od;
    auto& col = scratch();
    col.resize(patch * plane);
    im2col_slice(in + b * g.in_channels * g.d * g.in_plane(), g, oz, col.data());
    Eigen::Map<const RowMat> cmat(col.data(), patch, plane);
    StridedMap omat(out + (b * g.out_channels * g.od + oz) * plane, g.out_channels, plane,
                    Eigen::OuterStride<>(g.od * plane));
    omat.noalias() = wmat * cmat;
    if (bias) {
      for (std::size_t co = 0; co < g.out_channels; ++co) omat.row(co).array() += bias[co];
    }
  });
}

// Sums the per-group partial matrices produced by `fill(group, partial)` in
// group order.
template <typename Fill>
RowMat grouped_reduction(std::size_t items, std::size_t rows, std::size_t cols, Fill&& fill) {
  const std::size_t groups = (items + kReductionGroup - 1) / kReductionGroup;
  std::vector<RowMat> partials(groups);
  parallel_for(groups, [&](std::size_t gidx) {
    partials[gidx] = RowMat::Zero(rows, cols);
    const std::size_t end = std::min(items, (gidx + 1) * kReductionGroup);
    for (std::size_t item = gidx * kReductionGroup; item < end; ++item) fill(item, partials[gidx]);
  });
  RowMat total = RowMat::Zero(rows, cols);
  for (const auto& p : partials) total += p;
  return total;
}

}  // namespace

Tensor conv3d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t padding) {
  require_rank(input, 5, "conv3d input");
  require_rank(weight, 5, "conv3d weight");
  const auto& ws = weight.shape();
  if (ws[2] != ws[3] || ws[2] != ws[4] || ws[2] == 0) {
    throw ShapeError("conv3d: kernel must be cubic, got weight " + shape_to_string(ws));
  }
  if (ws[1] != input.size(1)) {
    throw ShapeError("conv3d: weight expects " + std::to_string(ws[1]) +
                     " input channels, input " + shape_to_string(input.shape()) + " has " +
                     std::to_string(input.size(1)));
  }
  if (bias.dim() != 1 || bias.size(0) != ws[0]) {
    throw ShapeError("conv3d: bias must be [" + std::to_string(ws[0]) + "], got " +
                     shape_to_string(bias.shape()));
  }
  const auto& is = input.shape();
  const ConvGeometry g = make_conv_geometry(is[0], is[1], ws[0], ws[2], padding, is[2], is[3], is[4]);

  std::vector<double> out(g.batch * g.out_channels * g.od * g.out_plane());
  conv_forward_raw(input.data().data(), g, weight.data().data(), bias.data().data(), out.data());

  auto in_impl = input.impl();
  auto w_impl = weight.impl();
  auto b_impl = bias.impl();
  return Tensor::make_result(
      {g.batch, g.out_channels, g.od, g.oh, g.ow}, std::move(out), "conv3d",
      {input, weight, bias}, [g, in_impl, w_impl, b_impl](const detail::TensorImpl& out) {
        const double* dout = out.grad.data();
        const auto plane = g.out_plane();
        const auto k3 = g.kernel * g.kernel * g.kernel;
        if (b_impl->requires_grad) {
          auto& gb = b_impl->grad;
          parallel_for(g.out_channels, [&](std::size_t co) {
            double acc = 0.0;
            for (std::size_t b = 0; b < g.batch; ++b) {
              const double* p = dout + (b * g.out_channels + co) * g.od * plane;
              for (std::size_t i = 0; i < g.od * plane; ++i) acc += p[i];
            }
            gb[co] += acc;
          });
        }
        if (w_impl->requires_grad) {
          const auto patch = g.patch();
          RowMat gw = grouped_reduction(
              g.batch * g.od, g.out_channels, patch, [&](std::size_t item, RowMat& partial) {
                const std::size_t b = item / g.od;
                const std::size_t oz = item % g.od;
                auto& col = scratch();
                col.resize(patch * plane);
                im2col_slice(in_impl->data.data() + b * g.in_channels * g.d * g.in_plane(), g, oz,
                             col.data());
                Eigen::Map<const RowMat> cmat(col.data(), patch, plane);
                ConstStridedMap dmat(dout + (b * g.out_channels * g.od + oz) * plane,
                                     g.out_channels, plane, Eigen::OuterStride<>(g.od * plane));
                partial.noalias() += dmat * cmat.transpose();
              });
          auto& gwv = w_impl->grad;
          for (std::size_t i = 0; i < gwv.size(); ++i) gwv[i] += gw.data()[i];
        }
        if (in_impl->requires_grad) {
          // The input gradient is a correlation of dOut with the spatially
          // flipped, channel-transposed kernel and padding k - 1 - p.
          const auto k = g.kernel;
          std::vector<double> flipped(g.in_channels * g.out_channels * k3);
          const auto& w = w_impl->data;
          for (std::size_t co = 0; co < g.out_channels; ++co)
            for (std::size_t ci = 0; ci < g.in_channels; ++ci)
              for (std::size_t t = 0; t < k3; ++t)
                flipped[(ci * g.out_channels + co) * k3 + (k3 - 1 - t)] =
                    w[(co * g.in_channels + ci) * k3 + t];
          const ConvGeometry back = make_conv_geometry(g.batch, g.out_channels, g.in_channels, k,
                                                       k - 1 - g.padding, g.od, g.oh, g.ow);
          std::vector<double> din(in_impl->data.size());
          conv_forward_raw(dout, back, flipped.data(), nullptr, din.data());
          auto& gi = in_impl->grad;
          for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += din[i];
        }
      });
}

Tensor conv_transpose3d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 5, "conv_transpose3d input");
  require_rank(weight, 5, "conv_transpose3d weight");
  const auto& ws = weight.shape();
  const auto& is = input.shape();
  if (ws[2] != 2 || ws[3] != 2 || ws[4] != 2) {
    throw ShapeError("conv_transpose3d: kernel must be 2x2x2, got weight " + shape_to_string(ws));
  }
  if (ws[0] != is[1]) {
    throw ShapeError("conv_transpose3d: weight expects " + std::to_string(ws[0]) +
                     " input channels, input " + shape_to_string(is) + " has " +
                     std::to_string(is[1]));
  }
  if (bias.dim() != 1 || bias.size(0) != ws[1]) {
    throw ShapeError("conv_transpose3d: bias must be [" + std::to_string(ws[1]) + "], got " +
                     shape_to_string(bias.shape()));
  }
  for (std::size_t a = 2; a < 5; ++a) {
    if (is[a] == 0) throw ShapeError("conv_transpose3d: empty spatial extent in " + shape_to_string(is));
  }
  const std::size_t batch = is[0], cin = is[1], cout = ws[1];
  const std::size_t d = is[2], h = is[3], w = is[4];
  const std::size_t plane = h * w;
  const std::size_t od = 2 * d, oh = 2 * h, ow = 2 * w;

  // wt: (cout * 8) x cin, row = co * 8 + kz * 4 + ky * 2 + kx.
  auto transpose_weight = [cin, cout](const std::vector<double>& wv) {
    RowMat wt(cout * 8, cin);
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t off = 0; off < 8; ++off) wt(co * 8 + off, ci) = wv[(ci * cout + co) * 8 + off];
    return wt;
  };
  const RowMat wt = transpose_weight(weight.impl()->data);
  const double* bv = bias.data().data();
  const double* in = input.data().data();

  std::vector<double> out(batch * cout * od * oh * ow);
  parallel_for(batch * d, [&](std::size_t item) {
    const std::size_t b = item / d;
    const std::size_t z = item % d;
    ConstStridedMap x(in + (b * cin * d + z) * plane, cin, plane, Eigen::OuterStride<>(d * plane));
    auto& buf = scratch();
    buf.resize(cout * 8 * plane);
    Eigen::Map<RowMat> y(buf.data(), cout * 8, plane);
    y.noalias() = wt * x;
    for (std::size_t co = 0; co < cout; ++co) {
      for (std::size_t kz = 0; kz < 2; ++kz) {
        double* oplane = out.data() + ((b * cout + co) * od + 2 * z + kz) * oh * ow;
        for (std::size_t ky = 0; ky < 2; ++ky) {
          for (std::size_t kx = 0; kx < 2; ++kx) {
            const double* src = buf.data() + (co * 8 + kz * 4 + ky * 2 + kx) * plane;
            for (std::size_t yy = 0; yy < h; ++yy) {
              double* orow = oplane + (2 * yy + ky) * ow + kx;
              const double* srow = src + yy * w;
              for (std::size_t xx = 0; xx < w; ++xx) orow[2 * xx] = srow[xx] + bv[co];
            }
          }
        }
      }
    }
  });

  auto in_impl = input.impl();
  auto w_impl = weight.impl();
  auto b_impl = bias.impl();
  return Tensor::make_result(
      {batch, cout, od, oh, ow}, std::move(out), "conv_transpose3d", {input, weight, bias},
      [=](const detail::TensorImpl& res) {
        const double* dout = res.grad.data();
        // Gathers dOut for input slice (b, z) into a (cout * 8) x plane matrix.
        auto gather = [&](std::size_t b, std::size_t z, double* g) {
          for (std::size_t co = 0; co < cout; ++co)
            for (std::size_t kz = 0; kz < 2; ++kz) {
              const double* oplane = dout + ((b * cout + co) * od + 2 * z + kz) * oh * ow;
              for (std::size_t ky = 0; ky < 2; ++ky)
                for (std::size_t kx = 0; kx < 2; ++kx) {
                  double* dst = g + (co * 8 + kz * 4 + ky * 2 + kx) * plane;
                  for (std::size_t yy = 0; yy < h; ++yy) {
                    const double* orow = oplane + (2 * yy + ky) * ow + kx;
                    for (std::size_t xx = 0; xx < w; ++xx) dst[yy * w + xx] = orow[2 * xx];
                  }
                }
            }
        };
        if (b_impl->requires_grad) {
          auto& gb = b_impl->grad;
          parallel_for(cout, [&](std::size_t co) {
            double acc = 0.0;
            for (std::size_t b = 0; b < batch; ++b) {
              const double* p = dout + (b * cout + co) * od * oh * ow;
              for (std::size_t i = 0; i < od * oh * ow; ++i) acc += p[i];
            }
            gb[co] += acc;
          });
        }
        if (w_impl->requires_grad) {
          RowMat gwt = grouped_reduction(batch * d, cout * 8, cin, [&](std::size_t item, RowMat& partial) {
            const std::size_t b = item / d;
            const std::size_t z = item % d;
            auto& buf = scratch();
            buf.resize(cout * 8 * plane);
            gather(b, z, buf.data());
            Eigen::Map<const RowMat> gm(buf.data(), cout * 8, plane);
            ConstStridedMap x(in_impl->data.data() + (b * cin * d + z) * plane, cin, plane,
                              Eigen::OuterStride<>(d * plane));
            partial.noalias() += gm * x.transpose();
          });
          auto& gw = w_impl->grad;
          for (std::size_t ci = 0; ci < cin; ++ci)
            for (std::size_t co = 0; co < cout; ++co)
              for (std::size_t off = 0; off < 8; ++off)
                gw[(ci * cout + co) * 8 + off] += gwt(co * 8 + off, ci);
        }
        if (in_impl->requires_grad) {
          const RowMat wt_now = transpose_weight(w_impl->data);
          auto& gi = in_impl->grad;
          parallel_for(batch * d, [&](std::size_t item) {
            const std::size_t b = item / d;
            const std::size_t z = item % d;
            auto& buf = scratch();
            buf.resize(cout * 8 * plane);
            gather(b, z, buf.data());
            Eigen::Map<const RowMat> gm(buf.data(), cout * 8, plane);
            StridedMap dx(gi.data() + (b * cin * d + z) * plane, cin, plane,
                          Eigen::OuterStride<>(d * plane));
            dx.noalias() += wt_now.transpose() * gm;
          });
        }
      });
}

MaxPoolResult maxpool3d(const Tensor& input) {
  require_rank(input, 5, "maxpool3d input");
  const auto& s = input.shape();
  static constexpr const char* kAxis[] = {"batch", "channel", "depth (z)", "height (y)", "width (x)"};
  for (std::size_t a = 2; a < 5; ++a) {
    if (s[a] % 2 != 0 || s[a] == 0) {
      throw ShapeError(std::string("maxpool3d: ") + kAxis[a] + " extent " + std::to_string(s[a]) +
                       " is not a positive even number");
    }
  }
  const std::size_t nc = s[0] * s[1], d = s[2], h = s[3], w = s[4];
  const std::size_t od = d / 2, oh = h / 2, ow = w / 2;
  const double* in = input.data().data();
  std::vector<double> out(nc * od * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  parallel_for(nc, [&](std::size_t c) {
    const std::size_t ibase = c * d * h * w;
    std::size_t o = c * od * oh * ow;
    for (std::size_t z = 0; z < od; ++z)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x, ++o) {
          std::size_t best = ibase + ((2 * z) * h + 2 * y) * w + 2 * x;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = ibase + ((2 * z + dz) * h + 2 * y + dy) * w + 2 * x + dx;
                if (in[idx] > in[best]) best = idx;
              }
          out[o] = in[best];
          argmax[o] = best;
        }
  });
  auto in_impl = input.impl();
  auto routes = std::make_shared<std::vector<std::size_t>>(argmax);
  Tensor result = Tensor::make_result({s[0], s[1], od, oh, ow}, std::move(out), "maxpool3d", {input},
                                      [in_impl, routes](const detail::TensorImpl& res) {
                                        auto& gi = in_impl->grad;
                                        const auto& r = *routes;
                                        for (std::size_t i = 0; i < r.size(); ++i) gi[r[i]] += res.grad[i];
                                      });
  return {std::move(result), std::move(argmax)};
}

Tensor batchnorm3d(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                   const BatchNormOptions& options) {
  if (input.dim() < 2) throw ShapeError("batchnorm3d: input must have a channel axis");
  const auto& s = input.shape();
  const std::size_t batch = s[0], channels = s[1];
  const std::size_t spatial = shape_numel(s) / (batch * channels);
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw ShapeError("batchnorm3d: gamma/beta must have " + std::to_string(channels) +
                     " entries, got " + std::to_string(gamma.numel()) + "/" + std::to_string(beta.numel()));
  }
  if (stats.running_mean.size() != channels || stats.running_var.size() != channels) {
    throw ShapeError("batchnorm3d: running statistics sized for " +
                     std::to_string(stats.running_mean.size()) + " channels, input has " +
                     std::to_string(channels));
  }
  const double* in = input.data().data();
  const double* gv = gamma.data().data();
  const double* bv = beta.data().data();
  const std::size_t count = batch * spatial;

  std::vector<double> mean(channels), invstd(channels);
  std::vector<double> out(input.numel());
  // xhat is kept for the backward pass in training mode.
  auto xhat = std::make_shared<std::vector<double>>(options.training ? input.numel() : 0);
  parallel_for(channels, [&](std::size_t c) {
    double m, var;
    if (options.training) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = in + (b * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) acc += p[i];
      }
      m = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const double* p = in + (b * channels + c) * spatial;
        for (std::size_t i = 0; i < spatial; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      var = sq / static_cast<double>(count);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      stats.running_mean[c] = (1.0 - options.momentum) * stats.running_mean[c] + options.momentum * m;
      stats.running_var[c] = (1.0 - options.momentum) * stats.running_var[c] + options.momentum * unbiased;
    } else {
      m = stats.running_mean[c];
      var = stats.running_var[c];
    }
    mean[c] = m;
    invstd[c] = 1.0 / std::sqrt(var + options.eps);
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t base = (b * channels + c) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        const double xh = (in[base + i] - m) * invstd[c];
        if (options.training) (*xhat)[base + i] = xh;
        out[base + i] = gv[c] * xh + bv[c];
      }
    }
  });

  auto in_impl = input.impl();
  auto g_impl = gamma.impl();
  auto b_impl = beta.impl();
  const bool training = options.training;
  return Tensor::make_result(
      s, std::move(out), "batchnorm3d", {input, gamma, beta},
      [=](const detail::TensorImpl& res) {
        const double* dy = res.grad.data();
        const double* x = in_impl->data.data();
        parallel_for(channels, [&](std::size_t c) {
          const double gc = g_impl->data[c];
          double sum_dy = 0.0, sum_dy_xh = 0.0;
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              const double xh = training ? (*xhat)[base + i] : (x[base + i] - mean[c]) * invstd[c];
              sum_dy += dy[base + i];
              sum_dy_xh += dy[base + i] * xh;
            }
          }
          if (g_impl->requires_grad) g_impl->grad[c] += sum_dy_xh;
          if (b_impl->requires_grad) b_impl->grad[c] += sum_dy;
          if (!in_impl->requires_grad) return;
          auto& gi = in_impl->grad;
          const double n = static_cast<double>(count);
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t base = (b * channels + c) * spatial;
            for (std::size_t i = 0; i < spatial; ++i) {
              if (training) {
                const double xh = (*xhat)[base + i];
                gi[base + i] += gc * invstd[c] * (dy[base + i] - sum_dy / n - xh * sum_dy_xh / n);
              } else {
                gi[base + i] += gc * invstd[c] * dy[base + i];
              }
            }
          }
        });
      });
}

Tensor relu(const Tensor& input) {
  const auto in = input.data();
  std::vector<double> out(in.size());
  // NaN passes through so a corrupted input cannot vanish silently.
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 || std::isnan(in[i]) ? in[i] : 0.0;
  auto in_impl = input.impl();
  return Tensor::make_result(input.shape(), std::move(out), "relu", {input},
                             [in_impl](const detail::TensorImpl& res) {
                               auto& gi = in_impl->grad;
                               const auto& x = in_impl->data;
                               for (std::size_t i = 0; i < gi.size(); ++i)
                                 if (x[i] > 0.0) gi[i] += res.grad[i];
                             });
}

Tensor apply_mask(const Tensor& input, const LabelTensor& mask) {
  if (input.shape() != mask.shape()) {
    throw ShapeError("apply_mask: input " + shape_to_string(input.shape()) + " vs mask " +
                     shape_to_string(mask.shape()));
  }
  const auto in = input.data();
  const auto m = mask.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = m[i] ? in[i] : 0.0;
  auto in_impl = input.impl();
  std::vector<std::uint8_t> keep(m.begin(), m.end());
  return Tensor::make_result(input.shape(), std::move(out), "apply_mask", {input},
                             [in_impl, keep = std::move(keep)](const detail::TensorImpl& res) {
                               auto& gi = in_impl->grad;
                               for (std::size_t i = 0; i < gi.size(); ++i)
                                 if (keep[i]) gi[i] += res.grad[i];
                             });
}

Tensor sigmoid(const Tensor& input) {
  const auto in = input.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    // Branches keep exp() from overflowing for large |x|.
    out[i] = in[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-in[i])) : std::exp(in[i]) / (1.0 + std::exp(in[i]));
  }
  auto in_impl = input.impl();
  return Tensor::make_result(input.shape(), std::move(out), "sigmoid", {input},
                             [in_impl](const detail::TensorImpl& res) {
                               auto& gi = in_impl->grad;
                               for (std::size_t i = 0; i < gi.size(); ++i) {
                                 const double y = res.data[i];
                                 gi[i] += res.grad[i] * y * (1.0 - y);
                               }
                             });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.dim() < 2 || a.dim() != b.dim()) {
    throw ShapeError("concat_channels: incompatible ranks " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (i != 1 && sa[i] != sb[i]) {
      throw ShapeError("concat_channels: extents differ on axis " + std::to_string(i) + ": " +
                       shape_to_string(sa) + " vs " + shape_to_string(sb));
    }
  }
  const std::size_t batch = sa[0];
  const std::size_t block_a = a.numel() / batch;
  const std::size_t block_b = b.numel() / batch;
  std::vector<double> out(a.numel() + b.numel());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t n = 0; n < batch; ++n) {
    std::copy(pa + n * block_a, pa + (n + 1) * block_a, out.begin() + n * (block_a + block_b));
    std::copy(pb + n * block_b, pb + (n + 1) * block_b, out.begin() + n * (block_a + block_b) + block_a);
  }
  Shape shape = sa;
  shape[1] = sa[1] + sb[1];
  auto ia = a.impl();
  auto ib = b.impl();
  return Tensor::make_result(std::move(shape), std::move(out), "concat_channels", {a, b},
                             [=](const detail::TensorImpl& res) {
                               for (std::size_t n = 0; n < batch; ++n) {
                                 const double* g = res.grad.data() + n * (block_a + block_b);
                                 if (ia->requires_grad)
                                   for (std::size_t i = 0; i < block_a; ++i) ia->grad[n * block_a + i] += g[i];
                                 if (ib->requires_grad)
                                   for (std::size_t i = 0; i < block_b; ++i)
                                     ib->grad[n * block_b + i] += g[block_a + i];
                               }
                             });
}

Tensor sum(const Tensor& input) {
  double acc = 0.0;
  for (double v : input.data()) acc += v;
  auto in_impl = input.impl();
  return Tensor::make_result({1}, {acc}, "sum", {input}, [in_impl](const detail::TensorImpl& res) {
    for (auto& g : in_impl->grad) g += res.grad[0];
  });
}

Tensor square(const Tensor& input) {
  const auto in = input.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * in[i];
  auto in_impl = input.impl();
  return Tensor::make_result(input.shape(), std::move(out), "square", {input},
                             [in_impl](const detail::TensorImpl& res) {
                               for (std::size_t i = 0; i < in_impl->grad.size(); ++i)
                                 in_impl->grad[i] += 2.0 * in_impl->data[i] * res.grad[i];
                             });
}

Tensor weighted_sum(const Tensor& input, std::span<const double> weights) {
  if (weights.size() != input.numel()) {
    throw ShapeError("weighted_sum: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(input.numel()) + " values");
  }
  const auto in = input.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) acc += in[i] * weights[i];
  auto in_impl = input.impl();
  std::vector<double> w(weights.begin(), weights.end());
  return Tensor::make_result({1}, {acc}, "weighted_sum", {input},
                             [in_impl, w = std::move(w)](const detail::TensorImpl& res) {
                               for (std::size_t i = 0; i < w.size(); ++i) in_impl->grad[i] += w[i] * res.grad[0];
                             });
}

}  // namespace vseg

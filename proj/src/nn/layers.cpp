#include "voxgrid/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Dense>

#include "voxgrid/errors.hpp"

namespace voxgrid::nn {

std::string shape_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv3d: return "conv3d";
    case LayerKind::AvgPool3d: return "avgpool3d";
    case LayerKind::ReLU: return "relu";
    case LayerKind::SiLU: return "silu";
    case LayerKind::Tanhshrink: return "tanhshrink";
    case LayerKind::GroupNorm: return "groupnorm";
    case LayerKind::LayerNorm: return "layernorm";
    case LayerKind::Linear: return "linear";
    case LayerKind::ResidualBlock: return "residual_block";
    case LayerKind::SelfAttention: return "self_attention";
    case LayerKind::GlobalAvgPool: return "global_avgpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Sequential: return "sequential";
  }
  return "?";
}

namespace {

LayerSpec of(LayerKind kind) {
  LayerSpec s;
  s.kind = kind;
  return s;
}

}  // namespace

LayerSpec LayerSpec::conv3d(int in, int out, int stride, int kernel) {
  LayerSpec s = of(LayerKind::Conv3d);
  s.in = in;
  s.out = out;
  s.stride = stride;
  s.kernel = kernel;
  return s;
}
LayerSpec LayerSpec::avgpool3d(int kernel) {
  LayerSpec s = of(LayerKind::AvgPool3d);
  s.kernel = kernel;
  return s;
}
LayerSpec LayerSpec::relu() { return of(LayerKind::ReLU); }
LayerSpec LayerSpec::silu() { return of(LayerKind::SiLU); }
LayerSpec LayerSpec::tanhshrink() { return of(LayerKind::Tanhshrink); }
LayerSpec LayerSpec::groupnorm(int groups, int channels) {
  LayerSpec s = of(LayerKind::GroupNorm);
  s.groups = groups;
  s.in = s.out = channels;
  return s;
}
LayerSpec LayerSpec::layernorm(int features) {
  LayerSpec s = of(LayerKind::LayerNorm);
  s.in = s.out = features;
  return s;
}
LayerSpec LayerSpec::linear(int in, int out) {
  LayerSpec s = of(LayerKind::Linear);
  s.in = in;
  s.out = out;
  return s;
}
LayerSpec LayerSpec::residual(int in, int out, std::vector<LayerSpec> body) {
  LayerSpec s = of(LayerKind::ResidualBlock);
  s.in = in;
  s.out = out;
  s.body = std::move(body);
  return s;
}
LayerSpec LayerSpec::self_attention(int channels) {
  LayerSpec s = of(LayerKind::SelfAttention);
  s.in = s.out = channels;
  return s;
}
LayerSpec LayerSpec::global_avgpool() { return of(LayerKind::GlobalAvgPool); }
LayerSpec LayerSpec::flatten() { return of(LayerKind::Flatten); }
LayerSpec LayerSpec::sequential(std::vector<LayerSpec> body) {
  LayerSpec s = of(LayerKind::Sequential);
  s.body = std::move(body);
  return s;
}

namespace {

[[noreturn]] void shape_error(const LayerSpec& spec, const std::string& what, const Shape& got) {
  throw ShapeError(std::string(to_string(spec.kind)) + ": " + what + ", got input " +
                   shape_string(got));
}

void require_volume(const LayerSpec& spec, const Shape& in, int channels) {
  if (in.size() != 5) shape_error(spec, "expects (N,C,D,H,W)", in);
  if (channels > 0 && in[1] != channels) {
    shape_error(spec, "expects " + std::to_string(channels) + " channels", in);
  }
}

}  // namespace

Shape infer_shape(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::Conv3d: {
      require_volume(spec, in, spec.in);
      const int pad = spec.kernel / 2;
      Shape out{in[0], spec.out, 0, 0, 0};
      for (int a = 2; a < 5; ++a) {
        out[a] = (in[a] + 2 * pad - spec.kernel) / spec.stride + 1;
        if (out[a] < 1) shape_error(spec, "spatial extent too small", in);
      }
      return out;
    }
    case LayerKind::AvgPool3d: {
      require_volume(spec, in, 0);
      for (int a = 2; a < 5; ++a) {
        if (in[a] % spec.kernel != 0) {
          shape_error(spec, "spatial extent must be divisible by " + std::to_string(spec.kernel), in);
        }
      }
      return {in[0], in[1], in[2] / spec.kernel, in[3] / spec.kernel, in[4] / spec.kernel};
    }
    case LayerKind::ReLU:
    case LayerKind::SiLU:
    case LayerKind::Tanhshrink:
      return in;
    case LayerKind::GroupNorm:
      require_volume(spec, in, spec.in);
      if (spec.groups < 1 || spec.in % spec.groups != 0) {
        shape_error(spec, "channels must be divisible by groups", in);
      }
      return in;
    case LayerKind::LayerNorm:
      if (in.size() != 2 || in[1] != spec.in) {
        shape_error(spec, "expects (N," + std::to_string(spec.in) + ")", in);
      }
      return in;
    case LayerKind::Linear:
      if (in.size() != 2 || in[1] != spec.in) {
        shape_error(spec, "expects (N," + std::to_string(spec.in) + ")", in);
      }
      return {in[0], spec.out};
    case LayerKind::ResidualBlock: {
      require_volume(spec, in, spec.in);
      Shape body = in;
      for (const auto& l : spec.body) body = infer_shape(l, body);
      Shape skip = in;
      skip[1] = spec.out;
      if (body != skip) shape_error(spec, "body output " + shape_string(body) + " != skip", in);
      return body;
    }
    case LayerKind::SelfAttention:
      require_volume(spec, in, spec.in);
      return in;
    case LayerKind::GlobalAvgPool:
      require_volume(spec, in, 0);
      return {in[0], in[1]};
    case LayerKind::Flatten:
      require_volume(spec, in, 0);
      return {in[0], in[1] * in[2] * in[3] * in[4]};
    case LayerKind::Sequential: {
      Shape s = in;
      for (const auto& l : spec.body) s = infer_shape(l, s);
      return s;
    }
  }
  return in;
}

std::size_t param_count(const LayerSpec& spec) {
  const auto k3 = static_cast<std::size_t>(spec.kernel) * spec.kernel * spec.kernel;
  switch (spec.kind) {
    case LayerKind::Conv3d:
      return static_cast<std::size_t>(spec.out) * spec.in * k3 + spec.out;
    case LayerKind::GroupNorm:
    case LayerKind::LayerNorm:
      return 2 * static_cast<std::size_t>(spec.in);
    case LayerKind::Linear:
      return static_cast<std::size_t>(spec.out) * spec.in + spec.out;
    case LayerKind::SelfAttention:
      return 4 * static_cast<std::size_t>(spec.in) * spec.in + 4 * static_cast<std::size_t>(spec.in);
    case LayerKind::ResidualBlock: {
      std::size_t n = spec.in != spec.out ? param_count(LayerSpec::conv3d(spec.in, spec.out, 1, 1)) : 0;
      for (const auto& l : spec.body) n += param_count(l);
      return n;
    }
    case LayerKind::Sequential: {
      std::size_t n = 0;
      for (const auto& l : spec.body) n += param_count(l);
      return n;
    }
    default:
      return 0;
  }
}

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using CMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using CStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void he_uniform(std::span<T> w, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
}

// ---------------------------------------------------------------------------

template <typename T>
class Conv3d final : public Layer<T> {
 public:
  explicit Conv3d(const LayerSpec& s) : Layer<T>(s) {
    if (s.in < 1 || s.out < 1 || s.stride < 1 || (s.kernel != 1 && s.kernel != 3)) {
      throw ArgumentError("conv3d: invalid configuration");
    }
  }

  std::size_t param_count() const override { return nn::param_count(this->spec_); }

  void init_params(std::span<T> p, Rng& rng) const override {
    const std::size_t nw = weights();
    he_uniform(p.subspan(0, nw), static_cast<std::size_t>(this->spec_.in) * k3(), rng);
    std::fill(p.begin() + nw, p.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, std::span<const T> p) override {
    Tensor<T> y(infer_shape(this->spec_, x.shape));
    input_ = x;
    const auto& s = this->spec_;
    const int kdim = s.in * k3();
    CMatMap<T> w(p.data(), s.out, kdim);
    const T* bias = p.data() + weights();
    const std::size_t out_vox = static_cast<std::size_t>(y.dim(2)) * y.dim(3) * y.dim(4);
    const bool direct = use_direct(x.shape);
    for (int n = 0; n < x.batch(); ++n) {
      T* yn = y.item(n);
      if (direct) {
        direct_forward(x.item(n), p.data(), yn, x.shape);
      } else {
        for_each_chunk(x.shape, y.shape, [&](int z0, int z1) {
          const std::size_t p0 = static_cast<std::size_t>(z0) * y.dim(3) * y.dim(4);
          const auto cols = static_cast<Eigen::Index>(static_cast<std::size_t>(z1 - z0) * y.dim(3) * y.dim(4));
          const T* col = im2col(x, n, y.shape, z0, z1);
          CMatMap<T> cm(col, kdim, cols);
          StridedMap<T> ym(yn + p0, s.out, cols, Eigen::OuterStride<>(static_cast<Eigen::Index>(out_vox)));
          ym.noalias() = w * cm;
        });
      }
      for (int c = 0; c < s.out; ++c) {
        T* row = yn + static_cast<std::size_t>(c) * out_vox;
        for (std::size_t i = 0; i < out_vox; ++i) row[i] += bias[c];
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T> p, std::span<T> grad) override {
    const auto& s = this->spec_;
    const Tensor<T>& x = input_;
    Tensor<T> dx(x.shape);
    const int kdim = s.in * k3();
    CMatMap<T> w(p.data(), s.out, kdim);
    MatMap<T> dw(grad.data(), s.out, kdim);
    T* dbias = grad.data() + weights();
    const std::size_t out_vox = static_cast<std::size_t>(dy.dim(2)) * dy.dim(3) * dy.dim(4);
    for (int n = 0; n < x.batch(); ++n) {
      const T* dyn = dy.item(n);
      for (int c = 0; c < s.out; ++c) {
        const T* row = dyn + static_cast<std::size_t>(c) * out_vox;
        T acc = 0;
        for (std::size_t i = 0; i < out_vox; ++i) acc += row[i];
        dbias[c] += acc;
      }
      if (use_direct(x.shape)) {
        direct_backward(x.item(n), dyn, p.data(), grad.data(), dx.item(n), x.shape);
        continue;
      }
      for_each_chunk(x.shape, dy.shape, [&](int z0, int z1) {
        const std::size_t p0 = static_cast<std::size_t>(z0) * dy.dim(3) * dy.dim(4);
        const auto cols = static_cast<Eigen::Index>(static_cast<std::size_t>(z1 - z0) * dy.dim(3) * dy.dim(4));
        CStridedMap<T> dym(dyn + p0, s.out, cols, Eigen::OuterStride<>(static_cast<Eigen::Index>(out_vox)));
        const T* col = im2col(x, n, dy.shape, z0, z1);
        CMatMap<T> cm(col, kdim, cols);
        dw.noalias() += dym * cm.transpose();
        dcol_.resize(static_cast<std::size_t>(kdim) * cols);
        MatMap<T> dcm(dcol_.data(), kdim, cols);
        dcm.noalias() = w.transpose() * dym;
        col2im(dx, n, dy.shape, z0, z1);
      });
    }
    return dx;
  }

 private:
  int k3() const { return this->spec_.kernel * this->spec_.kernel * this->spec_.kernel; }
  std::size_t weights() const {
    return static_cast<std::size_t>(this->spec_.out) * this->spec_.in * k3();
  }

  // Stride-1 3x3x3 kernels on larger grids run as stencils over a zero-padded
  // copy of the volume: output voxel (z,y,x) lives at z*P + y*R + x of a
  // buffer with the padded strides, so every tap is one contiguous pass. The
  // im2col buffer would otherwise dominate when channel counts are small.
  bool use_direct(const Shape& in) const {
    return this->spec_.kernel == 3 && this->spec_.stride == 1 && in[4] >= 16;
  }

  struct Padded {
    std::size_t R, P, plane, L;
  };

  static Padded padded(const Shape& in) {
    const std::size_t D = in[2], H = in[3], W = in[4];
    Padded g;
    g.R = W + 2;
    g.P = (H + 2) * g.R;
    g.plane = (D + 2) * g.P;
    g.L = (D - 1) * g.P + (H - 1) * g.R + W;
    return g;
  }

  static void pad(const T* src, T* dst, const Shape& in, const Padded& g) {
    const int D = in[2], H = in[3], W = in[4];
    std::fill(dst, dst + g.plane, T(0));
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y) {
        std::copy_n(src + (static_cast<std::size_t>(z) * H + y) * W, W,
                    dst + (z + 1) * g.P + (y + 1) * g.R + 1);
      }
  }

  // out[o] += sum_k w[k] * in[o + offset(k)] for o in [o0, o1).
  static void stencil(const T* __restrict in, const T* w, T* __restrict out, std::size_t o0,
                      std::size_t o1, const Padded& g) {
    for (int kz = 0; kz < 3; ++kz)
      for (int ky = 0; ky < 3; ++ky) {
        const T* base = in + kz * g.P + ky * g.R;
        const T a = w[kz * 9 + ky * 3], b = w[kz * 9 + ky * 3 + 1], c = w[kz * 9 + ky * 3 + 2];
        for (std::size_t o = o0; o < o1; ++o) out[o] += a * base[o] + b * base[o + 1] + c * base[o + 2];
      }
  }

  // acc[j] += sum_o d[o] * x[o + j] for j = 0, 1, 2; lane-blocked so the
  // reduction vectorizes with a fixed summation order.
  static void dot3(const T* __restrict d, const T* __restrict x, std::size_t n, T* acc) {
    constexpr int V = 16;
    T a[V] = {}, b[V] = {}, c[V] = {};
    std::size_t o = 0;
    for (; o + V <= n; o += V) {
      for (int l = 0; l < V; ++l) {
        a[l] += d[o + l] * x[o + l];
        b[l] += d[o + l] * x[o + l + 1];
        c[l] += d[o + l] * x[o + l + 2];
      }
    }
    for (int l = 0; o + l < n; ++l) {
      a[l] += d[o + l] * x[o + l];
      b[l] += d[o + l] * x[o + l + 1];
      c[l] += d[o + l] * x[o + l + 2];
    }
    for (int l = 0; l < V; ++l) {
      acc[0] += a[l];
      acc[1] += b[l];
      acc[2] += c[l];
    }
  }

  // dst[c] = sum over src channels of stencil(src[ci], weight(c, ci)).
  void stencil_all(const std::vector<T>& src, int src_ch, int dst_ch, const T* weights, bool flip,
                   std::vector<T>& dst, const Padded& g) const {
    dst.assign(static_cast<std::size_t>(dst_ch) * g.L, T(0));
    T wk[27];
    constexpr std::size_t kChunk = 2048;
    for (int c = 0; c < dst_ch; ++c) {
      T* out = dst.data() + c * g.L;
      for (std::size_t o0 = 0; o0 < g.L; o0 += kChunk) {
        const std::size_t o1 = std::min(g.L, o0 + kChunk);
        for (int ci = 0; ci < src_ch; ++ci) {
          const std::size_t co = flip ? ci : c, cin = flip ? c : ci;
          const T* w = weights + (co * this->spec_.in + cin) * 27;
          for (int k = 0; k < 27; ++k) wk[k] = flip ? w[26 - k] : w[k];
          stencil(src.data() + ci * g.plane, wk, out, o0, o1, g);
        }
      }
    }
  }

  static void unpad_out(const T* src, T* dst, const Shape& in, const Padded& g, bool accumulate) {
    const int D = in[2], H = in[3], W = in[4];
    for (int z = 0; z < D; ++z)
      for (int y = 0; y < H; ++y) {
        const T* s = src + z * g.P + y * g.R;
        T* d = dst + (static_cast<std::size_t>(z) * H + y) * W;
        for (int x = 0; x < W; ++x) d[x] = accumulate ? d[x] + s[x] : s[x];
      }
  }

  void direct_forward(const T* xn, const T* w, T* yn, const Shape& in) {
    const auto& s = this->spec_;
    const Padded g = padded(in);
    const std::size_t vox = static_cast<std::size_t>(in[2]) * in[3] * in[4];
    xpad_.resize(static_cast<std::size_t>(s.in) * g.plane);
    for (int ci = 0; ci < s.in; ++ci) pad(xn + ci * vox, xpad_.data() + ci * g.plane, in, g);
    stencil_all(xpad_, s.in, s.out, w, false, out_, g);
    for (int co = 0; co < s.out; ++co) unpad_out(out_.data() + co * g.L, yn + co * vox, in, g, true);
  }

  void direct_backward(const T* xn, const T* dyn, const T* w, T* dw, T* dxn, const Shape& in) {
    const auto& s = this->spec_;
    const Padded g = padded(in);
    const std::size_t vox = static_cast<std::size_t>(in[2]) * in[3] * in[4];
    xpad_.resize(static_cast<std::size_t>(s.in) * g.plane);
    for (int ci = 0; ci < s.in; ++ci) pad(xn + ci * vox, xpad_.data() + ci * g.plane, in, g);
    // dy in padded-output layout (zeros off the lattice) for the weight gradient.
    std::vector<T> dyo(static_cast<std::size_t>(s.out) * g.L, T(0));
    for (int co = 0; co < s.out; ++co) {
      const T* src = dyn + co * vox;
      T* dst = dyo.data() + co * g.L;
      for (int z = 0; z < in[2]; ++z)
        for (int y = 0; y < in[3]; ++y)
          std::copy_n(src + (static_cast<std::size_t>(z) * in[3] + y) * in[4], in[4], dst + z * g.P + y * g.R);
    }
    for (int co = 0; co < s.out; ++co) {
      const T* d = dyo.data() + co * g.L;
      for (int ci = 0; ci < s.in; ++ci) {
        T* dwk = dw + (static_cast<std::size_t>(co) * s.in + ci) * 27;
        const T* xp = xpad_.data() + ci * g.plane;
        for (int k = 0; k < 27; k += 3) dot3(d, xp + (k / 9) * g.P + ((k / 3) % 3) * g.R, g.L, dwk + k);
      }
    }
    // Input gradient: the same stencil with a flipped kernel over padded dy.
    dypad_.resize(static_cast<std::size_t>(s.out) * g.plane);
    for (int co = 0; co < s.out; ++co) pad(dyn + co * vox, dypad_.data() + co * g.plane, in, g);
    stencil_all(dypad_, s.out, s.in, w, true, out_, g);
    for (int ci = 0; ci < s.in; ++ci) unpad_out(out_.data() + ci * g.L, dxn + ci * vox, in, g, true);
  }

  // Splits output z-slices so the column buffer stays around 4M elements.
  template <typename F>
  void for_each_chunk(const Shape& in, const Shape& out, F&& f) const {
    const std::size_t per_slice =
        static_cast<std::size_t>(in[1]) * k3() * out[3] * out[4];
    const int step = static_cast<int>(std::max<std::size_t>(1, (std::size_t{1} << 22) / per_slice));
    for (int z0 = 0; z0 < out[2]; z0 += step) f(z0, std::min(out[2], z0 + step));
  }

  const T* im2col(const Tensor<T>& x, int n, const Shape& out, int z0, int z1) {
    const auto& s = this->spec_;
    const int k = s.kernel, pad = k / 2, st = s.stride;
    const int D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int OH = out[3], OW = out[4];
    const std::size_t cols = static_cast<std::size_t>(z1 - z0) * OH * OW;
    col_.resize(static_cast<std::size_t>(s.in) * k3() * cols);
    const T* xn = x.item(n);
    T* dst = col_.data();
    for (int ci = 0; ci < s.in; ++ci) {
      const T* xc = xn + static_cast<std::size_t>(ci) * D * H * W;
      for (int kz = 0; kz < k; ++kz)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            for (int oz = z0; oz < z1; ++oz) {
              const int iz = oz * st + kz - pad;
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * st + ky - pad;
                if (iz < 0 || iz >= D || iy < 0 || iy >= H) {
                  std::fill(dst, dst + OW, T(0));
                  dst += OW;
                  continue;
                }
                const T* src = xc + (static_cast<std::size_t>(iz) * H + iy) * W;
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * st + kx - pad;
                  *dst++ = (ix >= 0 && ix < W) ? src[ix] : T(0);
                }
              }
            }
          }
    }
    return col_.data();
  }

  void col2im(Tensor<T>& dx, int n, const Shape& out, int z0, int z1) const {
    const auto& s = this->spec_;
    const int k = s.kernel, pad = k / 2, st = s.stride;
    const int D = dx.dim(2), H = dx.dim(3), W = dx.dim(4);
    const int OH = out[3], OW = out[4];
    T* xn = dx.item(n);
    const T* src = dcol_.data();
    for (int ci = 0; ci < s.in; ++ci) {
      T* xc = xn + static_cast<std::size_t>(ci) * D * H * W;
      for (int kz = 0; kz < k; ++kz)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            for (int oz = z0; oz < z1; ++oz) {
              const int iz = oz * st + kz - pad;
              for (int oy = 0; oy < OH; ++oy) {
                const int iy = oy * st + ky - pad;
                if (iz < 0 || iz >= D || iy < 0 || iy >= H) {
                  src += OW;
                  continue;
                }
                T* dst = xc + (static_cast<std::size_t>(iz) * H + iy) * W;
                for (int ox = 0; ox < OW; ++ox) {
                  const int ix = ox * st + kx - pad;
                  if (ix >= 0 && ix < W) dst[ix] += src[ox];
                }
                src += OW;
              }
            }
          }
    }
  }

  Tensor<T> input_;
  std::vector<T> col_;
  std::vector<T> dcol_;
  std::vector<T> xpad_;
  std::vector<T> dypad_;
  std::vector<T> out_;
};

// ---------------------------------------------------------------------------

template <typename T>
class AvgPool3d final : public Layer<T> {
 public:
  explicit AvgPool3d(const LayerSpec& s) : Layer<T>(s) {
    if (s.kernel < 1) throw ArgumentError("avgpool3d: kernel must be positive");
  }

  Tensor<T> forward(const Tensor<T>& x, std::span<const T>) override {
    in_shape_ = x.shape;
    Tensor<T> y(infer_shape(this->spec_, x.shape));
    const int k = this->spec_.kernel;
    const T scale = T(1) / static_cast<T>(k * k * k);
    visit(x.shape, [&](std::size_t xi, std::size_t yi) { y.data[yi] += x.data[xi] * scale; });
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T>, std::span<T>) override {
    Tensor<T> dx(in_shape_);
    const int k = this->spec_.kernel;
    const T scale = T(1) / static_cast<T>(k * k * k);
    visit(in_shape_, [&](std::size_t xi, std::size_t yi) { dx.data[xi] = dy.data[yi] * scale; });
    return dx;
  }

 private:
  template <typename F>
  void visit(const Shape& in, F&& f) const {
    const int k = this->spec_.kernel;
    const int D = in[2], H = in[3], W = in[4];
    const int OD = D / k, OH = H / k, OW = W / k;
    const std::size_t planes = static_cast<std::size_t>(in[0]) * in[1];
    for (std::size_t pl = 0; pl < planes; ++pl) {
      for (int z = 0; z < D; ++z)
        for (int y = 0; y < H; ++y)
          for (int x = 0; x < W; ++x) {
            const std::size_t xi = ((pl * D + z) * H + y) * W + x;
            const std::size_t yi = ((pl * OD + z / k) * OH + y / k) * OW + x / k;
            f(xi, yi);
          }
    }
  }

  Shape in_shape_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Activation final : public Layer<T> {
 public:
  explicit Activation(const LayerSpec& s) : Layer<T>(s) {}

  Tensor<T> forward(const Tensor<T>& x, std::span<const T>) override {
    input_ = x;
    Tensor<T> y(x.shape);
    const auto kind = this->spec_.kind;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const T v = x.data[i];
      switch (kind) {
        case LayerKind::ReLU: y.data[i] = v > T(0) ? v : T(0); break;
        case LayerKind::SiLU: y.data[i] = v / (T(1) + std::exp(-v)); break;
        default: y.data[i] = v - std::tanh(v); break;
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T>, std::span<T>) override {
    Tensor<T> dx(dy.shape);
    const auto kind = this->spec_.kind;
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const T v = input_.data[i];
      T d;
      switch (kind) {
        case LayerKind::ReLU: d = v > T(0) ? T(1) : T(0); break;
        case LayerKind::SiLU: {
          const T sg = T(1) / (T(1) + std::exp(-v));
          d = sg * (T(1) + v * (T(1) - sg));
          break;
        }
        default: {
          const T t = std::tanh(v);
          d = t * t;
          break;
        }
      }
      dx.data[i] = dy.data[i] * d;
    }
    return dx;
  }

 private:
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

// Shared normalization core: normalizes `groups` contiguous blocks per item and
// applies a per-feature affine map where feature f covers `inner` elements.
template <typename T>
class Normalization final : public Layer<T> {
 public:
  explicit Normalization(const LayerSpec& s) : Layer<T>(s) {
    if (s.in < 1) throw ArgumentError("normalization: feature count must be positive");
    if (s.kind == LayerKind::GroupNorm && (s.groups < 1 || s.in % s.groups != 0)) {
      throw ArgumentError("groupnorm: channels must be divisible by groups");
    }
  }

  std::size_t param_count() const override { return 2 * static_cast<std::size_t>(this->spec_.in); }

  void init_params(std::span<T> p, Rng&) const override {
    const std::size_t f = static_cast<std::size_t>(this->spec_.in);
    std::fill(p.begin(), p.begin() + f, T(1));
    std::fill(p.begin() + f, p.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, std::span<const T> p) override {
    infer_shape(this->spec_, x.shape);
    layout(x.shape);
    xhat_ = Tensor<T>(x.shape);
    inv_std_.assign(static_cast<std::size_t>(x.batch()) * groups_, T(0));
    Tensor<T> y(x.shape);
    const T* gamma = p.data();
    const T* beta = p.data() + this->spec_.in;
    const std::size_t block = x.item_size() / groups_;
    for (int n = 0; n < x.batch(); ++n) {
      for (int g = 0; g < groups_; ++g) {
        const std::size_t off = static_cast<std::size_t>(n) * x.item_size() + g * block;
        double mean = 0.0;
        for (std::size_t i = 0; i < block; ++i) mean += x.data[off + i];
        mean /= static_cast<double>(block);
        double var = 0.0;
        for (std::size_t i = 0; i < block; ++i) {
          const double d = x.data[off + i] - mean;
          var += d * d;
        }
        var /= static_cast<double>(block);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + kEps));
        inv_std_[static_cast<std::size_t>(n) * groups_ + g] = inv;
        const T m = static_cast<T>(mean);
        for (std::size_t fi = 0; fi < block / inner_; ++fi) {
          const std::size_t f = g * block / inner_ + fi;
          const T ga = gamma[f], be = beta[f];
          const T* xs = x.data.data() + off + fi * inner_;
          T* xh = xhat_.data.data() + off + fi * inner_;
          T* ys = y.data.data() + off + fi * inner_;
          for (std::size_t i = 0; i < inner_; ++i) {
            xh[i] = (xs[i] - m) * inv;
            ys[i] = xh[i] * ga + be;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T> p, std::span<T> grad) override {
    Tensor<T> dx(dy.shape);
    const T* gamma = p.data();
    T* dgamma = grad.data();
    T* dbeta = grad.data() + this->spec_.in;
    const std::size_t item = dy.item_size();
    const std::size_t block = item / groups_;
    for (int n = 0; n < dy.batch(); ++n) {
      for (int g = 0; g < groups_; ++g) {
        const std::size_t off = static_cast<std::size_t>(n) * item + g * block;
        const std::size_t nf = block / inner_;
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t fi = 0; fi < nf; ++fi) {
          const std::size_t f = g * nf + fi;
          const T* d = dy.data.data() + off + fi * inner_;
          const T* xh = xhat_.data.data() + off + fi * inner_;
          double sd = 0.0, sdx = 0.0;
          for (std::size_t i = 0; i < inner_; ++i) {
            sd += d[i];
            sdx += static_cast<double>(d[i]) * xh[i];
          }
          dgamma[f] += static_cast<T>(sdx);
          dbeta[f] += static_cast<T>(sd);
          sum_d += sd * gamma[f];
          sum_dx += sdx * gamma[f];
        }
        const T mean_d = static_cast<T>(sum_d / static_cast<double>(block));
        const T mean_dx = static_cast<T>(sum_dx / static_cast<double>(block));
        const T inv = inv_std_[static_cast<std::size_t>(n) * groups_ + g];
        for (std::size_t fi = 0; fi < nf; ++fi) {
          const T ga = gamma[g * nf + fi];
          const T* d = dy.data.data() + off + fi * inner_;
          const T* xh = xhat_.data.data() + off + fi * inner_;
          T* out = dx.data.data() + off + fi * inner_;
          for (std::size_t i = 0; i < inner_; ++i) out[i] = (d[i] * ga - mean_d - xh[i] * mean_dx) * inv;
        }
      }
    }
    return dx;
  }

 private:
  static constexpr double kEps = 1e-5;

  void layout(const Shape& in) {
    if (this->spec_.kind == LayerKind::GroupNorm) {
      groups_ = this->spec_.groups;
      inner_ = static_cast<std::size_t>(in[2]) * in[3] * in[4];
    } else {
      groups_ = 1;
      inner_ = 1;
    }
  }

  int groups_ = 1;
  std::size_t inner_ = 1;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Linear final : public Layer<T> {
 public:
  explicit Linear(const LayerSpec& s) : Layer<T>(s) {
    if (s.in < 1 || s.out < 1) throw ArgumentError("linear: invalid configuration");
  }

  std::size_t param_count() const override { return nn::param_count(this->spec_); }

  void init_params(std::span<T> p, Rng& rng) const override {
    const std::size_t nw = static_cast<std::size_t>(this->spec_.out) * this->spec_.in;
    he_uniform(p.subspan(0, nw), static_cast<std::size_t>(this->spec_.in), rng);
    std::fill(p.begin() + nw, p.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, std::span<const T> p) override {
    Tensor<T> y(infer_shape(this->spec_, x.shape));
    input_ = x;
    const auto& s = this->spec_;
    CMatMap<T> w(p.data(), s.out, s.in);
    CMatMap<T> xm(x.data.data(), x.batch(), s.in);
    MatMap<T> ym(y.data.data(), x.batch(), s.out);
    ym.noalias() = xm * w.transpose();
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(p.data() + w.size(), s.out);
    ym.rowwise() += b;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T> p, std::span<T> grad) override {
    const auto& s = this->spec_;
    Tensor<T> dx(input_.shape);
    CMatMap<T> w(p.data(), s.out, s.in);
    CMatMap<T> xm(input_.data.data(), input_.batch(), s.in);
    CMatMap<T> dym(dy.data.data(), dy.batch(), s.out);
    MatMap<T> dw(grad.data(), s.out, s.in);
    dw.noalias() += dym.transpose() * xm;
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grad.data() + w.size(), s.out);
    db += dym.colwise().sum();
    MatMap<T> dxm(dx.data.data(), dx.batch(), s.in);
    dxm.noalias() = dym * w;
    return dx;
  }

 private:
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------

// Single-head scaled dot-product attention over the D*H*W voxel positions.
template <typename T>
class SelfAttention final : public Layer<T> {
 public:
  explicit SelfAttention(const LayerSpec& s) : Layer<T>(s) {
    if (s.in < 1) throw ArgumentError("self_attention: channels must be positive");
  }

  std::size_t param_count() const override { return nn::param_count(this->spec_); }

  void init_params(std::span<T> p, Rng& rng) const override {
    const std::size_t c = static_cast<std::size_t>(this->spec_.in);
    he_uniform(p.subspan(0, 4 * c * c), c, rng);
    std::fill(p.begin() + 4 * c * c, p.end(), T(0));
  }

  Tensor<T> forward(const Tensor<T>& x, std::span<const T> p) override {
    infer_shape(this->spec_, x.shape);
    const int c = this->spec_.in;
    const int t = x.dim(2) * x.dim(3) * x.dim(4);
    const T scale = T(1) / std::sqrt(static_cast<T>(c));
    cache_.assign(x.batch(), {});
    Tensor<T> y(x.shape);
    for (int n = 0; n < x.batch(); ++n) {
      auto& cc = cache_[n];
      cc.x = CMatMap<T>(x.item(n), c, t).transpose();
      cc.q = project(cc.x, p, 0);
      cc.k = project(cc.x, p, 1);
      cc.v = project(cc.x, p, 2);
      cc.a.noalias() = cc.q * cc.k.transpose() * scale;
      for (int r = 0; r < t; ++r) {
        auto row = cc.a.row(r);
        row.array() -= row.maxCoeff();
        row = row.array().exp().matrix();
        row /= row.sum();
      }
      cc.z.noalias() = cc.a * cc.v;
      const RowMat<T> o = project(cc.z, p, 3);
      MatMap<T>(y.item(n), c, t) = o.transpose();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T> p, std::span<T> grad) override {
    const int c = this->spec_.in;
    const int t = dy.dim(2) * dy.dim(3) * dy.dim(4);
    const T scale = T(1) / std::sqrt(static_cast<T>(c));
    Tensor<T> dx(dy.shape);
    for (int n = 0; n < dy.batch(); ++n) {
      const auto& cc = cache_[n];
      const RowMat<T> d_o = CMatMap<T>(dy.item(n), c, t).transpose();
      const RowMat<T> dz = project_backward(cc.z, d_o, p, grad, 3);
      const RowMat<T> da = dz * cc.v.transpose();
      const RowMat<T> dv = cc.a.transpose() * dz;
      RowMat<T> ds(t, t);
      for (int r = 0; r < t; ++r) {
        const T dot = da.row(r).dot(cc.a.row(r));
        ds.row(r) = (cc.a.row(r).array() * (da.row(r).array() - dot)).matrix() * scale;
      }
      const RowMat<T> dq = ds * cc.k;
      const RowMat<T> dk = ds.transpose() * cc.q;
      RowMat<T> dxm = project_backward(cc.x, dq, p, grad, 0);
      dxm += project_backward(cc.x, dk, p, grad, 1);
      dxm += project_backward(cc.x, dv, p, grad, 2);
      MatMap<T>(dx.item(n), c, t) = dxm.transpose();
    }
    return dx;
  }

 private:
  struct Cache {
    RowMat<T> x, q, k, v, a, z;
  };

  // Projection `which` (q, k, v, o): in * W^T + b, W is C x C.
  RowMat<T> project(const RowMat<T>& in, std::span<const T> p, int which) const {
    const int c = this->spec_.in;
    const std::size_t cc = static_cast<std::size_t>(c) * c;
    CMatMap<T> w(p.data() + which * cc, c, c);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(p.data() + 4 * cc + which * c, c);
    RowMat<T> out = in * w.transpose();
    out.rowwise() += b;
    return out;
  }

  RowMat<T> project_backward(const RowMat<T>& in, const RowMat<T>& dout, std::span<const T> p,
                             std::span<T> grad, int which) const {
    const int c = this->spec_.in;
    const std::size_t cc = static_cast<std::size_t>(c) * c;
    CMatMap<T> w(p.data() + which * cc, c, c);
    MatMap<T> dw(grad.data() + which * cc, c, c);
    Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(grad.data() + 4 * cc + which * c, c);
    dw.noalias() += dout.transpose() * in;
    db += dout.colwise().sum();
    return dout * w;
  }

  std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------

template <typename T>
class GlobalPoolOrFlatten final : public Layer<T> {
 public:
  explicit GlobalPoolOrFlatten(const LayerSpec& s) : Layer<T>(s) {}

  Tensor<T> forward(const Tensor<T>& x, std::span<const T>) override {
    Shape out = infer_shape(this->spec_, x.shape);
    in_shape_ = x.shape;
    if (this->spec_.kind == LayerKind::Flatten) return Tensor<T>(out, x.data);
    Tensor<T> y(out);
    const std::size_t vox = static_cast<std::size_t>(x.dim(2)) * x.dim(3) * x.dim(4);
    for (std::size_t pl = 0; pl < y.size(); ++pl) {
      double acc = 0.0;
      for (std::size_t i = 0; i < vox; ++i) acc += x.data[pl * vox + i];
      y.data[pl] = static_cast<T>(acc / static_cast<double>(vox));
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T>, std::span<T>) override {
    if (this->spec_.kind == LayerKind::Flatten) return Tensor<T>(in_shape_, dy.data);
    Tensor<T> dx(in_shape_);
    const std::size_t vox = static_cast<std::size_t>(in_shape_[2]) * in_shape_[3] * in_shape_[4];
    const T scale = T(1) / static_cast<T>(vox);
    for (std::size_t pl = 0; pl < dy.size(); ++pl) {
      for (std::size_t i = 0; i < vox; ++i) dx.data[pl * vox + i] = dy.data[pl] * scale;
    }
    return dx;
  }

 private:
  Shape in_shape_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Sequential final : public Layer<T> {
 public:
  explicit Sequential(const LayerSpec& s) : Layer<T>(s) {
    std::size_t off = 0;
    for (const auto& child : s.body) {
      layers_.push_back(make_layer<T>(child));
      offsets_.push_back(off);
      off += layers_.back()->param_count();
    }
    total_ = off;
  }

  std::size_t param_count() const override { return total_; }

  void init_params(std::span<T> p, Rng& rng) const override {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->init_params(slice(p, i), rng);
  }

  Tensor<T> forward(const Tensor<T>& x, std::span<const T> p) override {
    if (layers_.empty()) return x;
    Tensor<T> h = layers_[0]->forward(x, slice(p, 0));
    for (std::size_t i = 1; i < layers_.size(); ++i) h = layers_[i]->forward(h, slice(p, i));
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T> p, std::span<T> grad) override {
    if (layers_.empty()) return dy;
    Tensor<T> g = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      g = layers_[i]->backward(g, slice(p, i), slice(grad, i));
    }
    return g;
  }

 private:
  template <typename U>
  std::span<U> slice(std::span<U> p, std::size_t i) const {
    return p.subspan(offsets_[i], layers_[i]->param_count());
  }

  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t total_ = 0;
};

// ---------------------------------------------------------------------------

// y = body(x) + skip(x); skip is the identity or a 1x1 projection.
template <typename T>
class Residual final : public Layer<T> {
 public:
  explicit Residual(const LayerSpec& s)
      : Layer<T>(s), body_(LayerSpec::sequential(s.body)) {
    if (s.in != s.out) skip_ = std::make_unique<Conv3d<T>>(LayerSpec::conv3d(s.in, s.out, 1, 1));
  }

  std::size_t param_count() const override {
    return body_.param_count() + (skip_ ? skip_->param_count() : 0);
  }

  void init_params(std::span<T> p, Rng& rng) const override {
    body_.init_params(p.subspan(0, body_.param_count()), rng);
    if (skip_) skip_->init_params(p.subspan(body_.param_count()), rng);
  }

  Tensor<T> forward(const Tensor<T>& x, std::span<const T> p) override {
    infer_shape(this->spec_, x.shape);
    Tensor<T> y = body_.forward(x, p.subspan(0, body_.param_count()));
    if (skip_) {
      const Tensor<T> s = skip_->forward(x, p.subspan(body_.param_count()));
      for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += s.data[i];
    } else {
      for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, std::span<const T> p, std::span<T> grad) override {
    const std::size_t nb = body_.param_count();
    Tensor<T> dx = body_.backward(dy, p.subspan(0, nb), grad.subspan(0, nb));
    if (skip_) {
      const Tensor<T> ds = skip_->backward(dy, p.subspan(nb), grad.subspan(nb));
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += ds.data[i];
    } else {
      for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dy.data[i];
    }
    return dx;
  }

 private:
  Sequential<T> body_;
  std::unique_ptr<Conv3d<T>> skip_;
};

}  // namespace

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Conv3d: return std::make_unique<Conv3d<T>>(spec);
    case LayerKind::AvgPool3d: return std::make_unique<AvgPool3d<T>>(spec);
    case LayerKind::ReLU:
    case LayerKind::SiLU:
    case LayerKind::Tanhshrink: return std::make_unique<Activation<T>>(spec);
    case LayerKind::GroupNorm:
    case LayerKind::LayerNorm: return std::make_unique<Normalization<T>>(spec);
    case LayerKind::Linear: return std::make_unique<Linear<T>>(spec);
    case LayerKind::ResidualBlock: return std::make_unique<Residual<T>>(spec);
    case LayerKind::SelfAttention: return std::make_unique<SelfAttention<T>>(spec);
    case LayerKind::GlobalAvgPool:
    case LayerKind::Flatten: return std::make_unique<GlobalPoolOrFlatten<T>>(spec);
    case LayerKind::Sequential: return std::make_unique<Sequential<T>>(spec);
  }
  throw ArgumentError("unknown layer kind");
}

template std::unique_ptr<Layer<float>> make_layer<float>(const LayerSpec&);
template std::unique_ptr<Layer<double>> make_layer<double>(const LayerSpec&);

}  // namespace voxgrid::nn

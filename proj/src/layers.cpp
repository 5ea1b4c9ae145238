#include "ie2d/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Core>

#include "ie2d/errors.hpp"

namespace ie2d::layers {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

int pad_before(int k) { return (k - 1) / 2; }

// cols[(ci*k + ky)*k + kx][y*w + x] = in[ci][y + ky - pb][x + kx - pb] (0 outside).
template <typename T>
void im2col(const T* in, int c, int h, int w, int k, T* cols) {
  const int pb = pad_before(k);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const T* plane = in + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dx = kx - pb;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          T* dst = row + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - pb;
          if (sy < 0 || sy >= h || x0 >= x1) {
            std::fill(dst, dst + w, T(0));
            continue;
          }
          std::fill(dst, dst + x0, T(0));
          std::memcpy(dst + x0, plane + static_cast<std::size_t>(sy) * w + x0 + dx,
                      sizeof(T) * (x1 - x0));
          std::fill(dst + x1, dst + w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int c, int h, int w, int k, T* out) {
  const int pb = pad_before(k);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    T* plane = out + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + ((static_cast<std::size_t>(ci) * k + ky) * k + kx) * hw;
        const int dx = kx - pb;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pb;
          if (sy < 0 || sy >= h) continue;
          const T* src = row + static_cast<std::size_t>(y) * w;
          T* dst = plane + static_cast<std::size_t>(sy) * w + dx;
          for (int x = x0; x < x1; ++x) dst[x] += src[x];
        }
      }
    }
  }
}

void check(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias, int cout,
                 int k) {
  const int cin = in.c(), h = in.h(), w = in.w();
  const std::size_t ckk = static_cast<std::size_t>(cin) * k * k;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  check(weight.size() == cout * ckk, "conv2d: weight size does not match input channels");
  check(bias.size() == static_cast<std::size_t>(cout), "conv2d: bias size mismatch");

  Tensor<T> out(Shape{in.n(), cout, h, w});
  ConstMatMap<T> wm(weight.data(), cout, ckk);
  std::vector<T> cols(k == 1 ? 0 : ckk * hw);
  for (int n = 0; n < in.n(); ++n) {
    const T* src = in.sample(n).data();
    if (k != 1) {
      im2col(src, cin, h, w, k, cols.data());
      src = cols.data();
    }
    MatMap<T> om(out.sample(n).data(), cout, hw);
    om.noalias() = wm * ConstMatMap<T>(src, ckk, hw);
    for (int co = 0; co < cout; ++co) om.row(co).array() += bias[co];
  }
  return out;
}

template <typename T>
void conv2d_backward(const Tensor<T>& in, std::span<const T> weight, int cout, int k,
                     const Tensor<T>& dout, std::span<T> dweight, std::span<T> dbias,
                     Tensor<T>* din) {
  const int cin = in.c(), h = in.h(), w = in.w();
  const std::size_t ckk = static_cast<std::size_t>(cin) * k * k;
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  check(dout.shape() == (Shape{in.n(), cout, h, w}), "conv2d_backward: gradient shape mismatch");

  ConstMatMap<T> wm(weight.data(), cout, ckk);
  MatMap<T> dwm(dweight.data(), cout, ckk);
  std::vector<T> cols(k == 1 ? 0 : ckk * hw);
  std::vector<T> dcols(din && k != 1 ? ckk * hw : 0);
  if (din) *din = Tensor<T>(in.shape());
  for (int n = 0; n < in.n(); ++n) {
    const T* src = in.sample(n).data();
    if (k != 1) {
      im2col(src, cin, h, w, k, cols.data());
      src = cols.data();
    }
    ConstMatMap<T> dom(dout.sample(n).data(), cout, hw);
    dwm.noalias() += dom * ConstMatMap<T>(src, ckk, hw).transpose();
    // Plain loop: Eigen's vectorized sum peels by runtime alignment, which
    // makes the rounding depend on where the buffer landed.
    for (int co = 0; co < cout; ++co) {
      const T* g = dout.plane(n, co).data();
      T sum = 0;
      for (std::size_t i = 0; i < hw; ++i) sum += g[i];
      dbias[co] += sum;
    }
    if (din) {
      if (k == 1) {
        MatMap<T>(din->sample(n).data(), ckk, hw).noalias() = wm.transpose() * dom;
      } else {
        MatMap<T>(dcols.data(), ckk, hw).noalias() = wm.transpose() * dom;
        col2im_add(dcols.data(), cin, h, w, k, din->sample(n).data());
      }
    }
  }
}

template <typename T>
Tensor<T> upconv2x2(const Tensor<T>& in, std::span<const T> weight, std::span<const T> bias,
                    int cout) {
  const int cin = in.c(), h = in.h(), w = in.w();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  check(weight.size() == static_cast<std::size_t>(cin) * cout * 4,
        "upconv2x2: weight size does not match input channels");
  check(bias.size() == static_cast<std::size_t>(cout), "upconv2x2: bias size mismatch");

  Tensor<T> out(Shape{in.n(), cout, 2 * h, 2 * w});
  ConstMatMap<T> wm(weight.data(), cin, static_cast<std::size_t>(cout) * 4);
  RowMat<T> taps(static_cast<std::size_t>(cout) * 4, hw);
  for (int n = 0; n < in.n(); ++n) {
    taps.noalias() = wm.transpose() * ConstMatMap<T>(in.sample(n).data(), cin, hw);
    for (int co = 0; co < cout; ++co) {
      T* plane = out.plane(n, co).data();
      for (int d = 0; d < 4; ++d) {
        const int dy = d / 2, dx = d % 2;
        const T* row = taps.row(co * 4 + d).data();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            plane[(2 * y + dy) * (2 * w) + 2 * x + dx] = row[y * w + x] + bias[co];
      }
    }
  }
  return out;
}

template <typename T>
void upconv2x2_backward(const Tensor<T>& in, std::span<const T> weight, int cout,
                        const Tensor<T>& dout, std::span<T> dweight, std::span<T> dbias,
                        Tensor<T>* din) {
  const int cin = in.c(), h = in.h(), w = in.w();
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  check(dout.shape() == (Shape{in.n(), cout, 2 * h, 2 * w}),
        "upconv2x2_backward: gradient shape mismatch");

  ConstMatMap<T> wm(weight.data(), cin, static_cast<std::size_t>(cout) * 4);
  MatMap<T> dwm(dweight.data(), cin, static_cast<std::size_t>(cout) * 4);
  RowMat<T> dtaps(static_cast<std::size_t>(cout) * 4, hw);
  if (din) *din = Tensor<T>(in.shape());
  for (int n = 0; n < in.n(); ++n) {
    for (int co = 0; co < cout; ++co) {
      const T* plane = dout.plane(n, co).data();
      T sum = 0;
      for (int d = 0; d < 4; ++d) {
        const int dy = d / 2, dx = d % 2;
        T* row = dtaps.row(co * 4 + d).data();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) {
            const T g = plane[(2 * y + dy) * (2 * w) + 2 * x + dx];
            row[y * w + x] = g;
            sum += g;
          }
      }
      dbias[co] += sum;
    }
    ConstMatMap<T> im(in.sample(n).data(), cin, hw);
    dwm.noalias() += im * dtaps.transpose();
    if (din) MatMap<T>(din->sample(n).data(), cin, hw).noalias() = wm * dtaps;
  }
}

template <typename T>
Tensor<T> maxpool2x2(const Tensor<T>& in, std::vector<std::uint8_t>* argmax) {
  check(in.h() % 2 == 0 && in.w() % 2 == 0, "maxpool2x2: odd spatial size");
  const int oh = in.h() / 2, ow = in.w() / 2;
  Tensor<T> out(Shape{in.n(), in.c(), oh, ow});
  if (argmax) argmax->assign(out.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c) {
      const T* plane = in.plane(n, c).data();
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x, ++o) {
          const T* p = plane + (2 * y) * in.w() + 2 * x;
          const T v[4] = {p[0], p[1], p[in.w()], p[in.w() + 1]};
          int best = 0;
          for (int d = 1; d < 4; ++d)
            if (v[d] > v[best]) best = d;
          out.data()[o] = v[best];
          if (argmax) (*argmax)[o] = static_cast<std::uint8_t>(best);
        }
    }
  return out;
}

template <typename T>
Tensor<T> maxpool2x2_backward(const std::vector<std::uint8_t>& argmax, const Tensor<T>& dout,
                              const Shape& in_shape) {
  check(argmax.size() == dout.size(), "maxpool2x2_backward: argmax size mismatch");
  Tensor<T> din(in_shape);
  const int oh = dout.h(), ow = dout.w();
  std::size_t o = 0;
  for (int n = 0; n < dout.n(); ++n)
    for (int c = 0; c < dout.c(); ++c) {
      T* plane = din.plane(n, c).data();
      for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x, ++o) {
          const int d = argmax[o];
          plane[(2 * y + d / 2) * in_shape.w + 2 * x + d % 2] += dout.data()[o];
        }
    }
  return din;
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (T& v : t.values()) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(const Tensor<T>& out, Tensor<T>& grad) {
  check(out.shape() == grad.shape(), "relu_backward: shape mismatch");
  const T* o = out.data();
  T* g = grad.data();
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!(o[i] > T(0))) g[i] = T(0);
}

template <typename T>
void sigmoid_inplace(Tensor<T>& t) {
  for (T& v : t.values()) v = T(1) / (T(1) + std::exp(-v));
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.n() == b.n() && a.h() == b.h() && a.w() == b.w(), "concat: spatial shape mismatch");
  Tensor<T> out(Shape{a.n(), a.c() + b.c(), a.h(), a.w()});
  for (int n = 0; n < a.n(); ++n) {
    auto dst = out.sample(n);
    std::copy(a.sample(n).begin(), a.sample(n).end(), dst.begin());
    std::copy(b.sample(n).begin(), b.sample(n).end(), dst.begin() + a.sample(n).size());
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& t, int first_channels) {
  check(first_channels >= 0 && first_channels <= t.c(), "split: channel count out of range");
  Tensor<T> a(Shape{t.n(), first_channels, t.h(), t.w()});
  Tensor<T> b(Shape{t.n(), t.c() - first_channels, t.h(), t.w()});
  for (int n = 0; n < t.n(); ++n) {
    auto src = t.sample(n);
    std::copy(src.begin(), src.begin() + a.sample(n).size(), a.sample(n).begin());
    std::copy(src.begin() + a.sample(n).size(), src.end(), b.sample(n).begin());
  }
  return {std::move(a), std::move(b)};
}

#define IE2D_INSTANTIATE(T)                                                                      \
  template Tensor<T> conv2d(const Tensor<T>&, std::span<const T>, std::span<const T>, int, int); \
  template void conv2d_backward(const Tensor<T>&, std::span<const T>, int, int, const Tensor<T>&, \
                                std::span<T>, std::span<T>, Tensor<T>*);                          \
  template Tensor<T> upconv2x2(const Tensor<T>&, std::span<const T>, std::span<const T>, int);   \
  template void upconv2x2_backward(const Tensor<T>&, std::span<const T>, int, const Tensor<T>&,  \
                                   std::span<T>, std::span<T>, Tensor<T>*);                       \
  template Tensor<T> maxpool2x2(const Tensor<T>&, std::vector<std::uint8_t>*);                   \
  template Tensor<T> maxpool2x2_backward(const std::vector<std::uint8_t>&, const Tensor<T>&,     \
                                         const Shape&);                                           \
  template void relu_inplace(Tensor<T>&);                                                         \
  template void relu_backward_inplace(const Tensor<T>&, Tensor<T>&);                              \
  template void sigmoid_inplace(Tensor<T>&);                                                      \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                         \
  template std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>&, int);

IE2D_INSTANTIATE(float)
IE2D_INSTANTIATE(double)
#undef IE2D_INSTANTIATE

}  // namespace ie2d

std::string ie2d::Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

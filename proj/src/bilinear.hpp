#pragma once

#include <cmath>
#include <cstddef>

namespace dfres::detail {

// Four-neighbour bilinear stencil around a real-valued coordinate. Corner
// order is (y0,x0), (y0,x0+1), (y0+1,x0), (y0+1,x0+1); an index of -1 marks a
// neighbour outside the map, which reads as zero.
template <typename T>
struct BilinearStencil {
  long index[4];
  T weight[4];
  T ly, lx;
};

template <typename T>
inline BilinearStencil<T> make_stencil(T y, T x, std::size_t height, std::size_t width) {
  BilinearStencil<T> s;
  const T fy = std::floor(y);
  const T fx = std::floor(x);
  s.ly = y - fy;
  s.lx = x - fx;
  const long y0 = static_cast<long>(fy);
  const long x0 = static_cast<long>(fx);
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  const long ys[2] = {y0, y0 + 1};
  const long xs[2] = {x0, x0 + 1};
  const T wy[2] = {T(1) - s.ly, s.ly};
  const T wx[2] = {T(1) - s.lx, s.lx};
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const int k = i * 2 + j;
      const bool inside = ys[i] >= 0 && ys[i] < h && xs[j] >= 0 && xs[j] < w;
      s.index[k] = inside ? ys[i] * w + xs[j] : -1;
      s.weight[k] = wy[i] * wx[j];
    }
  }
  return s;
}

template <typename T>
inline T corner(const T* plane, long index) {
  return index < 0 ? T(0) : plane[index];
}

template <typename T>
inline T sample(const BilinearStencil<T>& s, const T* plane) {
  T v = T(0);
  for (int k = 0; k < 4; ++k) {
    if (s.index[k] >= 0) v += s.weight[k] * plane[s.index[k]];
  }
  return v;
}

// d(sample)/dy and d(sample)/dx.
template <typename T>
inline void sample_coord_grad(const BilinearStencil<T>& s, const T* plane, T& dy, T& dx) {
  const T v00 = corner(plane, s.index[0]);
  const T v01 = corner(plane, s.index[1]);
  const T v10 = corner(plane, s.index[2]);
  const T v11 = corner(plane, s.index[3]);
  dy = (T(1) - s.lx) * (v10 - v00) + s.lx * (v11 - v01);
  dx = (T(1) - s.ly) * (v01 - v00) + s.ly * (v11 - v10);
}

}  // namespace dfres::detail

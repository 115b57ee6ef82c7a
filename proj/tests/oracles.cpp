#include "oracles.hpp"

#include <cmath>

namespace oracle {

std::vector<double> conv2d(const std::vector<double>& in, std::size_t c_in, std::size_t h,
                           std::size_t w, const std::vector<double>& weight, std::size_t c_out,
                           std::size_t k, const std::vector<double>& bias, std::size_t pad) {
  std::vector<double> out(c_out * h * w, 0.0);
  for (std::size_t o = 0; o < c_out; ++o) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t c = 0; c < c_in; ++c) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = long(y + ky) - long(pad), ix = long(x + kx) - long(pad);
              if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(w)) continue;
              s += weight[((o * c_in + c) * k + ky) * k + kx] * in[(c * h + iy) * w + ix];
            }
          }
        }
        out[(o * h + y) * w + x] = s;
      }
    }
  }
  return out;
}

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                           std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
      c[i * n + j] = s;
    }
  }
  return c;
}

double bilinear(const std::vector<double>& plane, std::size_t h, std::size_t w, double y, double x) {
  const double y0 = std::floor(y), x0 = std::floor(x);
  const double fy = y - y0, fx = x - x0;
  auto at = [&](double yy, double xx) {
    if (yy < 0 || xx < 0 || yy >= double(h) || xx >= double(w)) return 0.0;
    return plane[std::size_t(yy) * w + std::size_t(xx)];
  };
  return (1 - fy) * (1 - fx) * at(y0, x0) + (1 - fy) * fx * at(y0, x0 + 1) +
         fy * (1 - fx) * at(y0 + 1, x0) + fy * fx * at(y0 + 1, x0 + 1);
}

double ssim(const dfres::Image& a, const dfres::Image& b) {
  const int n = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double g[11][11];
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double dy = i - 5, dx = j - 5;
      g[i][j] = std::exp(-(dy * dy + dx * dx) / (2 * sigma * sigma));
      total += g[i][j];
    }
  }
  for (auto& row : g) {
    for (double& v : row) v /= total;
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < 3; ++c) {
    double channel = 0.0;
    std::size_t windows = 0;
    for (std::size_t y = 0; y + n <= a.height; ++y) {
      for (std::size_t x = 0; x + n <= a.width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const double va = a.at(c, y + i, x + j), vb = b.at(c, y + i, x + j);
            ma += g[i][j] * va;
            mb += g[i][j] * vb;
            saa += g[i][j] * va * va;
            sbb += g[i][j] * vb * vb;
            sab += g[i][j] * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        channel += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++windows;
      }
    }
    sum += channel / double(windows);
    ++count;
  }
  return sum / double(count);
}

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> off_lattice_offsets(std::mt19937_64& rng, std::size_t h, std::size_t w,
                                        double margin) {
  // Integer part in {-1, 0, 1}, fractional part in [margin, 1 - margin].
  std::uniform_int_distribution<int> whole(-1, 1);
  std::uniform_real_distribution<double> frac(margin, 1.0 - margin);
  std::vector<double> v(18 * h * w);
  for (auto& x : v) x = whole(rng) + frac(rng);
  return v;
}

dfres::Frame random_frame(std::mt19937_64& rng, std::size_t h, std::size_t w) {
  dfres::Frame f(h, w);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (auto& v : f.pixels) v = d(rng);
  return f;
}

}  // namespace oracle

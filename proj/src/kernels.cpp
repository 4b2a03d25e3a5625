#include "cgc/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cgc::kernels {

namespace {
std::atomic<int> g_max_threads{0};

int effective_threads() {
#ifdef _OPENMP
  int cap = g_max_threads.load(std::memory_order_relaxed);
  int hw = omp_get_max_threads();
  return cap <= 0 ? hw : std::min(cap, hw);
#else
  return 1;
#endif
}
}  // namespace

void set_max_threads(int n) { g_max_threads.store(n, std::memory_order_relaxed); }
int max_threads() { return effective_threads(); }

// ---------------------------------------------------------------------------
// conv2d

void conv2d_forward(const double* x, const double* k, double* y, const Conv2dDims& d) {
  const int64_t nf = d.n * d.f;
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && nf > 1) schedule(static)
  for (int64_t img = 0; img < nf; ++img) {
    const int64_t n = img / d.f, f = img % d.f;
    const double* kf = k + f * d.c * d.kh * d.kw;
    const double* xn = x + n * d.c * d.h * d.w;
    double* yo = y + (n * d.f + f) * d.oh * d.ow;
    for (int64_t oy = 0; oy < d.oh; ++oy) {
      for (int64_t ox = 0; ox < d.ow; ++ox) {
        double acc = 0.0;
        for (int64_t c = 0; c < d.c; ++c) {
          const double* xc = xn + c * d.h * d.w;
          const double* kc = kf + c * d.kh * d.kw;
          for (int64_t ky = 0; ky < d.kh; ++ky) {
            const int64_t iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            for (int64_t kx = 0; kx < d.kw; ++kx) {
              const int64_t ix = ox * d.stride - d.pad + kx;
              if (ix < 0 || ix >= d.w) continue;
              acc += xc[iy * d.w + ix] * kc[ky * d.kw + kx];
            }
          }
        }
        yo[oy * d.ow + ox] = acc;
      }
    }
  }
}

void conv2d_grad_input(const double* g, const double* k, double* gx, const Conv2dDims& d) {
  // Gather form: each input element sums the output positions whose receptive
  // field covers it. One writer per element keeps the result thread-count
  // invariant.
  const int64_t nc = d.n * d.c;
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && nc > 1) schedule(static)
  for (int64_t img = 0; img < nc; ++img) {
    const int64_t n = img / d.c, c = img % d.c;
    double* gxc = gx + (n * d.c + c) * d.h * d.w;
    const double* gn = g + n * d.f * d.oh * d.ow;
    for (int64_t iy = 0; iy < d.h; ++iy) {
      for (int64_t ix = 0; ix < d.w; ++ix) {
        double acc = 0.0;
        for (int64_t f = 0; f < d.f; ++f) {
          const double* gf = gn + f * d.oh * d.ow;
          const double* kc = k + (f * d.c + c) * d.kh * d.kw;
          for (int64_t ky = 0; ky < d.kh; ++ky) {
            const int64_t num = iy + d.pad - ky;
            if (num < 0 || num % d.stride != 0) continue;
            const int64_t oy = num / d.stride;
            if (oy >= d.oh) continue;
            for (int64_t kx = 0; kx < d.kw; ++kx) {
              const int64_t numx = ix + d.pad - kx;
              if (numx < 0 || numx % d.stride != 0) continue;
              const int64_t ox = numx / d.stride;
              if (ox >= d.ow) continue;
              acc += gf[oy * d.ow + ox] * kc[ky * d.kw + kx];
            }
          }
        }
        gxc[iy * d.w + ix] = acc;
      }
    }
  }
}

void conv2d_grad_kernel(const double* x, const double* g, double* gk, const Conv2dDims& d) {
  const int64_t fc = d.f * d.c;
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && fc > 1) schedule(static)
  for (int64_t fci = 0; fci < fc; ++fci) {
    const int64_t f = fci / d.c, c = fci % d.c;
    double* gkc = gk + (f * d.c + c) * d.kh * d.kw;
    for (int64_t ky = 0; ky < d.kh; ++ky) {
      for (int64_t kx = 0; kx < d.kw; ++kx) {
        double acc = 0.0;
        for (int64_t n = 0; n < d.n; ++n) {
          const double* xc = x + (n * d.c + c) * d.h * d.w;
          const double* gf = g + (n * d.f + f) * d.oh * d.ow;
          for (int64_t oy = 0; oy < d.oh; ++oy) {
            const int64_t iy = oy * d.stride - d.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            for (int64_t ox = 0; ox < d.ow; ++ox) {
              const int64_t ix = ox * d.stride - d.pad + kx;
              if (ix < 0 || ix >= d.w) continue;
              acc += xc[iy * d.w + ix] * gf[oy * d.ow + ox];
            }
          }
        }
        gkc[ky * d.kw + kx] = acc;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// matmul

void matmul(const double* a, const double* b, double* c,
            int64_t m, int64_t k, int64_t n) {
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && m > 1) schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    std::memset(ci, 0, sizeof(double) * n);
    const double* ai = a + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = ai[kk];
      const double* bk = b + kk * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
    }
  }
}

// ---------------------------------------------------------------------------
// pooling

void pool_avg_forward(const double* x, double* y, int64_t lead, int64_t h, int64_t w,
                      int64_t win, int64_t stride, int64_t oh, int64_t ow) {
  const double inv = 1.0 / static_cast<double>(win * win);
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && lead > 1) schedule(static)
  for (int64_t l = 0; l < lead; ++l) {
    const double* xl = x + l * h * w;
    double* yl = y + l * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int64_t ky = 0; ky < win; ++ky)
          for (int64_t kx = 0; kx < win; ++kx)
            acc += xl[(oy * stride + ky) * w + ox * stride + kx];
        yl[oy * ow + ox] = acc * inv;
      }
    }
  }
}

void pool_avg_adjoint(const double* g, double* gx, int64_t lead, int64_t h, int64_t w,
                      int64_t win, int64_t stride, int64_t oh, int64_t ow) {
  const double inv = 1.0 / static_cast<double>(win * win);
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && lead > 1) schedule(static)
  for (int64_t l = 0; l < lead; ++l) {
    const double* gl = g + l * oh * ow;
    double* gxl = gx + l * h * w;
    for (int64_t iy = 0; iy < h; ++iy) {
      const int64_t oy_lo = std::max<int64_t>(0, (iy - win + stride) / stride);
      const int64_t oy_hi = std::min(oh - 1, iy / stride);
      for (int64_t ix = 0; ix < w; ++ix) {
        const int64_t ox_lo = std::max<int64_t>(0, (ix - win + stride) / stride);
        const int64_t ox_hi = std::min(ow - 1, ix / stride);
        double acc = 0.0;
        for (int64_t oy = oy_lo; oy <= oy_hi; ++oy)
          for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
            acc += gl[oy * ow + ox];
        gxl[iy * w + ix] = acc * inv;
      }
    }
  }
}

void pool_max_forward(const double* x, double* y, int64_t* argmax, int64_t lead,
                      int64_t h, int64_t w, int64_t win, int64_t stride,
                      int64_t oh, int64_t ow) {
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && lead > 1) schedule(static)
  for (int64_t l = 0; l < lead; ++l) {
    const double* xl = x + l * h * w;
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        // ties go to the first element in raster order
        double best = xl[(oy * stride) * w + ox * stride];
        int64_t best_at = (oy * stride) * w + ox * stride;
        for (int64_t ky = 0; ky < win; ++ky) {
          for (int64_t kx = 0; kx < win; ++kx) {
            const int64_t at = (oy * stride + ky) * w + ox * stride + kx;
            if (xl[at] > best) {
              best = xl[at];
              best_at = at;
            }
          }
        }
        const int64_t out_at = l * oh * ow + oy * ow + ox;
        y[out_at] = best;
        argmax[out_at] = l * h * w + best_at;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// bilinear resize

namespace {
struct Tap {
  int64_t lo, hi;
  double frac;  // weight of hi; lo gets (1 - frac)
};

std::vector<Tap> make_taps(int64_t in, int64_t out) {
  std::vector<Tap> taps(out);
  const double scale = out > 1 ? static_cast<double>(in - 1) / static_cast<double>(out - 1) : 0.0;
  for (int64_t o = 0; o < out; ++o) {
    double s = static_cast<double>(o) * scale;
    int64_t lo = static_cast<int64_t>(std::floor(s));
    if (lo > in - 1) lo = in - 1;
    int64_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, s - static_cast<double>(lo)};
  }
  return taps;
}

// Output rows that read from a given input row, as a CSR table. Used by the
// adjoint so every input element has exactly one writer.
struct ReverseTaps {
  std::vector<int64_t> offsets;  // in + 1
  std::vector<int64_t> out_idx;
  std::vector<double> weight;
};

ReverseTaps reverse_taps(const std::vector<Tap>& taps, int64_t in) {
  ReverseTaps rt;
  std::vector<std::vector<std::pair<int64_t, double>>> rows(in);
  for (int64_t o = 0; o < static_cast<int64_t>(taps.size()); ++o) {
    const Tap& t = taps[o];
    rows[t.lo].emplace_back(o, 1.0 - t.frac);
    if (t.hi != t.lo) rows[t.hi].emplace_back(o, t.frac);
  }
  rt.offsets.resize(in + 1);
  rt.offsets[0] = 0;
  for (int64_t i = 0; i < in; ++i) rt.offsets[i + 1] = rt.offsets[i] + static_cast<int64_t>(rows[i].size());
  rt.out_idx.reserve(rt.offsets[in]);
  rt.weight.reserve(rt.offsets[in]);
  for (int64_t i = 0; i < in; ++i) {
    for (auto& [o, wgt] : rows[i]) {
      rt.out_idx.push_back(o);
      rt.weight.push_back(wgt);
    }
  }
  return rt;
}
}  // namespace

void resize_bilinear_forward(const double* x, double* y, int64_t lead,
                             int64_t ih, int64_t iw, int64_t oh, int64_t ow) {
  const auto ty = make_taps(ih, oh);
  const auto tx = make_taps(iw, ow);
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && lead > 1) schedule(static)
  for (int64_t l = 0; l < lead; ++l) {
    const double* xl = x + l * ih * iw;
    double* yl = y + l * oh * ow;
    for (int64_t oy = 0; oy < oh; ++oy) {
      const Tap& a = ty[oy];
      for (int64_t ox = 0; ox < ow; ++ox) {
        const Tap& b = tx[ox];
        const double top = xl[a.lo * iw + b.lo] * (1.0 - b.frac) + xl[a.lo * iw + b.hi] * b.frac;
        const double bot = xl[a.hi * iw + b.lo] * (1.0 - b.frac) + xl[a.hi * iw + b.hi] * b.frac;
        yl[oy * ow + ox] = top * (1.0 - a.frac) + bot * a.frac;
      }
    }
  }
}

void resize_bilinear_adjoint(const double* g, double* gx, int64_t lead,
                             int64_t ih, int64_t iw, int64_t oh, int64_t ow) {
  const auto rty = reverse_taps(make_taps(ih, oh), ih);
  const auto rtx = reverse_taps(make_taps(iw, ow), iw);
  const int nt = effective_threads();
#pragma omp parallel for num_threads(nt) if (nt > 1 && lead > 1) schedule(static)
  for (int64_t l = 0; l < lead; ++l) {
    const double* gl = g + l * oh * ow;
    double* gxl = gx + l * ih * iw;
    for (int64_t iy = 0; iy < ih; ++iy) {
      for (int64_t ix = 0; ix < iw; ++ix) {
        double acc = 0.0;
        for (int64_t ri = rty.offsets[iy]; ri < rty.offsets[iy + 1]; ++ri) {
          const int64_t oy = rty.out_idx[ri];
          const double wy = rty.weight[ri];
          for (int64_t ci = rtx.offsets[ix]; ci < rtx.offsets[ix + 1]; ++ci) {
            acc += wy * rtx.weight[ci] * gl[oy * ow + rtx.out_idx[ci]];
          }
        }
        gxl[iy * iw + ix] = acc;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// serial reference implementations

namespace ref {

void conv2d_forward(const double* x, const double* k, double* y, const Conv2dDims& d) {
  std::memset(y, 0, sizeof(double) * d.n * d.f * d.oh * d.ow);
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t f = 0; f < d.f; ++f)
      for (int64_t oy = 0; oy < d.oh; ++oy)
        for (int64_t ox = 0; ox < d.ow; ++ox)
          for (int64_t c = 0; c < d.c; ++c)
            for (int64_t ky = 0; ky < d.kh; ++ky)
              for (int64_t kx = 0; kx < d.kw; ++kx) {
                const int64_t iy = oy * d.stride - d.pad + ky;
                const int64_t ix = ox * d.stride - d.pad + kx;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                y[((n * d.f + f) * d.oh + oy) * d.ow + ox] +=
                    x[((n * d.c + c) * d.h + iy) * d.w + ix] *
                    k[((f * d.c + c) * d.kh + ky) * d.kw + kx];
              }
}

void conv2d_grad_input(const double* g, const double* k, double* gx, const Conv2dDims& d) {
  std::memset(gx, 0, sizeof(double) * d.n * d.c * d.h * d.w);
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t f = 0; f < d.f; ++f)
      for (int64_t oy = 0; oy < d.oh; ++oy)
        for (int64_t ox = 0; ox < d.ow; ++ox)
          for (int64_t c = 0; c < d.c; ++c)
            for (int64_t ky = 0; ky < d.kh; ++ky)
              for (int64_t kx = 0; kx < d.kw; ++kx) {
                const int64_t iy = oy * d.stride - d.pad + ky;
                const int64_t ix = ox * d.stride - d.pad + kx;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                gx[((n * d.c + c) * d.h + iy) * d.w + ix] +=
                    g[((n * d.f + f) * d.oh + oy) * d.ow + ox] *
                    k[((f * d.c + c) * d.kh + ky) * d.kw + kx];
              }
}

void conv2d_grad_kernel(const double* x, const double* g, double* gk, const Conv2dDims& d) {
  std::memset(gk, 0, sizeof(double) * d.f * d.c * d.kh * d.kw);
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t f = 0; f < d.f; ++f)
      for (int64_t oy = 0; oy < d.oh; ++oy)
        for (int64_t ox = 0; ox < d.ow; ++ox)
          for (int64_t c = 0; c < d.c; ++c)
            for (int64_t ky = 0; ky < d.kh; ++ky)
              for (int64_t kx = 0; kx < d.kw; ++kx) {
                const int64_t iy = oy * d.stride - d.pad + ky;
                const int64_t ix = ox * d.stride - d.pad + kx;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                gk[((f * d.c + c) * d.kh + ky) * d.kw + kx] +=
                    x[((n * d.c + c) * d.h + iy) * d.w + ix] *
                    g[((n * d.f + f) * d.oh + oy) * d.ow + ox];
              }
}

void matmul(const double* a, const double* b, double* c,
            int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) acc += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = acc;
    }
}

void pool_avg_forward(const double* x, double* y, int64_t lead, int64_t h, int64_t w,
                      int64_t win, int64_t stride, int64_t oh, int64_t ow) {
  const double inv = 1.0 / static_cast<double>(win * win);
  for (int64_t l = 0; l < lead; ++l)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (int64_t ky = 0; ky < win; ++ky)
          for (int64_t kx = 0; kx < win; ++kx)
            acc += x[l * h * w + (oy * stride + ky) * w + ox * stride + kx];
        y[l * oh * ow + oy * ow + ox] = acc * inv;
      }
}

void pool_avg_adjoint(const double* g, double* gx, int64_t lead, int64_t h, int64_t w,
                      int64_t win, int64_t stride, int64_t oh, int64_t ow) {
  const double inv = 1.0 / static_cast<double>(win * win);
  std::memset(gx, 0, sizeof(double) * lead * h * w);
  for (int64_t l = 0; l < lead; ++l)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox)
        for (int64_t ky = 0; ky < win; ++ky)
          for (int64_t kx = 0; kx < win; ++kx)
            gx[l * h * w + (oy * stride + ky) * w + ox * stride + kx] +=
                g[l * oh * ow + oy * ow + ox] * inv;
}

void pool_max_forward(const double* x, double* y, int64_t* argmax, int64_t lead,
                      int64_t h, int64_t w, int64_t win, int64_t stride,
                      int64_t oh, int64_t ow) {
  for (int64_t l = 0; l < lead; ++l)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        double best = x[l * h * w + (oy * stride) * w + ox * stride];
        int64_t best_at = l * h * w + (oy * stride) * w + ox * stride;
        for (int64_t ky = 0; ky < win; ++ky)
          for (int64_t kx = 0; kx < win; ++kx) {
            const int64_t at = l * h * w + (oy * stride + ky) * w + ox * stride + kx;
            if (x[at] > best) {
              best = x[at];
              best_at = at;
            }
          }
        y[l * oh * ow + oy * ow + ox] = best;
        argmax[l * oh * ow + oy * ow + ox] = best_at;
      }
}

void resize_bilinear_forward(const double* x, double* y, int64_t lead,
                             int64_t ih, int64_t iw, int64_t oh, int64_t ow) {
  const double sy = oh > 1 ? static_cast<double>(ih - 1) / static_cast<double>(oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(iw - 1) / static_cast<double>(ow - 1) : 0.0;
  for (int64_t l = 0; l < lead; ++l)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        const double fy = static_cast<double>(oy) * sy;
        const double fx = static_cast<double>(ox) * sx;
        const int64_t y0 = std::min(static_cast<int64_t>(std::floor(fy)), ih - 1);
        const int64_t x0 = std::min(static_cast<int64_t>(std::floor(fx)), iw - 1);
        const int64_t y1 = std::min(y0 + 1, ih - 1);
        const int64_t x1 = std::min(x0 + 1, iw - 1);
        const double wy = fy - static_cast<double>(y0);
        const double wx = fx - static_cast<double>(x0);
        const double* xl = x + l * ih * iw;
        y[l * oh * ow + oy * ow + ox] =
            (xl[y0 * iw + x0] * (1 - wx) + xl[y0 * iw + x1] * wx) * (1 - wy) +
            (xl[y1 * iw + x0] * (1 - wx) + xl[y1 * iw + x1] * wx) * wy;
      }
}

void resize_bilinear_adjoint(const double* g, double* gx, int64_t lead,
                             int64_t ih, int64_t iw, int64_t oh, int64_t ow) {
  const double sy = oh > 1 ? static_cast<double>(ih - 1) / static_cast<double>(oh - 1) : 0.0;
  const double sx = ow > 1 ? static_cast<double>(iw - 1) / static_cast<double>(ow - 1) : 0.0;
  std::memset(gx, 0, sizeof(double) * lead * ih * iw);
  for (int64_t l = 0; l < lead; ++l)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        const double fy = static_cast<double>(oy) * sy;
        const double fx = static_cast<double>(ox) * sx;
        const int64_t y0 = std::min(static_cast<int64_t>(std::floor(fy)), ih - 1);
        const int64_t x0 = std::min(static_cast<int64_t>(std::floor(fx)), iw - 1);
        const int64_t y1 = std::min(y0 + 1, ih - 1);
        const int64_t x1 = std::min(x0 + 1, iw - 1);
        const double wy = fy - static_cast<double>(y0);
        const double wx = fx - static_cast<double>(x0);
        double* gxl = gx + l * ih * iw;
        const double gv = g[l * oh * ow + oy * ow + ox];
        gxl[y0 * iw + x0] += gv * (1 - wy) * (1 - wx);
        gxl[y0 * iw + x1] += gv * (1 - wy) * wx;
        gxl[y1 * iw + x0] += gv * wy * (1 - wx);
        gxl[y1 * iw + x1] += gv * wy * wx;
      }
}

}  // namespace ref

}  // namespace cgc::kernels

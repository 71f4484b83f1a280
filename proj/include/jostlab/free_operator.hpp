#pragma once

// Exact kernels of the free operator (-i d/dx)^N: the one-sided fundamental
// solution G0, the free resolvent kernel R, and the Taylor split of R into a
// singular polynomial part plus a bounded remainder R1.

#include <cmath>
#include <stdexcept>
#include <string>

#include "jostlab/core.hpp"

namespace jostlab {

// Threshold below which exponential-sum branches are evaluated through their
// power series; both paths agree to ~1e-10 in double precision there.
inline constexpr double kSeriesCutoff = 1e-3;

// (1/N) sum_j alpha^{j(r+1-N)}: equals 0 for r <= N-2 and 1 for r = N-1.
inline cplx root_identity(int N, int r) {
  cplx acc{0.0, 0.0};
  for (int j = 0; j < N; ++j)
    acc += std::polar(1.0, 2.0 * std::numbers::pi * j * (r + 1 - N) / N);
  return acc / static_cast<double>(N);
}

// One-sided fundamental solution G0(x, zeta) of (-i d/dx)^N - zeta^N.
// Vanishes identically for x <= 0; continuous in zeta across zeta = 0.
inline cplx free_green(double x, const SpectralParam& sp) {
  const int N = sp.N();
  if (x <= 0.0) return {0.0, 0.0};
  double fact = 1.0;
  for (int k = 2; k < N; ++k) fact *= k;
  if (sp.is_zero()) return ipow(N) * std::pow(x, N - 1) / fact;

  const cplx zeta = sp.zeta();
  if (std::abs(zeta) * x < kSeriesCutoff) {
    // series in powers of zeta^N: only exponents k = N-1 mod N survive the
    // root sum, so the diverging terms cancel exactly
    cplx acc{0.0, 0.0};
    const cplx zN = std::pow(zeta, N);
    cplx zpow{1.0, 0.0};
    double kfact = fact;  // (N-1)!
    double xpow = std::pow(x, N - 1);
    for (int p = 0; p < 4; ++p) {
      acc += ipow((p + 1) * N) * xpow * zpow / kfact;
      zpow *= zN;
      for (int k = (p + 1) * N; k < (p + 2) * N; ++k) kfact *= k;
      xpow *= std::pow(x, N);
    }
    return acc;
  }
  cplx acc{0.0, 0.0};
  for (int j = 0; j < N; ++j) {
    cplx rj = sp.root(j);
    acc += std::exp(kImag * rj * x) / std::pow(rj, N - 1);
  }
  return kImag * acc / static_cast<double>(N);
}

// Boundary data of the unit-jump fundamental solution at x = 0+: the k-th
// spectral derivative normalized so the top entry is exactly 1. This is the
// initial-value vector used when constructing G0 by integration, and a
// self-test of the root bookkeeping. (The unnormalized kernel G0 carries an
// extra factor i in its top derivative.)
inline cplx free_green_derivative_at_zero(int N, int k, const SpectralParam& sp) {
  if (k < 0 || k > N - 1)
    throw std::invalid_argument("free_green_derivative_at_zero: need 0 <= k <= N-1");
  if (sp.is_zero()) return k == N - 1 ? cplx{1.0, 0.0} : cplx{0.0, 0.0};
  // (1/N) sum_j (alpha^j zeta)^{k+1-N} * zeta^{N-1-k}, through the actual roots
  cplx acc{0.0, 0.0};
  for (int j = 0; j < N; ++j) acc += std::pow(sp.root(j), k + 1 - N);
  return acc * std::pow(sp.zeta(), N - 1 - k) / static_cast<double>(N);
}

namespace detail {

// Indices of the exponentials retained on each side of the diagonal: branches
// bounded as x -> +infty go to the x >= y sum, the rest to x <= y.
inline void check_resolvent_roots(const SpectralParam& sp) {
  if (sp.is_zero())
    throw std::domain_error("free_resolvent: zeta = 0 is the threshold point");
  const int up = sp.up_branch_count();
  for (int j = 0; j < sp.N(); ++j) {
    double im = sp.root(j).imag();
    bool ok = (j < up) ? (im > 0.0) : (im < 0.0);
    if (!ok)
      throw std::domain_error(
          "free_resolvent: marginal root m=" + std::to_string(j) +
          " (Im(alpha^m zeta) = " + std::to_string(im) +
          "); zeta lies on a sector boundary ray");
  }
}

}  // namespace detail

// Taylor split of the free resolvent: R = singular + R1 with the singular
// part polynomial in (x - y) of degree N-2 and R1 = O(|x-y|^{N-1}).
class FreeKernelSplit {
 public:
  explicit FreeKernelSplit(const SpectralParam& sp) : sp_(sp) {
    detail::check_resolvent_roots(sp_);
  }

  const SpectralParam& spectral() const { return sp_; }

  // d^k/dx^k of the singular part  (i/N) sum_{j<=[N/2]} sum_{l<=N-2}
  //   i^l (x-y)^l / (l! (alpha^j zeta)^{N-1-l})
  cplx singular_dx(int k, double x, double y) const {
    const int N = sp_.N();
    if (k > N - 2) return {0.0, 0.0};
    const double w = x - y;
    cplx acc{0.0, 0.0};
    for (int j = 0; j < sp_.up_branch_count(); ++j) {
      cplx rj = sp_.root(j);
      double lfact = 1.0;
      for (int l = 0; l <= N - 2; ++l) {
        if (l >= k) {
          double dfact = 1.0;  // l!/(l-k)!
          for (int t = l; t > l - k; --t) dfact *= t;
          acc += ipow(l) * dfact * std::pow(w, l - k) /
                 (lfact * std::pow(rj, N - 1 - l));
        }
        lfact *= (l + 1);
      }
    }
    return kImag * acc / static_cast<double>(N);
  }

  cplx singular(double x, double y) const { return singular_dx(0, x, y); }

  // d^k/dx^k of the remainder R1. Near the diagonal the exponential tail
  // series is used so that no cancellation against the singular part occurs.
  cplx remainder_dx(int k, double x, double y) const {
    const int N = sp_.N();
    const double w = x - y;
    const cplx zeta = sp_.zeta();
    if (std::abs(zeta * w) < kSeriesCutoff) return tail_series(k, w);
    return resolvent_dx(k, x, y) - singular_dx(k, x, y);
  }

  cplx remainder(double x, double y) const { return remainder_dx(0, x, y); }

  // d^k/dx^k of the full resolvent kernel R(x, y; zeta)
  cplx resolvent_dx(int k, double x, double y) const {
    const int N = sp_.N();
    const double w = x - y;
    if (std::abs(sp_.zeta() * w) < kSeriesCutoff)
      return singular_dx(k, x, y) + tail_series(k, w);
    const int up = sp_.up_branch_count();
    cplx acc{0.0, 0.0};
    if (w >= 0.0) {
      for (int j = 0; j < up; ++j) {
        cplx rj = sp_.root(j);
        acc += std::pow(kImag * rj, k) * std::exp(kImag * rj * w) /
               std::pow(rj, N - 1);
      }
      return kImag * acc / static_cast<double>(N);
    }
    for (int j = up; j < N; ++j) {
      cplx rj = sp_.root(j);
      acc += std::pow(kImag * rj, k) * std::exp(kImag * rj * w) /
             std::pow(rj, N - 1);
    }
    return -kImag * acc / static_cast<double>(N);
  }

 private:
  // Series tail sum_{l >= N-1} of the retained branch exponentials; the sign
  // and branch set depend on the side of the diagonal.
  cplx tail_series(int k, double w) const {
    const int N = sp_.N();
    const int up = sp_.up_branch_count();
    const int j0 = (w >= 0.0) ? 0 : up;
    const int j1 = (w >= 0.0) ? up : N;
    const double sign = (w >= 0.0) ? 1.0 : -1.0;
    cplx acc{0.0, 0.0};
    for (int j = j0; j < j1; ++j) {
      cplx rj = sp_.root(j);
      cplx lam = kImag * rj;  // exponent
      // sum_{l>=max(N-1,k)} lam^l w^{l-k} l!/(l-k)! / l!  / rj^{N-1}
      for (int l = std::max(N - 1, k); l < N + 14; ++l) {
        double inv = 1.0;  // 1/(l-k)!
        for (int t = 2; t <= l - k; ++t) inv /= t;
        acc += std::pow(lam, l) * std::pow(w, l - k) * inv / std::pow(rj, N - 1);
      }
    }
    return sign * kImag * acc / static_cast<double>(N);
  }

  SpectralParam sp_;
};

// Free resolvent kernel R(x, y; zeta) of ((-i d/dx)^N - zeta^N)^{-1}.
inline cplx free_resolvent(double x, double y, const SpectralParam& sp) {
  FreeKernelSplit split(sp);
  return split.resolvent_dx(0, x, y);
}

// ---------------------------------------------------------------------------
// Kernel interface shared by free and assembled resolvents.
// ---------------------------------------------------------------------------

struct Kernel {
  virtual ~Kernel() = default;
  // d^k/dx^k of the kernel at (x, y); k = 0..N-1
  virtual cplx dx(int k, double x, double y) const = 0;
  cplx operator()(double x, double y) const { return dx(0, x, y); }
};

class FreeResolventKernel final : public Kernel {
 public:
  explicit FreeResolventKernel(const SpectralParam& sp) : split_(sp) {}
  cplx dx(int k, double x, double y) const override {
    return split_.resolvent_dx(k, x, y);
  }
  const FreeKernelSplit& split() const { return split_; }

 private:
  FreeKernelSplit split_;
};

// Remainder part R1 as a kernel (used by the finite-rank constructions).
class FreeRemainderKernel final : public Kernel {
 public:
  explicit FreeRemainderKernel(const SpectralParam& sp) : split_(sp) {}
  cplx dx(int k, double x, double y) const override {
    return split_.remainder_dx(k, x, y);
  }

 private:
  FreeKernelSplit split_;
};

}  // namespace jostlab

#pragma once

// Shared domain types for the spectral toolkit: piecewise-polynomial
// potentials, sector parameters, composite quadrature grids, and the
// polynomial / one-sided weights used by every other header.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace jostlab {

using cplx = std::complex<double>;
using json = nlohmann::json;

inline constexpr cplx kImag{0.0, 1.0};

// i^k for integer k (exact, no trig roundoff)
inline cplx ipow(long k) {
  switch (((k % 4) + 4) % 4) {
    case 0: return {1.0, 0.0};
    case 1: return {0.0, 1.0};
    case 2: return {-1.0, 0.0};
    default: return {0.0, -1.0};
  }
}

inline double sq(double x) { return x * x; }

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

// Japanese bracket <x>^sigma = (1+x^2)^(sigma/2)
inline double weight(double x, double sigma) {
  return std::pow(1.0 + x * x, 0.5 * sigma);
}

// One-sided brackets: <x^-> equals <x> on the negative half-line and 1 elsewhere.
inline double weight_minus(double x, double sigma) {
  return x < 0.0 ? weight(x, sigma) : 1.0;
}

inline double weight_plus(double x, double sigma) {
  return x > 0.0 ? weight(x, sigma) : 1.0;
}

// ---------------------------------------------------------------------------
// WeightSpec: source/target exponents for L^2_s -> L^2_{-s'} estimates.
// ---------------------------------------------------------------------------

struct WeightSpec {
  double s = 2.0;
  double s_prime = 2.0;
  // Optional exponential weight e^{nu|x|}; when set the polynomial exponents
  // are ignored and the pair (L^2_nu, L^2_{-nu}) is used instead.
  std::optional<double> nu{};

  bool admissible(int N) const {
    return s > N - 1.5 && s_prime > N - 1.5;
  }

  double source_weight(double x) const {
    return nu ? std::exp(*nu * std::abs(x)) : weight(x, s);
  }
  double target_weight(double x) const {
    return nu ? std::exp(-*nu * std::abs(x)) : weight(x, -s_prime);
  }

  static WeightSpec exponential(double nu_) {
    WeightSpec w;
    w.nu = nu_;
    return w;
  }
};

// ---------------------------------------------------------------------------
// Potential: compactly supported piecewise polynomial, complex coefficients.
// ---------------------------------------------------------------------------

struct PotentialPiece {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<cplx> coeffs;  // p(x) = sum_k coeffs[k] x^k, global variable

  cplx eval(double x) const {
    cplx acc{0.0, 0.0};
    for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * x + coeffs[k];
    return acc;
  }
};

class Potential {
 public:
  Potential() : support_radius_(1.0) {}

  Potential(std::vector<PotentialPiece> pieces, double support_radius,
            bool continuous = false)
      : pieces_(std::move(pieces)),
        support_radius_(support_radius),
        continuous_(continuous) {
    if (support_radius_ <= 0.0)
      throw std::invalid_argument("Potential: support radius must be positive");
    std::sort(pieces_.begin(), pieces_.end(),
              [](const PotentialPiece& a, const PotentialPiece& b) { return a.lo < b.lo; });
    for (const auto& p : pieces_) {
      if (!(p.lo < p.hi))
        throw std::invalid_argument("Potential: empty or inverted piece");
      if (p.lo < -support_radius_ - 1e-12 || p.hi > support_radius_ + 1e-12)
        throw std::invalid_argument("Potential: piece outside [-L, L]");
    }
    for (std::size_t i = 1; i < pieces_.size(); ++i)
      if (pieces_[i].lo < pieces_[i - 1].hi - 1e-12)
        throw std::invalid_argument("Potential: overlapping pieces");
  }

  static Potential zero(double L = 1.0) { return Potential({}, L); }

  // Characteristic-function potential amplitude * chi_[a,b]
  static Potential indicator(double a, double b, cplx amplitude, double L) {
    return Potential({PotentialPiece{a, b, {amplitude}}}, L);
  }

  cplx operator()(double x) const {
    if (std::abs(x) > support_radius_) return {0.0, 0.0};
    for (const auto& p : pieces_) {
      if (x >= p.lo && x <= p.hi) return p.eval(x);
      if (x < p.lo) break;
    }
    return {0.0, 0.0};
  }

  const std::vector<PotentialPiece>& pieces() const { return pieces_; }
  double support_radius() const { return support_radius_; }
  bool is_zero() const { return pieces_.empty(); }
  bool continuous_flag() const { return continuous_; }

  // Checks the flag's claim: adjacent pieces agree at shared joints.
  bool continuity_ok(double tol = 0.0) const {
    for (std::size_t i = 1; i < pieces_.size(); ++i) {
      if (std::abs(pieces_[i].lo - pieces_[i - 1].hi) > 1e-12) continue;
      double xj = pieces_[i].lo;
      if (std::abs(pieces_[i].eval(xj) - pieces_[i - 1].eval(xj)) > tol) return false;
    }
    return true;
  }

  std::vector<double> breakpoints() const {
    std::vector<double> b;
    for (const auto& p : pieces_) {
      b.push_back(p.lo);
      b.push_back(p.hi);
    }
    return b;
  }

  // x -> V(-x)
  Potential reflected() const {
    std::vector<PotentialPiece> out;
    for (const auto& p : pieces_) {
      PotentialPiece q;
      q.lo = -p.hi;
      q.hi = -p.lo;
      q.coeffs = p.coeffs;
      for (std::size_t k = 1; k < q.coeffs.size(); k += 2) q.coeffs[k] = -q.coeffs[k];
      out.push_back(std::move(q));
    }
    return Potential(std::move(out), support_radius_, continuous_);
  }

  Potential scaled(cplx factor) const {
    std::vector<PotentialPiece> out = pieces_;
    for (auto& p : out)
      for (auto& c : p.coeffs) c *= factor;
    return Potential(std::move(out), support_radius_, continuous_);
  }

  double sup_abs(int samples_per_piece = 256) const {
    double m = 0.0;
    for (const auto& p : pieces_)
      for (int i = 0; i <= samples_per_piece; ++i) {
        double x = p.lo + (p.hi - p.lo) * i / samples_per_piece;
        m = std::max(m, std::abs(p.eval(x)));
      }
    return m;
  }

  json to_json() const {
    json j;
    j["L"] = support_radius_;
    j["pieces"] = json::array();
    for (const auto& p : pieces_) {
      json jp;
      jp["a"] = p.lo;
      jp["b"] = p.hi;
      jp["coeffs_re"] = json::array();
      jp["coeffs_im"] = json::array();
      for (const auto& c : p.coeffs) {
        jp["coeffs_re"].push_back(c.real());
        jp["coeffs_im"].push_back(c.imag());
      }
      j["pieces"].push_back(jp);
    }
    return j;
  }

  static Potential from_json(const json& j) {
    if (!j.contains("L")) throw std::invalid_argument("potential: missing field 'L'");
    if (!j.contains("pieces")) throw std::invalid_argument("potential: missing field 'pieces'");
    std::vector<PotentialPiece> pieces;
    for (const auto& jp : j.at("pieces")) {
      PotentialPiece p;
      p.lo = jp.at("a").get<double>();
      p.hi = jp.at("b").get<double>();
      auto re = jp.at("coeffs_re").get<std::vector<double>>();
      auto im = jp.at("coeffs_im").get<std::vector<double>>();
      if (re.size() != im.size())
        throw std::invalid_argument("potential: coeffs_re/coeffs_im length mismatch");
      for (std::size_t k = 0; k < re.size(); ++k) p.coeffs.emplace_back(re[k], im[k]);
      pieces.push_back(std::move(p));
    }
    return Potential(std::move(pieces), j.at("L").get<double>());
  }

 private:
  std::vector<PotentialPiece> pieces_;
  double support_radius_;
  bool continuous_ = false;
};

// Random piecewise-polynomial potential with sup-norm `amplitude`.
inline Potential random_potential(std::mt19937_64& rng, double L = 1.0,
                                  int max_pieces = 3, int max_degree = 3,
                                  double amplitude = 1.0) {
  std::uniform_int_distribution<int> npieces(1, max_pieces);
  std::uniform_int_distribution<int> degree(0, max_degree);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  int np = npieces(rng);
  std::vector<double> cuts{-L, L};
  for (int i = 0; i + 1 < np; ++i) cuts.push_back(L * unit(rng));
  std::sort(cuts.begin(), cuts.end());
  std::vector<PotentialPiece> pieces;
  for (int i = 0; i < np; ++i) {
    if (cuts[i + 1] - cuts[i] < 1e-3) continue;
    PotentialPiece p;
    p.lo = cuts[i];
    p.hi = cuts[i + 1];
    int d = degree(rng);
    for (int k = 0; k <= d; ++k) p.coeffs.emplace_back(unit(rng), unit(rng));
    pieces.push_back(std::move(p));
  }
  if (pieces.empty()) {
    PotentialPiece p;
    p.lo = -L;
    p.hi = L;
    p.coeffs.emplace_back(unit(rng), unit(rng));
    pieces.push_back(std::move(p));
  }
  Potential raw(std::move(pieces), L);
  double m = raw.sup_abs();
  return m > 0 ? raw.scaled(amplitude / m) : raw;
}

// ---------------------------------------------------------------------------
// SpectralParam: a point zeta of the closed sector 0 <= arg zeta <= pi/N,
// together with the branch roots alpha^m zeta, alpha = e^{2 pi i / N}.
// ---------------------------------------------------------------------------

class SpectralParam {
 public:
  SpectralParam(int N, cplx zeta) : N_(N), zeta_(zeta) {
    if (N < 2) throw std::invalid_argument("SpectralParam: N must be >= 2");
  }

  int N() const { return N_; }
  cplx zeta() const { return zeta_; }
  cplx z() const { return std::pow(zeta_, N_); }
  cplx alpha() const { return std::polar(1.0, 2.0 * std::numbers::pi / N_); }

  // alpha^m * zeta, computed through polar form
  cplx root(int m) const {
    return std::polar(1.0, 2.0 * std::numbers::pi * m / N_) * zeta_;
  }

  double bracket() const { return std::sqrt(1.0 + std::norm(zeta_)); }  // <zeta>

  bool is_zero() const { return zeta_ == cplx{0.0, 0.0}; }

  bool in_closed_sector(double tol = 1e-12) const {
    if (is_zero()) return true;
    double a = std::arg(zeta_);
    return a >= -tol && a <= std::numbers::pi / N_ + tol;
  }

  bool strictly_inside_sector(double margin = 1e-12) const {
    if (is_zero()) return false;
    double a = std::arg(zeta_);
    return a > margin && a < std::numbers::pi / N_ - margin;
  }

  // Number of branches bounded as x -> +infty (Im(alpha^m zeta) >= 0 on the sector).
  int up_branch_count() const { return (N_ + 1) / 2; }
  bool branch_bounded_right(int m) const { return m < up_branch_count(); }

  SpectralParam with_zeta(cplx znew) const { return SpectralParam(N_, znew); }

 private:
  int N_;
  cplx zeta_;
};

// ---------------------------------------------------------------------------
// Quadrature rules
// ---------------------------------------------------------------------------

namespace detail {

inline double legendre(int n, double x) {
  double p0 = 1.0, p1 = x;
  if (n == 0) return p0;
  for (int k = 2; k <= n; ++k) {
    double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

inline double legendre_deriv(int n, double x) {
  if (std::abs(x) >= 1.0) {
    // limit value, used only for sanity at endpoints
    double v = n * (n + 1) / 2.0;
    return x > 0 ? v : ((n % 2 == 0) ? -v : v);
  }
  return n * (x * legendre(n, x) - legendre(n - 1, x)) / (x * x - 1.0);
}

}  // namespace detail

// Gauss-Legendre nodes/weights on [-1,1]
inline void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
  x.assign(n, 0.0);
  w.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double t = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    for (int it = 0; it < 100; ++it) {
      double f = detail::legendre(n, t);
      double df = detail::legendre_deriv(n, t);
      double dt = f / df;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[i] = t;
    double dp = detail::legendre_deriv(n, t);
    w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
  }
  std::sort(x.begin(), x.end());
}

// Gauss-Lobatto nodes/weights on [-1,1] (q >= 2); exact through degree 2q-3.
inline void gauss_lobatto(int q, std::vector<double>& x, std::vector<double>& w) {
  if (q < 2) throw std::invalid_argument("gauss_lobatto: need q >= 2");
  x.assign(q, 0.0);
  w.assign(q, 0.0);
  x[0] = -1.0;
  x[q - 1] = 1.0;
  int n = q - 1;  // interior nodes are roots of P'_n
  for (int i = 1; i < q - 1; ++i) {
    // Chebyshev-like initial guess
    double t = std::cos(std::numbers::pi * i / n);
    for (int it = 0; it < 100; ++it) {
      double d1 = detail::legendre_deriv(n, t);
      // derivative of P'_n via the ODE (1-x^2) P''_n = 2x P'_n - n(n+1) P_n
      double d2 = (2.0 * t * d1 - n * (n + 1) * detail::legendre(n, t)) / (1.0 - t * t);
      double dt = d1 / d2;
      t -= dt;
      if (std::abs(dt) < 1e-15) break;
    }
    x[q - 1 - i] = t;
  }
  std::sort(x.begin(), x.end());
  for (int i = 0; i < q; ++i) {
    double p = detail::legendre(n, x[i]);
    w[i] = 2.0 / (n * (n + 1) * p * p);
  }
}

// Adaptive Simpson for real integrands (used for moment integrals).
namespace detail {

template <class F>
double simpson_recur(F&& f, double a, double b, double fa, double fm, double fb,
                     double whole, double eps, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = f(lm), frm = f(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  double diff = (left + right) - whole;
  if (std::abs(diff) <= 15.0 * eps || depth <= 0)
    return left + right + diff / 15.0;
  return simpson_recur(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
         simpson_recur(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

}  // namespace detail

template <class F>
double integrate_adaptive(F&& f, double a, double b, double eps = 1e-12,
                          int max_depth = 40) {
  if (a == b) return 0.0;
  double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::simpson_recur(f, a, b, fa, fm, fb, whole, eps, max_depth);
}

// ---------------------------------------------------------------------------
// Moment integrals of the potential
// ---------------------------------------------------------------------------

// M = int <x>^{N-1} e^{mu|x|} |V(x)| dx  (finite: V compactly supported)
inline double moment_total(const Potential& V, int N, double mu) {
  double out = 0.0;
  for (const auto& p : V.pieces()) {
    auto f = [&](double x) {
      return weight(x, N - 1) * std::exp(mu * std::abs(x)) * std::abs(p.eval(x));
    };
    // split at 0 so the |x| kink never sits inside a panel
    if (p.lo < 0.0 && p.hi > 0.0) {
      out += integrate_adaptive(f, p.lo, 0.0);
      out += integrate_adaptive(f, 0.0, p.hi);
    } else {
      out += integrate_adaptive(f, p.lo, p.hi);
    }
  }
  return out;
}

// M_+(x) = int_x^inf <y>^{N-1} e^{mu|y|} |V(y)| dy
inline double moment_right(const Potential& V, int N, double mu, double x) {
  double out = 0.0;
  for (const auto& p : V.pieces()) {
    double lo = std::max(p.lo, x);
    if (lo >= p.hi) continue;
    auto f = [&](double y) {
      return weight(y, N - 1) * std::exp(mu * std::abs(y)) * std::abs(p.eval(y));
    };
    if (lo < 0.0 && p.hi > 0.0) {
      out += integrate_adaptive(f, lo, 0.0);
      out += integrate_adaptive(f, 0.0, p.hi);
    } else {
      out += integrate_adaptive(f, lo, p.hi);
    }
  }
  return out;
}

// M_-(x) = int_{-inf}^x <y>^{N-1} e^{mu|y|} |V(y)| dy
inline double moment_left(const Potential& V, int N, double mu, double x) {
  return moment_total(V, N, mu) - moment_right(V, N, mu, x);
}

// ---------------------------------------------------------------------------
// Grid: composite Gauss-Lobatto panels covering [lo, hi].
//
// Panel boundaries include every forced breakpoint (potential joints, +-L,
// +-1, 0) so that integration and differentiation never straddle a kink.
// Node weights reproduce integrals of polynomials through degree 2q-3 on
// each panel exactly.
// ---------------------------------------------------------------------------

class Grid {
 public:
  Grid(double lo, double hi, double h, int order, std::vector<double> forced = {})
      : lo_(lo), hi_(hi), h_(h), order_(order) {
    if (!(hi > lo)) throw std::invalid_argument("Grid: empty interval");
    if (h <= 0.0) throw std::invalid_argument("Grid: step must be positive");
    if (order < 3) throw std::invalid_argument("Grid: order must be >= 3");

    forced.push_back(lo);
    forced.push_back(hi);
    std::sort(forced.begin(), forced.end());
    std::vector<double> cuts;
    for (double b : forced) {
      if (b < lo - 1e-12 || b > hi + 1e-12) continue;
      b = std::clamp(b, lo, hi);
      if (cuts.empty() || b - cuts.back() > 1e-10) cuts.push_back(b);
    }

    gauss_lobatto(order_, ref_nodes_, ref_weights_);
    ref_bary_ = barycentric_weights(ref_nodes_);

    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      double a = cuts[s], b = cuts[s + 1];
      int m = std::max(1, static_cast<int>(std::ceil((b - a) / h_ - 1e-12)));
      for (int p = 0; p < m; ++p) {
        double pa = a + (b - a) * p / m;
        double pb = a + (b - a) * (p + 1) / m;
        append_panel(pa, pb);
      }
    }
  }

  static Grid for_potential(const Potential& V, double X, double h = 0.25,
                            int order = 6) {
    double L = V.support_radius();
    if (X <= L) throw std::invalid_argument("Grid: X must exceed the support radius");
    std::vector<double> forced = V.breakpoints();
    for (double b : {-L, -1.0, 0.0, 1.0, L}) forced.push_back(b);
    return Grid(-X, X, h, order, std::move(forced));
  }

  const std::vector<double>& nodes() const { return nodes_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return nodes_.size(); }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  double step() const { return h_; }
  int order() const { return order_; }

  std::size_t panel_count() const { return panel_lo_.size(); }
  double panel_lo(std::size_t p) const { return panel_lo_[p]; }
  double panel_hi(std::size_t p) const { return panel_hi_[p]; }
  // first node index of panel p; panel p owns nodes [first, first+order)
  std::size_t panel_first(std::size_t p) const { return p * (order_ - 1); }

  std::size_t panel_of(double x) const {
    auto it = std::upper_bound(panel_hi_.begin(), panel_hi_.end(), x);
    std::size_t p = static_cast<std::size_t>(it - panel_hi_.begin());
    return std::min(p, panel_lo_.size() - 1);
  }

  // Barycentric evaluation of panel-sampled data at arbitrary x.
  // `get(i)` must return the sampled value at node i.
  template <class Getter>
  cplx interpolate_with(Getter&& get, double x) const {
    std::size_t p = panel_of(x);
    double a = panel_lo_[p], b = panel_hi_[p];
    double t = (2.0 * x - a - b) / (b - a);
    std::size_t base = panel_first(p);
    cplx num{0.0, 0.0};
    double den = 0;
    for (int k = 0; k < order_; ++k) {
      double d = t - ref_nodes_[k];
      if (std::abs(d) < 1e-14) return get(base + k);
      double c = ref_bary_[k] / d;
      num += c * get(base + k);
      den += c;
    }
    return num / den;
  }

  cplx interpolate(std::span<const cplx> samples, double x) const {
    return interpolate_with([&](std::size_t i) { return samples[i]; }, x);
  }

  // Quadrature of sampled data with the grid weights.
  cplx integrate(std::span<const cplx> samples) const {
    cplx acc{0.0, 0.0};
    for (std::size_t i = 0; i < nodes_.size(); ++i) acc += weights_[i] * samples[i];
    return acc;
  }

  std::size_t nearest_node(double x) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), x);
    if (it == nodes_.end()) return nodes_.size() - 1;
    if (it == nodes_.begin()) return 0;
    std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
    return (x - nodes_[i - 1] < nodes_[i] - x) ? i - 1 : i;
  }

  // distance from x to the nearest panel boundary
  double breakpoint_distance(double x) const {
    std::size_t p = panel_of(x);
    return std::min(x - panel_lo_[p], panel_hi_[p] - x);
  }

 private:
  static std::vector<double> barycentric_weights(const std::vector<double>& xs) {
    std::vector<double> w(xs.size(), 1.0);
    for (std::size_t i = 0; i < xs.size(); ++i)
      for (std::size_t j = 0; j < xs.size(); ++j)
        if (j != i) w[i] /= (xs[i] - xs[j]);
    return w;
  }

  void append_panel(double a, double b) {
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    std::size_t start = nodes_.empty() ? 0 : nodes_.size() - 1;
    if (nodes_.empty()) {
      nodes_.push_back(mid + half * ref_nodes_[0]);
      weights_.push_back(0.0);
    }
    for (int k = 1; k < order_; ++k) {
      nodes_.push_back(mid + half * ref_nodes_[k]);
      weights_.push_back(0.0);
    }
    for (int k = 0; k < order_; ++k) weights_[start + k] += half * ref_weights_[k];
    panel_lo_.push_back(a);
    panel_hi_.push_back(b);
  }

  double lo_, hi_, h_;
  int order_;
  std::vector<double> ref_nodes_, ref_weights_, ref_bary_;
  std::vector<double> nodes_, weights_;
  std::vector<double> panel_lo_, panel_hi_;
};

}  // namespace jostlab

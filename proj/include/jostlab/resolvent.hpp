#pragma once

// Perturbed resolvent kernel G(x,y;zeta) assembled from Jost solutions via
// the fundamental determinant Delta(zeta) and Wronskian brackets, plus the
// structural audits: constancy of Delta, diagonal continuity, the top
// derivative jump, and the defining operator residual (A + V - z) G f = f.

#include <Eigen/Dense>
#include <functional>
#include <mutex>

#include "jostlab/jost.hpp"

namespace jostlab {

// ---------------------------------------------------------------------------
// Brackets {f,g} = f g' - f' g and their derivative companions.
// ---------------------------------------------------------------------------

struct Bracket {
  std::vector<cplx> values;  // f g'  - f'  g
  std::vector<cplx> d1;      // f g'' - f'' g   (= d/dx of values, N = 3)
  std::vector<cplx> d2;      // f' g'' - f'' g' (= d/dx of d1, N = 3)
};

inline Bracket bracket(const JostSolution& f, const JostSolution& g) {
  if (&f.grid() != &g.grid())
    throw std::invalid_argument("bracket: solutions live on different grids");
  const std::size_t n = f.grid().size();
  Bracket out;
  out.values.resize(n);
  if (f.spectral().N() >= 3) {
    out.d1.resize(n);
    out.d2.resize(n);
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = f.value(i, 0) * g.value(i, 1) - f.value(i, 1) * g.value(i, 0);
    if (f.spectral().N() >= 3) {
      out.d1[i] = f.value(i, 0) * g.value(i, 2) - f.value(i, 2) * g.value(i, 0);
      out.d2[i] = f.value(i, 1) * g.value(i, 2) - f.value(i, 2) * g.value(i, 1);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fundamental determinant Delta(zeta)
// ---------------------------------------------------------------------------

struct DeltaResult {
  cplx value{0.0, 0.0};          // determinant averaged over probe points
  double max_rel_spread = 0.0;   // x-independence diagnostic
  double dependence_scale = 0.0; // 1e-10 * product of column norms
  bool dependent() const { return std::abs(value) < dependence_scale; }
};

inline DeltaResult fundamental_determinant(
    std::span<const JostSolution* const> sols, std::span<const double> probes) {
  const int N = sols.front()->spectral().N();
  if (static_cast<int>(sols.size()) != N)
    throw std::invalid_argument("fundamental_determinant: need N solutions");
  std::vector<cplx> dets;
  double scale = 0.0;
  for (double x : probes) {
    Eigen::MatrixXcd M(N, N);
    double colprod = 1.0;
    for (int j = 0; j < N; ++j) {
      double cn = 0.0;
      for (int k = 0; k < N; ++k) {
        M(k, j) = sols[j]->eval(x, k);
        cn += std::norm(M(k, j));
      }
      colprod *= std::sqrt(cn);
    }
    dets.push_back(M.determinant());
    scale += colprod;
  }
  DeltaResult out;
  for (const auto& d : dets) out.value += d;
  out.value /= static_cast<double>(dets.size());
  scale /= static_cast<double>(dets.size());
  out.dependence_scale = 1e-10 * scale;
  double dev = 0.0;
  for (const auto& d : dets) dev = std::max(dev, std::abs(d - out.value));
  out.max_rel_spread = dev / std::max(std::abs(out.value), 1e-300);
  return out;
}

inline std::vector<double> default_probes(const Grid& g, std::size_t count = 10) {
  std::vector<double> probes;
  double lo = g.lo() * 0.8, hi = g.hi() * 0.8;
  for (std::size_t i = 0; i < count; ++i)
    probes.push_back(lo + (hi - lo) * (i + 0.5) / count);
  return probes;
}

inline DeltaResult delta(const JostSolution& theta1, const JostSolution& theta2,
                         const JostSolution& gamma1,
                         std::span<const double> probes) {
  const JostSolution* sols[3] = {&theta1, &theta2, &gamma1};
  return fundamental_determinant(sols, probes);
}

// ---------------------------------------------------------------------------
// Kernel assembly
// ---------------------------------------------------------------------------

struct DependenceError : std::runtime_error {
  DependenceError(cplx delta_value, double scale)
      : std::runtime_error(
            "resolvent assembly: Jost solutions are numerically dependent "
            "(|Delta| = " + std::to_string(std::abs(delta_value)) +
            " below threshold " + std::to_string(scale) +
            "); z is an eigenvalue or threshold candidate"),
        delta(delta_value),
        threshold(scale) {}
  cplx delta;
  double threshold;
};

class AssembledKernel final : public Kernel {
 public:
  // `thetas` bounded as x -> +infty, `gammas` as x -> -infty;
  // sizes (N+1)/2 and N/2. jump_constant is the prescribed jump of the
  // plain (N-1)-st derivative across x = y.
  AssembledKernel(std::vector<JostSolution> thetas, std::vector<JostSolution> gammas,
                  cplx jump_constant)
      : thetas_(std::move(thetas)), gammas_(std::move(gammas)), jump_(jump_constant) {
    const auto& sp = thetas_.front().spectral();
    const int N = sp.N();
    if (static_cast<int>(thetas_.size() + gammas_.size()) != N)
      throw std::invalid_argument("AssembledKernel: need N solutions total");
    grid_ = thetas_.front().grid_ptr();
    auto probes = default_probes(*grid_);
    std::vector<const JostSolution*> all;
    for (const auto& s : thetas_) all.push_back(&s);
    for (const auto& s : gammas_) all.push_back(&s);
    delta_ = fundamental_determinant(all, probes);
    if (delta_.dependent()) throw DependenceError(delta_.value, delta_.dependence_scale);

    // per-node coefficient solve: [theta cols | gamma cols] (c, -k) = (0,..,0,jump)
    const std::size_t n = grid_->size();
    coeff_theta_.assign(thetas_.size(), std::vector<cplx>(n));
    coeff_gamma_.assign(gammas_.size(), std::vector<cplx>(n));
    Eigen::MatrixXcd M(N, N);
    Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(N);
    for (std::size_t i = 0; i < n; ++i) {
      for (int k = 0; k < N; ++k) {
        int j = 0;
        for (const auto& s : thetas_) M(k, j++) = s.value(i, k);
        for (const auto& s : gammas_) M(k, j++) = s.value(i, k);
      }
      rhs(N - 1) = jump_;
      Eigen::VectorXcd sol = M.partialPivLu().solve(rhs);
      for (std::size_t j = 0; j < thetas_.size(); ++j) coeff_theta_[j][i] = sol(j);
      for (std::size_t j = 0; j < gammas_.size(); ++j)
        coeff_gamma_[j][i] = -sol(thetas_.size() + j);
    }
  }

  cplx dx(int k, double x, double y) const override {
    cplx acc{0.0, 0.0};
    if (x >= y) {
      for (std::size_t j = 0; j < thetas_.size(); ++j)
        acc += coeff_at(coeff_theta_[j], y) * thetas_[j].eval(x, k);
    } else {
      for (std::size_t j = 0; j < gammas_.size(); ++j)
        acc += coeff_at(coeff_gamma_[j], y) * gammas_[j].eval(x, k);
    }
    return acc;
  }

  const DeltaResult& delta() const { return delta_; }
  cplx jump_constant() const { return jump_; }
  const Grid& grid() const { return *grid_; }
  std::shared_ptr<const Grid> grid_ptr() const { return grid_; }
  const SpectralParam& spectral() const { return thetas_.front().spectral(); }
  const std::vector<JostSolution>& thetas() const { return thetas_; }
  const std::vector<JostSolution>& gammas() const { return gammas_; }
  const std::vector<cplx>& theta_coefficient(std::size_t j) const { return coeff_theta_[j]; }
  const std::vector<cplx>& gamma_coefficient(std::size_t j) const { return coeff_gamma_[j]; }

  // one-sided mismatch of d^k/dx^k at x = y, per node (continuity audit)
  cplx diagonal_mismatch(int k, std::size_t i) const {
    cplx up{0.0, 0.0}, down{0.0, 0.0};
    for (std::size_t j = 0; j < thetas_.size(); ++j)
      up += coeff_theta_[j][i] * thetas_[j].value(i, k);
    for (std::size_t j = 0; j < gammas_.size(); ++j)
      down += coeff_gamma_[j][i] * gammas_[j].value(i, k);
    return up - down;
  }

 private:
  cplx coeff_at(const std::vector<cplx>& c, double y) const {
    return grid_->interpolate(c, y);
  }

  std::vector<JostSolution> thetas_, gammas_;
  cplx jump_;
  std::shared_ptr<const Grid> grid_;
  DeltaResult delta_;
  std::vector<std::vector<cplx>> coeff_theta_, coeff_gamma_;
};

// Measured jump of the plain (N-1)-st x-derivative across the diagonal,
// per node (should equal the prescribed constant, independent of y).
inline std::vector<cplx> measured_jump(const AssembledKernel& K) {
  const int N = K.spectral().N();
  std::vector<cplx> out(K.grid().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = K.diagonal_mismatch(N - 1, i);
  return out;
}

// max over nodes of |mismatch| of d^k at x=y, relative to the local scale
inline double continuity_defect(const AssembledKernel& K, int k) {
  double worst = 0.0;
  const auto& g = K.grid();
  for (std::size_t i = 0; i < g.size(); ++i) {
    double scale = std::max(std::abs(K.dx(k, g.nodes()[i], g.nodes()[i])), 1.0);
    worst = std::max(worst, std::abs(K.diagonal_mismatch(k, i)) / scale);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Kernel application with exact diagonal splitting
// ---------------------------------------------------------------------------

// u_k(x) = int d^k/dx^k K(x,y) f(y) dy: panel Gauss quadrature; the panel
// containing x is split at the diagonal so the kernel kink is never inside a
// quadrature panel.
class KernelApply {
 public:
  KernelApply(const Kernel& K, const Grid& g, std::function<cplx(double)> f,
              int gauss_order = 10)
      : K_(K), g_(g), f_(std::move(f)) {
    gauss_legendre(gauss_order, gx_, gw_);
  }

  cplx operator()(double x, int k) const {
    cplx acc{0.0, 0.0};
    for (std::size_t p = 0; p < g_.panel_count(); ++p) {
      double a = g_.panel_lo(p), b = g_.panel_hi(p);
      if (x > a && x < b) {
        acc += segment(x, k, a, x);
        acc += segment(x, k, x, b);
      } else {
        acc += segment(x, k, a, b);
      }
    }
    return acc;
  }

 private:
  cplx segment(double x, int k, double a, double b) const {
    if (b - a < 1e-300) return {0.0, 0.0};
    double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    cplx acc{0.0, 0.0};
    for (std::size_t i = 0; i < gx_.size(); ++i) {
      double y = mid + half * gx_[i];
      acc += gw_[i] * K_.dx(k, x, y) * f_(y);
    }
    return half * acc;
  }

  const Kernel& K_;
  const Grid& g_;
  std::function<cplx(double)> f_;
  std::vector<double> gx_, gw_;
};

// ---------------------------------------------------------------------------
// Operator residual: the defining identity ((-i d/dx)^N + V - z) (K f) = f.
// ---------------------------------------------------------------------------

struct ResidualReport {
  double relative = 0.0;
  double absolute = 0.0;
  double rhs_scale = 0.0;
  std::vector<double> probes;
  std::vector<double> residuals;
};

// probe points: panel midpoints away from the domain edges
inline std::vector<double> residual_probes(const Grid& g, double edge_margin = 0.75) {
  std::vector<double> out;
  for (std::size_t p = 0; p < g.panel_count(); ++p) {
    double m = 0.5 * (g.panel_lo(p) + g.panel_hi(p));
    if (m > g.lo() + edge_margin && m < g.hi() - edge_margin) out.push_back(m);
  }
  return out;
}

// `density`: the function applied through the kernel (u = K density);
// `rhs`: the right-hand side the residual is measured against;
// `rank_one`: when set, the term phi(x) <phi, u> is added (B0 = phi (x) phi).
inline ResidualReport operator_residual(
    const Kernel& K, const SpectralParam& sp, const Potential& V,
    const std::function<cplx(double)>& density, const std::function<cplx(double)>& rhs,
    const Grid& g, const std::function<cplx(double)>* rank_one = nullptr,
    std::vector<double> probes = {}) {
  const int N = sp.N();
  const cplx z = sp.z();
  KernelApply apply(K, g, density);

  cplx pairing{0.0, 0.0};
  if (rank_one) {
    // <phi, u> over the phi support [-1, 1], bilinear pairing
    std::vector<double> qx, qw;
    gauss_legendre(12, qx, qw);
    for (std::size_t p = 0; p < g.panel_count(); ++p) {
      double a = std::max(g.panel_lo(p), -1.0), b = std::min(g.panel_hi(p), 1.0);
      if (b <= a) continue;
      double mid = 0.5 * (a + b), half = 0.5 * (b - a);
      for (std::size_t i = 0; i < qx.size(); ++i) {
        double y = mid + half * qx[i];
        pairing += half * qw[i] * (*rank_one)(y)*apply(y, 0);
      }
    }
  }

  if (probes.empty()) probes = residual_probes(g);
  ResidualReport rep;
  rep.probes = probes;
  for (double x : probes) {
    double delta_fd = std::min(5e-3, 0.25 * g.breakpoint_distance(x));
    if (delta_fd < 1e-6) continue;
    // top derivative by five-point differencing of the (N-1)-st apply
    cplx um2 = apply(x - 2 * delta_fd, N - 1), um1 = apply(x - delta_fd, N - 1);
    cplx up1 = apply(x + delta_fd, N - 1), up2 = apply(x + 2 * delta_fd, N - 1);
    cplx uN = (um2 - 8.0 * um1 + 8.0 * up1 - up2) / (12.0 * delta_fd);
    cplx u0 = apply(x, 0);
    cplx r = std::pow(-kImag, N) * uN + (V(x) - z) * u0 - rhs(x);
    if (rank_one) r += (*rank_one)(x)*pairing;
    rep.residuals.push_back(std::abs(r));
    rep.absolute = std::max(rep.absolute, std::abs(r));
    rep.rhs_scale = std::max(rep.rhs_scale, std::abs(rhs(x)));
  }
  rep.relative = rep.absolute / std::max(rep.rhs_scale, 1e-300);
  return rep;
}

inline ResidualReport apply_operator_residual(const Kernel& K, const SpectralParam& sp,
                                              const Potential& V,
                                              const std::function<cplx(double)>& f,
                                              const Grid& g) {
  return operator_residual(K, sp, V, f, f, g);
}

// ---------------------------------------------------------------------------
// Jump-constant calibration
// ---------------------------------------------------------------------------

// The unit-modulus constant kappa* in {1,-1,i,-i} prescribing the jump of the
// plain (N-1)-st derivative is fixed empirically: it is the one for which the
// assembled free kernel satisfies (A - z)(G f) = f.
inline cplx calibrate_jump_constant_uncached(int N) {
  Potential V0 = Potential::zero(1.0);
  SpectralParam sp(N, std::polar(0.45, 0.5 * std::numbers::pi / N));
  auto grid = std::make_shared<const Grid>(Grid::for_potential(V0, 3.0, 0.5, 6));
  std::vector<JostSolution> thetas, gammas;
  for (int m = 0; m < sp.up_branch_count(); ++m)
    thetas.push_back(jost_right(V0, sp, m, grid));
  for (int m = sp.up_branch_count(); m < N; ++m)
    gammas.push_back(jost_left(V0, sp, m, grid));
  auto f = [](double x) { return cplx{std::exp(-6.0 * x * x), 0.0}; };

  cplx best{1.0, 0.0};
  double best_res = std::numeric_limits<double>::max();
  for (cplx cand : {cplx{1, 0}, cplx{-1, 0}, cplx{0, 1}, cplx{0, -1}}) {
    AssembledKernel K(thetas, gammas, cand);
    auto rep = apply_operator_residual(K, sp, V0, f, *grid);
    if (rep.relative < best_res) {
      best_res = rep.relative;
      best = cand;
    }
  }
  if (best_res > 1e-3)
    throw std::runtime_error("jump-constant calibration failed to produce a consistent kernel");
  return best;
}

inline cplx calibrate_jump_constant(int N) {
  static std::mutex mu;
  static std::array<std::optional<cplx>, 16> cache;
  std::lock_guard<std::mutex> lock(mu);
  if (N < 2 || N >= 16) return calibrate_jump_constant_uncached(N);
  if (!cache[N]) cache[N] = calibrate_jump_constant_uncached(N);
  return *cache[N];
}

// Builds all Jost solutions and assembles the resolvent kernel with the
// calibrated jump constant.
inline AssembledKernel assemble_kernel(const Potential& V, const SpectralParam& sp,
                                       std::shared_ptr<const Grid> grid,
                                       double rtol = 1e-13) {
  std::vector<JostSolution> thetas, gammas;
  for (int m = 0; m < sp.up_branch_count(); ++m)
    thetas.push_back(jost_right(V, sp, m, grid, rtol));
  for (int m = sp.up_branch_count(); m < sp.N(); ++m)
    gammas.push_back(jost_left(V, sp, m, grid, rtol));
  return AssembledKernel(std::move(thetas), std::move(gammas),
                         calibrate_jump_constant(sp.N()));
}

// ---------------------------------------------------------------------------
// Conjugate-equation check for the bracket u = {theta1, theta2} (N = 3):
// if (i d^3/dx^3 + V - z) theta_j = 0 then (-i d^3/dx^3 + V - z) u = 0.
// ---------------------------------------------------------------------------

struct BracketConjugateReport {
  double relative = 0.0;     // conjugate-equation residual
  double fd_value_defect = 0.0;   // |d/dx u - u'| cross-check
  double fd_deriv_defect = 0.0;   // |d/dx u' - u''| cross-check
};

inline BracketConjugateReport bracket_conjugate_check(const JostSolution& t1,
                                                      const JostSolution& t2,
                                                      const Potential& V) {
  if (t1.spectral().N() != 3)
    throw std::invalid_argument("bracket_conjugate_check: N = 3 only");
  const Grid& g = t1.grid();
  Bracket br = bracket(t1, t2);
  const cplx z = t1.spectral().z();

  auto interp = [&](const std::vector<cplx>& col, double x) {
    return g.interpolate(col, x);
  };
  auto fd1 = [&](const std::vector<cplx>& col, double x, double h) {
    return (interp(col, x - 2 * h) - 8.0 * interp(col, x - h) +
            8.0 * interp(col, x + h) - interp(col, x + 2 * h)) /
           (12.0 * h);
  };

  BracketConjugateReport rep;
  double scale = 0.0;
  auto probes = residual_probes(g, 0.4);
  for (double x : probes) {
    double h = std::min(5e-3, 0.25 * g.breakpoint_distance(x));
    if (h < 1e-6) continue;
    // d/dx u'' = -i (V - z) u  (conjugate equation through second derivative)
    cplx lhs = fd1(br.d2, x, h);
    cplx target = -kImag * (V(x) - z) * interp(br.values, x);
    rep.relative = std::max(rep.relative, std::abs(lhs - target));
    scale = std::max(scale, std::abs(lhs) + std::abs(target));
    rep.fd_value_defect = std::max(
        rep.fd_value_defect, std::abs(fd1(br.values, x, h) - interp(br.d1, x)));
    rep.fd_deriv_defect = std::max(
        rep.fd_deriv_defect, std::abs(fd1(br.d1, x, h) - interp(br.d2, x)));
  }
  rep.relative /= std::max(scale, 1e-300);
  return rep;
}

}  // namespace jostlab

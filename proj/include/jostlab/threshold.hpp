#pragma once

// Threshold (z = 0) machinery: growth coefficients of the zero-energy
// solutions, the regular / virtual-level classification, virtual-state
// extraction, and the small-eigenvalue bifurcation family.

#include <Eigen/Dense>

#include "jostlab/resolvent.hpp"

namespace jostlab {

// ---------------------------------------------------------------------------
// Growth coefficients: outside the support every zero-energy solution is an
// exact polynomial a + b x + c x^2 (N = 3), so the coefficients can be read
// off the derivative vector at the support edge.
// ---------------------------------------------------------------------------

struct GrowthCoefficients {
  cplx a{0.0, 0.0}, b{0.0, 0.0}, c{0.0, 0.0};
};

enum class ThresholdSide { LeftSolution, RightSolution };  // gamma_1 / theta_0

// The zero-energy solution normalized to 1 on its prescribed side.
inline JostSolution threshold_solution(const Potential& V, ThresholdSide side,
                                       std::shared_ptr<const Grid> grid,
                                       double rtol = 1e-13) {
  SpectralParam sp0(3, cplx{0.0, 0.0});
  return side == ThresholdSide::LeftSolution ? jost_left(V, sp0, 2, grid, rtol)
                                             : jost_right(V, sp0, 0, grid, rtol);
}

inline GrowthCoefficients growth_from_edge(const JostSolution& sol, double x0) {
  GrowthCoefficients g;
  cplx u = sol.eval(x0, 0), u1 = sol.eval(x0, 1), u2 = sol.eval(x0, 2);
  g.c = 0.5 * u2;
  g.b = u1 - 2.0 * g.c * x0;
  g.a = u - g.b * x0 - g.c * x0 * x0;
  return g;
}

inline GrowthCoefficients growth_coefficients(const Potential& V, ThresholdSide side,
                                              std::shared_ptr<const Grid> grid,
                                              double rtol = 1e-13) {
  JostSolution sol = threshold_solution(V, side, grid, rtol);
  double L = V.support_radius();
  return growth_from_edge(sol, side == ThresholdSide::LeftSolution ? L : -L);
}

// ---------------------------------------------------------------------------
// Classification
// ---------------------------------------------------------------------------

struct ThresholdDiagnosticError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ThresholdReport {
  std::string classification;  // "regular" or "virtual_level"
  GrowthCoefficients growth;
  int delta_zero_order = 0;
  double delta_fit_slope = 0.0;
  bool criteria_agree = true;
  bool c_in_tolerance_band = false;
  double c_tolerance = 0.0;
  std::vector<double> eps;
  std::vector<double> delta_abs;
  double max_delta_spread = 0.0;

  bool is_virtual() const { return classification == "virtual_level"; }

  json to_json() const {
    json j;
    j["classification"] = classification;
    j["a"] = {growth.a.real(), growth.a.imag()};
    j["b"] = {growth.b.real(), growth.b.imag()};
    j["c"] = {growth.c.real(), growth.c.imag()};
    j["delta_zero_order"] = delta_zero_order;
    j["delta_fit_slope"] = delta_fit_slope;
    j["criteria_agree"] = criteria_agree;
    j["eps"] = eps;
    j["delta_abs"] = delta_abs;
    return j;
  }
};

inline std::vector<double> default_eps_ray() {
  return {1e-1, 3.1622776601683794e-2, 1e-2, 3.1622776601683794e-3, 1e-3};
}

// slope of least-squares fit of log(y) against log(x)
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    double lx = std::log(x[i]), ly = std::log(std::max(y[i], 1e-300));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// Classifies z = 0 by the growth coefficient c of gamma_1 (primary criterion:
// virtual level iff c = 0) and independently by the vanishing order of
// Delta(zeta) along a sector ray; the two must agree outside the tolerance
// band around |c| = tol.
inline ThresholdReport classify_threshold(const Potential& V,
                                          std::shared_ptr<const Grid> grid,
                                          std::vector<double> eps_ray = {},
                                          double ray_angle = std::numbers::pi / 6,
                                          double rtol = 1e-13) {
  if (eps_ray.empty()) eps_ray = default_eps_ray();
  ThresholdReport rep;
  rep.growth = growth_coefficients(V, ThresholdSide::LeftSolution, grid, rtol);
  rep.c_tolerance = 1e-8 * std::max({std::abs(rep.growth.a), std::abs(rep.growth.b), 1.0});
  const double ac = std::abs(rep.growth.c);
  const bool c_zero = ac <= rep.c_tolerance;
  rep.c_in_tolerance_band = !c_zero && ac <= 100.0 * rep.c_tolerance;

  for (double eps : eps_ray) {
    SpectralParam sp(3, std::polar(eps, ray_angle));
    std::vector<JostSolution> sols;
    sols.push_back(jost_right(V, sp, 0, grid, rtol));
    sols.push_back(jost_right(V, sp, 1, grid, rtol));
    sols.push_back(jost_left(V, sp, 2, grid, rtol));
    const JostSolution* ptrs[3] = {&sols[0], &sols[1], &sols[2]};
    auto probes = default_probes(*grid);
    DeltaResult d = fundamental_determinant(ptrs, probes);
    rep.eps.push_back(eps);
    rep.delta_abs.push_back(std::abs(d.value));
    rep.max_delta_spread = std::max(rep.max_delta_spread, d.max_rel_spread);
  }
  rep.delta_fit_slope = loglog_slope(rep.eps, rep.delta_abs);
  rep.delta_zero_order = static_cast<int>(std::lround(rep.delta_fit_slope));
  const bool order_virtual = rep.delta_fit_slope >= 1.5;

  rep.classification = c_zero ? "virtual_level" : "regular";
  rep.criteria_agree = (c_zero == order_virtual);
  if (!rep.criteria_agree && !rep.c_in_tolerance_band)
    throw ThresholdDiagnosticError(
        "threshold classification: c-criterion and Delta-order regression "
        "disagree (|c| = " + std::to_string(ac) + ", slope = " +
        std::to_string(rep.delta_fit_slope) + "); grid may be too coarse");
  return rep;
}

// ---------------------------------------------------------------------------
// Virtual state extraction
// ---------------------------------------------------------------------------

struct VirtualState {
  std::vector<double> xs;
  std::vector<cplx> values;
  double equation_residual = 0.0;       // FD check of u''' = i V u at z = 0
  double sup_left = 0.0;                // sup over x <= 0 of |Psi|
  double linear_growth_constant = 0.0;  // smallest C with |Psi| <= C <x>, x >= 0
  double growth_exponent = 0.0;         // log-log slope of |Psi| on the right tail
};

inline VirtualState extract_virtual_state(const Potential& V,
                                          std::shared_ptr<const Grid> grid,
                                          const ThresholdReport& report,
                                          double rtol = 1e-13) {
  if (!report.is_virtual())
    throw std::invalid_argument(
        "extract_virtual_state: threshold is classified regular");
  JostSolution psi = threshold_solution(V, ThresholdSide::LeftSolution, grid, rtol);

  VirtualState vs;
  const auto& nodes = grid->nodes();
  vs.xs.assign(nodes.begin(), nodes.end());
  vs.values.resize(nodes.size());
  std::vector<cplx> u2(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    vs.values[i] = psi.value(i, 0);
    u2[i] = psi.value(i, 2);
    double x = nodes[i];
    if (x <= 0.0) vs.sup_left = std::max(vs.sup_left, std::abs(vs.values[i]));
    if (x >= 0.0)
      vs.linear_growth_constant =
          std::max(vs.linear_growth_constant, std::abs(vs.values[i]) / weight(x, 1));
  }

  // residual of u''' = i V u through differencing of the sampled u''
  double scale = 0.0, worst = 0.0;
  for (double x : residual_probes(*grid, 0.4)) {
    double h = std::min(5e-3, 0.25 * grid->breakpoint_distance(x));
    if (h < 1e-6) continue;
    cplx d3 = (grid->interpolate(u2, x - 2 * h) - 8.0 * grid->interpolate(u2, x - h) +
               8.0 * grid->interpolate(u2, x + h) - grid->interpolate(u2, x + 2 * h)) /
              (12.0 * h);
    cplx target = kImag * V(x) * psi.eval(x, 0);
    worst = std::max(worst, std::abs(d3 - target));
    scale = std::max(scale, std::abs(psi.eval(x, 0)));
  }
  vs.equation_residual = worst / std::max(scale, 1e-300);

  // growth exponent of |Psi| against <x> on the right tail
  std::vector<double> wx, wy;
  double L = V.support_radius();
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i] > L + 0.25) {
      wx.push_back(weight(nodes[i], 1));
      wy.push_back(std::max(std::abs(vs.values[i]), 1e-300));
    }
  vs.growth_exponent = wx.size() >= 2 ? loglog_slope(wx, wy) : 0.0;
  return vs;
}

// ---------------------------------------------------------------------------
// Bifurcation family: for kappa in (0, kappa0) a potential V_kappa supported
// on [-1, 1], with sup |V_kappa| -> 0, such that z = kappa^3 is an eigenvalue
// of the real-form operator -d^3/dx^3 + V_kappa.
// ---------------------------------------------------------------------------

// Exact piecewise solution: e^{-kappa x} (right), 1 + sum a_j x^j (middle),
// Re e^{-alpha kappa x} (left), with alpha = e^{2 pi i/3}.
class BifurcationSolution {
 public:
  BifurcationSolution(double kappa, std::array<double, 8> a)
      : kappa_(kappa), a_(a) {}

  double kappa() const { return kappa_; }
  const std::array<double, 8>& coeffs() const { return a_; }

  double eval(double x, int deriv = 0) const {
    const cplx alpha = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
    if (x >= 1.0)
      return std::pow(-kappa_, deriv) * std::exp(-kappa_ * x);
    if (x <= -1.0)
      return (std::pow(-alpha * kappa_, deriv) * std::exp(-alpha * kappa_ * x)).real();
    double acc = (deriv == 0) ? 1.0 : 0.0;
    for (int j = deriv; j < 8; ++j) {
      double fall = 1.0;
      for (int t = j; t > j - deriv; --t) fall *= t;
      acc += a_[j] * fall * std::pow(x, j - deriv);
    }
    return acc;
  }

  double one_sided(double x, int deriv, bool from_left) const {
    if (std::abs(x - 1.0) < 1e-14)
      return from_left ? eval_mid(1.0, deriv) : std::pow(-kappa_, deriv) * std::exp(-kappa_);
    if (std::abs(x + 1.0) < 1e-14) {
      const cplx alpha = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);
      return from_left
                 ? (std::pow(-alpha * kappa_, deriv) * std::exp(alpha * kappa_)).real()
                 : eval_mid(-1.0, deriv);
    }
    return eval(x, deriv);
  }

 private:
  double eval_mid(double x, int deriv) const {
    double acc = (deriv == 0) ? 1.0 : 0.0;
    for (int j = deriv; j < 8; ++j) {
      double fall = 1.0;
      for (int t = j; t > j - deriv; --t) fall *= t;
      acc += a_[j] * fall * std::pow(x, j - deriv);
    }
    return acc;
  }

  double kappa_;
  std::array<double, 8> a_;
};

namespace detail {

// Least-squares monomial fit through Chebyshev samples on [a, b].
inline std::vector<cplx> chebyshev_fit(const std::function<double(double)>& f,
                                       double a, double b, int degree) {
  const int n = degree + 1;
  const int m = 2 * n;
  Eigen::MatrixXd A(m, n);
  Eigen::VectorXd rhs(m);
  for (int i = 0; i < m; ++i) {
    double t = std::cos(std::numbers::pi * (i + 0.5) / m);
    double x = 0.5 * (a + b) + 0.5 * (b - a) * t;
    rhs(i) = f(x);
    double p = 1.0;
    for (int j = 0; j < n; ++j) {
      A(i, j) = p;
      p *= x;
    }
  }
  Eigen::VectorXd c = A.householderQr().solve(rhs);
  std::vector<cplx> out(n);
  for (int j = 0; j < n; ++j) out[j] = cplx{c(j), 0.0};
  return out;
}

}  // namespace detail

struct BifurcationFamily {
  Potential potential;          // piecewise-polynomial representation of V_kappa
  BifurcationSolution solution; // exact eigenfunction of the real-form equation
  std::array<double, 8> coeffs; // the matching coefficients a_j
  double interpolation_defect;  // sup |V_polynomial - V_exact| over [-1, 1]
};

// Solves the 8x8 matching system: u = 1 + sum a_j x^j joins the tails with
// three continuous derivatives at x = +-1, then defines
// V_kappa = (u''' + kappa^3 u) / u on [-1, 1].
inline BifurcationFamily build_bifurcation_potential(double kappa,
                                                     int pieces = 8,
                                                     int degree = 10) {
  if (kappa < 0.0 || kappa >= 0.3000000001)
    throw std::invalid_argument("build_bifurcation_potential: need 0 <= kappa <= 0.3");
  const cplx alpha = std::polar(1.0, 2.0 * std::numbers::pi / 3.0);

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(8, 8);
  Eigen::VectorXd rhs(8);
  for (int r = 0; r < 4; ++r) {
    for (int j = r; j < 8; ++j) {
      double fall = 1.0;
      for (int t = j; t > j - r; --t) fall *= t;
      M(r, j) = fall;                                   // at x = +1
      M(4 + r, j) = fall * ((j - r) % 2 == 0 ? 1.0 : -1.0);  // at x = -1
    }
    rhs(r) = std::pow(-kappa, r) * std::exp(-kappa) - (r == 0 ? 1.0 : 0.0);
    rhs(4 + r) = (std::pow(-alpha * kappa, r) * std::exp(alpha * kappa)).real() -
                 (r == 0 ? 1.0 : 0.0);
  }
  Eigen::VectorXd avec = M.partialPivLu().solve(rhs);
  if ((M * avec - rhs).cwiseAbs().maxCoeff() > 1e-10)
    throw std::runtime_error("build_bifurcation_potential: singular matching system");
  std::array<double, 8> a{};
  for (int j = 0; j < 8; ++j) a[j] = avec(j);
  BifurcationSolution u(kappa, a);

  auto v_exact = [&](double x) {
    return (u.eval(x, 3) + kappa * kappa * kappa * u.eval(x, 0)) / u.eval(x, 0);
  };

  std::vector<PotentialPiece> pp;
  double defect = 0.0;
  if (kappa > 0.0) {
    for (int p = 0; p < pieces; ++p) {
      PotentialPiece piece;
      piece.lo = -1.0 + 2.0 * p / pieces;
      piece.hi = -1.0 + 2.0 * (p + 1) / pieces;
      piece.coeffs = detail::chebyshev_fit(v_exact, piece.lo, piece.hi, degree);
      for (int i = 0; i <= 64; ++i) {
        double x = piece.lo + (piece.hi - piece.lo) * i / 64.0;
        defect = std::max(defect, std::abs(piece.eval(x) - v_exact(x)));
      }
      pp.push_back(std::move(piece));
    }
  }
  return BifurcationFamily{Potential(std::move(pp), 1.0, true), u, a, defect};
}

struct BifurcationCheck {
  double defining_residual = 0.0;  // sup |-u''' + V u - kappa^3 u| over [-1,1]
  double joint_mismatch = 0.0;     // continuity of u..u''' at x = +-1
  double sup_potential = 0.0;
  double max_coeff_over_kappa = 0.0;
  double u_min = 1.0;              // over [-2, 2]
  double matched_delta_abs = 0.0;
  double dependence_threshold = 0.0;
  bool delta_flagged = false;
};

// Verifies the family: pointwise defining residual, joint continuity, tail
// decay (exact by construction), and linear dependence of the Jost solutions
// at the matched spectral parameter. The real-form equation
// -u''' + V u = z u maps to the principal form by x -> -x, V -> i V(-x),
// z -> i z; the matched parameter is zeta = kappa e^{i pi/6}.
inline BifurcationCheck verify_bifurcation_eigenvalue(double kappa,
                                                      double rtol = 1e-13) {
  BifurcationFamily fam = build_bifurcation_potential(kappa);
  const auto& u = fam.solution;
  const double k3 = kappa * kappa * kappa;

  BifurcationCheck chk;
  for (int i = 0; i <= 2000; ++i) {
    double x = -1.0 + 2.0 * i / 2000.0;
    double res = -u.eval(x, 3) + (fam.potential(x) * u.eval(x, 0)).real() -
                 k3 * u.eval(x, 0);
    chk.defining_residual = std::max(chk.defining_residual, std::abs(res));
    chk.sup_potential = std::max(chk.sup_potential, std::abs(fam.potential(x)));
  }
  for (double xj : {1.0, -1.0})
    for (int r = 0; r < 4; ++r)
      chk.joint_mismatch =
          std::max(chk.joint_mismatch, std::abs(u.one_sided(xj, r, true) -
                                                u.one_sided(xj, r, false)));
  for (int i = 0; i <= 400; ++i) {
    double x = -2.0 + 4.0 * i / 400.0;
    chk.u_min = std::min(chk.u_min, u.eval(x, 0));
  }
  for (double aj : fam.coeffs)
    chk.max_coeff_over_kappa =
        std::max(chk.max_coeff_over_kappa, std::abs(aj) / std::max(kappa, 1e-300));

  if (kappa > 0.0) {
    Potential v_eff = fam.potential.reflected().scaled(kImag);
    SpectralParam sp(3, std::polar(kappa, std::numbers::pi / 6.0));
    auto grid = std::make_shared<const Grid>(Grid::for_potential(v_eff, 3.0, 0.25, 6));
    std::vector<JostSolution> sols;
    sols.push_back(jost_right(v_eff, sp, 0, grid, rtol));
    sols.push_back(jost_right(v_eff, sp, 1, grid, rtol));
    sols.push_back(jost_left(v_eff, sp, 2, grid, rtol));
    const JostSolution* ptrs[3] = {&sols[0], &sols[1], &sols[2]};
    auto probes = default_probes(*grid);
    DeltaResult d = fundamental_determinant(ptrs, probes);
    chk.matched_delta_abs = std::abs(d.value);
    chk.dependence_threshold = d.dependence_scale;
    chk.delta_flagged = d.dependent();
  }
  return chk;
}

// ---------------------------------------------------------------------------
// Two-sided virtual states: a potential whose zero-energy solution gamma_1 is
// bounded on both sides (b = c = 0). Within the purely imaginary two-step
// family V = i (p chi_[-1,0) + q chi_[0,1]) the zero-energy equation is real,
// so the two complex growth conditions reduce to two real ones and a plain
// 2-parameter Newton shooting applies.
// ---------------------------------------------------------------------------

inline Potential two_step_imaginary_potential(double p, double q) {
  std::vector<PotentialPiece> pieces;
  pieces.push_back(PotentialPiece{-1.0, 0.0, {cplx{0.0, p}}});
  pieces.push_back(PotentialPiece{0.0, 1.0, {cplx{0.0, q}}});
  return Potential(std::move(pieces), 1.0);
}

// Newton search for (p, q) with b = c = 0; start frozen from a coarse scan.
inline Potential find_two_sided_potential(double p0 = 2.659, double q0 = -40.386,
                                          double tol = 1e-12) {
  auto bc = [&](double p, double q) {
    Potential V = two_step_imaginary_potential(p, q);
    auto grid = std::make_shared<const Grid>(Grid::for_potential(V, 2.0, 0.25, 6));
    GrowthCoefficients g =
        growth_coefficients(V, ThresholdSide::LeftSolution, grid, 1e-13);
    return std::array<double, 2>{g.b.real(), g.c.real()};
  };
  double p = p0, q = q0;
  for (int it = 0; it < 40; ++it) {
    auto f = bc(p, q);
    if (std::abs(f[0]) < tol && std::abs(f[1]) < tol) break;
    double h = 1e-6;
    auto fp = bc(p + h, q), fq = bc(p, q + h);
    Eigen::Matrix2d J;
    J << (fp[0] - f[0]) / h, (fq[0] - f[0]) / h, (fp[1] - f[1]) / h,
        (fq[1] - f[1]) / h;
    Eigen::Vector2d step = J.partialPivLu().solve(Eigen::Vector2d(f[0], f[1]));
    p -= step(0);
    q -= step(1);
  }
  auto f = bc(p, q);
  if (std::abs(f[0]) > 1e-9 || std::abs(f[1]) > 1e-9)
    throw std::runtime_error("find_two_sided_potential: shooting did not converge");
  return two_step_imaginary_potential(p, q);
}

}  // namespace jostlab

#include "chemouq/hdg.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace chemouq::hdg {

namespace {

// 3-point Gauss-Legendre on the reference interval [0, 1].
constexpr std::array<double, 3> kGaussX = {0.5 - 0.3872983346207417, 0.5, 0.5 + 0.3872983346207417};
constexpr std::array<double, 3> kGaussW = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

// Per-solve constants of the element equations.
struct Coefficients {
  double h = 0, dt = 0;
  double m = 0;      // h / 6, the mass-matrix scale
  double tu = 0;     // tau_u / h
  double tp = 0;     // tau_phi
  double c1 = 0;     // 1 / dt + a
  double kappa = 0;  // chi / (nu mu)
  double inv_mu = 0, inv_nu = 0;
};

Coefficients coefficients(const Mesh& mesh, const ModelParameters& p, double dt,
                          const SolverOptions& opts) {
  Coefficients c;
  c.h = mesh.h();
  c.dt = dt;
  c.m = c.h / 6.0;
  c.tu = opts.tau_u / c.h;
  c.tp = opts.tau_phi;
  c.c1 = 1.0 / dt + p.a;
  c.kappa = p.chi / (p.nu * p.mu);
  c.inv_mu = 1.0 / p.mu;
  c.inv_nu = 1.0 / p.nu;
  return c;
}

// Spatial part of the source loads, (int g l_L, int g l_R) per element, where
// f_phi(x, t) = exp(-rho t) g(x).
std::vector<std::array<double, 2>> source_loads(const Mesh& mesh, const ModelParameters& p) {
  std::vector<std::array<double, 2>> loads(static_cast<std::size_t>(mesh.n_elements()));
  const double h = mesh.h();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const double x0 = mesh.node(e);
    std::array<double, 2> f{};
    for (std::size_t q = 0; q < 3; ++q) {
      const double x = x0 + kGaussX[q] * h;
      const double g = forcing_chemoattractant(p, x, 0.0);
      f[0] += kGaussW[q] * h * g * (1.0 - kGaussX[q]);
      f[1] += kGaussW[q] * h * g * kGaussX[q];
    }
    loads[static_cast<std::size_t>(e)] = f;
  }
  return loads;
}

template <int B>
using Block = Eigen::Matrix<double, B, B>;
template <int B>
using BlockVec = Eigen::Matrix<double, B, 1>;

// Block-tridiagonal solve (block Thomas). lower[k] couples row k to k-1,
// upper[k] couples row k to k+1. Inputs are overwritten.
template <int B>
std::vector<BlockVec<B>> solve_block_tridiagonal(std::vector<Block<B>>& lower,
                                                 std::vector<Block<B>>& diag,
                                                 std::vector<Block<B>>& upper,
                                                 std::vector<BlockVec<B>>& rhs) {
  const std::size_t n = diag.size();
  auto check = [](const Block<B>& d, std::size_t k) {
    const double scale = d.cwiseAbs().maxCoeff();
    const double det = d.determinant();
    if (!(scale > 0.0) || !(std::abs(det) > 1e-14 * std::pow(scale, B)) || !std::isfinite(det))
      throw LinearSolveError("singular condensed system at node " + std::to_string(k));
  };
  for (std::size_t k = 1; k < n; ++k) {
    check(diag[k - 1], k - 1);
    const Block<B> factor = lower[k] * diag[k - 1].inverse();
    diag[k] -= factor * upper[k - 1];
    rhs[k] -= factor * rhs[k - 1];
  }
  check(diag[n - 1], n - 1);
  std::vector<BlockVec<B>> x(n);
  x[n - 1] = diag[n - 1].inverse() * rhs[n - 1];
  for (std::size_t k = n - 1; k-- > 0;) x[k] = diag[k].inverse() * (rhs[k] - upper[k] * x[k + 1]);
  return x;
}

// ---------------------------------------------------------------------------
// Monolithic element system.
//
// Local unknowns z = (u_L, u_R, j, phi_L, phi_R, psi_L, psi_R), multipliers
// lam = (uhat_L, uhat_R, phihat_L, phihat_R). Rows of R: the two u-equations,
// the j-equation, the two phi-equations, the two psi-equations. Rows of G: the
// numerical fluxes jhat_+ (left node), jhat_- (right node), psihat_+ (left),
// psihat_- (right).
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat77 = Eigen::Matrix<double, 7, 7>;
using Mat74 = Eigen::Matrix<double, 7, 4>;
using Mat47 = Eigen::Matrix<double, 4, 7>;
using Mat44 = Eigen::Matrix<double, 4, 4>;

struct ElementSystem {
  Vec7 R;
  Mat77 A;
  Mat74 B;
  Vec4 G;
  Mat47 C;
  Mat44 D;
};

Vec7 pack(const ElementState& s) {
  Vec7 z;
  z << s.u[0], s.u[1], s.j, s.phi[0], s.phi[1], s.psi[0], s.psi[1];
  return z;
}

ElementState unpack(const Vec7& z) {
  ElementState s;
  s.u = {z[0], z[1]};
  s.j = z[2];
  s.phi = {z[3], z[4]};
  s.psi = {z[5], z[6]};
  return s;
}

ElementSystem element_system(const Coefficients& c, const Vec7& z, const Vec4& lam,
                             const ElementState& old, const std::array<double, 2>& load) {
  const double uL = z[0], uR = z[1], j = z[2], fL = z[3], fR = z[4], sL = z[5], sR = z[6];
  const double m = c.m, dt = c.dt;
  ElementSystem s;
  s.A.setZero();
  s.B.setZero();
  s.C.setZero();
  s.D.setZero();

  // u-equations (the volume flux term and the j part of the numerical flux
  // cancel for a constant j; both are kept to mirror the weak form).
  s.R[0] = m * (2 * uL + uR - 2 * old.u[0] - old.u[1]) / dt + j + (-j + c.tu * (uL - lam[0]));
  s.R[1] = m * (uL + 2 * uR - old.u[0] - 2 * old.u[1]) / dt - j + (j + c.tu * (uR - lam[1]));
  s.A(0, 0) = 2 * m / dt + c.tu;
  s.A(0, 1) = m / dt;
  s.A(1, 0) = m / dt;
  s.A(1, 1) = 2 * m / dt + c.tu;
  s.B(0, 0) = -c.tu;
  s.B(1, 1) = -c.tu;

  // j-equation with the chemotactic product psi * u.
  const double km = c.kappa * m;
  s.R[2] = c.h * c.inv_nu * j + km * (2 * sL * uL + sL * uR + sR * uL + 2 * sR * uR) + lam[1] -
           lam[0];
  s.A(2, 0) = km * (2 * sL + sR);
  s.A(2, 1) = km * (sL + 2 * sR);
  s.A(2, 2) = c.h * c.inv_nu;
  s.A(2, 5) = km * (2 * uL + uR);
  s.A(2, 6) = km * (uL + 2 * uR);
  s.B(2, 0) = -1.0;
  s.B(2, 1) = 1.0;

  // phi-equations.
  s.R[3] = m * (c.c1 * (2 * fL + fR) - (2 * old.phi[0] + old.phi[1]) / dt) + 0.5 * (sL + sR) +
           (-sL + c.tp * (fL - lam[2])) - load[0];
  s.R[4] = m * (c.c1 * (fL + 2 * fR) - (old.phi[0] + 2 * old.phi[1]) / dt) - 0.5 * (sL + sR) +
           (sR + c.tp * (fR - lam[3])) - load[1];
  s.A(3, 3) = 2 * m * c.c1 + c.tp;
  s.A(3, 4) = m * c.c1;
  s.A(3, 5) = -0.5;
  s.A(3, 6) = 0.5;
  s.A(4, 3) = m * c.c1;
  s.A(4, 4) = 2 * m * c.c1 + c.tp;
  s.A(4, 5) = -0.5;
  s.A(4, 6) = 0.5;
  s.B(3, 2) = -c.tp;
  s.B(4, 3) = -c.tp;

  // psi-equations.
  s.R[5] = m * c.inv_mu * (2 * sL + sR) + 0.5 * (fL + fR) - lam[2];
  s.R[6] = m * c.inv_mu * (sL + 2 * sR) - 0.5 * (fL + fR) + lam[3];
  s.A(5, 5) = 2 * m * c.inv_mu;
  s.A(5, 6) = m * c.inv_mu;
  s.A(5, 3) = 0.5;
  s.A(5, 4) = 0.5;
  s.A(6, 5) = m * c.inv_mu;
  s.A(6, 6) = 2 * m * c.inv_mu;
  s.A(6, 3) = -0.5;
  s.A(6, 4) = -0.5;
  s.B(5, 2) = -1.0;
  s.B(6, 3) = 1.0;

  // Numerical fluxes.
  s.G[0] = -j + c.tu * (uL - lam[0]);
  s.G[1] = j + c.tu * (uR - lam[1]);
  s.G[2] = -sL + c.tp * (fL - lam[2]);
  s.G[3] = sR + c.tp * (fR - lam[3]);
  s.C(0, 2) = -1.0;
  s.C(0, 0) = c.tu;
  s.C(1, 2) = 1.0;
  s.C(1, 1) = c.tu;
  s.C(2, 5) = -1.0;
  s.C(2, 3) = c.tp;
  s.C(3, 6) = 1.0;
  s.C(3, 4) = c.tp;
  s.D(0, 0) = -c.tu;
  s.D(1, 1) = -c.tu;
  s.D(2, 2) = -c.tp;
  s.D(3, 3) = -c.tp;
  return s;
}

Vec4 local_multipliers(const TraceState& t, int e) {
  const auto k = static_cast<std::size_t>(e);
  Vec4 lam;
  lam << t.u_hat[k], t.u_hat[k + 1], t.phi_hat[k], t.phi_hat[k + 1];
  return lam;
}

// Maps a local multiplier/flux slot to (node offset, component).
constexpr std::array<int, 4> kSlotNode = {0, 1, 0, 1};
constexpr std::array<int, 4> kSlotComp = {0, 0, 1, 1};

StepState advance_monolithic(const StepState& current, const Mesh& mesh, const Coefficients& c,
                             const std::vector<std::array<double, 2>>& loads, double decay,
                             const SolverOptions& opts, StepInfo* info) {
  const int ne = mesh.n_elements();
  const auto nn = static_cast<std::size_t>(mesh.n_nodes());
  StepState next = current;

  std::vector<Mat77> a_inv(static_cast<std::size_t>(ne));
  std::vector<Vec7> a_inv_r(static_cast<std::size_t>(ne));
  std::vector<Mat74> a_inv_b(static_cast<std::size_t>(ne));

  double r0 = -1.0;
  double rnorm = 0.0;
  for (int iter = 0;; ++iter) {
    std::vector<Block<2>> lower(nn, Block<2>::Zero()), diag(nn, Block<2>::Zero()),
        upper(nn, Block<2>::Zero());
    std::vector<BlockVec<2>> rhs(nn, BlockVec<2>::Zero());
    for (int e = 0; e < ne; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      const std::array<double, 2> load = {decay * loads[ue][0], decay * loads[ue][1]};
      const auto sys = element_system(c, pack(next.elements[ue]), local_multipliers(next.traces, e),
                                      current.elements[ue], load);
      Eigen::PartialPivLU<Mat77> lu(sys.A);
      a_inv_r[ue] = lu.solve(sys.R);
      a_inv_b[ue] = lu.solve(sys.B);
      const Mat44 K = sys.D - sys.C * a_inv_b[ue];
      const Vec4 f = -sys.G + sys.C * a_inv_r[ue];
      for (int r = 0; r < 4; ++r) {
        const auto node_r = ue + static_cast<std::size_t>(kSlotNode[r]);
        rhs[node_r][kSlotComp[r]] += f[r];
        for (int q = 0; q < 4; ++q) {
          const int dn = kSlotNode[q] - kSlotNode[r];
          Block<2>& target = dn == 0 ? diag[node_r] : (dn > 0 ? upper[node_r] : lower[node_r]);
          target(kSlotComp[r], kSlotComp[q]) += K(r, q);
        }
      }
    }
    rnorm = 0.0;
    for (const auto& v : rhs) rnorm += v.squaredNorm();
    rnorm = std::sqrt(rnorm);
    if (iter == 0) r0 = rnorm;
    if (rnorm < 1e-14 || (iter > 0 && rnorm <= opts.newton_tol * r0)) {
      if (info) *info = {iter, rnorm};
      return next;
    }
    if (iter == opts.newton_max_iter)
      throw StepFailure("Newton did not converge in " + std::to_string(iter) +
                            " iterations (residual " + format_double(rnorm) + ")",
                        rnorm);
    const auto dlam = solve_block_tridiagonal<2>(lower, diag, upper, rhs);
    for (std::size_t k = 0; k < nn; ++k) {
      next.traces.u_hat[k] += dlam[k][0];
      next.traces.phi_hat[k] += dlam[k][1];
    }
    for (int e = 0; e < ne; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      Vec4 dl;
      dl << dlam[ue][0], dlam[ue + 1][0], dlam[ue][1], dlam[ue + 1][1];
      const Vec7 dz = -(a_inv_r[ue] + a_inv_b[ue] * dl);
      next.elements[ue] = unpack(pack(next.elements[ue]) + dz);
    }
  }
}

// ---------------------------------------------------------------------------
// Sequential coupling: the chemoattractant subsystem does not see u, so it is
// solved first (linear, constant element matrices), then the immune-cell
// subsystem, which is linear once psi is known.
StepState advance_sequential(const StepState& current, const Mesh& mesh, const Coefficients& c,
                             const std::vector<std::array<double, 2>>& loads, double decay,
                             StepInfo* info) {
  const int ne = mesh.n_elements();
  const auto nn = static_cast<std::size_t>(mesh.n_nodes());
  const double m = c.m;
  StepState next;
  next.elements.resize(static_cast<std::size_t>(ne));
  next.traces.u_hat.assign(nn, 0.0);
  next.traces.phi_hat.assign(nn, 0.0);

  // phi block: z = (phi_L, phi_R, psi_L, psi_R), lam = (phihat_L, phihat_R).
  Eigen::Matrix4d A;
  A << 2 * m * c.c1 + c.tp, m * c.c1, -0.5, 0.5,  //
      m * c.c1, 2 * m * c.c1 + c.tp, -0.5, 0.5,   //
      0.5, 0.5, 2 * m * c.inv_mu, m * c.inv_mu,   //
      -0.5, -0.5, m * c.inv_mu, 2 * m * c.inv_mu;
  Eigen::Matrix<double, 4, 2> B;
  B << -c.tp, 0, 0, -c.tp, -1, 0, 0, 1;
  Eigen::Matrix<double, 2, 4> C;
  C << c.tp, 0, -1, 0, 0, c.tp, 0, 1;
  const Eigen::Matrix2d D = -c.tp * Eigen::Matrix2d::Identity();
  const Eigen::Matrix4d Ainv = A.inverse();
  const Eigen::Matrix<double, 4, 2> AinvB = Ainv * B;
  const Eigen::Matrix<double, 2, 4> CAinv = C * Ainv;
  const Eigen::Matrix2d K = D - C * AinvB;

  std::vector<Block<1>> lower(nn, Block<1>::Zero()), diag(nn, Block<1>::Zero()),
      upper(nn, Block<1>::Zero());
  std::vector<BlockVec<1>> rhs(nn, BlockVec<1>::Zero());
  std::vector<Eigen::Vector4d> phi_rhs(static_cast<std::size_t>(ne));
  for (int e = 0; e < ne; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    const auto& old = current.elements[ue];
    Eigen::Vector4d r;
    r << decay * loads[ue][0] + m * (2 * old.phi[0] + old.phi[1]) / c.dt,
        decay * loads[ue][1] + m * (old.phi[0] + 2 * old.phi[1]) / c.dt, 0.0, 0.0;
    phi_rhs[ue] = r;
    const Eigen::Vector2d f = -CAinv * r;
    diag[ue](0, 0) += K(0, 0);
    upper[ue](0, 0) += K(0, 1);
    lower[ue + 1](0, 0) += K(1, 0);
    diag[ue + 1](0, 0) += K(1, 1);
    rhs[ue][0] += f[0];
    rhs[ue + 1][0] += f[1];
  }
  const auto phi_hat = solve_block_tridiagonal<1>(lower, diag, upper, rhs);
  for (std::size_t k = 0; k < nn; ++k) next.traces.phi_hat[k] = phi_hat[k][0];
  for (int e = 0; e < ne; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    const Eigen::Vector2d lam(phi_hat[ue][0], phi_hat[ue + 1][0]);
    const Eigen::Vector4d z = Ainv * phi_rhs[ue] - AinvB * lam;
    next.elements[ue].phi = {z[0], z[1]};
    next.elements[ue].psi = {z[2], z[3]};
  }

  // u block: z = (u_L, u_R, j), lam = (uhat_L, uhat_R).
  for (auto& b : lower) b.setZero();
  for (auto& b : diag) b.setZero();
  for (auto& b : upper) b.setZero();
  for (auto& v : rhs) v.setZero();
  Eigen::Matrix<double, 3, 2> Bu;
  Bu << -c.tu, 0, 0, -c.tu, -1, 1;
  Eigen::Matrix<double, 2, 3> Cu;
  Cu << c.tu, 0, -1, 0, c.tu, 1;
  const Eigen::Matrix2d Du = -c.tu * Eigen::Matrix2d::Identity();
  std::vector<Eigen::Matrix3d> u_inv(static_cast<std::size_t>(ne));
  std::vector<Eigen::Vector3d> u_rhs(static_cast<std::size_t>(ne));
  const double km = c.kappa * m;
  for (int e = 0; e < ne; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    const auto& old = current.elements[ue];
    const double sL = next.elements[ue].psi[0], sR = next.elements[ue].psi[1];
    Eigen::Matrix3d Au;
    Au << 2 * m / c.dt + c.tu, m / c.dt, 0.0,  //
        m / c.dt, 2 * m / c.dt + c.tu, 0.0,    //
        km * (2 * sL + sR), km * (sL + 2 * sR), c.h * c.inv_nu;
    u_inv[ue] = Au.inverse();
    Eigen::Vector3d r;
    r << m * (2 * old.u[0] + old.u[1]) / c.dt, m * (old.u[0] + 2 * old.u[1]) / c.dt, 0.0;
    u_rhs[ue] = r;
    const Eigen::Matrix<double, 2, 3> CAi = Cu * u_inv[ue];
    const Eigen::Matrix2d Ku = Du - CAi * Bu;
    const Eigen::Vector2d f = -CAi * r;
    diag[ue](0, 0) += Ku(0, 0);
    upper[ue](0, 0) += Ku(0, 1);
    lower[ue + 1](0, 0) += Ku(1, 0);
    diag[ue + 1](0, 0) += Ku(1, 1);
    rhs[ue][0] += f[0];
    rhs[ue + 1][0] += f[1];
  }
  const auto u_hat = solve_block_tridiagonal<1>(lower, diag, upper, rhs);
  for (std::size_t k = 0; k < nn; ++k) next.traces.u_hat[k] = u_hat[k][0];
  for (int e = 0; e < ne; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    const Eigen::Vector2d lam(u_hat[ue][0], u_hat[ue + 1][0]);
    const Eigen::Vector3d z = u_inv[ue] * (u_rhs[ue] - Bu * lam);
    next.elements[ue].u = {z[0], z[1]};
    next.elements[ue].j = z[2];
  }

  if (info) {
    // Transmission residual of both subsystems after the solve.
    std::vector<double> ju(nn, 0.0), jp(nn, 0.0);
    for (int e = 0; e < ne; ++e) {
      const auto ue = static_cast<std::size_t>(e);
      const auto& s = next.elements[ue];
      ju[ue] += -s.j + c.tu * (s.u[0] - next.traces.u_hat[ue]);
      ju[ue + 1] += s.j + c.tu * (s.u[1] - next.traces.u_hat[ue + 1]);
      jp[ue] += -s.psi[0] + c.tp * (s.phi[0] - next.traces.phi_hat[ue]);
      jp[ue + 1] += s.psi[1] + c.tp * (s.phi[1] - next.traces.phi_hat[ue + 1]);
    }
    double r = 0.0;
    for (std::size_t k = 0; k < nn; ++k) r += ju[k] * ju[k] + jp[k] * jp[k];
    *info = {1, std::sqrt(r)};
  }
  return next;
}

} // namespace

Mesh::Mesh(double length, int n_elements) : length_(length), n_elements_(n_elements) {
  if (!(length > 0.0)) throw ArgumentError("mesh length must be positive");
  if (n_elements < 1) throw ArgumentError("mesh needs at least one element");
}

double Mesh::node(int k) const {
  if (k == n_elements_) return length_;
  return length_ * static_cast<double>(k) / static_cast<double>(n_elements_);
}

void SolverOptions::validate() const {
  if (!(tau_u > 0.0) || !(tau_phi > 0.0)) throw ArgumentError("penalties must be positive");
  if (!(newton_tol > 0.0)) throw ArgumentError("Newton tolerance must be positive");
  if (newton_max_iter < 1) throw ArgumentError("Newton needs at least one iteration");
}

std::string SolverOptions::canonical() const {
  std::ostringstream ss;
  ss << "tau_u=" << format_double(tau_u) << ";tau_phi=" << format_double(tau_phi)
     << ";newton_tol=" << format_double(newton_tol) << ";newton_max_iter=" << newton_max_iter
     << ";coupling=" << to_string(coupling);
  return ss.str();
}

std::string to_string(CouplingMode mode) {
  return mode == CouplingMode::monolithic ? "monolithic" : "sequential";
}

CouplingMode coupling_from_string(const std::string& s) {
  if (s == "monolithic") return CouplingMode::monolithic;
  if (s == "sequential") return CouplingMode::sequential;
  throw ArgumentError("unknown coupling mode: " + s);
}

StepState project_initial(const Mesh& mesh, const ModelParameters& p) {
  const auto ne = static_cast<std::size_t>(mesh.n_elements());
  const auto nn = static_cast<std::size_t>(mesh.n_nodes());
  const double h = mesh.h();
  StepState s;
  s.elements.resize(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    const double x0 = mesh.node(static_cast<int>(e));
    double bL = 0.0, bR = 0.0;
    for (std::size_t q = 0; q < 3; ++q) {
      const double x = x0 + kGaussX[q] * h;
      const double u0 = initial_immune_density(p, x);
      bL += kGaussW[q] * h * u0 * (1.0 - kGaussX[q]);
      bR += kGaussW[q] * h * u0 * kGaussX[q];
    }
    // Inverse of the P1 mass matrix (h/6)[[2,1],[1,2]].
    s.elements[e].u = {(2.0 / h) * (2.0 * bL - bR), (2.0 / h) * (2.0 * bR - bL)};
  }
  s.traces.u_hat.resize(nn);
  s.traces.phi_hat.assign(nn, 0.0);
  for (std::size_t k = 0; k < nn; ++k)
    s.traces.u_hat[k] = initial_immune_density(p, mesh.node(static_cast<int>(k)));
  return s;
}

StepState advance(const StepState& current, const Mesh& mesh, const ModelParameters& p,
                  double t_next, double dt, const SolverOptions& opts, StepInfo* info) {
  opts.validate();
  if (!(dt > 0.0)) throw ArgumentError("time step must be positive");
  if (current.elements.size() != static_cast<std::size_t>(mesh.n_elements()) ||
      current.traces.u_hat.size() != static_cast<std::size_t>(mesh.n_nodes()) ||
      current.traces.phi_hat.size() != static_cast<std::size_t>(mesh.n_nodes()))
    throw ArgumentError("state does not match the mesh");
  const auto c = coefficients(mesh, p, dt, opts);
  const auto loads = source_loads(mesh, p);
  const double decay = std::exp(-p.rho * t_next);
  if (opts.coupling == CouplingMode::monolithic)
    return advance_monolithic(current, mesh, c, loads, decay, opts, info);
  return advance_sequential(current, mesh, c, loads, decay, info);
}

void march(const ModelParameters& p, int n_s, int n_t, const SolverOptions& opts,
           const std::function<void(int, double, const StepState&, const StepInfo&)>& observer) {
  opts.validate();
  if (n_t < 1) throw ArgumentError("need at least one time step");
  const Mesh mesh(p.L, n_s);
  const double dt = p.T / n_t;
  const auto c = coefficients(mesh, p, dt, opts);
  const auto loads = source_loads(mesh, p);
  StepState state = project_initial(mesh, p);
  observer(0, 0.0, state, StepInfo{});
  for (int n = 1; n <= n_t; ++n) {
    const double t = n == n_t ? p.T : n * dt;
    const double decay = std::exp(-p.rho * t);
    StepInfo info;
    state = opts.coupling == CouplingMode::monolithic
                ? advance_monolithic(state, mesh, c, loads, decay, opts, &info)
                : advance_sequential(state, mesh, c, loads, decay, &info);
    observer(n, t, state, info);
  }
}

Trajectory solve(const ModelParameters& p, int n_s, int n_t, const SolverOptions& opts) {
  Trajectory traj;
  traj.mesh = Mesh(p.L, n_s);
  traj.params = p;
  traj.times.reserve(static_cast<std::size_t>(n_t) + 1);
  traj.states.reserve(static_cast<std::size_t>(n_t) + 1);
  march(p, n_s, n_t, opts, [&](int n, double t, const StepState& s, const StepInfo& info) {
    traj.times.push_back(t);
    traj.states.push_back(s);
    if (n > 0) traj.steps.push_back(info);
  });
  return traj;
}

Trajectory solve(const ParameterSpace& space, const ParameterVector& y, int n_s, int n_t,
                 const SolverOptions& opts) {
  return solve(space.resolve(y), n_s, n_t, opts);
}

double immune_mass(const Mesh& mesh, const StepState& s) {
  double total = 0.0;
  for (const auto& e : s.elements) total += 0.5 * (e.u[0] + e.u[1]);
  return total * mesh.h();
}

double immune_first_moment(const Mesh& mesh, const StepState& s) {
  const double h = mesh.h();
  double total = 0.0;
  for (int k = 0; k < mesh.n_elements(); ++k) {
    const double x0 = mesh.node(k), x1 = mesh.node(k + 1);
    const auto& u = s.elements[static_cast<std::size_t>(k)].u;
    total += (2 * x0 + x1) * u[0] + (x0 + 2 * x1) * u[1];
  }
  return total * h / 6.0;
}

double chemoattractant_mass(const Mesh& mesh, const StepState& s) {
  double total = 0.0;
  for (const auto& e : s.elements) total += 0.5 * (e.phi[0] + e.phi[1]);
  return total * mesh.h();
}

QoiSeries qoi_center_of_mass(const Trajectory& traj) {
  const double U = immune_mass(traj.mesh, traj.states.front());
  if (U == 0.0) throw DegenerateMassError("center of mass undefined: zero immune mass");
  QoiSeries out{traj.times, {}};
  for (const auto& s : traj.states) out.values.push_back(immune_first_moment(traj.mesh, s) / U);
  return out;
}

QoiSeries qoi_total_chemoattractant(const Trajectory& traj) {
  QoiSeries out{traj.times, {}};
  for (const auto& s : traj.states) out.values.push_back(chemoattractant_mass(traj.mesh, s));
  return out;
}

QoiSeries total_immune_mass(const Trajectory& traj) {
  QoiSeries out{traj.times, {}};
  for (const auto& s : traj.states) out.values.push_back(immune_mass(traj.mesh, s));
  return out;
}

QoiBundle solve_qois(const ModelParameters& p, int n_s, int n_t, const SolverOptions& opts) {
  QoiBundle b;
  const Mesh mesh(p.L, n_s);
  double U0 = 0.0;
  march(p, n_s, n_t, opts, [&](int n, double t, const StepState& s, const StepInfo& info) {
    const double U = immune_mass(mesh, s);
    if (n == 0) {
      U0 = U;
      if (U0 == 0.0) throw DegenerateMassError("center of mass undefined: zero immune mass");
    }
    b.center_of_mass.times.push_back(t);
    b.center_of_mass.values.push_back(immune_first_moment(mesh, s) / U0);
    b.total_chemoattractant.times.push_back(t);
    b.total_chemoattractant.values.push_back(chemoattractant_mass(mesh, s));
    b.immune_mass.times.push_back(t);
    b.immune_mass.values.push_back(U);
    b.max_newton_iterations = std::max(b.max_newton_iterations, info.newton_iterations);
  });
  return b;
}

std::string qoi_csv(const QoiSeries& series) {
  std::string out = "t,value\n";
  for (std::size_t n = 0; n < series.times.size(); ++n)
    out += format_double(series.times[n]) + "," + format_double(series.values[n]) + "\n";
  return out;
}

void write_qoi_csv(const QoiSeries& series, const std::string& path) {
  write_text_file(path, qoi_csv(series));
}

// Binary layout (little-endian): "CHTR" magic, u32 version=1, i32 N_s,
// i32 N_t, f64 L, 13 x f64 model parameters, then per time n:
// f64 t_n, N_s x 7 f64 element values (u_L, u_R, j, phi_L, phi_R, psi_L, psi_R),
// (N_s+1) x f64 uhat, (N_s+1) x f64 phihat; finally N_t x (i32 iters, f64 res).
namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error("truncated trajectory file");
  return v;
}

} // namespace

void write_trajectory(const Trajectory& traj, const std::string& path) {
  const std::filesystem::path fp(path);
  if (fp.has_parent_path()) std::filesystem::create_directories(fp.parent_path());
  std::ofstream out(fp, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out.write("CHTR", 4);
  put<std::uint32_t>(out, 1);
  put<std::int32_t>(out, traj.mesh.n_elements());
  put<std::int32_t>(out, static_cast<std::int32_t>(traj.times.size()) - 1);
  put<double>(out, traj.mesh.length());
  for (Param prm : kAllParams) put<double>(out, traj.params[prm]);
  put<double>(out, traj.params.L);
  put<double>(out, traj.params.T);
  for (std::size_t n = 0; n < traj.times.size(); ++n) {
    put<double>(out, traj.times[n]);
    for (const auto& e : traj.states[n].elements)
      for (double v : {e.u[0], e.u[1], e.j, e.phi[0], e.phi[1], e.psi[0], e.psi[1]})
        put<double>(out, v);
    for (double v : traj.states[n].traces.u_hat) put<double>(out, v);
    for (double v : traj.states[n].traces.phi_hat) put<double>(out, v);
  }
  for (const auto& s : traj.steps) {
    put<std::int32_t>(out, s.newton_iterations);
    put<double>(out, s.residual);
  }
  if (!out) throw Error("write failed: " + path);
}

Trajectory read_trajectory(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "CHTR", 4) != 0) throw Error("not a trajectory file: " + path);
  if (get<std::uint32_t>(in) != 1) throw IncompatibleError("unsupported trajectory version");
  const int n_s = get<std::int32_t>(in);
  const int n_t = get<std::int32_t>(in);
  const double L = get<double>(in);
  if (n_s < 1 || n_t < 0) throw Error("corrupt trajectory header");
  Trajectory traj;
  traj.mesh = Mesh(L, n_s);
  for (Param prm : kAllParams) traj.params[prm] = get<double>(in);
  traj.params.L = get<double>(in);
  traj.params.T = get<double>(in);
  for (int n = 0; n <= n_t; ++n) {
    traj.times.push_back(get<double>(in));
    StepState s;
    s.elements.resize(static_cast<std::size_t>(n_s));
    for (auto& e : s.elements) {
      e.u[0] = get<double>(in);
      e.u[1] = get<double>(in);
      e.j = get<double>(in);
      e.phi[0] = get<double>(in);
      e.phi[1] = get<double>(in);
      e.psi[0] = get<double>(in);
      e.psi[1] = get<double>(in);
    }
    for (int k = 0; k <= n_s; ++k) s.traces.u_hat.push_back(get<double>(in));
    for (int k = 0; k <= n_s; ++k) s.traces.phi_hat.push_back(get<double>(in));
    traj.states.push_back(std::move(s));
  }
  for (int n = 0; n < n_t; ++n) {
    StepInfo info;
    info.newton_iterations = get<std::int32_t>(in);
    info.residual = get<double>(in);
    traj.steps.push_back(info);
  }
  return traj;
}

} // namespace chemouq::hdg

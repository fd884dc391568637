#pragma once

#include "chemouq/model.hpp"
#include "chemouq/util.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace chemouq::hdg {

// Uniform partition 0 = x_0 < ... < x_{N_s} = L.
class Mesh {
public:
  Mesh(double length, int n_elements);

  double length() const { return length_; }
  int n_elements() const { return n_elements_; }
  int n_nodes() const { return n_elements_ + 1; }
  double h() const { return length_ / n_elements_; }
  double node(int k) const;

private:
  double length_;
  int n_elements_;
};

// Local unknowns on one element. The degree-1 fields are stored by their
// values at the left and right element end points; the flux j is constant.
struct ElementState {
  std::array<double, 2> u{};
  std::array<double, 2> phi{};
  std::array<double, 2> psi{};
  double j = 0.0;
};

// Nodal multipliers (trace unknowns), one per mesh node.
struct TraceState {
  std::vector<double> u_hat;
  std::vector<double> phi_hat;
};

struct StepState {
  std::vector<ElementState> elements;
  TraceState traces;
};

struct StepInfo {
  int newton_iterations = 0;
  double residual = 0.0;
};

enum class CouplingMode { monolithic, sequential };

struct SolverOptions {
  double tau_u = 1.0;
  double tau_phi = 1.0;
  double newton_tol = 1e-5;
  int newton_max_iter = 10;
  CouplingMode coupling = CouplingMode::sequential;

  // Throws ArgumentError on non-positive penalties or tolerance.
  void validate() const;
  // Stable text form used in cache keys and surrogate metadata.
  std::string canonical() const;
};

std::string to_string(CouplingMode mode);
CouplingMode coupling_from_string(const std::string& s);

class StepFailure : public Error {
public:
  StepFailure(const std::string& what, double residual) : Error(what), residual_(residual) {}
  double residual() const { return residual_; }

private:
  double residual_;
};

class LinearSolveError : public Error {
public:
  using Error::Error;
};

class DegenerateMassError : public Error {
public:
  using Error::Error;
};

struct Trajectory {
  Mesh mesh{1.0, 1};
  ModelParameters params;
  std::vector<double> times;      // t_0 .. t_{N_t}
  std::vector<StepState> states;  // one per time
  std::vector<StepInfo> steps;    // one per step (N_t entries)
};

struct QoiSeries {
  std::vector<double> times;
  std::vector<double> values;
};

// L2 projection of u0 per element, point values for the u-multipliers, and
// zero chemoattractant.
StepState project_initial(const Mesh& mesh, const ModelParameters& p);

// One backward-Euler step from `current` to time t_next = t + dt.
// Throws StepFailure when Newton does not converge and LinearSolveError on a
// singular condensed system.
StepState advance(const StepState& current, const Mesh& mesh, const ModelParameters& p,
                  double t_next, double dt, const SolverOptions& opts, StepInfo* info = nullptr);

// Full time march with N_t uniform steps on [0, T].
Trajectory solve(const ModelParameters& p, int n_s, int n_t, const SolverOptions& opts = {});
Trajectory solve(const ParameterSpace& space, const ParameterVector& y, int n_s, int n_t,
                 const SolverOptions& opts = {});

// Observer-style march: calls observer(n, t_n, state) for n = 0..N_t without
// keeping the history.
void march(const ModelParameters& p, int n_s, int n_t, const SolverOptions& opts,
           const std::function<void(int, double, const StepState&, const StepInfo&)>& observer);

QoiSeries qoi_center_of_mass(const Trajectory& traj);
QoiSeries qoi_total_chemoattractant(const Trajectory& traj);
QoiSeries total_immune_mass(const Trajectory& traj);

// Per-state integrals shared by the trajectory QoIs and the streaming path.
double immune_mass(const Mesh& mesh, const StepState& s);
double immune_first_moment(const Mesh& mesh, const StepState& s);
double chemoattractant_mass(const Mesh& mesh, const StepState& s);

// The three QoI series computed while marching, without storing states.
struct QoiBundle {
  QoiSeries center_of_mass;
  QoiSeries total_chemoattractant;
  QoiSeries immune_mass;
  int max_newton_iterations = 0;
};
QoiBundle solve_qois(const ModelParameters& p, int n_s, int n_t, const SolverOptions& opts = {});

// CSV with header "t,value".
std::string qoi_csv(const QoiSeries& series);
void write_qoi_csv(const QoiSeries& series, const std::string& path);

// Compact little-endian binary dump of a trajectory (see README for layout).
void write_trajectory(const Trajectory& traj, const std::string& path);
Trajectory read_trajectory(const std::string& path);

} // namespace chemouq::hdg

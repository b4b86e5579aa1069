#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kausal/matrix.hpp"
#include "kausal/rng.hpp"

namespace kausal {

enum class SystemKind { coupled_rossler, reaction_diffusion, enso };

struct RosslerParams {
  double a = 0.2;
  double b = 0.2;
  double d = 5.7;
  double phi1 = 1.0;
  double phi2 = 1.0;
  double c1 = 0.5;
  double c2 = 0.0;
};

struct ReactionDiffusionParams {
  double du = 0.1;
  double dv = 0.1;
  double a = 0.3;
  double b = 0.3;
  double beta = 10.0;
  double gamma = 0.0;
  std::size_t nx = 16;
  std::size_t ny = 16;
};

struct EnsoParams {
  double r = 0.25;
  double alpha = 0.125;
  double b0 = 2.5;
  double c = 1.0;
  double gamma = 0.75;
  double mu = 2.0 / 3.0;
  double epsilon = 0.0;
};

struct SystemSpec {
  SystemKind kind = SystemKind::coupled_rossler;
  RosslerParams rossler;
  ReactionDiffusionParams rd;
  EnsoParams enso;

  std::size_t state_dim() const;
  std::vector<std::string> dim_labels() const;
};

// Uniformly sampled orbit. Rows of `states` are samples, columns are
// state dimensions.
struct Trajectory {
  std::vector<double> times;
  Matrix states;
  std::vector<std::string> dim_labels;

  std::size_t num_samples() const { return states.rows(); }
  std::size_t state_dim() const { return states.cols(); }
  double dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }

  // Throws unless times are uniform (1e-12 relative), states finite and
  // at least two samples are present.
  void validate() const;
};

// Index sets assigning state dimensions to effect/cause/remainder.
struct ComponentPartition {
  std::vector<std::size_t> effect_dims;
  std::vector<std::size_t> cause_dims;
  std::vector<std::size_t> remainder_dims;

  // Throws unless the three sets are disjoint and cover 0..state_dim-1.
  void validate(std::size_t state_dim) const;
  ComponentPartition reversed() const;
};

// dw/dt for the given system; state layouts:
//   coupled_rossler:    [x1, y1, z1, x2, y2, z2]
//   reaction_diffusion: [u (nx*ny row-major), v (nx*ny row-major)]
//   enso:               [T, h]
std::vector<double> rhs(const SystemSpec& spec, double t, std::span<const double> state);

// 5-point stencil with periodic wrap and unit grid spacing.
Matrix laplacian2d(const Matrix& field);

// Fixed-step Dormand-Prince 5(4) using the 5th-order solution weights.
// Every accepted step is sampled; output_stride keeps every k-th sample.
Trajectory integrate_dopri5(const SystemSpec& spec, std::span<const double> initial, double t0,
                            double t1, double dt, std::size_t output_stride = 1);

// Default initial conditions for the benchmark systems. The reaction-
// diffusion fields are seeded sums of low-wavenumber Fourier modes with
// amplitudes in [-0.5, 0.5].
std::vector<double> default_initial(const SystemSpec& spec, std::uint64_t seed);

}  // namespace kausal

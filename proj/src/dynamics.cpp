#include "kausal/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kausal {

std::size_t SystemSpec::state_dim() const {
  switch (kind) {
    case SystemKind::coupled_rossler:
      return 6;
    case SystemKind::reaction_diffusion:
      return 2 * rd.nx * rd.ny;
    case SystemKind::enso:
      return 2;
  }
  return 0;
}

std::vector<std::string> SystemSpec::dim_labels() const {
  switch (kind) {
    case SystemKind::coupled_rossler:
      return {"x1", "y1", "z1", "x2", "y2", "z2"};
    case SystemKind::reaction_diffusion: {
      std::vector<std::string> labels;
      labels.reserve(2 * rd.nx * rd.ny);
      for (const char* f : {"u", "v"})
        for (std::size_t i = 0; i < rd.nx; ++i)
          for (std::size_t j = 0; j < rd.ny; ++j)
            labels.push_back(std::string(f) + "_" + std::to_string(i) + "_" + std::to_string(j));
      return labels;
    }
    case SystemKind::enso:
      return {"T", "h"};
  }
  return {};
}

void Trajectory::validate() const {
  if (num_samples() < 2) throw std::invalid_argument("Trajectory: needs at least 2 samples");
  if (times.size() != num_samples())
    throw std::invalid_argument("Trajectory: times/states length mismatch");
  const double step = times[1] - times[0];
  if (!(step > 0.0)) throw std::invalid_argument("Trajectory: times must be increasing");
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double d = times[i] - times[i - 1];
    if (std::abs(d - step) > 1e-12 * std::max(1.0, std::abs(step)))
      throw std::invalid_argument("Trajectory: non-uniform sampling at index " +
                                  std::to_string(i));
  }
  if (!states.all_finite()) throw std::invalid_argument("Trajectory: non-finite state values");
}

void ComponentPartition::validate(std::size_t state_dim) const {
  std::vector<int> seen(state_dim, 0);
  auto mark = [&](const std::vector<std::size_t>& dims) {
    for (std::size_t d : dims) {
      if (d >= state_dim)
        throw std::invalid_argument("ComponentPartition: dimension index out of range");
      if (seen[d]++)
        throw std::invalid_argument("ComponentPartition: dimension assigned twice");
    }
  };
  mark(effect_dims);
  mark(cause_dims);
  mark(remainder_dims);
  for (std::size_t d = 0; d < state_dim; ++d)
    if (!seen[d])
      throw std::invalid_argument("ComponentPartition: dimension " + std::to_string(d) +
                                  " unassigned");
}

ComponentPartition ComponentPartition::reversed() const {
  return ComponentPartition{cause_dims, effect_dims, remainder_dims};
}

namespace {

void check_dim(const SystemSpec& spec, std::span<const double> state) {
  if (state.size() != spec.state_dim())
    throw std::invalid_argument("rhs: state has dimension " + std::to_string(state.size()) +
                                ", expected " + std::to_string(spec.state_dim()));
}

std::vector<double> rossler_rhs(const RosslerParams& p, std::span<const double> s) {
  const double x1 = s[0], y1 = s[1], z1 = s[2];
  const double x2 = s[3], y2 = s[4], z2 = s[5];
  return {
      -p.phi1 * y1 - z1,
      p.phi1 * x1 + p.a * y1 + p.c1 * (y2 - y1),
      p.b + z1 * (x1 - p.d),
      -p.phi2 * y2 - z2,
      p.phi2 * x2 + p.a * y2 + p.c2 * (y1 - y2),
      p.b + z2 * (x2 - p.d),
  };
}

std::vector<double> rd_rhs(const ReactionDiffusionParams& p, std::span<const double> s) {
  const std::size_t n = p.nx * p.ny;
  Matrix u(p.nx, p.ny), v(p.nx, p.ny);
  std::copy(s.begin(), s.begin() + n, u.data());
  std::copy(s.begin() + n, s.end(), v.data());
  const Matrix lap_u = laplacian2d(u);
  const Matrix lap_v = laplacian2d(v);

  std::vector<double> out(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    const double uk = u.data()[k];
    const double vk = v.data()[k];
    out[k] = p.du * lap_u.data()[k] - uk * (uk - p.a) * (uk - 1.0) + p.beta * vk;
    out[n + k] = p.dv * lap_v.data()[k] - vk * (vk - p.b) * (vk - 1.0) + p.gamma * uk;
  }
  return out;
}

std::vector<double> enso_rhs(const EnsoParams& p, std::span<const double> s) {
  const double T = s[0], h = s[1];
  return {
      -p.r * T - p.mu * p.alpha * p.b0 * h - p.epsilon * T * T * T,
      p.gamma * T + (p.gamma * p.mu * p.b0 - p.c) * h,
  };
}

}  // namespace

std::vector<double> rhs(const SystemSpec& spec, double /*t*/, std::span<const double> state) {
  check_dim(spec, state);
  switch (spec.kind) {
    case SystemKind::coupled_rossler:
      return rossler_rhs(spec.rossler, state);
    case SystemKind::reaction_diffusion:
      return rd_rhs(spec.rd, state);
    case SystemKind::enso:
      return enso_rhs(spec.enso, state);
  }
  throw std::logic_error("rhs: unknown system kind");
}

Matrix laplacian2d(const Matrix& field) {
  const std::size_t nx = field.rows();
  const std::size_t ny = field.cols();
  if (nx < 3 || ny < 3) throw std::invalid_argument("laplacian2d: grid must be at least 3x3");
  Matrix out(nx, ny);
  for (std::size_t i = 0; i < nx; ++i) {
    const std::size_t im = (i + nx - 1) % nx;
    const std::size_t ip = (i + 1) % nx;
    for (std::size_t j = 0; j < ny; ++j) {
      const std::size_t jm = (j + ny - 1) % ny;
      const std::size_t jp = (j + 1) % ny;
      out(i, j) =
          field(im, j) + field(ip, j) + field(i, jm) + field(i, jp) - 4.0 * field(i, j);
    }
  }
  return out;
}

Trajectory integrate_dopri5(const SystemSpec& spec, std::span<const double> initial, double t0,
                            double t1, double dt, std::size_t output_stride) {
  if (!(t1 > t0)) throw std::invalid_argument("integrate_dopri5: t1 must exceed t0");
  if (!(dt > 0.0)) throw std::invalid_argument("integrate_dopri5: dt must be positive");
  if (output_stride < 1) throw std::invalid_argument("integrate_dopri5: stride must be >= 1");
  check_dim(spec, initial);
  for (double v : initial)
    if (!std::isfinite(v)) throw std::invalid_argument("integrate_dopri5: non-finite initial");

  // Dormand-Prince 5(4) tableau; only the 5th-order solution row is used
  // since the step is fixed.
  static constexpr double a21 = 1.0 / 5.0;
  static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
  static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
  static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                          a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
  static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                          a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
  static constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
  static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                          b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;

  const std::size_t dim = initial.size();
  const std::size_t num_steps = static_cast<std::size_t>(std::llround((t1 - t0) / dt));

  std::vector<double> y(initial.begin(), initial.end());
  std::vector<double> stage(dim);

  const std::size_t kept = num_steps / output_stride + 1;
  Trajectory traj;
  traj.times.reserve(kept);
  traj.states = Matrix(kept, dim);
  traj.dim_labels = spec.dim_labels();

  std::size_t out_row = 0;
  auto emit = [&](std::size_t step_index) {
    traj.times.push_back(t0 + static_cast<double>(step_index) * dt);
    std::copy(y.begin(), y.end(), traj.states.row(out_row).begin());
    ++out_row;
  };
  emit(0);

  for (std::size_t step = 0; step < num_steps; ++step) {
    const double t = t0 + static_cast<double>(step) * dt;

    const std::vector<double> k1 = rhs(spec, t, y);
    for (std::size_t i = 0; i < dim; ++i) stage[i] = y[i] + dt * a21 * k1[i];
    const std::vector<double> k2 = rhs(spec, t + c2 * dt, stage);
    for (std::size_t i = 0; i < dim; ++i) stage[i] = y[i] + dt * (a31 * k1[i] + a32 * k2[i]);
    const std::vector<double> k3 = rhs(spec, t + c3 * dt, stage);
    for (std::size_t i = 0; i < dim; ++i)
      stage[i] = y[i] + dt * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
    const std::vector<double> k4 = rhs(spec, t + c4 * dt, stage);
    for (std::size_t i = 0; i < dim; ++i)
      stage[i] = y[i] + dt * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
    const std::vector<double> k5 = rhs(spec, t + c5 * dt, stage);
    for (std::size_t i = 0; i < dim; ++i)
      stage[i] = y[i] + dt * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
    const std::vector<double> k6 = rhs(spec, t + dt, stage);

    bool finite = true;
    for (std::size_t i = 0; i < dim; ++i) {
      y[i] += dt * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
      finite = finite && std::isfinite(y[i]);
    }
    if (!finite)
      throw std::runtime_error("integrate_dopri5: non-finite state at step " +
                               std::to_string(step + 1) + " (t=" + std::to_string(t + dt) + ")");
    if ((step + 1) % output_stride == 0) emit(step + 1);
  }

  // Trim in case stride did not divide the step count evenly.
  if (out_row != kept) {
    Matrix trimmed(out_row, dim);
    std::copy(traj.states.data(), traj.states.data() + out_row * dim, trimmed.data());
    traj.states = std::move(trimmed);
  }
  traj.validate();
  return traj;
}

std::vector<double> default_initial(const SystemSpec& spec, std::uint64_t seed) {
  switch (spec.kind) {
    case SystemKind::coupled_rossler:
      return {1.0, 1.0, 1.0, 1.1, 1.1, 1.1};
    case SystemKind::enso:
      return {1.0, 0.0};
    case SystemKind::reaction_diffusion: {
      const std::size_t nx = spec.rd.nx, ny = spec.rd.ny;
      std::vector<double> state(2 * nx * ny, 0.0);
      SeededRng rng(seed);
      constexpr std::size_t kModes = 4;
      for (std::size_t field = 0; field < 2; ++field) {
        double* f = state.data() + field * nx * ny;
        for (std::size_t m = 0; m < kModes; ++m) {
          const double amp = rng.uniform() - 0.5;
          const double px = static_cast<double>(rng.below(3));
          const double qy = static_cast<double>(rng.below(3));
          const double phase = 2.0 * std::numbers::pi * rng.uniform();
          for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < ny; ++j)
              f[i * ny + j] += amp * std::cos(2.0 * std::numbers::pi *
                                                  (px * static_cast<double>(i) / nx +
                                                   qy * static_cast<double>(j) / ny) +
                                              phase);
        }
      }
      return state;
    }
  }
  throw std::logic_error("default_initial: unknown system kind");
}

}  // namespace kausal

#include "esp/esp_objective.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>

#include "esp/errors.hpp"
#include "esp/num_format.hpp"
#include "parallel.hpp"

namespace esp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kFdStepScale = 6.05545445239334e-6;  // cbrt(machine epsilon)

std::optional<double> logdet_spd(const Eigen::MatrixXd& m) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const auto& L = llt.matrixLLT();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double d = L(i, i);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    acc += std::log(d);
  }
  return 2.0 * acc;
}

std::optional<double> logabsdet_lu(const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
  double acc = 0.0;
  const auto& LU = lu.matrixLU();
  for (Eigen::Index i = 0; i < LU.rows(); ++i) {
    const double d = std::abs(LU(i, i));
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    acc += std::log(d);
  }
  return acc;
}

EspEvaluation out_of_support(const Eigen::VectorXd& theta, TiltingSolution tilting) {
  EspEvaluation ev;
  ev.theta = theta;
  ev.tilting = std::move(tilting);
  ev.in_support = false;
  ev.log_det_sigma = kNaN;
  ev.m1 = ev.m2 = ev.m3 = kNaN;
  ev.log_esp_objective = -kInf;
  ev.log_esp_density = -kInf;
  return ev;
}

void check_dims(const MomentModel& model, const Dataset& data, const Eigen::VectorXd& theta) {
  if (theta.size() != model.param_dim) {
    throw Error(Errc::invalid_input, "theta length does not match param_dim");
  }
  if (data.size() <= model.param_dim) {
    throw Error(Errc::invalid_input,
                "sample size T = " + std::to_string(data.size()) +
                    " must exceed param_dim = " + std::to_string(model.param_dim));
  }
}

}  // namespace

Eigen::MatrixXd sigma_tilted(const MomentModel& model, const Dataset& data,
                             const Eigen::VectorXd& theta, const TiltingSolution& tilting) {
  if (!tilting.converged()) {
    throw Error(Errc::invalid_input, "sigma_tilted needs a converged tilting solution");
  }
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const Eigen::MatrixXd psi = psi_matrix(model, bound, theta);
  const Eigen::Index T = psi.rows();
  const int m = model.param_dim;
  const Eigen::VectorXd& w = tilting.weights;

  Eigen::MatrixXd V = psi.transpose() * w.asDiagonal() * psi;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd jac(m, m);
  Eigen::VectorXd row(model.data_dim);
  for (Eigen::Index t = 0; t < T; ++t) {
    row = bound.row(t);
    row_jacobian(model, row, theta, jac);
    J.noalias() += w[t] * jac;
  }

  if (!logdet_spd(V)) {
    throw Error(Errc::support_boundary, "tilted second moment is not positive definite");
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
  if (!logabsdet_lu(lu)) {
    throw Error(Errc::support_boundary, "tilted jacobian is singular");
  }
  const Eigen::MatrixXd Jinv = lu.inverse();
  Eigen::MatrixXd sigma = Jinv * V * Jinv.transpose();
  return 0.5 * (sigma + sigma.transpose());
}

EspEvaluation evaluate(const MomentModel& model, const Dataset& data,
                       const Eigen::VectorXd& theta, const TiltOptions& tilt_options) {
  check_dims(model, data, theta);
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const Eigen::MatrixXd psi = psi_matrix(model, bound, theta);
  const Eigen::Index T = psi.rows();
  const int m = model.param_dim;
  const double Td = static_cast<double>(T);

  TiltingSolution tilt = solve_tilt_psi(psi, tilt_options);
  if (!tilt.converged()) return out_of_support(theta, std::move(tilt));

  const Eigen::VectorXd& w = tilt.weights;
  Eigen::MatrixXd V = psi.transpose() * w.asDiagonal() * psi;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd jac(m, m);
  Eigen::VectorXd row(model.data_dim);

  // Raw tilted sums for the decomposition terms, kept on their own
  // exponential-shifted path so m1+m2+m3 is a genuine cross-check of the
  // objective value rather than a copy of it.
  Eigen::VectorXd s = psi * tilt.tau;
  const double shift = s.maxCoeff();
  Eigen::VectorXd es = (s.array() - shift).exp();
  Eigen::MatrixXd raw_j = Eigen::MatrixXd::Zero(m, m);

  for (Eigen::Index t = 0; t < T; ++t) {
    row = bound.row(t);
    row_jacobian(model, row, theta, jac);
    J.noalias() += w[t] * jac;
    raw_j.noalias() += (es[t] / Td) * jac;
  }
  Eigen::MatrixXd raw_v = psi.transpose() * (es / Td).asDiagonal() * psi;

  const auto logdet_v = logdet_spd(V);
  if (!logdet_v) return out_of_support(theta, std::move(tilt));
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(J);
  const auto logabsdet_j = logabsdet_lu(lu);
  if (!logabsdet_j) return out_of_support(theta, std::move(tilt));

  EspEvaluation ev;
  ev.theta = theta;
  ev.log_det_sigma = *logdet_v - 2.0 * *logabsdet_j;
  const Eigen::MatrixXd Jinv = lu.inverse();
  Eigen::MatrixXd sigma = Jinv * V * Jinv.transpose();
  ev.sigma_t = 0.5 * (sigma + sigma.transpose());
  ev.log_esp_objective = tilt.log_k - ev.log_det_sigma / (2.0 * Td);
  ev.log_esp_density = Td * tilt.log_k +
                       0.5 * m * std::log(Td / (2.0 * std::numbers::pi)) -
                       0.5 * ev.log_det_sigma;

  ev.m1 = (1.0 - m / (2.0 * Td)) * tilt.log_k;
  Eigen::PartialPivLU<Eigen::MatrixXd> raw_lu(raw_j);
  const auto raw_logabsdet_j = logabsdet_lu(raw_lu);
  const auto raw_logdet_v = logdet_spd(raw_v);
  if (!raw_logabsdet_j || !raw_logdet_v) return out_of_support(theta, std::move(tilt));
  ev.m2 = (m * shift + *raw_logabsdet_j) / Td;
  ev.m3 = -(m * shift + *raw_logdet_v) / (2.0 * Td);

  ev.tilting = std::move(tilt);
  ev.in_support = true;
  return ev;
}

GradientBreakdown gradient_objective_parts(const MomentModel& model, const Dataset& data,
                                           const Eigen::VectorXd& theta,
                                           const TiltOptions& tilt_options) {
  if (!model.has_jacobian() || !model.has_hessian()) {
    throw Error(Errc::unsupported_operation,
                "analytic gradient needs psi_jacobian and psi_hessian; "
                "use finite differences (gradient_objective_fd) instead");
  }
  check_dims(model, data, theta);
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const Eigen::MatrixXd psi = psi_matrix(model, bound, theta);
  const Eigen::Index T = psi.rows();
  const int m = model.param_dim;
  const double Td = static_cast<double>(T);

  TiltingSolution tilt = solve_tilt_psi(psi, tilt_options);
  if (!tilt.converged()) {
    throw Error(Errc::support_boundary, "theta is outside the ESP support");
  }
  const Eigen::VectorXd& w = tilt.weights;
  const Eigen::VectorXd& tau = tilt.tau;

  Eigen::MatrixXd Jw = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, m);  // for dtau/dtheta
  std::vector<Eigen::MatrixXd> C(m, Eigen::MatrixXd::Zero(m, m));  // M2 theta-partials
  std::vector<Eigen::MatrixXd> D(m, Eigen::MatrixXd::Zero(m, m));  // M3 theta-partials
  std::vector<Eigen::MatrixXd> E(m, Eigen::MatrixXd::Zero(m, m));  // M2 tau-partials
  std::vector<Eigen::MatrixXd> F(m, Eigen::MatrixXd::Zero(m, m));  // M3 tau-partials
  Eigen::RowVectorXd tj_sum = Eigen::RowVectorXd::Zero(m);

  Eigen::MatrixXd jac(m, m), hess(m, m), outer(m, m);
  Eigen::VectorXd row(model.data_dim), psi_t(m);
  Eigen::RowVectorXd tj(m);
  for (Eigen::Index t = 0; t < T; ++t) {
    row = bound.row(t);
    model.psi_jacobian(row, theta, jac);
    psi_t = psi.row(t);
    outer.noalias() = psi_t * psi_t.transpose();
    tj.noalias() = tau.transpose() * jac;
    const double wt = w[t];

    Jw.noalias() += wt * jac;
    B.noalias() += wt * (jac + psi_t * tj);
    tj_sum += wt * tj;
    for (int j = 0; j < m; ++j) {
      model.psi_hessian(row, theta, j, hess);
      C[j].noalias() += wt * (hess + tj[j] * jac);
      D[j].noalias() += wt * (jac.col(j) * psi_t.transpose() +
                              psi_t * jac.col(j).transpose() + tj[j] * outer);
    }
    for (int k = 0; k < m; ++k) {
      E[k].noalias() += wt * psi_t[k] * jac;
      F[k].noalias() += wt * psi_t[k] * outer;
    }
  }
  Eigen::MatrixXd V = psi.transpose() * w.asDiagonal() * psi;
  Eigen::VectorXd tilted_mean = psi.transpose() * w;

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(Jw);
  if (!logabsdet_lu(lu)) {
    throw Error(Errc::support_boundary, "tilted jacobian is singular");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(V);
  if (llt.info() != Eigen::Success) {
    throw Error(Errc::support_boundary, "tilted second moment is not positive definite");
  }

  const double c1 = 1.0 - m / (2.0 * Td);
  GradientBreakdown g;
  g.dm1_dtheta = c1 * tj_sum.transpose();
  g.dm2_dtheta.resize(m);
  g.dm3_dtheta.resize(m);
  g.dl_dtau.resize(m);
  for (int j = 0; j < m; ++j) {
    g.dm2_dtheta[j] = lu.solve(C[j]).trace() / Td;
    g.dm3_dtheta[j] = -llt.solve(D[j]).trace() / (2.0 * Td);
  }
  for (int k = 0; k < m; ++k) {
    g.dl_dtau[k] = c1 * tilted_mean[k] + lu.solve(E[k]).trace() / Td -
                   llt.solve(F[k]).trace() / (2.0 * Td);
  }
  g.tau_jac = -llt.solve(B);
  g.total = g.dm1_dtheta + g.dm2_dtheta + g.dm3_dtheta + g.tau_jac.transpose() * g.dl_dtau;
  return g;
}

Eigen::VectorXd gradient_objective(const MomentModel& model, const Dataset& data,
                                   const Eigen::VectorXd& theta,
                                   const TiltOptions& tilt_options) {
  return gradient_objective_parts(model, data, theta, tilt_options).total;
}

Eigen::VectorXd gradient_objective_fd(const MomentModel& model, const Dataset& data,
                                      const Eigen::VectorXd& theta,
                                      const TiltOptions& tilt_options) {
  const int m = model.param_dim;
  Eigen::VectorXd grad(m);
  Eigen::VectorXd tp = theta, tm = theta;
  for (int j = 0; j < m; ++j) {
    const double h = kFdStepScale * std::max(1.0, std::abs(theta[j]));
    tp[j] = theta[j] + h;
    tm[j] = theta[j] - h;
    const EspEvaluation up = evaluate(model, data, tp, tilt_options);
    const EspEvaluation dn = evaluate(model, data, tm, tilt_options);
    if (!up.in_support || !dn.in_support) {
      throw Error(Errc::support_boundary,
                  "finite-difference stencil leaves the ESP support");
    }
    grad[j] = (up.log_esp_objective - dn.log_esp_objective) / (2.0 * h);
    tp[j] = theta[j];
    tm[j] = theta[j];
  }
  return grad;
}

std::vector<ProfileRow> profile(const MomentModel& model, const Dataset& data,
                                const std::vector<Eigen::VectorXd>& grid,
                                const TiltOptions& tilt_options) {
  if (grid.empty()) throw Error(Errc::invalid_input, "profile grid is empty");
  const int m = model.param_dim;
  const double Td = static_cast<double>(data.size());
  const double gauss_const = 0.5 * m * std::log(Td / (2.0 * std::numbers::pi));
  for (const auto& point : grid) {
    if (point.size() != m) throw Error(Errc::invalid_input, "grid point has wrong dimension");
    for (int j = 0; j < m; ++j) {
      if (point[j] < model.param_lower[j] - 1e-12 || point[j] > model.param_upper[j] + 1e-12) {
        throw Error(Errc::invalid_input, "grid point outside param_box");
      }
    }
  }

  std::vector<ProfileRow> rows(grid.size());
  detail::parallel_for(static_cast<int>(grid.size()), 0, [&](int i) {
    const EspEvaluation ev = evaluate(model, data, grid[i], tilt_options);
    ProfileRow& r = rows[i];
    r.theta = grid[i];
    r.m1 = ev.m1;
    r.m2 = ev.m2;
    r.m3 = ev.m3;
    r.log_esp_objective = ev.log_esp_objective;
    r.log_esp_density = ev.log_esp_density;
    r.log_et_density =
        ev.in_support ? Td * ev.tilting.log_k + gauss_const : -kInf;
    r.in_support = ev.in_support;
  });

  if (m == 1 && rows.size() >= 2) {
    auto normalize = [&](auto&& log_density_of, auto&& field_of) {
      double peak = -kInf;
      for (const auto& r : rows) {
        if (r.in_support) peak = std::max(peak, log_density_of(r));
      }
      if (!std::isfinite(peak)) return;
      std::vector<double> y(rows.size(), 0.0);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].in_support) y[i] = std::exp(log_density_of(rows[i]) - peak);
      }
      double integral = 0.0;
      for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
        integral += 0.5 * (rows[i + 1].theta[0] - rows[i].theta[0]) * (y[i] + y[i + 1]);
      }
      if (!(integral > 0.0) || !std::isfinite(integral)) return;
      for (std::size_t i = 0; i < rows.size(); ++i) field_of(rows[i]) = y[i] / integral;
    };
    normalize([](const ProfileRow& r) { return r.log_esp_density; },
              [](ProfileRow& r) -> double& { return r.norm_esp; });
    normalize([](const ProfileRow& r) { return r.log_et_density; },
              [](ProfileRow& r) -> double& { return r.norm_et; });
  }
  return rows;
}

void write_profile_csv(std::ostream& out, const std::vector<ProfileRow>& rows) {
  out << "theta,m1,m2,m3,log_esp_objective,log_esp_density,log_et_density,"
         "norm_esp,norm_et,in_support\n";
  for (const auto& r : rows) {
    for (Eigen::Index j = 0; j < r.theta.size(); ++j) {
      if (j) out << ';';
      out << format_double(r.theta[j]);
    }
    out << ',' << format_double(r.m1) << ',' << format_double(r.m2) << ','
        << format_double(r.m3) << ',' << format_double(r.log_esp_objective) << ','
        << format_double(r.log_esp_density) << ',' << format_double(r.log_et_density) << ','
        << format_double(r.norm_esp) << ',' << format_double(r.norm_et) << ','
        << (r.in_support ? '1' : '0') << '\n';
  }
}

}  // namespace esp

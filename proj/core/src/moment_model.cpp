#include "esp/moment_model.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "esp/errors.hpp"

namespace esp {

namespace {

constexpr double kFdStepScale = 6.05545445239334e-6;  // cbrt(machine epsilon)

void check_theta(const MomentModel& model, const Eigen::VectorXd& theta) {
  if (theta.size() != model.param_dim) {
    throw Error(Errc::invalid_input, "theta has length " + std::to_string(theta.size()) +
                                         ", model expects " + std::to_string(model.param_dim));
  }
}

}  // namespace

void MomentModel::validate() const {
  if (param_dim < 1) throw Error(Errc::invalid_input, "param_dim must be positive");
  if (data_dim < 1) throw Error(Errc::invalid_input, "data_dim must be positive");
  if (!psi) throw Error(Errc::invalid_input, "model has no psi function");
  if (param_lower.size() != param_dim || param_upper.size() != param_dim) {
    throw Error(Errc::invalid_input, "param_box does not match param_dim");
  }
  for (int j = 0; j < param_dim; ++j) {
    if (!(param_lower[j] < param_upper[j])) {
      throw Error(Errc::invalid_input, "param_box lower must be < upper componentwise");
    }
  }
}

Eigen::MatrixXd bind_columns(const MomentModel& model, const Dataset& data) {
  const Eigen::Index T = data.size();
  if (model.required_columns.empty() || data.column_names().empty()) {
    if (data.dim() < model.data_dim) {
      throw Error(Errc::invalid_input, "dataset has " + std::to_string(data.dim()) +
                                           " columns, model expects " +
                                           std::to_string(model.data_dim));
    }
    return data.rows().leftCols(model.data_dim);
  }
  Eigen::MatrixXd bound(T, model.data_dim);
  for (int j = 0; j < model.data_dim; ++j) {
    const Eigen::Index src = data.column_index(model.required_columns[j]);
    if (src < 0) {
      throw Error(Errc::invalid_input,
                  "dataset is missing required column '" + model.required_columns[j] + "'");
    }
    bound.col(j) = data.rows().col(src);
  }
  return bound;
}

Eigen::MatrixXd psi_matrix(const MomentModel& model, const Eigen::MatrixXd& bound_rows,
                           const Eigen::VectorXd& theta) {
  const Eigen::Index T = bound_rows.rows();
  const int m = model.param_dim;
  Eigen::MatrixXd psi(T, m);
  Eigen::VectorXd row(model.data_dim), out(m);
  for (Eigen::Index t = 0; t < T; ++t) {
    row = bound_rows.row(t);
    try {
      model.psi(row, theta, out);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (row " + std::to_string(t) + ")");
    }
    if (out.size() != m) {
      throw Error(Errc::invalid_input, "psi returned length " + std::to_string(out.size()) +
                                           ", expected " + std::to_string(m));
    }
    if (!out.allFinite()) {
      throw Error(Errc::numeric_domain,
                  "non-finite psi evaluation at row " + std::to_string(t));
    }
    psi.row(t) = out;
  }
  return psi;
}

Eigen::VectorXd eval_psi_bar(const MomentModel& model, const Dataset& data,
                             const Eigen::VectorXd& theta) {
  check_theta(model, theta);
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const Eigen::MatrixXd psi = psi_matrix(model, bound, theta);
  return psi.colwise().mean();
}

void row_jacobian(const MomentModel& model, const Eigen::VectorXd& row,
                  const Eigen::VectorXd& theta, Eigen::MatrixXd& out) {
  const int m = model.param_dim;
  if (model.has_jacobian()) {
    model.psi_jacobian(row, theta, out);
    if (!out.allFinite()) throw Error(Errc::numeric_domain, "non-finite analytic jacobian");
    return;
  }
  out.resize(m, m);
  Eigen::VectorXd tp = theta, tm = theta, fp(m), fm(m);
  for (int j = 0; j < m; ++j) {
    const double h = kFdStepScale * std::max(1.0, std::abs(theta[j]));
    tp[j] = theta[j] + h;
    tm[j] = theta[j] - h;
    model.psi(row, tp, fp);
    model.psi(row, tm, fm);
    out.col(j) = (fp - fm) / (2.0 * h);
    tp[j] = theta[j];
    tm[j] = theta[j];
  }
  if (!out.allFinite()) throw Error(Errc::numeric_domain, "non-finite finite-difference jacobian");
}

Eigen::MatrixXd jacobian_bar(const MomentModel& model, const Dataset& data,
                             const Eigen::VectorXd& theta, const Eigen::VectorXd& weights) {
  check_theta(model, theta);
  const Eigen::MatrixXd bound = bind_columns(model, data);
  const Eigen::Index T = bound.rows();
  const int m = model.param_dim;

  Eigen::VectorXd w;
  if (weights.size() == 0) {
    w = Eigen::VectorXd::Constant(T, 1.0 / static_cast<double>(T));
  } else {
    if (weights.size() != T) {
      throw Error(Errc::invalid_input, "weights length does not match sample size");
    }
    if ((weights.array() < 0).any()) {
      throw Error(Errc::invalid_input, "weights must be nonnegative");
    }
    if (std::abs(weights.sum() - 1.0) > 1e-10) {
      throw Error(Errc::invalid_input, "weights must sum to 1 within 1e-10");
    }
    w = weights;
  }

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
  Eigen::MatrixXd jac(m, m);
  Eigen::VectorXd row(model.data_dim);
  for (Eigen::Index t = 0; t < T; ++t) {
    row = bound.row(t);
    try {
      row_jacobian(model, row, theta, jac);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (row " + std::to_string(t) + ")");
    }
    acc.noalias() += w[t] * jac;
  }
  return acc;
}

MomentModel builtin_hall_horowitz() {
  MomentModel model;
  model.name = "hall-horowitz";
  model.param_dim = 2;
  model.data_dim = 2;
  model.param_lower = Eigen::Vector2d(-5.0, -5.0);
  model.param_upper = Eigen::Vector2d(15.0, 5.0);
  model.required_columns = {"X", "Y"};

  // theta = (beta, mu); e = exp(mu - beta (X+Y) + 3Y)
  model.psi = [](const Eigen::VectorXd& row, const Eigen::VectorXd& theta, Eigen::VectorXd& out) {
    const double x = row[0], y = row[1];
    const double e = std::exp(theta[1] - theta[0] * (x + y) + 3.0 * y);
    out.resize(2);
    out[0] = e - 1.0;
    out[1] = y * (e - 1.0);
  };
  model.psi_jacobian = [](const Eigen::VectorXd& row, const Eigen::VectorXd& theta,
                          Eigen::MatrixXd& out) {
    const double x = row[0], y = row[1];
    const double s = x + y;
    const double e = std::exp(theta[1] - theta[0] * s + 3.0 * y);
    out.resize(2, 2);
    out(0, 0) = -s * e;
    out(0, 1) = e;
    out(1, 0) = -y * s * e;
    out(1, 1) = y * e;
  };
  model.psi_hessian = [](const Eigen::VectorXd& row, const Eigen::VectorXd& theta, int j,
                         Eigen::MatrixXd& out) {
    const double x = row[0], y = row[1];
    const double s = x + y;
    const double e = std::exp(theta[1] - theta[0] * s + 3.0 * y);
    out.resize(2, 2);
    if (j == 0) {  // d/dbeta of the jacobian
      out(0, 0) = s * s * e;
      out(0, 1) = -s * e;
      out(1, 0) = y * s * s * e;
      out(1, 1) = -y * s * e;
    } else {  // d/dmu
      out(0, 0) = -s * e;
      out(0, 1) = e;
      out(1, 0) = -y * s * e;
      out(1, 1) = y * e;
    }
  };
  return model;
}

MomentModel builtin_crra(const std::string& consumption_ratio_col,
                         const std::string& market_return_col,
                         const std::string& risk_free_col) {
  MomentModel model;
  model.name = "crra";
  model.param_dim = 1;
  model.data_dim = 3;
  model.param_lower = Eigen::VectorXd::Constant(1, -300.0);
  model.param_upper = Eigen::VectorXd::Constant(1, 900.0);
  model.required_columns = {consumption_ratio_col, market_return_col, risk_free_col};

  model.psi = [](const Eigen::VectorXd& row, const Eigen::VectorXd& theta, Eigen::VectorXd& out) {
    const double c = row[0];
    if (!(c > 0.0)) {
      throw Error(Errc::numeric_domain, "consumption ratio must be positive");
    }
    const double excess = row[1] - row[2];
    out.resize(1);
    out[0] = std::exp(-theta[0] * std::log(c)) * excess;
  };
  model.psi_jacobian = [](const Eigen::VectorXd& row, const Eigen::VectorXd& theta,
                          Eigen::MatrixXd& out) {
    const double c = row[0];
    if (!(c > 0.0)) {
      throw Error(Errc::numeric_domain, "consumption ratio must be positive");
    }
    const double lc = std::log(c);
    const double excess = row[1] - row[2];
    out.resize(1, 1);
    out(0, 0) = -lc * std::exp(-theta[0] * lc) * excess;
  };
  model.psi_hessian = [](const Eigen::VectorXd& row, const Eigen::VectorXd& theta, int,
                         Eigen::MatrixXd& out) {
    const double c = row[0];
    if (!(c > 0.0)) {
      throw Error(Errc::numeric_domain, "consumption ratio must be positive");
    }
    const double lc = std::log(c);
    const double excess = row[1] - row[2];
    out.resize(1, 1);
    out(0, 0) = lc * lc * std::exp(-theta[0] * lc) * excess;
  };
  return model;
}

}  // namespace esp

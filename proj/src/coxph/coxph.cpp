#include "icumort/coxph/coxph.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "icumort/error.hpp"

namespace icumort::cox {

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Evaluation {
  double log_likelihood = 0.0;
  Vector score;
  Matrix information;
};

// Column-centred design; the partial likelihood is unchanged by centring and
// the exponentials stay well scaled.
struct Design {
  Matrix x;
  Vector means;
  std::vector<std::size_t> order;  // ascending observed time
};

Design make_design(const ad::Tensor& x, std::span<const surv::SurvivalRecord> records) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  Design out;
  out.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out.x(i, j) = x(i, j);
  out.means = out.x.colwise().mean().transpose();
  out.x.rowwise() -= out.means.transpose();
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::stable_sort(out.order.begin(), out.order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].observed_time < records[b].observed_time;
  });
  return out;
}

Evaluation evaluate(const Design& design, std::span<const surv::SurvivalRecord> records,
                    const Vector& beta, bool derivatives) {
  const auto n = design.x.rows();
  const auto d = design.x.cols();
  const Vector eta = design.x * beta;
  const double shift = eta.maxCoeff();

  Evaluation ev;
  ev.score = Vector::Zero(d);
  ev.information = Matrix::Zero(d, d);
  double s0 = 0.0;
  Vector s1 = Vector::Zero(d);
  Matrix s2 = Matrix::Zero(d, d);

  // walk tied-time groups from the latest time down, growing the risk set
  for (Eigen::Index end = n; end > 0;) {
    const double t = records[design.order[static_cast<std::size_t>(end - 1)]].observed_time;
    Eigen::Index begin = end;
    while (begin > 0 && records[design.order[static_cast<std::size_t>(begin - 1)]].observed_time == t) --begin;

    double events = 0.0;
    Vector event_x = Vector::Zero(d);
    double event_eta = 0.0;
    for (Eigen::Index p = begin; p < end; ++p) {
      const auto i = static_cast<Eigen::Index>(design.order[static_cast<std::size_t>(p)]);
      const double w = std::exp(eta(i) - shift);
      s0 += w;
      if (derivatives) {
        s1.noalias() += w * design.x.row(i).transpose();
        s2.noalias() += w * design.x.row(i).transpose() * design.x.row(i);
      }
      if (records[static_cast<std::size_t>(i)].event) {
        events += 1.0;
        event_eta += eta(i);
        if (derivatives) event_x.noalias() += design.x.row(i).transpose();
      }
    }
    if (events > 0.0) {
      ev.log_likelihood += event_eta - events * (shift + std::log(s0));
      if (derivatives) {
        const Vector mean = s1 / s0;
        ev.score.noalias() += event_x - events * mean;
        ev.information.noalias() += events * (s2 / s0 - mean * mean.transpose());
      }
    }
    end = begin;
  }
  return ev;
}

// First column whose pivot vanishes in an unpivoted Cholesky sweep, or -1.
Eigen::Index degenerate_column(const Matrix& info) {
  const auto d = info.rows();
  Matrix l = Matrix::Zero(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    double pivot = info(k, k);
    for (Eigen::Index j = 0; j < k; ++j) pivot -= l(k, j) * l(k, j);
    if (!(pivot > 1e-10 * std::max(info(k, k), 1e-300))) return k;
    l(k, k) = std::sqrt(pivot);
    for (Eigen::Index i = k + 1; i < d; ++i) {
      double v = info(i, k);
      for (Eigen::Index j = 0; j < k; ++j) v -= l(i, j) * l(k, j);
      l(i, k) = v / l(k, k);
    }
  }
  return -1;
}

}  // namespace

double CoxModel::risk(std::span<const double> x) const {
  if (x.size() != beta.size()) throw DimensionError("covariate vector length does not match the model");
  double r = 0.0;
  for (std::size_t j = 0; j < beta.size(); ++j) r += x[j] * beta[j];
  return r;
}

double partial_log_likelihood(const ad::Tensor& x, std::span<const surv::SurvivalRecord> records,
                              std::span<const double> beta) {
  if (x.rows() != records.size() || x.cols() != beta.size())
    throw DimensionError("partial_log_likelihood: design, records and beta disagree in size");
  const Design design = make_design(x, records);
  Vector b(static_cast<Eigen::Index>(beta.size()));
  for (std::size_t j = 0; j < beta.size(); ++j) b(static_cast<Eigen::Index>(j)) = beta[j];
  return evaluate(design, records, b, false).log_likelihood;
}

CoxModel fit_coxph(const ad::Tensor& x, std::span<const surv::SurvivalRecord> records,
                   const FitConfig& config, std::vector<std::string> names) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n != records.size())
    throw DimensionError("fit_coxph: " + std::to_string(n) + " design rows for " +
                         std::to_string(records.size()) + " records");
  if (n < d) throw InputError("fit_coxph needs at least as many patients as covariates");
  if (surv::count_events(records) == 0) throw LikelihoodError("fit_coxph needs at least one event");
  if (config.max_iter < 1 || !(config.tol > 0.0)) throw ParameterError("fit_coxph: invalid max_iter or tol");
  if (names.empty())
    for (std::size_t j = 0; j < d; ++j) names.push_back("x" + std::to_string(j));
  if (names.size() != d) throw DimensionError("fit_coxph: one covariate name per column required");

  const Design design = make_design(x, records);
  Vector beta = Vector::Zero(static_cast<Eigen::Index>(d));
  Evaluation current = evaluate(design, records, beta, true);

  if (Eigen::Index bad = degenerate_column(current.information); bad >= 0)
    throw DegeneracyError("singular information matrix: column '" + names[static_cast<std::size_t>(bad)] +
                          "' is constant or collinear with earlier columns");

  CoxModel model;
  model.covariate_names = std::move(names);
  for (int it = 1; it <= config.max_iter; ++it) {
    if (current.score.norm() < config.tol) {
      model.converged = true;
      break;
    }
    Eigen::LDLT<Matrix> ldlt(current.information);
    const Vector step = ldlt.solve(current.score);
    if (ldlt.info() != Eigen::Success || !step.allFinite()) {
      Eigen::Index bad = degenerate_column(current.information);
      throw DegeneracyError("singular information matrix at iteration " + std::to_string(it) +
                            (bad >= 0 ? ", column '" + model.covariate_names[static_cast<std::size_t>(bad)] + "'"
                                      : std::string()));
    }

    // step halving keeps the partial likelihood nondecreasing
    double scale = 1.0;
    bool accepted = false;
    Vector candidate;
    Evaluation next;
    for (int h = 0; h < 60; ++h) {
      candidate = beta + scale * step;
      next = evaluate(design, records, candidate, true);
      if (next.log_likelihood >= current.log_likelihood) {
        accepted = true;
        break;
      }
      scale *= 0.5;
    }
    model.iterations = it;
    if (!accepted) {
      // no ascent direction left at machine precision
      model.converged = (scale * step).cwiseAbs().maxCoeff() < config.tol ||
                        current.score.norm() < std::sqrt(config.tol);
      break;
    }
    const double moved = (scale * step).cwiseAbs().maxCoeff();
    beta = candidate;
    current = std::move(next);
    if (moved < config.tol) {
      model.converged = true;
      break;
    }
  }

  model.beta.assign(beta.data(), beta.data() + beta.size());
  model.log_likelihood = current.log_likelihood;

  Eigen::LDLT<Matrix> ldlt(current.information);
  const Matrix covariance = ldlt.solve(Matrix::Identity(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d)));
  model.standard_errors.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double v = covariance(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
    model.standard_errors[j] = v > 0.0 && std::isfinite(v) ? std::sqrt(v) : 0.0;
    if (model.standard_errors[j] <= 0.0) model.converged = false;
  }
  if (!std::all_of(model.beta.begin(), model.beta.end(), [](double b) { return std::isfinite(b); }))
    throw OverflowError("fit_coxph produced non-finite coefficients");

  std::vector<double> risks(n);
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < d; ++j) r += x(i, j) * model.beta[j];
    risks[i] = r;
  }
  model.baseline = surv::breslow_baseline(records, risks);
  return model;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double wald_p_value(double beta, double standard_error) {
  if (!(standard_error > 0.0)) throw ContractError("Wald test needs a positive standard error");
  const double z = std::abs(beta / standard_error);
  return std::clamp(std::erfc(z / std::sqrt(2.0)), 0.0, 1.0);
}

HazardRow hazard_row(std::string covariate, double beta, double standard_error) {
  HazardRow row;
  row.covariate = std::move(covariate);
  row.beta = beta;
  row.standard_error = standard_error;
  row.hazard_ratio = std::exp(beta);
  row.ci_low = std::exp(beta - kZ95 * standard_error);
  row.ci_high = std::exp(beta + kZ95 * standard_error);
  row.p_value = wald_p_value(beta, standard_error);
  return row;
}

HazardReport hazard_report(const CoxModel& model) {
  if (!model.converged) throw StateError("hazard_report needs a converged model");
  HazardReport report;
  for (std::size_t j = 0; j < model.beta.size(); ++j)
    report.rows.push_back(hazard_row(model.covariate_names[j], model.beta[j], model.standard_errors[j]));
  return report;
}

std::string significance_stars(double p_value) {
  if (std::isnan(p_value) || p_value < 0.0 || p_value > 1.0)
    throw ContractError("p-value must lie in [0, 1]");
  if (p_value < 0.001) return "***";
  if (p_value <= 0.01) return "**";
  if (p_value <= 0.05) return "*";
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", p_value);
  return buf;
}

void write_hazard_csv(std::ostream& out, const HazardReport& report) {
  out << "covariate,hazard_ratio,ci_low,ci_high,p_value,stars\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.6g", r.hazard_ratio, r.ci_low, r.ci_high, r.p_value);
    out << r.covariate << ',' << buf << ',' << significance_stars(r.p_value) << '\n';
  }
}

}  // namespace icumort::cox

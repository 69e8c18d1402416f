#pragma once

#include <vector>

#include <nlohmann/json.hpp>

namespace ibnet {

/// CDF of Student's t distribution with dof degrees of freedom, evaluated
/// through the regularized incomplete beta function.
double student_t_cdf(double x, double dof);

/// Inverse CDF; p in (0,1).
double student_t_quantile(double p, double dof);

/// Posterior of a mean metric difference across cross-validation folds, with
/// the variance correction for overlapping training sets. The posterior is a
/// Student-t with dof = k-1, location xbar, and
/// scale^2 = (1/k + rho/(1-rho)) * s^2.
struct PosteriorSummary {
    double location = 0.0;
    double scale = 0.0;
    double dof = 0.0;
    double rho = 0.0;
    double p_greater_zero = 0.5;
    double hdi_lo = 0.0;
    double hdi_hi = 0.0;
    bool degenerate = false;  // sample variance was exactly zero
};

PosteriorSummary correlated_bayes_ttest(const std::vector<double>& diffs, double rho);

nlohmann::json posterior_to_json(const PosteriorSummary& p);
PosteriorSummary posterior_from_json(const nlohmann::json& j);

}  // namespace ibnet

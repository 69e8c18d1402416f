#include "ibnet/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ibnet/errors.hpp"

namespace ibnet {

namespace {

void check_training_inputs(const Eigen::MatrixXd& z, const std::vector<int>& y) {
    if (z.rows() < 2) throw validation_error("classifier needs at least 2 rows");
    if (static_cast<std::size_t>(z.rows()) != y.size())
        throw validation_error("label count does not match row count");
    if (!z.allFinite()) throw validation_error("features contain NaN or inf");
    bool pos = false, neg = false;
    for (int label : y) {
        if (label != 0 && label != 1) throw validation_error("labels must be 0 or 1");
        (label == 1 ? pos : neg) = true;
    }
    if (!pos || !neg) throw validation_error("training labels are single-class");
}

/// Standardizer learned from training rows. Constant features get sd = 1 so
/// their standardized column is identically zero.
void fit_standardizer(const Eigen::MatrixXd& z, Eigen::VectorXd& means,
                      Eigen::VectorXd& sds) {
    const auto n = static_cast<double>(z.rows());
    means = z.colwise().mean();
    sds.resize(z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double var = (z.col(j).array() - means(j)).square().sum() / n;
        const double sd = std::sqrt(var);
        sds(j) = sd > 1e-12 ? sd : 1.0;
    }
}

Eigen::MatrixXd apply_standardizer(const Eigen::MatrixXd& z, const Eigen::VectorXd& means,
                                   const Eigen::VectorXd& sds) {
    return (z.rowwise() - means.transpose()).array().rowwise() /
           sds.transpose().array();
}

double stable_log1p_exp(double m) {
    // log(1 + exp(m)) without overflow for large |m|.
    return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

void fit_ridge_logreg(const Eigen::MatrixXd& zs, const std::vector<int>& y,
                      double lambda, Eigen::VectorXd& w, double& b) {
    w = Eigen::VectorXd::Zero(zs.cols());
    b = 0.0;
    Eigen::VectorXd grad_w(zs.cols());
    double grad_b = 0.0;
    double step = 1.0;
    for (int iter = 0; iter < 5000; ++iter) {
        const double f = ridge_logistic_objective(zs, y, lambda, w, b, &grad_w, &grad_b);
        const double grad_norm2 = grad_w.squaredNorm() + grad_b * grad_b;
        if (std::sqrt(grad_norm2) <= 1e-6) break;
        // Backtracking line search with the Armijo condition.
        step = std::min(step * 2.0, 1e4);
        while (true) {
            const Eigen::VectorXd w_try = w - step * grad_w;
            const double b_try = b - step * grad_b;
            const double f_try = ridge_logistic_objective(zs, y, lambda, w_try, b_try);
            if (f_try <= f - 1e-4 * step * grad_norm2 || step < 1e-16) {
                w = w_try;
                b = b_try;
                break;
            }
            step *= 0.5;
        }
    }
}

void fit_linear_svm(const Eigen::MatrixXd& zs, const std::vector<int>& y, double lambda,
                    Eigen::VectorXd& w, double& b) {
    // Deterministic full-batch subgradient descent on
    // (1/n) sum max(0, 1 - y_pm (w.z + b)) + lambda |w|^2, step 1/(lambda t),
    // with uniform averaging of the iterates. The iterate stays inside the
    // ball |w| <= 1/sqrt(lambda) that must contain the optimum.
    const auto n = zs.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double radius = 1.0 / std::sqrt(lambda);
    Eigen::VectorXd wt = Eigen::VectorXd::Zero(zs.cols());
    double bt = 0.0;
    Eigen::VectorXd w_sum = Eigen::VectorXd::Zero(zs.cols());
    double b_sum = 0.0;
    const int iters = 5000;
    for (int t = 1; t <= iters; ++t) {
        Eigen::VectorXd sub = 2.0 * lambda * wt;
        double sub_b = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double ypm = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
            if (ypm * (zs.row(i).dot(wt) + bt) < 1.0) {
                sub.noalias() -= inv_n * ypm * zs.row(i).transpose();
                sub_b -= inv_n * ypm;
            }
        }
        const double step = 1.0 / (lambda * static_cast<double>(t));
        wt.noalias() -= step * sub;
        bt -= step * sub_b;
        const double norm = wt.norm();
        if (norm > radius) wt *= radius / norm;
        w_sum += wt;
        b_sum += bt;
    }
    w = w_sum / static_cast<double>(iters);
    b = b_sum / static_cast<double>(iters);
}

}  // namespace

std::string classifier_name(ClassifierKind kind) {
    return kind == ClassifierKind::RIDGE_LOGREG ? "ridge_logreg" : "linear_svm";
}

ClassifierKind classifier_from_name(const std::string& name) {
    if (name == "ridge_logreg") return ClassifierKind::RIDGE_LOGREG;
    if (name == "linear_svm") return ClassifierKind::LINEAR_SVM;
    throw validation_error("unknown classifier: " + name);
}

double ridge_logistic_objective(const Eigen::MatrixXd& z, const std::vector<int>& y,
                                double lambda, const Eigen::VectorXd& w, double b,
                                Eigen::VectorXd* grad_w, double* grad_b) {
    const auto n = z.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    double obj = lambda * w.squaredNorm();
    if (grad_w) *grad_w = 2.0 * lambda * w;
    if (grad_b) *grad_b = 0.0;
    const Eigen::VectorXd margins = z * w + Eigen::VectorXd::Constant(n, b);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double ypm = y[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
        const double m = ypm * margins(i);
        obj += inv_n * stable_log1p_exp(-m);
        if (grad_w || grad_b) {
            // d/dm log(1+exp(-m)) = -sigmoid(-m)
            const double s = m > 0.0 ? std::exp(-m) / (1.0 + std::exp(-m))
                                     : 1.0 / (1.0 + std::exp(m));
            const double coeff = -inv_n * s * ypm;
            if (grad_w) grad_w->noalias() += coeff * z.row(i).transpose();
            if (grad_b) *grad_b += coeff;
        }
    }
    return obj;
}

ClassifierState fit_classifier(ClassifierKind kind, const Eigen::MatrixXd& z,
                               const std::vector<int>& y, double lambda) {
    check_training_inputs(z, y);
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw validation_error("lambda must be positive and finite");

    ClassifierState state;
    state.kind = kind;
    state.lambda = lambda;
    fit_standardizer(z, state.feature_means, state.feature_sds);
    const Eigen::MatrixXd zs = apply_standardizer(z, state.feature_means, state.feature_sds);

    if (kind == ClassifierKind::RIDGE_LOGREG)
        fit_ridge_logreg(zs, y, lambda, state.weights, state.bias);
    else
        fit_linear_svm(zs, y, lambda, state.weights, state.bias);

    // Constant features carry no information; pin their weights to zero so
    // the state invariant is explicit rather than merely approximate.
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double var =
            (z.col(j).array() - state.feature_means(j)).square().sum() /
            static_cast<double>(z.rows());
        if (std::sqrt(var) <= 1e-12) state.weights(j) = 0.0;
    }
    if (!state.weights.allFinite() || !std::isfinite(state.bias))
        throw validation_error("classifier fit produced non-finite weights");
    return state;
}

Eigen::VectorXd decision_scores(const ClassifierState& state, const Eigen::MatrixXd& z) {
    if (state.weights.size() == 0) throw validation_error("classifier state is unfitted");
    if (z.cols() != state.weights.size())
        throw validation_error("feature width does not match fitted classifier");
    if (!z.allFinite()) throw validation_error("features contain NaN or inf");
    const Eigen::MatrixXd zs =
        apply_standardizer(z, state.feature_means, state.feature_sds);
    return zs * state.weights + Eigen::VectorXd::Constant(z.rows(), state.bias);
}

double roc_auc(const Eigen::VectorXd& scores, const std::vector<int>& y) {
    if (scores.size() == 0 || static_cast<std::size_t>(scores.size()) != y.size())
        throw validation_error("scores and labels must be non-empty and equal length");
    if (!scores.allFinite()) throw validation_error("scores contain NaN or inf");
    std::size_t n_pos = 0;
    for (int label : y) {
        if (label != 0 && label != 1) throw validation_error("labels must be 0 or 1");
        n_pos += static_cast<std::size_t>(label);
    }
    const std::size_t n = y.size();
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw validation_error("roc_auc needs both classes");

    // Average ranks with ties, then the Mann-Whitney statistic.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores(static_cast<Eigen::Index>(a)) < scores(static_cast<Eigen::Index>(b)); });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores(static_cast<Eigen::Index>(order[j + 1])) ==
                                scores(static_cast<Eigen::Index>(order[i])))
            ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k)
            if (y[order[k]] == 1) rank_sum_pos += avg_rank;
        i = j + 1;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

nlohmann::json classifier_to_json(const ClassifierState& state) {
    nlohmann::json j;
    j["kind"] = classifier_name(state.kind);
    j["lambda"] = state.lambda;
    j["weights"] = std::vector<double>(state.weights.begin(), state.weights.end());
    j["bias"] = state.bias;
    j["feature_means"] =
        std::vector<double>(state.feature_means.begin(), state.feature_means.end());
    j["feature_sds"] =
        std::vector<double>(state.feature_sds.begin(), state.feature_sds.end());
    return j;
}

ClassifierState classifier_from_json(const nlohmann::json& j) {
    try {
        ClassifierState state;
        state.kind = classifier_from_name(j.at("kind").get<std::string>());
        state.lambda = j.at("lambda").get<double>();
        const auto w = j.at("weights").get<std::vector<double>>();
        const auto m = j.at("feature_means").get<std::vector<double>>();
        const auto s = j.at("feature_sds").get<std::vector<double>>();
        if (w.size() != m.size() || w.size() != s.size())
            throw validation_error("classifier JSON has inconsistent vector sizes");
        state.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        state.feature_means = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
        state.feature_sds = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
        state.bias = j.at("bias").get<double>();
        return state;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("malformed classifier JSON: ") + e.what());
    }
}

}  // namespace ibnet

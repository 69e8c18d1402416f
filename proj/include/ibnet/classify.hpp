#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace ibnet {

enum class ClassifierKind { RIDGE_LOGREG, LINEAR_SVM };

std::string classifier_name(ClassifierKind kind);
ClassifierKind classifier_from_name(const std::string& name);

/// Linear decision model over standardized features. Standardization
/// statistics are learned on the training rows so every encoder is compared
/// under identical feature scaling. Constant training features keep sd = 1
/// and a forced zero weight.
struct ClassifierState {
    ClassifierKind kind = ClassifierKind::RIDGE_LOGREG;
    double lambda = 1e-2;
    Eigen::VectorXd weights;
    double bias = 0.0;
    Eigen::VectorXd feature_means;
    Eigen::VectorXd feature_sds;
};

/// Regularized objective (1/n) sum log(1+exp(-y_pm (w.z + b))) + lambda |w|^2
/// on an already-standardized feature matrix; labels in {0,1} are mapped to
/// {-1,+1}. Optionally returns the analytic gradient. The bias is not
/// regularized.
double ridge_logistic_objective(const Eigen::MatrixXd& z, const std::vector<int>& y,
                                double lambda, const Eigen::VectorXd& w, double b,
                                Eigen::VectorXd* grad_w = nullptr,
                                double* grad_b = nullptr);

/// Fits a classifier on raw features. RIDGE_LOGREG: full-batch gradient
/// descent with backtracking line search to gradient norm <= 1e-6 (max 5000
/// iterations). LINEAR_SVM: deterministic subgradient descent on the averaged
/// hinge loss, step 1/(lambda t), 5000 iterations, uniform iterate averaging.
ClassifierState fit_classifier(ClassifierKind kind, const Eigen::MatrixXd& z,
                               const std::vector<int>& y, double lambda);

/// Raw decision values w . standardize(z) + b, one per row; monotone in the
/// predicted class-1 propensity.
Eigen::VectorXd decision_scores(const ClassifierState& state, const Eigen::MatrixXd& z);

/// Mann-Whitney ROC-AUC: (#concordant + 0.5 #tied) / (#pos #neg).
double roc_auc(const Eigen::VectorXd& scores, const std::vector<int>& y);

nlohmann::json classifier_to_json(const ClassifierState& state);
ClassifierState classifier_from_json(const nlohmann::json& j);

}  // namespace ibnet

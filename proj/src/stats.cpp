#include "ibnet/stats.hpp"

#include <cmath>
#include <limits>

#include "ibnet/errors.hpp"

namespace ibnet {

namespace {

/// Continued fraction for the regularized incomplete beta, modified Lentz
/// method. Valid for x < (a+1)/(a+b+2); the symmetry relation covers the rest.
double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    constexpr double eps = 1e-15;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < eps) break;
    }
    return h;
}

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                             a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double sample_mean(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    return m / static_cast<double>(v.size());
}

}  // namespace

double student_t_cdf(double x, double dof) {
    if (!(dof > 0.0)) throw validation_error("degrees of freedom must be positive");
    if (std::isnan(x)) throw validation_error("t CDF input is NaN");
    if (std::isinf(x)) return x > 0.0 ? 1.0 : 0.0;
    const double x2 = x * x;
    if (x2 <= dof) {
        // Near the median dof/(dof+x^2) rounds to 1 and loses all x
        // information; the central mass P(|T| <= |x|) keeps full relative
        // precision on this wing.
        const double central = incomplete_beta(0.5, 0.5 * dof, x2 / (dof + x2));
        return x >= 0.0 ? 0.5 + 0.5 * central : 0.5 - 0.5 * central;
    }
    const double tail = 0.5 * incomplete_beta(0.5 * dof, 0.5, dof / (dof + x2));
    return x >= 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double dof) {
    if (!(dof > 0.0)) throw validation_error("degrees of freedom must be positive");
    if (!(p > 0.0 && p < 1.0)) throw validation_error("quantile probability must be in (0,1)");
    // Bisection on the CDF; bracket expanded geometrically first.
    double lo = -1.0, hi = 1.0;
    while (student_t_cdf(lo, dof) > p) lo *= 2.0;
    while (student_t_cdf(hi, dof) < p) hi *= 2.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, dof) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-13 * std::max(1.0, std::fabs(hi))) break;
    }
    return 0.5 * (lo + hi);
}

PosteriorSummary correlated_bayes_ttest(const std::vector<double>& diffs, double rho) {
    if (diffs.size() < 2)
        throw validation_error("correlated t-test needs at least 2 fold differences");
    if (!(rho >= 0.0 && rho < 1.0)) throw validation_error("rho must be in [0, 1)");
    for (double d : diffs)
        if (!std::isfinite(d)) throw validation_error("fold differences contain NaN or inf");

    const auto k = static_cast<double>(diffs.size());
    bool all_equal = true;
    for (double d : diffs) all_equal = all_equal && d == diffs[0];
    // An all-identical sample is the point mass at that value; computing
    // its mean in floating point would blur the exact location.
    const double xbar = all_equal ? diffs[0] : sample_mean(diffs);
    double ss = 0.0;
    for (double d : diffs) ss += (d - xbar) * (d - xbar);
    const double s = std::sqrt(ss / (k - 1.0));

    PosteriorSummary out;
    out.location = xbar;
    out.dof = k - 1.0;
    out.rho = rho;
    if (s == 0.0) {
        out.degenerate = true;
        out.scale = 0.0;
        out.p_greater_zero = xbar > 0.0 ? 1.0 : (xbar < 0.0 ? 0.0 : 0.5);
        out.hdi_lo = out.hdi_hi = xbar;
        return out;
    }
    out.scale = s * std::sqrt(1.0 / k + rho / (1.0 - rho));
    // 1 - F((0 - xbar)/scale) = F(xbar/scale) by symmetry of the t density.
    out.p_greater_zero = student_t_cdf(xbar / out.scale, out.dof);
    const double half_width = student_t_quantile(0.975, out.dof) * out.scale;
    out.hdi_lo = xbar - half_width;
    out.hdi_hi = xbar + half_width;
    return out;
}

nlohmann::json posterior_to_json(const PosteriorSummary& p) {
    nlohmann::json j;
    j["location"] = p.location;
    j["scale"] = p.scale;
    j["dof"] = p.dof;
    j["rho"] = p.rho;
    j["p_greater_zero"] = p.p_greater_zero;
    j["hdi95"] = {p.hdi_lo, p.hdi_hi};
    j["degenerate"] = p.degenerate;
    return j;
}

PosteriorSummary posterior_from_json(const nlohmann::json& j) {
    try {
        PosteriorSummary p;
        p.location = j.at("location").get<double>();
        p.scale = j.at("scale").get<double>();
        p.dof = j.at("dof").get<double>();
        p.rho = j.at("rho").get<double>();
        p.p_greater_zero = j.at("p_greater_zero").get<double>();
        const auto hdi = j.at("hdi95").get<std::vector<double>>();
        if (hdi.size() != 2) throw validation_error("hdi95 must have two entries");
        p.hdi_lo = hdi[0];
        p.hdi_hi = hdi[1];
        p.degenerate = j.at("degenerate").get<bool>();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error(std::string("malformed posterior JSON: ") + e.what());
    }
}

}  // namespace ibnet

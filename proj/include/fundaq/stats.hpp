#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fundaq::stats {

/// Regularized incomplete beta I_x(a, b), continued fraction (modified Lentz),
/// evaluated on the side of the symmetry point where it converges fast.
inline double reg_inc_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("reg_inc_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("reg_inc_beta: x must lie in [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;

    auto continued_fraction = [](double a, double b, double x) {
        constexpr double kTiny = 1e-300;
        constexpr double kEps = 1e-16;
        const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
        double c = 1.0;
        double d = 1.0 - qab * x / qap;
        if (std::abs(d) < kTiny) d = kTiny;
        d = 1.0 / d;
        double h = d;
        for (int m = 1; m <= 100000; ++m) {
            const double m2 = 2.0 * m;
            double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
            d = 1.0 + aa * d;
            if (std::abs(d) < kTiny) d = kTiny;
            c = 1.0 + aa / c;
            if (std::abs(c) < kTiny) c = kTiny;
            d = 1.0 / d;
            h *= d * c;
            aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
            d = 1.0 + aa * d;
            if (std::abs(d) < kTiny) d = kTiny;
            c = 1.0 + aa / c;
            if (std::abs(c) < kTiny) c = kTiny;
            d = 1.0 / d;
            const double del = d * c;
            h *= del;
            if (std::abs(del - 1.0) < kEps) break;
        }
        return h;
    };

    const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * continued_fraction(a, b, x) / a;
    return 1.0 - front * continued_fraction(b, a, 1.0 - x) / b;
}

/// Upper tail P(F > f) of the F(d1, d2) distribution.
inline double f_upper_tail(double f, double d1, double d2) {
    if (!(f > 0.0)) return 1.0;
    if (std::isinf(f)) return 0.0;
    return reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f));
}

/// Two-sided P(|T| > |t|) for Student's t with df degrees of freedom.
inline double t_two_sided(double t, double df) {
    if (std::isinf(t)) return 0.0;
    return reg_inc_beta(df / 2.0, 0.5, df / (df + t * t));
}

inline double mean(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Pearson correlation; nullopt when either input is constant.
inline std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("pearson: need equal lengths >= 2");
    const double mx = mean(x), my = mean(y);
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks with ties sharing their average rank.
inline std::vector<double> mid_ranks(std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need equal lengths >= 2");
    const auto rx = mid_ranks(x), ry = mid_ranks(y);
    return pearson(rx, ry);
}

struct AnovaResult {
    double f;
    double p;
    double ss_between;
    double ss_within;
    std::size_t df_between;
    std::size_t df_within;
};

inline AnovaResult anova_oneway(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw std::invalid_argument("anova: need at least two groups");
    std::size_t n = 0;
    double total = 0;
    for (const auto& g : groups) {
        if (g.empty()) throw std::invalid_argument("anova: empty group");
        n += g.size();
        total += std::accumulate(g.begin(), g.end(), 0.0);
    }
    const std::size_t k = groups.size();
    if (n <= k) throw std::invalid_argument("anova: need more observations than groups");
    const double grand = total / static_cast<double>(n);
    double ssb = 0, ssw = 0;
    for (const auto& g : groups) {
        const double m = mean(g);
        ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        for (double v : g) ssw += (v - m) * (v - m);
    }
    AnovaResult r{0.0, 1.0, ssb, ssw, k - 1, n - k};
    if (ssb == 0.0) return r;  // covers the all-constant case: F = 0, p = 1
    if (ssw == 0.0) {
        r.f = std::numeric_limits<double>::infinity();
        r.p = 0.0;
        return r;
    }
    r.f = (ssb / static_cast<double>(k - 1)) / (ssw / static_cast<double>(n - k));
    r.p = f_upper_tail(r.f, static_cast<double>(k - 1), static_cast<double>(n - k));
    return r;
}

struct OlsResult {
    double intercept;
    double slope;
    std::optional<double> r2;  // nullopt when y is constant
    double slope_se;
    double slope_p;  // two-sided, n-2 degrees of freedom
};

/// Least-squares line y = intercept + slope * x.
inline OlsResult ols_simple(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3) throw std::invalid_argument("ols: need equal lengths >= 3");
    const double mx = mean(x), my = mean(y);
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("ols: regressor is constant");
    OlsResult r{};
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double ss_res = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (r.intercept + r.slope * x[i]);
        ss_res += e * e;
    }
    const double df = static_cast<double>(x.size() - 2);
    if (syy > 0.0) r.r2 = std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    r.slope_se = std::sqrt(ss_res / df / sxx);
    if (r.slope_se == 0.0) {
        r.slope_p = r.slope == 0.0 ? 1.0 : 0.0;
    } else {
        r.slope_p = t_two_sided(r.slope / r.slope_se, df);
    }
    return r;
}

/// Five-number summary with linearly interpolated quartiles.
struct Quartiles {
    std::size_t n;
    double min, q1, median, q3, max;
};

inline double quantile_sorted(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - static_cast<double>(lo));
}

inline Quartiles quartiles(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("quartiles of an empty sample");
    std::sort(v.begin(), v.end());
    return {v.size(), v.front(), quantile_sorted(v, 0.25), quantile_sorted(v, 0.5), quantile_sorted(v, 0.75), v.back()};
}

}  // namespace fundaq::stats

#ifndef NLWLAB_STATS_HPP
#define NLWLAB_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <vector>

namespace nlwlab {

inline double mean(const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("mean: empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double variance(const std::vector<double>& x) {
    if (x.size() < 2) throw std::invalid_argument("variance: need >= 2 samples");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / static_cast<double>(x.size() - 1);
}

inline double std_error(const std::vector<double>& x) {
    return std::sqrt(variance(x) / static_cast<double>(x.size()));
}

inline double log_sum_exp(const std::vector<double>& x) {
    if (x.empty()) throw std::invalid_argument("log_sum_exp: empty sample");
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

inline double log_mean_exp(const std::vector<double>& x) {
    return log_sum_exp(x) - std::log(static_cast<double>(x.size()));
}

// effective sample size of exponential weights given as logs
inline double ess_from_log_weights(const std::vector<double>& lw) {
    const double l1 = log_sum_exp(lw);
    std::vector<double> lw2(lw.size());
    for (std::size_t i = 0; i < lw.size(); ++i) lw2[i] = 2.0 * lw[i];
    const double l2 = log_sum_exp(lw2);
    return std::exp(2.0 * l1 - l2);
}

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    std::size_t n = 0;
    bool ok = false;
};

// ordinary least squares y = a + b x with classical standard errors
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    LineFit f;
    if (x.size() != y.size() || x.size() < 3) return f;
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        rss += r * r;
    }
    const double s2 = rss / static_cast<double>(n - 2);
    f.slope_se = std::sqrt(s2 / sxx);
    f.intercept_se = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mx * mx / sxx));
    f.n = n;
    f.ok = true;
    return f;
}

// weighted least squares y = a + b x, weights w (inverse variances)
inline LineFit fit_line_weighted(const std::vector<double>& x, const std::vector<double>& y,
                                 const std::vector<double>& w) {
    LineFit f;
    if (x.size() != y.size() || x.size() != w.size() || x.size() < 3) return f;
    const std::size_t n = x.size();
    double sw = 0.0, swx = 0.0, swy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += w[i];
        swx += w[i] * x[i];
        swy += w[i] * y[i];
    }
    if (!(sw > 0.0)) return f;
    const double mx = swx / sw, my = swy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) return f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    // with w = 1/var the slope variance is 1/sxx
    f.slope_se = std::sqrt(1.0 / sxx);
    f.intercept_se = std::sqrt(1.0 / sw + mx * mx / sxx);
    f.n = n;
    f.ok = true;
    return f;
}

// Delete-one-block jackknife of an arbitrary statistic: `stat` maps a mask of
// retained sample indices to the estimate. Returns (estimate, standard error).
template <typename StatFn>
std::pair<double, double> block_jackknife(std::size_t n_samples, std::size_t n_blocks,
                                          StatFn&& stat) {
    n_blocks = std::min(n_blocks, n_samples);
    if (n_blocks < 2) throw std::invalid_argument("block_jackknife: need >= 2 blocks");
    std::vector<char> keep(n_samples, 1);
    const double full = stat(keep);
    std::vector<double> loo(n_blocks);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t lo = b * n_samples / n_blocks;
        const std::size_t hi = (b + 1) * n_samples / n_blocks;
        for (std::size_t i = lo; i < hi; ++i) keep[i] = 0;
        loo[b] = stat(keep);
        for (std::size_t i = lo; i < hi; ++i) keep[i] = 1;
    }
    double m = 0.0;
    for (double v : loo) m += v;
    m /= static_cast<double>(n_blocks);
    double var = 0.0;
    for (double v : loo) var += (v - m) * (v - m);
    var *= static_cast<double>(n_blocks - 1) / static_cast<double>(n_blocks);
    return {full, std::sqrt(var)};
}

// Pool-adjacent-violators: weighted nondecreasing fit to y (weights w).
inline std::vector<double> isotonic_nondecreasing(const std::vector<double>& y,
                                                  const std::vector<double>& w) {
    const std::size_t n = y.size();
    std::vector<double> level(n), weight(n);
    std::vector<std::size_t> count(n);
    std::size_t blocks = 0;
    for (std::size_t i = 0; i < n; ++i) {
        level[blocks] = y[i];
        weight[blocks] = w.empty() ? 1.0 : w[i];
        count[blocks] = 1;
        ++blocks;
        while (blocks > 1 && level[blocks - 2] > level[blocks - 1]) {
            const double tw = weight[blocks - 2] + weight[blocks - 1];
            level[blocks - 2] =
                (level[blocks - 2] * weight[blocks - 2] + level[blocks - 1] * weight[blocks - 1]) /
                tw;
            weight[blocks - 2] = tw;
            count[blocks - 2] += count[blocks - 1];
            --blocks;
        }
    }
    std::vector<double> out;
    out.reserve(n);
    for (std::size_t b = 0; b < blocks; ++b)
        for (std::size_t k = 0; k < count[b]; ++k) out.push_back(level[b]);
    return out;
}

inline double quantile_normal_975() { return 1.959963984540054; }

}  // namespace nlwlab

#endif

// SPDX-License-Identifier: Apache-2.0
//
// Two-sample tests between real and generated months: unbiased MMD^2 with a
// permutation null, the mean-embedding statistic with its chi-squared null,
// Monte-Carlo power, and paired marginal histograms.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <boost/math/distributions/chi_squared.hpp>

#include "climgan/data.hpp"

namespace climgan {

/// n items (rows) of dimension d.
struct SampleSet {
    Eigen::MatrixXd x;

    SampleSet() = default;
    explicit SampleSet(Eigen::MatrixXd m) : x(std::move(m)) {}

    std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
};

inline void require_two_samples(const SampleSet& a, const SampleSet& b, const char* what) {
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument(std::string(what) + ": each sample needs at least 2 items");
    if (a.dim() != b.dim())
        throw ShapeError(std::string(what) + ": dimensions differ (" + std::to_string(a.dim()) + " vs " +
                         std::to_string(b.dim()) + ")");
}

//------------------------------------------------------------------------------
// Feature extraction
//------------------------------------------------------------------------------

/// "full": every value of the month. "spatial_mean": per-day, per-variable
/// grid means. "var:NAME": every daily cell value of one variable.
struct Extractor {
    enum class Kind { full, spatial_mean, variable } kind = Kind::full;
    std::size_t variable = 0;

    static Extractor parse(const std::string& name) {
        if (name == "full") return {Kind::full, 0};
        if (name == "spatial_mean") return {Kind::spatial_mean, 0};
        if (name.rfind("var:", 0) == 0) return {Kind::variable, variable_index(name.substr(4))};
        throw std::invalid_argument("unknown extractor '" + name + "' (expected full, spatial_mean or var:NAME)");
    }

    std::string name() const {
        switch (kind) {
            case Kind::full: return "full";
            case Kind::spatial_mean: return "spatial_mean";
            default: return "var:" + kVariableNames[variable];
        }
    }
};

/// One item per consecutive `days`-long period of the archive.
inline SampleSet month_features(const ClimateArchive& a, std::size_t days, const Extractor& e) {
    a.require_canonical("extract");
    if (days == 0 || a.days < days) throw std::invalid_argument("archive shorter than one period");
    const std::size_t n = a.days / days, plane = a.plane(), V = a.variables();
    std::size_t d = 0;
    switch (e.kind) {
        case Extractor::Kind::full: d = days * V * plane; break;
        case Extractor::Kind::spatial_mean: d = days * V; break;
        case Extractor::Kind::variable: d = days * plane; break;
    }
    Eigen::MatrixXd x(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t col = 0;
        for (std::size_t t = 0; t < days; ++t) {
            const std::size_t day = i * days + t;
            for (std::size_t v = 0; v < V; ++v) {
                if (e.kind == Extractor::Kind::variable && v != e.variable) continue;
                const float* p = a.day_var(day, v);
                if (e.kind == Extractor::Kind::spatial_mean) {
                    double acc = 0;
                    for (std::size_t k = 0; k < plane; ++k) acc += p[k];
                    x(i, col++) = acc / static_cast<double>(plane);
                } else {
                    for (std::size_t k = 0; k < plane; ++k) x(i, col++) = p[k];
                }
            }
        }
    }
    return SampleSet(std::move(x));
}

//------------------------------------------------------------------------------
// Kernels and statistics
//------------------------------------------------------------------------------

/// Squared Euclidean distances between the rows of a and b.
inline Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const Eigen::VectorXd na = a.rowwise().squaredNorm(), nb = b.rowwise().squaredNorm();
    Eigen::MatrixXd d = (-2.0 * a * b.transpose()).colwise() + na;
    d.rowwise() += nb.transpose();
    return d.cwiseMax(0.0);
}

inline Eigen::MatrixXd rbf_gram(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double bandwidth) {
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw std::invalid_argument("kernel bandwidth must be positive");
    return (squared_distances(a, b) / (-2.0 * bandwidth * bandwidth)).array().exp().matrix();
}

/// Median pairwise Euclidean distance over the pooled sample.
inline double median_bandwidth(const SampleSet& a, const SampleSet& b) {
    Eigen::MatrixXd pooled(a.size() + b.size(), a.dim());
    pooled << a.x, b.x;
    const Eigen::MatrixXd d = squared_distances(pooled, pooled);
    std::vector<double> vals;
    for (Eigen::Index i = 0; i < d.rows(); ++i)
        for (Eigen::Index j = i + 1; j < d.cols(); ++j) vals.push_back(d(i, j));
    if (vals.empty()) throw std::invalid_argument("median bandwidth needs at least two points");
    std::nth_element(vals.begin(), vals.begin() + vals.size() / 2, vals.end());
    const double med = std::sqrt(vals[vals.size() / 2]);
    return med > 0.0 ? med : 1.0;
}

namespace detail {

/// U-statistic MMD^2 from a pooled Gram matrix and a split of its indices.
inline double mmd2_from_gram(const Eigen::MatrixXd& k, const std::vector<std::size_t>& xi,
                             const std::vector<std::size_t>& yi) {
    const double nx = static_cast<double>(xi.size()), ny = static_cast<double>(yi.size());
    double kxx = 0, kyy = 0, kxy = 0;
    for (std::size_t a = 0; a < xi.size(); ++a)
        for (std::size_t b = 0; b < xi.size(); ++b)
            if (a != b) kxx += k(xi[a], xi[b]);
    for (std::size_t a = 0; a < yi.size(); ++a)
        for (std::size_t b = 0; b < yi.size(); ++b)
            if (a != b) kyy += k(yi[a], yi[b]);
    for (std::size_t a : xi)
        for (std::size_t b : yi) kxy += k(a, b);
    return kxx / (nx * (nx - 1)) + kyy / (ny * (ny - 1)) - 2.0 * kxy / (nx * ny);
}

inline std::vector<std::size_t> iota(std::size_t from, std::size_t to) {
    std::vector<std::size_t> v(to - from);
    std::iota(v.begin(), v.end(), from);
    return v;
}

}  // namespace detail

inline double mmd2_unbiased(const SampleSet& x, const SampleSet& y, double bandwidth) {
    require_two_samples(x, y, "mmd2_unbiased");
    Eigen::MatrixXd pooled(x.size() + y.size(), x.dim());
    pooled << x.x, y.x;
    const auto k = rbf_gram(pooled, pooled, bandwidth);
    return detail::mmd2_from_gram(k, detail::iota(0, x.size()), detail::iota(x.size(), x.size() + y.size()));
}

/// Gaussian test locations around the pooled per-dimension mean and std.
inline Eigen::MatrixXd draw_test_locations(const SampleSet& x, const SampleSet& y, std::size_t j, Rng& rng) {
    if (j == 0) throw std::invalid_argument("me_statistic: need at least one test location");
    Eigen::MatrixXd pooled(x.size() + y.size(), x.dim());
    pooled << x.x, y.x;
    const Eigen::RowVectorXd mean = pooled.colwise().mean();
    const Eigen::RowVectorXd sd =
        ((pooled.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(pooled.rows())).sqrt();
    Eigen::MatrixXd w(j, x.dim());
    for (std::size_t r = 0; r < j; ++r)
        for (std::size_t c = 0; c < x.dim(); ++c) w(r, c) = mean(c) + sd(c) * rng.normal();
    return w;
}

inline constexpr double kMeRidge = 1e-6;

/// d' (Sx/nx + Sy/ny + ridge I)^-1 d over RBF features at the test locations
/// w, with d the mean feature difference; chi-squared with J = rows(w)
/// degrees of freedom under the null.
inline double me_statistic(const SampleSet& x, const SampleSet& y, const Eigen::MatrixXd& w, double bandwidth) {
    require_two_samples(x, y, "me_statistic");
    if (static_cast<std::size_t>(w.cols()) != x.dim()) throw ShapeError("me_statistic: test locations have the wrong dimension");
    const Eigen::MatrixXd fx = rbf_gram(x.x, w, bandwidth), fy = rbf_gram(y.x, w, bandwidth);
    const Eigen::RowVectorXd mx = fx.colwise().mean(), my = fy.colwise().mean();
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const Eigen::MatrixXd cx = fx.rowwise() - mx, cy = fy.rowwise() - my;
    Eigen::MatrixXd s = (cx.transpose() * cx) / ((nx - 1) * nx) + (cy.transpose() * cy) / ((ny - 1) * ny);
    s.diagonal().array() += kMeRidge;
    const Eigen::VectorXd d = (mx - my).transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(s);
    if (llt.info() != Eigen::Success) throw std::runtime_error("me_statistic: covariance is singular after ridge");
    return std::max(0.0, d.dot(llt.solve(d)));
}

inline double me_statistic(const SampleSet& x, const SampleSet& y, std::size_t j, double bandwidth, Rng& rng) {
    return me_statistic(x, y, draw_test_locations(x, y, j, rng), bandwidth);
}

inline double chi_squared_sf(double value, std::size_t dof) {
    boost::math::chi_squared dist(static_cast<double>(dof));
    return boost::math::cdf(boost::math::complement(dist, std::max(0.0, value)));
}

//------------------------------------------------------------------------------
// Permutation tests
//------------------------------------------------------------------------------

/// A statistic evaluated repeatedly on re-splits of one pooled sample.
class TwoSampleStatistic {
public:
    virtual ~TwoSampleStatistic() = default;
    /// Precomputes whatever depends only on the pooled rows.
    virtual void bind(const Eigen::MatrixXd& pooled) = 0;
    virtual double evaluate(const std::vector<std::size_t>& x_rows, const std::vector<std::size_t>& y_rows) const = 0;
    virtual std::string name() const = 0;
};

class MmdStatistic final : public TwoSampleStatistic {
public:
    /// bandwidth <= 0 selects the median heuristic on the pooled rows.
    explicit MmdStatistic(double bandwidth = 0.0) : requested_(bandwidth) {}

    void bind(const Eigen::MatrixXd& pooled) override {
        bandwidth_ = requested_;
        if (bandwidth_ <= 0.0) {
            const auto n = pooled.rows() / 2;
            bandwidth_ = median_bandwidth(SampleSet(pooled.topRows(n)), SampleSet(pooled.bottomRows(pooled.rows() - n)));
        }
        gram_ = rbf_gram(pooled, pooled, bandwidth_);
    }

    double evaluate(const std::vector<std::size_t>& xi, const std::vector<std::size_t>& yi) const override {
        return detail::mmd2_from_gram(gram_, xi, yi);
    }

    std::string name() const override { return "mmd"; }
    double bandwidth() const { return bandwidth_; }

private:
    double requested_, bandwidth_ = 0.0;
    Eigen::MatrixXd gram_;
};

/// ME with test locations fixed at bind time from the pooled rows.
class MeStatistic final : public TwoSampleStatistic {
public:
    MeStatistic(std::size_t locations, double bandwidth, std::uint64_t seed)
        : j_(locations), requested_(bandwidth), seed_(seed) {}

    void bind(const Eigen::MatrixXd& pooled) override {
        pooled_ = pooled;
        const auto n = pooled.rows() / 2;
        const SampleSet a(pooled.topRows(n)), b(pooled.bottomRows(pooled.rows() - n));
        bandwidth_ = requested_ > 0.0 ? requested_ : median_bandwidth(a, b);
        Rng rng(seed_);
        w_ = draw_test_locations(a, b, j_, rng);
    }

    double evaluate(const std::vector<std::size_t>& xi, const std::vector<std::size_t>& yi) const override {
        return me_statistic(rows(xi), rows(yi), w_, bandwidth_);
    }

    std::string name() const override { return "me"; }
    std::size_t locations() const { return j_; }

private:
    SampleSet rows(const std::vector<std::size_t>& idx) const {
        Eigen::MatrixXd m(idx.size(), pooled_.cols());
        for (std::size_t r = 0; r < idx.size(); ++r) m.row(r) = pooled_.row(idx[r]);
        return SampleSet(std::move(m));
    }

    std::size_t j_;
    double requested_, bandwidth_ = 0.0;
    std::uint64_t seed_;
    Eigen::MatrixXd pooled_, w_;
};

inline constexpr std::size_t kMinPermutations = 99;

struct TestReport {
    std::string metric;
    double statistic = 0;
    double p_value = 1;
    double alpha = 0.05;
    bool reject = false;
    std::size_t permutations = 0;
    /// 5%, 50% and 95% quantiles of the permutation null.
    std::array<double, 3> null_quantiles{};
    std::uint64_t seed = 0;
    /// Power runs only.
    std::size_t trials = 0;
    double rejection_rate = 0;
};

inline void to_json(json& j, const TestReport& r) {
    j = json{{"metric", r.metric}, {"statistic", r.statistic}, {"p_value", r.p_value},
             {"alpha", r.alpha},   {"reject", r.reject},       {"permutations", r.permutations},
             {"seed", r.seed}};
    if (r.permutations > 0) j["null_quantiles"] = {{"q05", r.null_quantiles[0]}, {"q50", r.null_quantiles[1]}, {"q95", r.null_quantiles[2]}};
    if (r.trials > 0) {
        j["trials"] = r.trials;
        j["rejection_rate"] = r.rejection_rate;
    }
}

/// p = (1 + #{permuted >= observed}) / (n_perm + 1); reject iff p <= alpha.
inline TestReport permutation_test(TwoSampleStatistic& stat, const SampleSet& x, const SampleSet& y,
                                   std::size_t n_perm, double alpha, Rng& rng) {
    require_two_samples(x, y, "permutation_test");
    if (n_perm < kMinPermutations)
        throw std::invalid_argument("permutation_test: need at least " + std::to_string(kMinPermutations) +
                                    " permutations, got " + std::to_string(n_perm));
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("permutation_test: alpha must lie in (0, 1)");
    const std::size_t nx = x.size(), n = x.size() + y.size();
    Eigen::MatrixXd pooled(n, x.dim());
    pooled << x.x, y.x;
    stat.bind(pooled);
    TestReport r;
    r.metric = stat.name();
    r.alpha = alpha;
    r.permutations = n_perm;
    r.statistic = stat.evaluate(detail::iota(0, nx), detail::iota(nx, n));
    std::vector<std::size_t> idx = detail::iota(0, n);
    std::vector<double> null(n_perm);
    std::size_t at_least = 0;
    for (std::size_t p = 0; p < n_perm; ++p) {
        for (std::size_t i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_index(i + 1)]);
        const std::vector<std::size_t> xi(idx.begin(), idx.begin() + nx), yi(idx.begin() + nx, idx.end());
        null[p] = stat.evaluate(xi, yi);
        if (null[p] >= r.statistic) ++at_least;
    }
    r.p_value = (1.0 + static_cast<double>(at_least)) / (static_cast<double>(n_perm) + 1.0);
    r.reject = r.p_value <= alpha;
    std::sort(null.begin(), null.end());
    auto q = [&](double f) { return null[std::min(n_perm - 1, static_cast<std::size_t>(f * (n_perm - 1) + 0.5))]; };
    r.null_quantiles = {q(0.05), q(0.5), q(0.95)};
    return r;
}

/// ME test against its asymptotic chi-squared null.
inline TestReport me_test(const SampleSet& x, const SampleSet& y, std::size_t j, double bandwidth, double alpha,
                          Rng& rng) {
    require_two_samples(x, y, "me_test");
    const double bw = bandwidth > 0.0 ? bandwidth : median_bandwidth(x, y);
    TestReport r;
    r.metric = "me";
    r.alpha = alpha;
    r.statistic = me_statistic(x, y, j, bw, rng);
    r.p_value = chi_squared_sf(r.statistic, j);
    r.reject = r.p_value <= alpha;
    return r;
}

using Sampler = std::function<SampleSet(std::size_t n, Rng& rng)>;
using StatisticFactory = std::function<std::unique_ptr<TwoSampleStatistic>()>;

/// Rejection rate of the permutation test on fresh P-vs-Q draws. Trial t
/// runs on Rng(mix_seed(seed, t)), so results do not depend on execution
/// order or thread count.
inline TestReport power_estimate(const StatisticFactory& make_stat, const Sampler& p, const Sampler& q, std::size_t n,
                                 double alpha, std::size_t trials, std::size_t n_perm, std::uint64_t seed) {
    if (trials == 0) throw std::invalid_argument("power_estimate: trials must be positive");
    std::vector<char> rejected(trials, 0);
    std::vector<std::string> errors(trials);
    parallel_for(trials, [&](std::size_t t) {
        try {
            Rng rng(mix_seed(seed, t));
            const SampleSet x = p(n, rng), y = q(n, rng);
            auto stat = make_stat();
            rejected[t] = permutation_test(*stat, x, y, n_perm, alpha, rng).reject;
        } catch (const std::exception& e) {
            errors[t] = e.what();
        }
    });
    for (const auto& e : errors)
        if (!e.empty()) throw std::runtime_error("power_estimate: " + e);
    TestReport r;
    r.metric = make_stat()->name();
    r.alpha = alpha;
    r.permutations = n_perm;
    r.seed = seed;
    r.trials = trials;
    r.rejection_rate = static_cast<double>(std::count(rejected.begin(), rejected.end(), 1)) / static_cast<double>(trials);
    return r;
}

//------------------------------------------------------------------------------
// Marginal histograms
//------------------------------------------------------------------------------

struct PairedHistogram {
    std::vector<double> edges;  // bins + 1
    std::vector<double> freq_a, freq_b;
    double tv_distance = 0;
};

/// Shared edges over the pooled [min, max]; frequencies sum to one.
inline PairedHistogram marginal_histogram(const std::vector<double>& a, const std::vector<double>& b, std::size_t bins) {
    if (a.empty() || b.empty()) throw std::invalid_argument("marginal_histogram: empty input");
    if (bins == 0) throw std::invalid_argument("marginal_histogram: bins must be positive");
    double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
    double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
    if (!(hi > lo)) hi = lo + 1.0;
    PairedHistogram h;
    for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
    h.edges.back() = hi;
    auto fill = [&](const std::vector<double>& v) {
        std::vector<double> f(bins, 0.0);
        for (double x : v) {
            const auto k = static_cast<std::size_t>(std::upper_bound(h.edges.begin(), h.edges.end(), x) - h.edges.begin());
            f[std::min(std::max<std::size_t>(k, 1), bins) - 1] += 1.0;
        }
        for (auto& c : f) c /= static_cast<double>(v.size());
        return f;
    };
    h.freq_a = fill(a);
    h.freq_b = fill(b);
    for (std::size_t i = 0; i < bins; ++i) h.tv_distance += 0.5 * std::abs(h.freq_a[i] - h.freq_b[i]);
    return h;
}

/// Every daily cell value of one variable.
inline std::vector<double> variable_values(const ClimateArchive& a, std::size_t v) {
    std::vector<double> out;
    out.reserve(a.days * a.plane());
    for (std::size_t d = 0; d < a.days; ++d) out.insert(out.end(), a.day_var(d, v), a.day_var(d, v) + a.plane());
    return out;
}

inline void write_histogram_csv(std::ostream& os, const PairedHistogram& h) {
    os << "bin_left,bin_right,freq_a,freq_b\n";
    os.precision(10);
    for (std::size_t i = 0; i + 1 < h.edges.size(); ++i)
        os << h.edges[i] << ',' << h.edges[i + 1] << ',' << h.freq_a[i] << ',' << h.freq_b[i] << '\n';
}

}  // namespace climgan

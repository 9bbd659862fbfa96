// SPDX-License-Identifier: Apache-2.0
//
// Daily gridded archives, the fixed per-variable normalization maps, month
// sampling and a synthetic desk-scale archive generator.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "climgan/climmodel.hpp"

namespace climgan {

inline constexpr double kHumidityEps = 1e-4;
inline constexpr double kTrainFraction = 0.9;

/// Values laid out [day][variable][row][col]. Climate archives carry the
/// seven canonical variables in physical units (K, %, kg m^-2 s^-1); other
/// variable sets (rollout scripts) reuse the container.
struct ClimateArchive {
    std::size_t height = 0, width = 0, days = 0;
    std::vector<std::string> names;
    std::vector<float> values;

    ClimateArchive() = default;
    ClimateArchive(std::size_t h, std::size_t w, std::size_t d,
                   std::vector<std::string> vars = {kVariableNames.begin(), kVariableNames.end()})
        : height(h), width(w), days(d), names(std::move(vars)), values(d * names.size() * h * w, 0.f) {}

    std::size_t variables() const { return names.size(); }
    std::size_t plane() const { return height * width; }
    std::size_t day_size() const { return variables() * plane(); }

    float& at(std::size_t d, std::size_t v, std::size_t h, std::size_t w) {
        return values[((d * variables() + v) * height + h) * width + w];
    }
    float at(std::size_t d, std::size_t v, std::size_t h, std::size_t w) const {
        return values[((d * variables() + v) * height + h) * width + w];
    }
    const float* day_var(std::size_t d, std::size_t v) const { return values.data() + (d * variables() + v) * plane(); }
    float* day_var(std::size_t d, std::size_t v) { return values.data() + (d * variables() + v) * plane(); }

    bool has_canonical_variables() const {
        return std::equal(names.begin(), names.end(), kVariableNames.begin(), kVariableNames.end());
    }

    void require_canonical(const std::string& where) const {
        if (!has_canonical_variables())
            throw FormatError(where + ": archive must hold the 7 canonical variables in order");
    }

    bool operator==(const ClimateArchive&) const = default;
};

/// Means and standard deviations of tasmin, tas, tasmax.
struct NormalizationStats {
    int version = 1;
    std::array<double, 3> means{};
    std::array<double, 3> stds{1.0, 1.0, 1.0};

    void validate() const {
        if (version != 1) throw FormatError("normalization stats: unsupported version " + std::to_string(version));
        for (double s : stds)
            if (!(s > 0.0) || !std::isfinite(s)) throw FormatError("normalization stats: std must be positive");
        for (double m : means)
            if (!std::isfinite(m)) throw FormatError("normalization stats: mean must be finite");
    }

    bool operator==(const NormalizationStats&) const = default;
};

inline void to_json(json& j, const NormalizationStats& s) {
    j = json{{"version", s.version}, {"means", s.means}, {"stds", s.stds}};
}

inline void from_json(const json& j, NormalizationStats& s) {
    reject_unknown_keys(j, {"version", "means", "stds"}, "normalization stats");
    s.version = j.at("version").get<int>();
    s.means = j.at("means").get<std::array<double, 3>>();
    s.stds = j.at("stds").get<std::array<double, 3>>();
    s.validate();
}

inline bool is_temperature(std::size_t v) { return v <= kTasmax; }
inline bool is_humidity(std::size_t v) { return v >= kHurmin && v <= kHurmax; }

inline double normalize_value(std::size_t v, double x, const NormalizationStats& s) {
    if (is_temperature(v)) return (x - s.means[v]) / s.stds[v];
    if (is_humidity(v)) return std::clamp(x / 100.0, kHumidityEps, 1.0 - kHumidityEps);
    if (x < 0.0 || std::isnan(x)) throw FormatError("negative precipitation " + std::to_string(x) + " in archive");
    return std::log1p(x);
}

inline double denormalize_value(std::size_t v, double x, const NormalizationStats& s) {
    if (is_temperature(v)) return x * s.stds[v] + s.means[v];
    if (is_humidity(v)) return 100.0 * x;
    return std::expm1(x);
}

/// Day ranges [begin, end).
struct DayRange {
    std::size_t begin = 0, end = 0;
    std::size_t size() const { return end - begin; }
};

/// First 90% of days (contiguous block).
inline DayRange training_range(std::size_t days) {
    return {0, std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(kTrainFraction * days)))};
}

inline DayRange validation_range(std::size_t days) { return {training_range(days).end, days}; }

/// Temperature means and population stds over the training split.
inline NormalizationStats compute_stats(const ClimateArchive& a) {
    a.require_canonical("compute_stats");
    const DayRange r = training_range(a.days);
    NormalizationStats s;
    for (std::size_t v = 0; v < 3; ++v) {
        double sum = 0.0, sq = 0.0;
        for (std::size_t d = r.begin; d < r.end; ++d) {
            const float* p = a.day_var(d, v);
            for (std::size_t i = 0; i < a.plane(); ++i) sum += p[i];
        }
        const double n = static_cast<double>(r.size() * a.plane());
        const double mean = sum / n;
        for (std::size_t d = r.begin; d < r.end; ++d) {
            const float* p = a.day_var(d, v);
            for (std::size_t i = 0; i < a.plane(); ++i) sq += (p[i] - mean) * (p[i] - mean);
        }
        s.means[v] = mean;
        s.stds[v] = std::sqrt(sq / n);
    }
    s.validate();
    return s;
}

/// Physical -> normalized, same layout. Negative precipitation throws.
inline ClimateArchive normalize(const ClimateArchive& a, const NormalizationStats& s) {
    a.require_canonical("normalize");
    ClimateArchive out = a;
    for (std::size_t d = 0; d < a.days; ++d)
        for (std::size_t v = 0; v < a.variables(); ++v) {
            float* p = out.day_var(d, v);
            for (std::size_t i = 0; i < a.plane(); ++i) p[i] = static_cast<float>(normalize_value(v, p[i], s));
        }
    return out;
}

inline ClimateArchive denormalize(const ClimateArchive& a, const NormalizationStats& s) {
    a.require_canonical("denormalize");
    ClimateArchive out = a;
    for (std::size_t d = 0; d < a.days; ++d)
        for (std::size_t v = 0; v < a.variables(); ++v) {
            float* p = out.day_var(d, v);
            for (std::size_t i = 0; i < a.plane(); ++i) p[i] = static_cast<float>(denormalize_value(v, p[i], s));
        }
    return out;
}

//------------------------------------------------------------------------------
// Month sampling
//------------------------------------------------------------------------------

/// Forecasts y (N, V, T, H, W) with their contexts, normalized units.
struct MonthBatch {
    Tensor y;
    ConditioningContext ctx;
    std::vector<std::size_t> starts;
};

/// c1 (2, H, W) as per-cell day means of normalized (pr, tas) over [start, start + days).
inline std::vector<float> month_means(const ClimateArchive& norm, std::size_t start, std::size_t days) {
    const std::size_t plane = norm.plane();
    std::vector<float> c1(2 * plane);
    const std::size_t vars[2] = {kPr, kTas};
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            double acc = 0.0;
            for (std::size_t d = start; d < start + days; ++d) acc += norm.day_var(d, vars[c])[i];
            c1[c * plane + i] = static_cast<float>(acc / static_cast<double>(days));
        }
    return c1;
}

inline void check_archive_matches(const ClimateArchive& a, const ModelSpec& spec) {
    a.require_canonical("sampling");
    if (a.height != spec.height || a.width != spec.width)
        throw ShapeError("archive grid " + std::to_string(a.height) + "x" + std::to_string(a.width) +
                         " does not match model grid " + std::to_string(spec.height) + "x" +
                         std::to_string(spec.width));
}

/// Months starting at the given days; reads only [s - K, s + T) for each.
inline MonthBatch extract_months(const ClimateArchive& norm, const ModelSpec& spec,
                                 const std::vector<std::size_t>& starts) {
    check_archive_matches(norm, spec);
    const std::size_t n = starts.size(), V = spec.variables, T = spec.days, K = spec.context_days;
    const std::size_t plane = norm.plane();
    std::vector<float> y(n * V * T * plane), c1(n * 2 * plane), c2(n * K * V * plane);
    for (std::size_t b = 0; b < n; ++b) {
        const std::size_t s = starts[b];
        if (s < K || s + T > norm.days)
            throw std::out_of_range("month start " + std::to_string(s) + " needs days [" +
                                    std::to_string(static_cast<long>(s) - static_cast<long>(K)) + ", " +
                                    std::to_string(s + T) + ") of a " + std::to_string(norm.days) + "-day archive");
        for (std::size_t v = 0; v < V; ++v)
            for (std::size_t t = 0; t < T; ++t)
                std::copy_n(norm.day_var(s + t, v), plane, y.begin() + (((b * V + v) * T + t) * plane));
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t v = 0; v < V; ++v)
                std::copy_n(norm.day_var(s - K + k, v), plane, c2.begin() + ((b * K + k) * V + v) * plane);
        const auto m = month_means(norm, s, T);
        std::copy(m.begin(), m.end(), c1.begin() + b * 2 * plane);
    }
    const std::size_t H = spec.height, W = spec.width;
    return {Tensor(Shape{n, V, T, H, W}, std::move(y)),
            {Tensor(Shape{n, 2, H, W}, std::move(c1)), Tensor(Shape{n, K * V, H, W}, std::move(c2))},
            starts};
}

/// Uniform start in [range.begin + K, range.end - T].
inline std::size_t sample_start(const ModelSpec& spec, DayRange range, Rng& rng) {
    const std::size_t need = spec.context_days + spec.days;
    if (range.size() < need)
        throw std::invalid_argument("day range of " + std::to_string(range.size()) + " days is shorter than K + T = " +
                                    std::to_string(need));
    return range.begin + spec.context_days + rng.uniform_index(range.size() - need + 1);
}

inline MonthBatch sample_months(const ClimateArchive& norm, const ModelSpec& spec, std::size_t n, DayRange range,
                                Rng& rng) {
    if (range.end > norm.days) throw std::out_of_range("day range exceeds archive");
    std::vector<std::size_t> starts(n);
    for (auto& s : starts) s = sample_start(spec, range, rng);
    return extract_months(norm, spec, starts);
}

inline MonthBatch sample_month(const ClimateArchive& norm, const ModelSpec& spec, Rng& rng) {
    return sample_months(norm, spec, 1, {0, norm.days}, rng);
}

//------------------------------------------------------------------------------
// Synthetic archive
//------------------------------------------------------------------------------

namespace detail {

/// White noise smoothed by a 3x3 box (rows clamped, columns periodic),
/// rescaled to unit variance.
inline void correlated_field(std::size_t h, std::size_t w, Rng& rng, std::vector<double>& scratch,
                             std::vector<double>& out) {
    scratch.resize(h * w);
    out.assign(h * w, 0.0);
    for (auto& x : scratch) x = rng.normal();
    for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int dr = -1; dr <= 1; ++dr) {
                const std::size_t rr = std::clamp<long>(static_cast<long>(r) + dr, 0, static_cast<long>(h) - 1);
                for (int dc = -1; dc <= 1; ++dc) acc += scratch[rr * w + (c + w + dc) % w];
            }
            out[r * w + c] = acc / 3.0;
        }
}

}  // namespace detail

/// Deterministic 365 * years day archive with a 40 K equator-to-pole
/// temperature gradient, a 15 K seasonal cycle of opposite phase in each
/// hemisphere, AR(1) weather noise and intermittent precipitation.
inline ClimateArchive synthesize_archive(std::size_t height, std::size_t width, std::size_t years,
                                         std::uint64_t seed) {
    if (height < 4 || width < 4) throw std::invalid_argument("synthesize_archive: H and W must be at least 4");
    if (years == 0) throw std::invalid_argument("synthesize_archive: years must be positive");
    constexpr double ar = 0.8;
    const double innovation = std::sqrt(1.0 - ar * ar);
    const std::size_t days = 365 * years, plane = height * width;
    ClimateArchive a(height, width, days);
    Rng rng(seed);

    std::vector<double> lat(height);
    for (std::size_t r = 0; r < height; ++r)
        lat[r] = std::numbers::pi / 2 - (r + 0.5) * std::numbers::pi / static_cast<double>(height);

    std::vector<double> temp_noise(plane, 0.0), wet(plane, 0.0), scratch, field, field2;
    for (std::size_t d = 0; d < days; ++d) {
        const double season = std::sin(2.0 * std::numbers::pi * static_cast<double>(d) / 365.0);
        detail::correlated_field(height, width, rng, scratch, field);
        detail::correlated_field(height, width, rng, scratch, field2);
        for (std::size_t i = 0; i < plane; ++i) {
            temp_noise[i] = ar * temp_noise[i] + innovation * field[i];
            wet[i] = ar * wet[i] + innovation * field2[i];
        }
        for (std::size_t r = 0; r < height; ++r)
            for (std::size_t c = 0; c < width; ++c) {
                const std::size_t i = r * width + c;
                const double tas = 248.0 + 40.0 * std::cos(lat[r]) + 15.0 * std::sin(lat[r]) * season +
                                   3.0 * temp_noise[i];
                const double half_range = 3.0 + 1.5 * std::abs(rng.normal());
                // Wetter near the equator; dry days where the field stays negative.
                const double g = wet[i] + 0.5 * std::cos(lat[r]) - 0.6;
                const double sp = std::max(0.0, std::log1p(std::exp(2.0 * g)) - std::log(2.0));
                const double hur = 5.0 + 95.0 / (1.0 + std::exp(-(0.3 + 1.2 * g + 0.3 * rng.normal())));
                const double spread = 0.1 + 0.3 * rng.uniform();
                a.at(d, kTasmin, r, c) = static_cast<float>(tas - half_range);
                a.at(d, kTas, r, c) = static_cast<float>(tas);
                a.at(d, kTasmax, r, c) = static_cast<float>(tas + half_range);
                a.at(d, kHurmin, r, c) = static_cast<float>(5.0 + (hur - 5.0) * (1.0 - spread));
                a.at(d, kHur, r, c) = static_cast<float>(hur);
                a.at(d, kHurmax, r, c) = static_cast<float>(hur + (100.0 - hur) * spread);
                a.at(d, kPr, r, c) = static_cast<float>(4e-5 * sp);
            }
    }
    return a;
}

}  // namespace climgan

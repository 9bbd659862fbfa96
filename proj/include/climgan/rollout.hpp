// SPDX-License-Identifier: Apache-2.0
//
// Chained month-by-month generation. Month 1 is conditioned on real recent
// days; every later month takes its c2 from the last K days the generator
// produced for the month before.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "climgan/archive_io.hpp"
#include "climgan/climmodel.hpp"
#include "climgan/data.hpp"

namespace climgan {

/// Monthly c1 maps (each 2*H*W, normalized pr then tas) and the initial
/// c2 (K*V*H*W, normalized, day-major).
struct ScenarioScript {
    std::size_t height = 0, width = 0;
    std::vector<std::vector<float>> c1;
    std::vector<float> c2;
    std::uint64_t seed = 0;

    std::size_t months() const { return c1.size(); }
};

/// Maps noise (1, z_dim) and a batch-1 context to a forecast (1, V, T, H, W).
using GeneratorFn = std::function<Tensor(const Tensor&, const ConditioningContext&)>;

inline void check_script(const ScenarioScript& s, const ModelSpec& spec) {
    if (s.months() == 0) throw std::invalid_argument("scenario script has no months");
    if (s.height != spec.height || s.width != spec.width)
        throw ShapeError("scenario grid " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                         " does not match model grid " + std::to_string(spec.height) + "x" + std::to_string(spec.width));
    const std::size_t plane = spec.height * spec.width;
    for (const auto& m : s.c1)
        if (m.size() != 2 * plane) throw ShapeError("scenario c1 map has the wrong size");
    if (s.c2.size() != spec.context_days * spec.variables * plane)
        throw ShapeError("scenario c2 holds " + std::to_string(s.c2.size()) + " values, expected K*V*H*W = " +
                         std::to_string(spec.context_days * spec.variables * plane));
}

/// The last K days of y (1, V, T, H, W) stacked day-major as (1, K*V, H, W).
inline Tensor trailing_context(const Tensor& y, const ModelSpec& spec) {
    const std::size_t V = spec.variables, T = spec.days, K = spec.context_days, plane = spec.height * spec.width;
    const auto src = y.data();
    std::vector<float> c2(K * V * plane);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t v = 0; v < V; ++v)
            std::copy_n(src.begin() + (v * T + (T - K + k)) * plane, plane, c2.begin() + (k * V + v) * plane);
    return Tensor(Shape{1, K * V, spec.height, spec.width}, std::move(c2));
}

/// One forecast per scripted month, each drawn with a fresh z from a
/// generator seeded by script.seed.
inline std::vector<Tensor> rollout(const GeneratorFn& generate, const ModelSpec& spec, const ScenarioScript& script) {
    check_script(script, spec);
    Rng rng(script.seed);
    const Shape y_shape{1, spec.variables, spec.days, spec.height, spec.width};
    std::vector<Tensor> months;
    Tensor c2(Shape{1, spec.context_days * spec.variables, spec.height, spec.width}, script.c2);
    for (const auto& c1 : script.c1) {
        const Tensor z = Tensor::randn(Shape{1, spec.noise_dim}, rng);
        const ConditioningContext ctx{Tensor(Shape{1, 2, spec.height, spec.width}, c1), c2};
        Tensor y = generate(z, ctx);
        if (y.shape() != y_shape) throw ShapeError("rollout: generator returned " + y.shape().str());
        c2 = trailing_context(y, spec);
        months.push_back(std::move(y));
    }
    return months;
}

/// Runs the generator in batch-norm eval mode without recording gradients.
inline std::vector<Tensor> rollout(Generator& generator, const ScenarioScript& script) {
    return rollout(
        [&](const Tensor& z, const ConditioningContext& ctx) {
            NoGradGuard no_grad;
            return generator.forward(z, ctx, Mode::eval).detach();
        },
        generator.spec(), script);
}

/// c1 from consecutive real T-day windows starting at day K, and the true
/// K days before the first window as c2. `norm` is in normalized units.
inline ScenarioScript scripted_c1_from_archive(const ClimateArchive& norm, const ModelSpec& spec, std::size_t months) {
    check_archive_matches(norm, spec);
    if (months == 0) throw std::invalid_argument("scripted_c1_from_archive: months must be positive");
    const std::size_t K = spec.context_days, T = spec.days;
    if (norm.days < K + months * T)
        throw std::invalid_argument("archive of " + std::to_string(norm.days) + " days cannot script " +
                                    std::to_string(months) + " months (needs K + months*T = " +
                                    std::to_string(K + months * T) + ")");
    ScenarioScript s;
    s.height = norm.height;
    s.width = norm.width;
    for (std::size_t i = 0; i < months; ++i) s.c1.push_back(month_means(norm, K + i * T, T));
    s.c2 = extract_months(norm, spec, {K}).ctx.c2.values();
    return s;
}

/// Forecasts concatenated along days and mapped back to physical units.
inline ClimateArchive months_to_archive(const std::vector<Tensor>& months, const ModelSpec& spec,
                                       const NormalizationStats& stats) {
    const std::size_t V = spec.variables, T = spec.days, plane = spec.height * spec.width;
    ClimateArchive out(spec.height, spec.width, months.size() * T);
    for (std::size_t m = 0; m < months.size(); ++m) {
        const auto y = months[m].data();
        for (std::size_t v = 0; v < V; ++v)
            for (std::size_t t = 0; t < T; ++t) {
                float* dst = out.day_var(m * T + t, v);
                const float* src = y.data() + (v * T + t) * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(denormalize_value(v, src[i], stats));
            }
    }
    return out;
}

//------------------------------------------------------------------------------
// Script files
//
// <path>            c1 maps as a 2-variable archive (pr_norm, tas_norm), one
//                   day per month, normalized units
// <path>.c2.cgb     initial c2 as a K-day archive of the 7 variables,
//                   physical units
//------------------------------------------------------------------------------

inline std::string script_c2_path(const std::string& path) { return path + ".c2.cgb"; }

inline void save_script(const std::string& path, const ScenarioScript& s, const ModelSpec& spec,
                        const NormalizationStats& stats) {
    check_script(s, spec);
    const std::size_t plane = s.height * s.width, K = spec.context_days;
    ClimateArchive c1(s.height, s.width, s.months(), {"pr_norm", "tas_norm"});
    for (std::size_t m = 0; m < s.months(); ++m) std::copy(s.c1[m].begin(), s.c1[m].end(), c1.day_var(m, 0));
    ClimateArchive c2(s.height, s.width, K);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t v = 0; v < spec.variables; ++v)
            for (std::size_t i = 0; i < plane; ++i)
                c2.day_var(k, v)[i] = static_cast<float>(denormalize_value(v, s.c2[(k * spec.variables + v) * plane + i], stats));
    save_archive(path, c1);
    save_archive(script_c2_path(path), c2);
}

inline ScenarioScript load_script(const std::string& path, const ModelSpec& spec, const NormalizationStats& stats) {
    const ClimateArchive c1 = load_archive(path);
    if (c1.names != std::vector<std::string>{"pr_norm", "tas_norm"})
        throw FormatError(path + ": script c1 archive must hold variables pr_norm, tas_norm");
    const ClimateArchive c2 = normalize(load_archive(script_c2_path(path)), stats);
    if (c2.days != spec.context_days || c2.height != c1.height || c2.width != c1.width)
        throw FormatError(script_c2_path(path) + ": expected " + std::to_string(spec.context_days) + " days on the c1 grid");
    ScenarioScript s;
    s.height = c1.height;
    s.width = c1.width;
    for (std::size_t m = 0; m < c1.days; ++m) s.c1.emplace_back(c1.day_var(m, 0), c1.day_var(m, 0) + 2 * c1.plane());
    s.c2 = c2.values;
    check_script(s, spec);
    return s;
}

}  // namespace climgan

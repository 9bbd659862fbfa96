// SPDX-License-Identifier: Apache-2.0
//
// Adversarial training: alternating discriminator/generator Adam updates with
// instance noise, an experience replay of generated months, and
// moment-matching pretraining of the generator. Checkpoints restore training
// bit-exactly.

#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "climgan/archive_io.hpp"
#include "climgan/data.hpp"
#include "climgan/optim.hpp"

namespace climgan {

struct TrainConfig {
    std::size_t batch_size = 32;
    double lr = 0.0002;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::size_t d_steps = 1;
    std::size_t g_steps = 1;
    double input_noise_sigma = 0.05;
    std::size_t replay_capacity = 256;
    double replay_fraction = 0.5;
    /// Generator pretraining updates, each on a fresh batch.
    std::size_t pretrain_epochs = 0;
    double pretrain_lr = 0.0002;
    std::size_t total_steps = 0;
    std::uint64_t seed = 0;
    /// 0 disables periodic checkpoints.
    std::size_t checkpoint_every = 0;

    void validate() const {
        if (batch_size < 2) throw std::invalid_argument("train: batch_size must be at least 2 for batch norm");
        if (!(replay_fraction >= 0.0 && replay_fraction <= 1.0))
            throw std::invalid_argument("train: replay_fraction must lie in [0, 1]");
        if (!(lr > 0.0) || !(pretrain_lr > 0.0)) throw std::invalid_argument("train: learning rates must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("train: Adam betas must lie in [0, 1)");
        if (!(input_noise_sigma >= 0.0)) throw std::invalid_argument("train: input_noise_sigma must be nonnegative");
        if (d_steps == 0 || g_steps == 0) throw std::invalid_argument("train: d_steps and g_steps must be positive");
    }

    bool replay_enabled() const { return replay_fraction > 0.0 && replay_capacity > 0; }
    AdamConfig adam() const { return {lr, beta1, beta2, 1e-8}; }
    AdamConfig pretrain_adam() const { return {pretrain_lr, beta1, beta2, 1e-8}; }

    bool operator==(const TrainConfig&) const = default;
};

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"batch_size", c.batch_size},
             {"lr", c.lr},
             {"beta1", c.beta1},
             {"beta2", c.beta2},
             {"d_steps", c.d_steps},
             {"g_steps", c.g_steps},
             {"input_noise_sigma", c.input_noise_sigma},
             {"replay_capacity", c.replay_capacity},
             {"replay_fraction", c.replay_fraction},
             {"pretrain_epochs", c.pretrain_epochs},
             {"pretrain_lr", c.pretrain_lr},
             {"total_steps", c.total_steps},
             {"seed", c.seed},
             {"checkpoint_every", c.checkpoint_every}};
}

/// Missing keys keep their defaults.
inline void from_json(const json& j, TrainConfig& c) {
    reject_unknown_keys(j,
                        {"batch_size", "lr", "beta1", "beta2", "d_steps", "g_steps", "input_noise_sigma",
                         "replay_capacity", "replay_fraction", "pretrain_epochs", "pretrain_lr", "total_steps", "seed",
                         "checkpoint_every"},
                        "train config");
    TrainConfig d;
    c.batch_size = j.value("batch_size", d.batch_size);
    c.lr = j.value("lr", d.lr);
    c.beta1 = j.value("beta1", d.beta1);
    c.beta2 = j.value("beta2", d.beta2);
    c.d_steps = j.value("d_steps", d.d_steps);
    c.g_steps = j.value("g_steps", d.g_steps);
    c.input_noise_sigma = j.value("input_noise_sigma", d.input_noise_sigma);
    c.replay_capacity = j.value("replay_capacity", d.replay_capacity);
    c.replay_fraction = j.value("replay_fraction", d.replay_fraction);
    c.pretrain_epochs = j.value("pretrain_epochs", d.pretrain_epochs);
    c.pretrain_lr = j.value("pretrain_lr", d.pretrain_lr);
    c.total_steps = j.value("total_steps", d.total_steps);
    c.seed = j.value("seed", d.seed);
    c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
    c.validate();
}

struct NonFiniteLoss : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// y + N(0, sigma^2) elementwise; sigma == 0 returns y untouched and draws
/// nothing from rng.
inline Tensor add_instance_noise(const Tensor& y, double sigma, Rng& rng) {
    if (sigma == 0.0) return y;
    auto out = y.values();
    for (auto& v : out) v += static_cast<float>(sigma * rng.normal());
    return Tensor(y.shape(), std::move(out));
}

//------------------------------------------------------------------------------
// Losses
//------------------------------------------------------------------------------

/// -mean log D(real) - mean log(1 - D(fake)), from logits.
template <class T>
BasicTensor<T> discriminator_loss(const BasicTensor<T>& real_logits, const BasicTensor<T>& fake_logits) {
    return mean(softplus(-real_logits)) + mean(softplus(fake_logits));
}

/// Non-saturating -mean log D(G(z)), from logits.
template <class T>
BasicTensor<T> generator_loss(const BasicTensor<T>& fake_logits) {
    return mean(softplus(-fake_logits));
}

/// Sum over tas and pr of squared differences between per-cell means and
/// stds taken over (batch, time).
template <class T>
BasicTensor<T> moment_matching_loss(const BasicTensor<T>& fake, const BasicTensor<T>& real) {
    if (fake.shape() != real.shape())
        throw ShapeError("moment matching: " + fake.shape().str() + " vs " + real.shape().str());
    auto moments = [](const BasicTensor<T>& v) {
        auto m = mean_axes(v, {0, 2});
        auto s = sqrt(mean_axes(square(v - m), {0, 2}) + static_cast<T>(1e-8));
        return std::pair{m, s};
    };
    BasicTensor<T> total;
    for (std::size_t v : {std::size_t{kTas}, std::size_t{kPr}}) {
        const auto [mf, sf] = moments(slice(fake, 1, v, 1));
        const auto [mr, sr] = moments(slice(real, 1, v, 1));
        auto term = sum(square(mf - mr)) + sum(square(sf - sr));
        total = total.defined() ? total + term : term;
    }
    return total;
}

//------------------------------------------------------------------------------
// Experience replay
//------------------------------------------------------------------------------

/// One generated month with the context it was generated under.
struct ReplayItem {
    std::vector<float> y, c1, c2;
    bool operator==(const ReplayItem&) const = default;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 0) : capacity_(capacity) {}

    /// Appends while below capacity, then overwrites a uniformly random slot.
    void push(ReplayItem item, Rng& rng) {
        if (capacity_ == 0) return;
        if (items_.size() < capacity_) {
            items_.push_back(std::move(item));
        } else {
            items_[rng.uniform_index(capacity_)] = std::move(item);
        }
    }

    const ReplayItem& draw(Rng& rng) const {
        if (items_.empty()) throw std::logic_error("replay buffer is empty");
        return items_[rng.uniform_index(items_.size())];
    }

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return items_.empty(); }
    const std::vector<ReplayItem>& items() const { return items_; }
    std::vector<ReplayItem>& items() { return items_; }

private:
    std::size_t capacity_;
    std::vector<ReplayItem> items_;
};

//------------------------------------------------------------------------------
// Trainer
//------------------------------------------------------------------------------

struct StepMetrics {
    double loss_D = 0, loss_G = 0, D_real = 0, D_fake = 0;
    bool operator==(const StepMetrics&) const = default;
};

struct PretrainReport {
    double initial_loss = 0, final_loss = 0;
    std::size_t steps = 0;
};

inline constexpr char kCheckpointMagic[8] = {'C', 'G', 'C', 'K', 'P', 'T', '0', '1'};
inline constexpr int kCheckpointFormat = 1;

class Trainer {
public:
    Trainer(const ModelSpec& spec, const TrainConfig& config, const NormalizationStats& stats)
        : spec_(spec), config_(config), stats_(stats), rng_(config.seed), generator_(spec, rng_),
          discriminator_(spec, rng_), replay_(config.replay_enabled() ? config.replay_capacity : 0) {
        config_.validate();
        stats_.validate();
        opt_g_ = AdamState<float>(config_.adam(), generator_.parameters());
        opt_d_ = AdamState<float>(config_.adam(), discriminator_.parameters());
    }

    Trainer(Trainer&&) = default;
    Trainer& operator=(Trainer&&) = default;
    // Models are handles onto shared parameter storage; a copy would alias.
    Trainer(const Trainer&) = delete;
    Trainer& operator=(const Trainer&) = delete;

    const ModelSpec& spec() const { return spec_; }
    const TrainConfig& config() const { return config_; }
    TrainConfig& config() { return config_; }
    const NormalizationStats& stats() const { return stats_; }
    Generator& generator() { return generator_; }
    Discriminator& discriminator() { return discriminator_; }
    const ReplayBuffer& replay() const { return replay_; }
    Rng& rng() { return rng_; }
    std::size_t step() const { return step_; }
    bool pretrained() const { return pretrained_; }
    const AdamState<float>& generator_optimizer() const { return opt_g_; }
    const AdamState<float>& discriminator_optimizer() const { return opt_d_; }

    /// Errors before any update if the archive cannot feed this spec.
    void check_archive(const ClimateArchive& norm) const {
        check_archive_matches(norm, spec_);
        const DayRange r = training_range(norm.days);
        if (r.size() < spec_.context_days + spec_.days)
            throw std::invalid_argument("training split has " + std::to_string(r.size()) + " days, need at least K + T = " +
                                        std::to_string(spec_.context_days + spec_.days));
    }

    MonthBatch sample_batch(const ClimateArchive& norm) {
        return sample_months(norm, spec_, config_.batch_size, training_range(norm.days), rng_);
    }

    /// Moment-matching pretraining on fresh training batches. The reported
    /// losses are measured on one fixed probe batch before and after.
    PretrainReport pretrain(const ClimateArchive& norm) {
        check_archive(norm);
        PretrainReport report;
        Rng probe_rng(mix_seed(config_.seed, 0x70726f6265ull));
        const MonthBatch probe = sample_batch_with(norm, probe_rng);
        const Tensor probe_z = Tensor::randn(Shape{config_.batch_size, spec_.noise_dim}, probe_rng);
        report.initial_loss = probe_loss(probe, probe_z);

        auto params = generator_.parameters();
        AdamState<float> opt(config_.pretrain_adam(), params);
        for (std::size_t e = 0; e < config_.pretrain_epochs; ++e) {
            const MonthBatch real = sample_batch(norm);
            const Tensor z = Tensor::randn(Shape{config_.batch_size, spec_.noise_dim}, rng_);
            zero_grad(params);
            auto loss = moment_matching_loss(generator_.forward(z, real.ctx, Mode::train), real.y);
            require_finite(loss.item(), "pretraining loss");
            loss.backward();
            adam_step(params, opt);
        }
        report.steps = config_.pretrain_epochs;
        report.final_loss = probe_loss(probe, probe_z);
        pretrained_ = true;
        return report;
    }

    /// d_steps discriminator updates then g_steps generator updates on one
    /// real batch. Metrics are from the last update of each kind.
    StepMetrics gan_step(const MonthBatch& real) {
        if (real.y.dim(0) != config_.batch_size)
            throw ShapeError("gan_step: batch of " + std::to_string(real.y.dim(0)) + ", configured " +
                             std::to_string(config_.batch_size));
        StepMetrics m;
        for (std::size_t k = 0; k < config_.d_steps; ++k) discriminator_update(real, m);
        for (std::size_t k = 0; k < config_.g_steps; ++k) generator_update(real.ctx, m);
        return m;
    }

    /// One discriminator update on noisy real months against noisy fakes
    /// (fresh and replayed). Fills loss_D, D_real and D_fake.
    void discriminator_update(const MonthBatch& real, StepMetrics& m) {
        auto params = discriminator_.parameters();
        const auto [fake, fake_ctx] = fake_batch(real.ctx);
        const Tensor real_in = add_instance_noise(real.y, config_.input_noise_sigma, rng_);
        const Tensor fake_in = add_instance_noise(fake, config_.input_noise_sigma, rng_);
        zero_grad(params);
        const auto real_logits = discriminator_.logits(real_in, real.ctx, Mode::train);
        const auto fake_logits = discriminator_.logits(fake_in, fake_ctx, Mode::train);
        auto loss = discriminator_loss(real_logits, fake_logits);
        require_finite(loss.item(), "discriminator loss");
        m.loss_D = loss.item();
        m.D_real = mean(sigmoid(real_logits.detach())).item();
        m.D_fake = mean(sigmoid(fake_logits.detach())).item();
        loss.backward();
        adam_step(params, opt_d_);
    }

    /// One generator update against the current discriminator on fresh,
    /// noise-free samples. Fills loss_G.
    void generator_update(const ConditioningContext& ctx, StepMetrics& m) {
        auto params = generator_.parameters();
        const Tensor z = Tensor::randn(Shape{ctx.batch(), spec_.noise_dim}, rng_);
        zero_grad(params);
        auto loss = generator_loss(discriminator_.logits(generator_.forward(z, ctx, Mode::train), ctx, Mode::train));
        require_finite(loss.item(), "generator loss");
        m.loss_G = loss.item();
        loss.backward();
        adam_step(params, opt_g_);
    }

    /// Samples a training batch and runs one GAN step.
    StepMetrics train_step(const ClimateArchive& norm) {
        const MonthBatch real = sample_batch(norm);
        const StepMetrics m = gan_step(real);
        ++step_;
        return m;
    }

    //--------------------------------------------------------------------------
    // Checkpoints
    //
    //   "CGCKPT01" | u64 len, canonical JSON header | u64 count of named arrays
    //   (u32 name len, name, u32 rank, u64 dims, f32 data) | u64 Adam steps for
    //   G and D | u64 len, rng state text | u64 step
    //--------------------------------------------------------------------------

    void save(std::ostream& os) const {
        os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        const json header{{"format", kCheckpointFormat}, {"spec", spec_},         {"train", config_},
                          {"stats", stats_},             {"pretrained", pretrained_}};
        io::put_string(os, header.dump());
        // named_arrays() hands out writable views for load(); nothing is written here.
        const auto arrays = const_cast<Trainer&>(*this).named_arrays();
        io::put_le<std::uint64_t>(os, arrays.size());
        for (const auto& a : arrays) {
            io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
            os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
            io::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(a.dims.size()));
            for (auto d : a.dims) io::put_le<std::uint64_t>(os, d);
            io::put_f32(os, a.data, a.size);
        }
        io::put_le<std::uint64_t>(os, opt_g_.step_count);
        io::put_le<std::uint64_t>(os, opt_d_.step_count);
        io::put_string(os, rng_.state());
        io::put_le<std::uint64_t>(os, step_);
        if (!os) throw std::runtime_error("checkpoint: write failed");
    }

    void save(const std::string& path) const {
        const std::string tmp = path + ".tmp";
        {
            auto os = io::open_out(tmp);
            save(os);
        }
        if (std::rename(tmp.c_str(), path.c_str()) != 0) throw std::runtime_error("cannot move checkpoint to '" + path + "'");
    }

    /// Restores a trainer; throws FormatError on a bad file and
    /// std::invalid_argument when `expected` differs from the stored spec.
    static Trainer load(std::istream& is, const ModelSpec* expected = nullptr) {
        char magic[8];
        if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
            throw FormatError("not a checkpoint (bad magic)");
        json header;
        try {
            header = json::parse(io::get_string(is, "checkpoint header", 1u << 24));
        } catch (const json::exception& e) {
            throw FormatError(std::string("checkpoint header: ") + e.what());
        }
        reject_unknown_keys(header, {"format", "spec", "train", "stats", "pretrained"}, "checkpoint header");
        if (header.at("format").get<int>() != kCheckpointFormat)
            throw FormatError("unsupported checkpoint format " + header.at("format").dump());
        const auto spec = header.at("spec").get<ModelSpec>();
        if (expected && !(*expected == spec))
            throw std::invalid_argument("checkpoint model spec does not match the requested spec");
        Trainer t(spec, header.at("train").get<TrainConfig>(), header.at("stats").get<NormalizationStats>());
        t.pretrained_ = header.at("pretrained").get<bool>();

        const auto count = io::get_le<std::uint64_t>(is, "array count");
        std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<float>>> stored;
        for (std::uint64_t i = 0; i < count; ++i) {
            const auto len = io::get_le<std::uint32_t>(is, "array name");
            if (len > 4096) throw FormatError("checkpoint: implausible array name length");
            std::string name(len, '\0');
            if (!is.read(name.data(), len)) throw FormatError("truncated checkpoint reading array name");
            const auto rank = io::get_le<std::uint32_t>(is, "array rank");
            if (rank > 8) throw FormatError("checkpoint: implausible rank for '" + name + "'");
            std::vector<std::size_t> dims(rank);
            std::size_t size = 1;
            for (auto& d : dims) {
                d = io::get_le<std::uint64_t>(is, "array dims");
                size *= d;
            }
            if (size > (1ull << 32)) throw FormatError("checkpoint: implausible size for '" + name + "'");
            std::vector<float> data(size);
            io::get_f32(is, data.data(), size, "array data");
            stored.emplace(std::move(name), std::pair{std::move(dims), std::move(data)});
        }
        t.restore_replay(stored);
        for (auto& a : t.named_arrays()) {
            auto it = stored.find(a.name);
            if (it == stored.end()) throw FormatError("checkpoint is missing array '" + a.name + "'");
            if (it->second.first != a.dims) throw FormatError("checkpoint array '" + a.name + "' has the wrong shape");
            std::copy(it->second.second.begin(), it->second.second.end(), a.data);
            stored.erase(it);
        }
        if (!stored.empty()) throw FormatError("checkpoint has unexpected array '" + stored.begin()->first + "'");
        t.opt_g_.step_count = io::get_le<std::uint64_t>(is, "generator optimizer step");
        t.opt_d_.step_count = io::get_le<std::uint64_t>(is, "discriminator optimizer step");
        t.rng_.set_state(io::get_string(is, "rng state", 1u << 20));
        t.step_ = io::get_le<std::uint64_t>(is, "step");
        return t;
    }

    static Trainer load(const std::string& path, const ModelSpec* expected = nullptr) {
        auto is = io::open_in(path);
        try {
            return load(is, expected);
        } catch (const FormatError& e) {
            throw FormatError(path + ": " + e.what());
        }
    }

private:
    struct ArrayRef {
        std::string name;
        std::vector<std::size_t> dims;
        float* data;
        std::size_t size;
    };

    static void require_finite(double v, const char* what) {
        if (!std::isfinite(v)) throw NonFiniteLoss(std::string("non-finite ") + what + " (" + std::to_string(v) + ")");
    }

    MonthBatch sample_batch_with(const ClimateArchive& norm, Rng& rng) const {
        return sample_months(norm, spec_, config_.batch_size, training_range(norm.days), rng);
    }

    /// Loss on a fixed batch; batch-norm running statistics are left as found.
    double probe_loss(const MonthBatch& probe, const Tensor& z) {
        auto buffers = generator_.buffers();
        std::vector<std::vector<float>> saved;
        for (const auto& [name, b] : buffers) saved.push_back(b.values());
        double loss;
        {
            NoGradGuard no_grad;
            loss = moment_matching_loss(generator_.forward(z, probe.ctx, Mode::train), probe.y).item();
        }
        for (std::size_t i = 0; i < buffers.size(); ++i) {
            auto dst = buffers[i].second.mutable_data();
            std::copy(saved[i].begin(), saved[i].end(), dst.begin());
        }
        return loss;
    }

    /// Generates a full batch of fresh fakes; when replay is active and
    /// nonempty, the trailing round(fraction * N) rows are replaced by
    /// replayed months. Fresh rows used are pushed afterwards.
    std::pair<Tensor, ConditioningContext> fake_batch(const ConditioningContext& ctx) {
        const std::size_t n = ctx.batch();
        Tensor fresh;
        {
            NoGradGuard no_grad;
            fresh = generator_.forward(Tensor::randn(Shape{n, spec_.noise_dim}, rng_), ctx, Mode::train);
        }
        if (!config_.replay_enabled()) return {fresh, ctx};

        const std::size_t n_replay =
            replay_.empty() ? 0 : static_cast<std::size_t>(std::llround(config_.replay_fraction * n));
        const std::size_t n_fresh = n - n_replay;
        const std::size_t ys = fresh.numel() / n, c1s = ctx.c1.numel() / n, c2s = ctx.c2.numel() / n;
        std::vector<float> y(fresh.values()), c1(ctx.c1.values()), c2(ctx.c2.values());
        for (std::size_t i = n_fresh; i < n; ++i) {
            const ReplayItem& item = replay_.draw(rng_);
            std::copy(item.y.begin(), item.y.end(), y.begin() + i * ys);
            std::copy(item.c1.begin(), item.c1.end(), c1.begin() + i * c1s);
            std::copy(item.c2.begin(), item.c2.end(), c2.begin() + i * c2s);
        }
        for (std::size_t i = 0; i < n_fresh; ++i) {
            replay_.push({{y.begin() + i * ys, y.begin() + (i + 1) * ys},
                          {c1.begin() + i * c1s, c1.begin() + (i + 1) * c1s},
                          {c2.begin() + i * c2s, c2.begin() + (i + 1) * c2s}},
                         rng_);
        }
        if (n_replay == 0) return {fresh, ctx};
        return {Tensor(fresh.shape(), std::move(y)),
                {Tensor(ctx.c1.shape(), std::move(c1)), Tensor(ctx.c2.shape(), std::move(c2))}};
    }

    /// Every float array that defines the training state except replay.
    std::vector<ArrayRef> named_arrays() {
        std::vector<ArrayRef> out;
        auto add_tensors = [&](NamedTensors<float> list) {
            for (auto& [name, t] : list) {
                auto span = t.mutable_data();
                out.push_back({name, t.shape().dims(), span.data(), span.size()});
            }
        };
        add_tensors(generator_.parameters());
        add_tensors(generator_.buffers());
        add_tensors(discriminator_.parameters());
        add_tensors(discriminator_.buffers());
        auto add_moments = [&](const std::string& prefix, const NamedTensors<float>& params, AdamState<float>& state) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const auto dims = params[i].second.shape().dims();
                auto& m = state.first_moment[i];
                auto& v = state.second_moment[i];
                out.push_back({prefix + ".m." + params[i].first, dims, m.data(), m.size()});
                out.push_back({prefix + ".v." + params[i].first, dims, v.data(), v.size()});
            }
        };
        add_moments("adam.gen", generator_.parameters(), opt_g_);
        add_moments("adam.disc", discriminator_.parameters(), opt_d_);
        auto& items = replay_.items();
        for (std::size_t i = 0; i < items.size(); ++i) {
            const std::string p = "replay." + std::to_string(i);
            for (auto [suffix, vec] : {std::pair{".y", &items[i].y}, {".c1", &items[i].c1}, {".c2", &items[i].c2}})
                out.push_back({p + suffix, {vec->size()}, vec->data(), vec->size()});
        }
        return out;
    }

    /// Sizes the replay buffer to the stored item count so that
    /// named_arrays() lines up with the file contents.
    void restore_replay(const std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<float>>>& stored) {
        std::size_t count = 0;
        while (stored.count("replay." + std::to_string(count) + ".y")) ++count;
        if (count > replay_.capacity()) throw FormatError("checkpoint replay buffer exceeds its capacity");
        const std::size_t ys = spec_.variables * spec_.days * spec_.height * spec_.width;
        const std::size_t c1s = 2 * spec_.height * spec_.width;
        const std::size_t c2s = spec_.context_days * spec_.variables * spec_.height * spec_.width;
        replay_.items().assign(count, ReplayItem{std::vector<float>(ys), std::vector<float>(c1s), std::vector<float>(c2s)});
    }

    ModelSpec spec_;
    TrainConfig config_;
    NormalizationStats stats_;
    Rng rng_;
    Generator generator_;
    Discriminator discriminator_;
    AdamState<float> opt_g_, opt_d_;
    ReplayBuffer replay_;
    std::size_t step_ = 0;
    bool pretrained_ = false;
};

}  // namespace climgan

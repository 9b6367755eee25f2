#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "xpolicy/rng.hpp"
#include "xpolicy/tensor.hpp"

namespace xpolicy {

/// Cosine signal-decay schedule: abar(k) = f(k)/f(0) with
/// f(k) = cos^2(((k/K + s)/(1+s)) * pi/2). The chain is rebuilt from
/// per-step betas clipped at 0.999, so alpha(k) = abar(k)/abar(k-1)
/// holds exactly even where the clip binds (near k = K).
class DiffusionSchedule {
public:
    static DiffusionSchedule cosine(long K, double s = 0.008) {
        if (K < 1) throw shape_error("schedule needs K >= 1");
        DiffusionSchedule sch;
        sch.K_ = K;
        sch.abar_.resize(static_cast<size_t>(K) + 1);
        sch.beta_.assign(static_cast<size_t>(K) + 1, 0.0);
        sch.abar_[0] = 1.0;
        auto f = [&](long k) {
            const double u = ((static_cast<double>(k) / static_cast<double>(K)) + s) / (1.0 + s);
            const double c = std::cos(u * 3.14159265358979323846 / 2.0);
            return c * c;
        };
        const double f0 = f(0);
        double prev = f0;
        for (long k = 1; k <= K; ++k) {
            const double cur = f(k);
            const double beta = std::min(1.0 - cur / prev, 0.999);
            sch.beta_[static_cast<size_t>(k)] = beta;
            sch.abar_[static_cast<size_t>(k)] = sch.abar_[static_cast<size_t>(k - 1)] * (1.0 - beta);
            prev = cur;
        }
        return sch;
    }

    long steps() const { return K_; }

    double alpha_bar(long k) const {
        if (k < 0 || k > K_) throw shape_error("alpha_bar: k out of [0,K]");
        return abar_[static_cast<size_t>(k)];
    }

    double beta(long k) const {
        if (k < 1 || k > K_) throw shape_error("beta: k out of [1,K]");
        return beta_[static_cast<size_t>(k)];
    }

    double alpha(long k) const { return 1.0 - beta(k); }

    /// Posterior std sqrt(beta_k * (1 - abar_{k-1}) / (1 - abar_k)); zero at k=1.
    double sigma(long k) const {
        if (k < 1 || k > K_) throw shape_error("sigma: k out of [1,K]");
        if (k == 1) return 0.0;
        return std::sqrt(beta(k) * (1.0 - alpha_bar(k - 1)) / (1.0 - alpha_bar(k)));
    }

private:
    long K_ = 0;
    std::vector<double> abar_, beta_;
};

/// Variance-preserving noising: sqrt(abar_k) a0 + sqrt(1-abar_k) eps.
template <typename T>
Tensor<T> q_sample(const DiffusionSchedule& sch, const Tensor<T>& a0, long k, const Tensor<T>& eps) {
    if (a0.shape() != eps.shape()) throw shape_error("q_sample: a0 and eps shapes differ");
    const double ab = sch.alpha_bar(k);
    const double sa = std::sqrt(ab), se = std::sqrt(1.0 - ab);
    Tensor<T> out = Tensor<T>::zeros(a0.shape());
    for (long i = 0; i < a0.numel(); ++i)
        out.data()[i] = static_cast<T>(sa * a0.data()[i] + se * eps.data()[i]);
    return out;
}

/// Inversion of q_sample given the exact noise: recovers a0 algebraically.
template <typename T>
Tensor<T> x0_from_eps(const DiffusionSchedule& sch, const Tensor<T>& a_k, long k, const Tensor<T>& eps_hat) {
    if (a_k.shape() != eps_hat.shape()) throw shape_error("x0_from_eps: shapes differ");
    const double ab = sch.alpha_bar(k);
    const double inv_sa = 1.0 / std::sqrt(ab), se = std::sqrt(1.0 - ab);
    Tensor<T> out = Tensor<T>::zeros(a_k.shape());
    for (long i = 0; i < a_k.numel(); ++i)
        out.data()[i] = static_cast<T>((a_k.data()[i] - se * eps_hat.data()[i]) * inv_sa);
    return out;
}

/// One batch of noised actions: per-sample step, shared noise tensor.
/// Draw order (for state replay): all B steps first, then eps row-major.
template <typename T>
struct NoisedActions {
    Tensor<T> noisy;
    std::vector<long> ks;
    Tensor<T> eps;
};

template <typename T>
NoisedActions<T> make_noised(const DiffusionSchedule& sch, const Tensor<T>& a0, Rng& rng) {
    if (a0.rank() < 2) throw shape_error("make_noised: need (B, ...) actions");
    const long B = a0.dim(0), per = a0.numel() / B;
    NoisedActions<T> out;
    out.ks.resize(static_cast<size_t>(B));
    for (auto& k : out.ks) k = 1 + static_cast<long>(rng.below(static_cast<uint64_t>(sch.steps())));
    out.eps = Tensor<T>::zeros(a0.shape());
    for (auto& v : out.eps.data()) v = static_cast<T>(rng.normal());
    out.noisy = Tensor<T>::zeros(a0.shape());
    for (long b = 0; b < B; ++b) {
        const double ab = sch.alpha_bar(out.ks[static_cast<size_t>(b)]);
        const double sa = std::sqrt(ab), se = std::sqrt(1.0 - ab);
        for (long i = b * per; i < (b + 1) * per; ++i)
            out.noisy.data()[i] = static_cast<T>(sa * a0.data()[i] + se * out.eps.data()[i]);
    }
    return out;
}

/// Noise-prediction objective: mean squared error between the drawn noise
/// and model(noisy, ks). Differentiable through the model only.
template <typename T, typename Model>
Tensor<T> diffusion_loss(const DiffusionSchedule& sch, const Tensor<T>& a0, Model&& model, Rng& rng) {
    NoisedActions<T> noised = make_noised(sch, a0, rng);
    Tensor<T> eps_hat = model(noised.noisy, noised.ks);
    Tensor<T> loss = mse(eps_hat, noised.eps);
    if (!loss.all_finite()) {
        std::ostringstream os;
        os << "non-finite noise-prediction loss; steps:";
        for (long k : noised.ks) os << ' ' << k;
        throw training_error(os.str());
    }
    return loss;
}

/// Deterministic part of the reverse update:
/// (a_k - (beta_k / sqrt(1-abar_k)) eps_hat) / sqrt(alpha_k).
template <typename T>
Tensor<T> ancestral_mean(const DiffusionSchedule& sch, const Tensor<T>& a_k, long k, const Tensor<T>& eps_hat) {
    if (a_k.shape() != eps_hat.shape()) throw shape_error("ancestral_mean: shapes differ");
    const double inv_sa = 1.0 / std::sqrt(sch.alpha(k));
    const double g = sch.beta(k) / std::sqrt(1.0 - sch.alpha_bar(k));
    Tensor<T> out = Tensor<T>::zeros(a_k.shape());
    for (long i = 0; i < a_k.numel(); ++i)
        out.data()[i] = static_cast<T>((a_k.data()[i] - g * eps_hat.data()[i]) * inv_sa);
    return out;
}

/// Full reverse update; adds sigma_k noise except at k=1, where the update
/// is deterministic and the rng is left untouched.
template <typename T>
Tensor<T> ancestral_step(const DiffusionSchedule& sch, const Tensor<T>& a_k, long k, const Tensor<T>& eps_hat,
                         Rng& rng) {
    Tensor<T> out = ancestral_mean(sch, a_k, k, eps_hat);
    if (k > 1) {
        const double sg = sch.sigma(k);
        for (auto& v : out.data()) v += static_cast<T>(sg * rng.normal());
    }
    return out;
}

/// Evaluation steps for few-step sampling: round(linspace(K, 1, count)),
/// strictly decreasing, endpoints included.
inline std::vector<long> sample_steps(long K, long count) {
    if (count < 1 || count > K) throw layout_error("sample steps must be in [1, K]");
    std::vector<long> ks(static_cast<size_t>(count));
    if (count == 1) {
        ks[0] = K;
        return ks;
    }
    for (long j = 0; j < count; ++j) {
        const double pos = static_cast<double>(K) -
                           static_cast<double>(j) * static_cast<double>(K - 1) / static_cast<double>(count - 1);
        ks[static_cast<size_t>(j)] = std::llround(pos);
    }
    for (size_t j = 1; j < ks.size(); ++j)
        if (ks[j] >= ks[j - 1]) throw layout_error("sample steps are not strictly decreasing");
    return ks;
}

/// Few-step deterministic sampler: start from pure noise, at each step
/// predict x0 and jump to the next step's marginal with no added noise;
/// the final jump lands on abar=1, then values are clipped to
/// [-1-delta, 1+delta]. The x0 estimate is clipped to the same band at
/// every step: near k=K the 1/sqrt(abar) factor amplifies prediction
/// error by orders of magnitude, and an unbounded estimate derails the
/// remaining jumps.
template <typename T, typename Model>
Tensor<T> deterministic_sample(const DiffusionSchedule& sch, Model&& model, Shape shape, long count, Rng& rng,
                               double clip_delta = 0.05) {
    const std::vector<long> ks = sample_steps(sch.steps(), count);
    Tensor<T> a = Tensor<T>::zeros(std::move(shape));
    if (a.rank() < 2) throw shape_error("deterministic_sample: need (B, ...) shape");
    for (auto& v : a.data()) v = static_cast<T>(rng.normal());
    const long B = a.dim(0);
    const T lo = static_cast<T>(-1.0 - clip_delta), hi = static_cast<T>(1.0 + clip_delta);
    for (size_t j = 0; j < ks.size(); ++j) {
        const long k = ks[j];
        const std::vector<long> batch_ks(static_cast<size_t>(B), k);
        Tensor<T> eps_hat = model(a, batch_ks);
        Tensor<T> x0 = x0_from_eps(sch, a, k, eps_hat);
        for (auto& v : x0.data()) v = std::min(hi, std::max(lo, v));
        const double ab_next = j + 1 < ks.size() ? sch.alpha_bar(ks[j + 1]) : 1.0;
        const double sa = std::sqrt(ab_next), se = std::sqrt(1.0 - ab_next);
        for (long i = 0; i < a.numel(); ++i)
            a.data()[i] = static_cast<T>(sa * x0.data()[i] + se * eps_hat.data()[i]);
    }
    for (auto& v : a.data()) v = std::min(hi, std::max(lo, v));
    return a;
}

/// Full-length stochastic sampler (analysis baseline; unclipped).
template <typename T, typename Model>
Tensor<T> ancestral_sample(const DiffusionSchedule& sch, Model&& model, Shape shape, Rng& rng) {
    Tensor<T> a = Tensor<T>::zeros(std::move(shape));
    if (a.rank() < 2) throw shape_error("ancestral_sample: need (B, ...) shape");
    for (auto& v : a.data()) v = static_cast<T>(rng.normal());
    const long B = a.dim(0);
    for (long k = sch.steps(); k >= 1; --k) {
        const std::vector<long> batch_ks(static_cast<size_t>(B), k);
        a = ancestral_step(sch, a, k, model(a, batch_ks), rng);
    }
    return a;
}

}  // namespace xpolicy

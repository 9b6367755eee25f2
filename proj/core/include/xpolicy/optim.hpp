#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "xpolicy/nn.hpp"

namespace xpolicy {

/// Linear warmup from zero to the base rate, constant afterwards.
/// Steps are 1-based: the first optimizer step uses base/warmup.
inline double warmup_lr(double base, long step, long warmup_steps) {
    if (step < 1) throw training_error("warmup_lr: steps are 1-based");
    if (warmup_steps <= 0) return base;
    return base * std::min(1.0, static_cast<double>(step) / static_cast<double>(warmup_steps));
}

/// Scales all parameter gradients so their global L2 norm is at most
/// max_norm; returns the pre-clip norm. max_norm <= 0 disables clipping.
template <typename T>
double clip_global_norm(Tape<T>& tape, const ParamSet<T>& ps, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, p] : ps.items) {
        const std::vector<T>* g = tape.grad(p);
        if (!g) continue;
        for (T v : *g) sq += static_cast<double>(v) * static_cast<double>(v);
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / norm;
        for (const auto& [name, p] : ps.items) {
            auto it = tape.grad(p);
            if (!it) continue;
            auto& buf = tape.grad_buf(p.node());
            for (auto& v : buf) v = static_cast<T>(static_cast<double>(v) * scale);
        }
    }
    return norm;
}

/// Decoupled-weight-decay adaptive-moment optimizer. Moments follow the
/// parameter registration order and precision; missing gradients count as
/// zero so frozen branches decay their moments instead of erroring.
template <typename T>
class AdamW {
public:
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 0.0;

    explicit AdamW(const ParamSet<T>& ps) {
        m_.reserve(ps.items.size());
        v_.reserve(ps.items.size());
        for (const auto& [name, p] : ps.items) {
            m_.emplace_back(p.numel(), T(0));
            v_.emplace_back(p.numel(), T(0));
        }
    }

    long steps_done() const { return t_; }

    void step(Tape<T>& tape, ParamSet<T>& ps, double lr) {
        if (m_.size() != ps.items.size()) throw training_error("optimizer bound to a different parameter set");
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (size_t i = 0; i < ps.items.size(); ++i) {
            auto& p = ps.items[i].second;
            const std::vector<T>* g = tape.grad(p);
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < m.size(); ++j) {
                const double gj = g ? static_cast<double>((*g)[j]) : 0.0;
                const double mj = beta1 * static_cast<double>(m[j]) + (1.0 - beta1) * gj;
                const double vj = beta2 * static_cast<double>(v[j]) + (1.0 - beta2) * gj * gj;
                m[j] = static_cast<T>(mj);
                v[j] = static_cast<T>(vj);
                const double update = (mj / bc1) / (std::sqrt(vj / bc2) + eps);
                const double pj = static_cast<double>(p.data()[j]);
                p.data()[j] = static_cast<T>(pj - lr * (update + weight_decay * pj));
            }
        }
    }

    // checkpoint access
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return v_; }
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& second_moments() const { return v_; }
    void set_steps_done(long t) { t_ = t; }

private:
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

/// Exponential moving average of parameters: s <- mu*s + (1-mu)*p after
/// each optimizer step. Shadows start as a copy of the current parameters.
template <typename T>
class Ema {
public:
    double mu = 0.9999;

    Ema(const ParamSet<T>& ps, double decay) : mu(decay) {
        shadow_.reserve(ps.items.size());
        for (const auto& [name, p] : ps.items) shadow_.push_back(p.data());
    }

    void update(const ParamSet<T>& ps) {
        if (shadow_.size() != ps.items.size()) throw training_error("EMA bound to a different parameter set");
        for (size_t i = 0; i < shadow_.size(); ++i) {
            const auto& p = ps.items[i].second.data();
            auto& s = shadow_[i];
            if (s.size() != p.size()) throw training_error("EMA bound to a different parameter set");
            for (size_t j = 0; j < s.size(); ++j)
                s[j] = static_cast<T>(mu * static_cast<double>(s[j]) + (1.0 - mu) * static_cast<double>(p[j]));
        }
    }

    /// Overwrites parameters with the shadow values (inference weights).
    void apply(ParamSet<T>& ps) const {
        if (shadow_.size() != ps.items.size()) throw training_error("EMA bound to a different parameter set");
        for (size_t i = 0; i < shadow_.size(); ++i) {
            if (shadow_[i].size() != ps.items[i].second.data().size())
                throw training_error("EMA bound to a different parameter set");
            ps.items[i].second.data() = shadow_[i];
        }
    }

    std::vector<std::vector<T>>& shadows() { return shadow_; }
    const std::vector<std::vector<T>>& shadows() const { return shadow_; }

private:
    std::vector<std::vector<T>> shadow_;
};

}  // namespace xpolicy

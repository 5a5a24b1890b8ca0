#include "cimnas/controller.hpp"

#include "cimnas/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cimnas {

void ControllerConfig::validate() const {
    if (hidden_size < 1 || embedding_size < 1) throw ConfigError("controller sizes must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("controller learning rate must be positive");
    }
    if (!(baseline_decay >= 0.0 && baseline_decay <= 1.0)) throw ConfigError("baseline decay must lie in [0, 1]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
    if (batch_size < 1) throw ConfigError("controller batch size must be at least 1");
    if (!(init_scale >= 0.0)) throw ConfigError("init scale must be non-negative");
}

struct Controller::StepCache {
    std::vector<double> x, h_prev, z, r, n, rh, h, p;
    double logp = 0.0;
    std::size_t input_offset = 0; // theta offset of the input vector x
};

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// out[i] += sum_j W[i*cols + j] * v[j]
void matvec_add(const double* W, std::size_t rows, std::size_t cols, const double* v, double* out) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* w = W + i * cols;
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) s += w[j] * v[j];
        out[i] += s;
    }
}

// out[j] += sum_i W[i*cols + j] * v[i]
void matvec_t_add(const double* W, std::size_t rows, std::size_t cols, const double* v, double* out) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* w = W + i * cols;
        const double vi = v[i];
        if (vi == 0.0) continue;
        for (std::size_t j = 0; j < cols; ++j) out[j] += w[j] * vi;
    }
}

// G[i*cols + j] += a[i] * b[j]
void outer_add(double* G, std::size_t rows, std::size_t cols, const double* a, const double* b) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double ai = a[i];
        if (ai == 0.0) continue;
        double* g = G + i * cols;
        for (std::size_t j = 0; j < cols; ++j) g[j] += ai * b[j];
    }
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        s += p[i];
    }
    for (double& v : p) v /= s;
    return p;
}

double log_softmax_at(const std::vector<double>& logits, std::size_t a) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double l : logits) s += std::exp(l - mx);
    return logits[a] - mx - std::log(s);
}

} // namespace

Controller::Controller(std::vector<int> choice_counts, ControllerConfig cfg, std::uint64_t seed)
    : counts_(std::move(choice_counts)), cfg_(cfg) {
    cfg_.validate();
    if (counts_.empty()) throw ConfigError("controller needs at least one decision step");
    for (std::size_t t = 0; t < counts_.size(); ++t) {
        if (counts_[t] < 1) throw ConfigError("decision step " + std::to_string(t) + " has no choices");
    }
    const auto H = static_cast<std::size_t>(cfg_.hidden_size);
    const auto E = static_cast<std::size_t>(cfg_.embedding_size);
    std::size_t off = 0;
    layout_.start = off;
    off += E;
    for (std::size_t t = 1; t < counts_.size(); ++t) {
        layout_.embed.push_back(off);
        off += static_cast<std::size_t>(counts_[t - 1]) * E;
    }
    layout_.wx = off;
    off += 3 * H * E;
    layout_.uh = off;
    off += 3 * H * H;
    layout_.bias = off;
    off += 3 * H;
    for (int k : counts_) {
        layout_.head_w.push_back(off);
        off += static_cast<std::size_t>(k) * H;
        layout_.head_b.push_back(off);
        off += static_cast<std::size_t>(k);
    }
    layout_.total = off;

    theta_.assign(layout_.total, 0.0);
    Rng rng(seed);
    const auto init = [&](std::size_t from, std::size_t to) {
        for (std::size_t i = from; i < to; ++i) theta_[i] = cfg_.init_scale * (2.0 * uniform01(rng) - 1.0);
    };
    init(0, layout_.bias);
    if (!cfg_.zero_heads) {
        for (std::size_t t = 0; t < counts_.size(); ++t) init(layout_.head_w[t], layout_.head_b[t]);
    }
}

void Controller::set_parameters(std::vector<double> theta) {
    if (theta.size() != theta_.size()) {
        throw ConfigError("controller expects " + std::to_string(theta_.size()) + " parameters, got " +
                          std::to_string(theta.size()));
    }
    theta_ = std::move(theta);
}

void Controller::set_baseline(double b, bool initialized) {
    baseline_ = b;
    baseline_set_ = initialized;
}

void Controller::update_baseline(double batch_mean) {
    if (!baseline_set_) {
        baseline_ = batch_mean;
        baseline_set_ = true;
        return;
    }
    baseline_ = (1.0 - cfg_.baseline_decay) * baseline_ + cfg_.baseline_decay * batch_mean;
}

void Controller::forward(const ActionSequence* actions, Rng* rng, bool greedy, std::vector<StepCache>& cache,
                         ActionSequence& taken) const {
    const auto H = static_cast<std::size_t>(cfg_.hidden_size);
    const auto E = static_cast<std::size_t>(cfg_.embedding_size);
    const std::size_t T = counts_.size();
    if (actions && actions->size() != T) {
        throw ConfigError("action sequence has " + std::to_string(actions->size()) + " steps, controller has " +
                          std::to_string(T));
    }
    cache.assign(T, {});
    taken.assign(T, 0);
    std::vector<double> h(H, 0.0);
    const double* th = theta_.data();
    for (std::size_t t = 0; t < T; ++t) {
        StepCache& c = cache[t];
        c.input_offset = t == 0 ? layout_.start
                                : layout_.embed[t - 1] + static_cast<std::size_t>(taken[t - 1]) * E;
        c.x.assign(th + c.input_offset, th + c.input_offset + E);
        c.h_prev = h;

        std::vector<double> az(th + layout_.bias, th + layout_.bias + H);
        std::vector<double> ar(th + layout_.bias + H, th + layout_.bias + 2 * H);
        std::vector<double> an(th + layout_.bias + 2 * H, th + layout_.bias + 3 * H);
        matvec_add(th + layout_.wx, H, E, c.x.data(), az.data());
        matvec_add(th + layout_.wx + H * E, H, E, c.x.data(), ar.data());
        matvec_add(th + layout_.wx + 2 * H * E, H, E, c.x.data(), an.data());
        matvec_add(th + layout_.uh, H, H, h.data(), az.data());
        matvec_add(th + layout_.uh + H * H, H, H, h.data(), ar.data());
        c.z.resize(H);
        c.r.resize(H);
        c.rh.resize(H);
        for (std::size_t i = 0; i < H; ++i) {
            c.z[i] = sigmoid(az[i]);
            c.r[i] = sigmoid(ar[i]);
            c.rh[i] = c.r[i] * h[i];
        }
        matvec_add(th + layout_.uh + 2 * H * H, H, H, c.rh.data(), an.data());
        c.n.resize(H);
        c.h.resize(H);
        for (std::size_t i = 0; i < H; ++i) {
            c.n[i] = std::tanh(an[i]);
            c.h[i] = (1.0 - c.z[i]) * c.n[i] + c.z[i] * h[i];
        }
        h = c.h;

        const auto k = static_cast<std::size_t>(counts_[t]);
        std::vector<double> logits(th + layout_.head_b[t], th + layout_.head_b[t] + k);
        matvec_add(th + layout_.head_w[t], k, H, h.data(), logits.data());
        c.p = softmax(logits);

        int a = 0;
        if (actions) {
            a = (*actions)[t];
            if (a < 0 || static_cast<std::size_t>(a) >= k) {
                throw ConfigError("action " + std::to_string(a) + " at step " + std::to_string(t) + " outside [0, " +
                                  std::to_string(k) + ")");
            }
        } else if (greedy) {
            a = static_cast<int>(std::max_element(c.p.begin(), c.p.end()) - c.p.begin());
        } else {
            const double u = uniform01(*rng);
            double cum = 0.0;
            a = static_cast<int>(k) - 1;
            for (std::size_t i = 0; i < k; ++i) {
                cum += c.p[i];
                if (u < cum) {
                    a = static_cast<int>(i);
                    break;
                }
            }
        }
        taken[t] = a;
        c.logp = log_softmax_at(logits, static_cast<std::size_t>(a));
    }
}

EpisodeRecord Controller::sample(Rng& rng) const {
    std::vector<StepCache> cache;
    EpisodeRecord ep;
    forward(nullptr, &rng, false, cache, ep.actions);
    ep.log_probs.reserve(cache.size());
    for (const auto& c : cache) ep.log_probs.push_back(c.logp);
    return ep;
}

ActionSequence Controller::greedy() const {
    std::vector<StepCache> cache;
    ActionSequence out;
    forward(nullptr, nullptr, true, cache, out);
    return out;
}

std::vector<std::vector<double>> Controller::distributions(const ActionSequence& actions) const {
    std::vector<StepCache> cache;
    ActionSequence taken;
    forward(&actions, nullptr, false, cache, taken);
    std::vector<std::vector<double>> out;
    out.reserve(cache.size());
    for (auto& c : cache) out.push_back(c.p);
    return out;
}

double Controller::log_prob(const ActionSequence& actions) const {
    std::vector<StepCache> cache;
    ActionSequence taken;
    forward(&actions, nullptr, false, cache, taken);
    double s = 0.0;
    for (const auto& c : cache) s += c.logp;
    return s;
}

double Controller::surrogate(std::span<const EpisodeRecord> episodes, double baseline) const {
    if (episodes.empty()) return 0.0;
    const std::size_t T = counts_.size();
    const double m = static_cast<double>(episodes.size());
    double total = 0.0;
    for (const auto& ep : episodes) {
        std::vector<StepCache> cache;
        ActionSequence taken;
        forward(&ep.actions, nullptr, false, cache, taken);
        const double adv = ep.reward - baseline;
        for (std::size_t t = 0; t < T; ++t) {
            total += std::pow(cfg_.gamma, static_cast<double>(T - 1 - t)) * cache[t].logp * adv;
        }
    }
    return total / m;
}

std::vector<double> Controller::surrogate_gradient(std::span<const EpisodeRecord> episodes, double baseline) const {
    std::vector<double> g(theta_.size(), 0.0);
    if (episodes.empty()) return g;
    const auto H = static_cast<std::size_t>(cfg_.hidden_size);
    const auto E = static_cast<std::size_t>(cfg_.embedding_size);
    const std::size_t T = counts_.size();
    const double m = static_cast<double>(episodes.size());
    const double* th = theta_.data();

    for (const auto& ep : episodes) {
        const double adv = (ep.reward - baseline) / m;
        if (adv == 0.0) continue;
        std::vector<StepCache> cache;
        ActionSequence taken;
        forward(&ep.actions, nullptr, false, cache, taken);

        std::vector<double> dh(H, 0.0);
        for (std::size_t t = T; t-- > 0;) {
            const StepCache& c = cache[t];
            const auto k = static_cast<std::size_t>(counts_[t]);
            const double coef = std::pow(cfg_.gamma, static_cast<double>(T - 1 - t)) * adv;
            std::vector<double> dlogits(k);
            for (std::size_t i = 0; i < k; ++i) {
                dlogits[i] = coef * ((static_cast<int>(i) == ep.actions[t] ? 1.0 : 0.0) - c.p[i]);
            }
            outer_add(g.data() + layout_.head_w[t], k, H, dlogits.data(), c.h.data());
            for (std::size_t i = 0; i < k; ++i) g[layout_.head_b[t] + i] += dlogits[i];
            matvec_t_add(th + layout_.head_w[t], k, H, dlogits.data(), dh.data());

            std::vector<double> da_z(H), da_r(H), da_n(H), dh_prev(H), drh(H, 0.0);
            for (std::size_t i = 0; i < H; ++i) {
                const double dn = dh[i] * (1.0 - c.z[i]);
                const double dz = dh[i] * (c.h_prev[i] - c.n[i]);
                dh_prev[i] = dh[i] * c.z[i];
                da_n[i] = dn * (1.0 - c.n[i] * c.n[i]);
                da_z[i] = dz * c.z[i] * (1.0 - c.z[i]);
            }
            outer_add(g.data() + layout_.uh + 2 * H * H, H, H, da_n.data(), c.rh.data());
            matvec_t_add(th + layout_.uh + 2 * H * H, H, H, da_n.data(), drh.data());
            for (std::size_t i = 0; i < H; ++i) {
                const double dr = drh[i] * c.h_prev[i];
                dh_prev[i] += drh[i] * c.r[i];
                da_r[i] = dr * c.r[i] * (1.0 - c.r[i]);
            }
            const double* das[3] = {da_z.data(), da_r.data(), da_n.data()};
            std::vector<double> dx(E, 0.0);
            for (std::size_t gate = 0; gate < 3; ++gate) {
                outer_add(g.data() + layout_.wx + gate * H * E, H, E, das[gate], c.x.data());
                matvec_t_add(th + layout_.wx + gate * H * E, H, E, das[gate], dx.data());
                for (std::size_t i = 0; i < H; ++i) g[layout_.bias + gate * H + i] += das[gate][i];
            }
            for (std::size_t gate = 0; gate < 2; ++gate) {
                outer_add(g.data() + layout_.uh + gate * H * H, H, H, das[gate], c.h_prev.data());
                matvec_t_add(th + layout_.uh + gate * H * H, H, H, das[gate], dh_prev.data());
            }
            for (std::size_t j = 0; j < E; ++j) g[c.input_offset + j] += dx[j];
            dh = std::move(dh_prev);
        }
    }
    return g;
}

UpdateResult Controller::update(std::span<const EpisodeRecord> episodes) {
    UpdateResult res;
    if (episodes.empty()) {
        res.event = "empty batch";
        return res;
    }
    double mean = 0.0;
    for (const auto& ep : episodes) mean += ep.reward;
    mean /= static_cast<double>(episodes.size());
    if (!baseline_set_) update_baseline(mean);
    res.baseline_used = baseline_;

    const auto g = surrogate_gradient(episodes, baseline_);
    double norm2 = 0.0;
    for (double v : g) norm2 += v * v;
    res.gradient_norm = std::sqrt(norm2);
    if (!std::isfinite(norm2)) {
        res.event = "non-finite policy gradient, step skipped";
    } else {
        for (std::size_t i = 0; i < theta_.size(); ++i) theta_[i] += cfg_.learning_rate * g[i];
        res.applied = true;
    }
    update_baseline(mean);
    return res;
}

void RewardConfig::validate() const {
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in [0, 1]");
    if (w_latency < 0.0 || w_energy < 0.0 || w_area < 0.0) throw ConfigError("reward weights must be non-negative");
    if (std::abs(w_latency + w_energy + w_area - 1.0) > 1e-9) throw ConfigError("reward weights must sum to 1");
    if (!(latency_ref_ns > 0.0 && energy_ref_pj > 0.0 && area_ref_um2 > 0.0)) {
        throw ConfigError("reward normalization references must be positive");
    }
}

double hardware_score(const HardwareMetrics& metrics, const RewardConfig& cfg) {
    const auto term = [](double v, double ref) { return std::max(0.0, 1.0 - v / ref); };
    return cfg.w_latency * term(metrics.latency_ns, cfg.latency_ref_ns) +
           cfg.w_energy * term(metrics.energy_pj, cfg.energy_ref_pj) +
           cfg.w_area * term(metrics.area_um2, cfg.area_ref_um2);
}

double compute_reward(double alpha, const HardwareMetrics* metrics, const RewardConfig& cfg) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("accuracy must lie in [0, 1]");
    if (cfg.beta == 1.0) return alpha;
    if (!metrics) throw ConfigError("reward with beta < 1 needs hardware metrics");
    return cfg.beta * alpha + (1.0 - cfg.beta) * hardware_score(*metrics, cfg);
}

} // namespace cimnas

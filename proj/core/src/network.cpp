#include "cimnas/network.hpp"

#include "cimnas/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cimnas {

namespace {

struct ConvGeometry {
    std::size_t channels, height, width; // input
    std::size_t fh, fw, filters;
    std::size_t pad_h, pad_w;
    std::size_t kernel() const { return channels * fh * fw; }
    std::size_t positions() const { return height * width; }
};

ConvGeometry geometry(const ConvLayer& c, FeatureShape in) {
    return {static_cast<std::size_t>(in.channels),
            static_cast<std::size_t>(in.height),
            static_cast<std::size_t>(in.width),
            static_cast<std::size_t>(c.filter_h),
            static_cast<std::size_t>(c.filter_w),
            static_cast<std::size_t>(c.filters),
            static_cast<std::size_t>(c.filter_h / 2),
            static_cast<std::size_t>(c.filter_w / 2)};
}

// cols is (kernel x positions), row k = (c*fh + kh)*fw + kw, column p = oh*W + ow.
void im2col(const double* image, const ConvGeometry& g, std::vector<double>& cols) {
    const std::size_t P = g.positions();
    cols.assign(g.kernel() * P, 0.0);
    for (std::size_t c = 0; c < g.channels; ++c) {
        const double* plane = image + c * g.height * g.width;
        for (std::size_t kh = 0; kh < g.fh; ++kh) {
            for (std::size_t kw = 0; kw < g.fw; ++kw) {
                double* row = cols.data() + ((c * g.fh + kh) * g.fw + kw) * P;
                for (std::size_t oh = 0; oh < g.height; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh + kh) - static_cast<std::ptrdiff_t>(g.pad_h);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    for (std::size_t ow = 0; ow < g.width; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow + kw) - static_cast<std::ptrdiff_t>(g.pad_w);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        row[oh * g.width + ow] = plane[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)];
                    }
                }
            }
        }
    }
}

void col2im_add(const std::vector<double>& cols, const ConvGeometry& g, double* image_grad) {
    const std::size_t P = g.positions();
    for (std::size_t c = 0; c < g.channels; ++c) {
        double* plane = image_grad + c * g.height * g.width;
        for (std::size_t kh = 0; kh < g.fh; ++kh) {
            for (std::size_t kw = 0; kw < g.fw; ++kw) {
                const double* row = cols.data() + ((c * g.fh + kh) * g.fw + kw) * P;
                for (std::size_t oh = 0; oh < g.height; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh + kh) - static_cast<std::ptrdiff_t>(g.pad_h);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    for (std::size_t ow = 0; ow < g.width; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow + kw) - static_cast<std::ptrdiff_t>(g.pad_w);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        plane[static_cast<std::size_t>(ih) * g.width + static_cast<std::size_t>(iw)] += row[oh * g.width + ow];
                    }
                }
            }
        }
    }
}

// C(m x n) += A(m x k) * B(k x n)
void gemm_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* c_row = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double a = A[i * k + p];
            if (a == 0.0) continue;
            const double* b_row = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C(m x n) += A^T * B where A is (k x m), B is (k x n)
void gemm_tn_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* a_row = A + p * m;
        const double* b_row = B + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double a = a_row[i];
            if (a == 0.0) continue;
            double* c_row = C + i * n;
            for (std::size_t j = 0; j < n; ++j) c_row[j] += a * b_row[j];
        }
    }
}

// C(m x n) += A * B^T where A is (m x k), B is (n x k)
void gemm_nt_acc(const double* A, const double* B, double* C, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* a_row = A + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* b_row = B + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a_row[p] * b_row[p];
            C[i * n + j] += s;
        }
    }
}

struct LayerTrace {
    std::vector<double> input;          // activations fed to the layer (after quantization)
    std::vector<unsigned char> act_pass; // STE mask for the activation quantizer (empty = all pass)
    std::vector<double> weight;         // effective weight used in the multiply
    std::vector<double> pre;            // pre-activation (before ReLU / pool)
    std::vector<std::size_t> pool_arg;  // flat index into `pre` selected by each pooled output
};

struct Trace {
    std::vector<LayerTrace> layers;
    Tensor logits;
};

const FixedPointFormat* act_format(const QuantizationScheme* quant, std::size_t layer) {
    return quant ? &quant->activations[layer] : nullptr;
}
const FixedPointFormat* weight_format(const QuantizationScheme* quant, std::size_t layer) {
    return quant ? &quant->weights[layer] : nullptr;
}

std::vector<double> effective_weight(const Tensor& w, const FixedPointFormat* fmt, const Tensor* offset) {
    std::vector<double> out = w.data;
    if (fmt) {
        for (double& v : out) v = quantize_value(v, *fmt);
    }
    if (offset && offset->size() == out.size()) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += offset->data[i];
    }
    return out;
}

void check_batch(const Network& net, const Tensor& batch) {
    const auto& in = net.input_shape;
    const bool ok = batch.rank() == 4 && batch.shape[1] == static_cast<std::size_t>(in.channels) &&
                    batch.shape[2] == static_cast<std::size_t>(in.height) &&
                    batch.shape[3] == static_cast<std::size_t>(in.width);
    if (!ok) {
        throw ConfigError("batch shape " + batch.shape_string() + " does not match network input (" +
                          std::to_string(in.channels) + "x" + std::to_string(in.height) + "x" +
                          std::to_string(in.width) + ")");
    }
}

Trace run_forward(const Network& net, const Tensor& batch, const QuantizationScheme* quant,
                  const WeightPerturbation& perturbation, bool keep_trace) {
    check_batch(net, batch);
    if (quant) quant->validate(net.layers());
    const std::size_t N = batch.shape[0];

    Trace trace;
    trace.layers.resize(net.layers());
    std::vector<double> act = batch.data;

    for (std::size_t li = 0; li < net.layers(); ++li) {
        const auto& layer = net.arch.layers[li];
        const FeatureShape in = net.shapes[li];
        const FeatureShape out = net.shapes[li + 1];
        LayerTrace& lt = trace.layers[li];

        if (const auto* fmt = act_format(quant, li)) {
            if (keep_trace) lt.act_pass.resize(act.size());
            for (std::size_t i = 0; i < act.size(); ++i) {
                if (keep_trace) lt.act_pass[i] = quantizer_passes(act[i], *fmt) ? 1 : 0;
                act[i] = quantize_value(act[i], *fmt);
            }
        }
        const Tensor* offset = li < perturbation.size() && perturbation[li].size() ? &perturbation[li] : nullptr;
        std::vector<double> w = effective_weight(net.params[li].weight, weight_format(quant, li), offset);
        const auto& bias = net.params[li].bias.data;

        std::vector<double> next(N * out.size());
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            const ConvGeometry g = geometry(*conv, in);
            const std::size_t P = g.positions();
            const std::size_t in_size = in.size();
            std::vector<double> pre(N * g.filters * P);
            std::vector<double> cols;
            for (std::size_t n = 0; n < N; ++n) {
                im2col(act.data() + n * in_size, g, cols);
                double* z = pre.data() + n * g.filters * P;
                for (std::size_t f = 0; f < g.filters; ++f) std::fill(z + f * P, z + (f + 1) * P, bias[f]);
                gemm_acc(w.data(), cols.data(), z, g.filters, g.kernel(), P);
            }
            if (conv->pool) {
                const std::size_t oh = static_cast<std::size_t>(out.height);
                const std::size_t ow = static_cast<std::size_t>(out.width);
                if (keep_trace) lt.pool_arg.resize(next.size());
                for (std::size_t n = 0; n < N; ++n) {
                    for (std::size_t f = 0; f < g.filters; ++f) {
                        const std::size_t base = (n * g.filters + f) * P;
                        for (std::size_t y = 0; y < oh; ++y) {
                            for (std::size_t x = 0; x < ow; ++x) {
                                std::size_t best = base + (2 * y) * g.width + 2 * x;
                                for (std::size_t dy = 0; dy < 2; ++dy) {
                                    for (std::size_t dx = 0; dx < 2; ++dx) {
                                        const std::size_t idx = base + (2 * y + dy) * g.width + 2 * x + dx;
                                        if (pre[idx] > pre[best]) best = idx;
                                    }
                                }
                                const std::size_t o = ((n * g.filters + f) * oh + y) * ow + x;
                                next[o] = std::max(0.0, pre[best]);
                                if (keep_trace) lt.pool_arg[o] = best;
                            }
                        }
                    }
                }
            } else {
                for (std::size_t i = 0; i < pre.size(); ++i) next[i] = std::max(0.0, pre[i]);
            }
            if (keep_trace) lt.pre = std::move(pre);
        } else {
            const std::size_t fan_in = in.size();
            const std::size_t fan_out = out.size();
            for (std::size_t n = 0; n < N; ++n) std::copy(bias.begin(), bias.end(), next.begin() + n * fan_out);
            gemm_acc(act.data(), w.data(), next.data(), N, fan_in, fan_out);
            if (std::holds_alternative<DenseLayer>(layer)) {
                if (keep_trace) lt.pre = next;
                for (double& v : next) v = std::max(0.0, v);
            }
        }

        if (keep_trace) {
            lt.input = std::move(act);
            lt.weight = std::move(w);
        }
        act = std::move(next);
    }

    trace.logits = Tensor({N, static_cast<std::size_t>(net.classes())}, std::move(act));
    return trace;
}

void backward(const Network& net, const Trace& trace, const Tensor& dlogits, const QuantizationScheme* quant,
              std::vector<LayerParams>& grads) {
    const std::size_t N = dlogits.shape[0];
    grads.resize(net.layers());
    std::vector<double> dout = dlogits.data;

    for (std::size_t li = net.layers(); li-- > 0;) {
        const auto& layer = net.arch.layers[li];
        const FeatureShape in = net.shapes[li];
        const FeatureShape out = net.shapes[li + 1];
        const LayerTrace& lt = trace.layers[li];
        LayerParams& g = grads[li];
        g.weight = Tensor(net.params[li].weight.shape, 0.0);
        g.bias = Tensor(net.params[li].bias.shape, 0.0);

        std::vector<double> din(N * in.size(), 0.0);
        if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
            const ConvGeometry geo = geometry(*conv, in);
            const std::size_t P = geo.positions();
            std::vector<double> dpre(N * geo.filters * P, 0.0);
            if (conv->pool) {
                for (std::size_t o = 0; o < dout.size(); ++o) {
                    const std::size_t idx = lt.pool_arg[o];
                    if (lt.pre[idx] > 0.0) dpre[idx] += dout[o];
                }
            } else {
                for (std::size_t i = 0; i < dpre.size(); ++i) dpre[i] = lt.pre[i] > 0.0 ? dout[i] : 0.0;
            }
            std::vector<double> cols;
            std::vector<double> dcols;
            const std::size_t in_size = in.size();
            for (std::size_t n = 0; n < N; ++n) {
                const double* dz = dpre.data() + n * geo.filters * P;
                im2col(lt.input.data() + n * in_size, geo, cols);
                gemm_nt_acc(dz, cols.data(), g.weight.data.data(), geo.filters, P, geo.kernel());
                for (std::size_t f = 0; f < geo.filters; ++f) {
                    double s = 0.0;
                    for (std::size_t p = 0; p < P; ++p) s += dz[f * P + p];
                    g.bias.data[f] += s;
                }
                if (li > 0) {
                    dcols.assign(geo.kernel() * P, 0.0);
                    gemm_tn_acc(lt.weight.data(), dz, dcols.data(), geo.kernel(), geo.filters, P);
                    col2im_add(dcols, geo, din.data() + n * in_size);
                }
            }
        } else {
            const std::size_t fan_in = in.size();
            const std::size_t fan_out = out.size();
            std::vector<double> dz = dout;
            if (std::holds_alternative<DenseLayer>(layer)) {
                for (std::size_t i = 0; i < dz.size(); ++i) {
                    if (!(lt.pre[i] > 0.0)) dz[i] = 0.0;
                }
            }
            gemm_tn_acc(lt.input.data(), dz.data(), g.weight.data.data(), fan_in, N, fan_out);
            for (std::size_t n = 0; n < N; ++n) {
                for (std::size_t j = 0; j < fan_out; ++j) g.bias.data[j] += dz[n * fan_out + j];
            }
            if (li > 0) gemm_nt_acc(dz.data(), lt.weight.data(), din.data(), N, fan_out, fan_in);
        }

        if (const auto* fmt = weight_format(quant, li)) {
            const auto& w = net.params[li].weight.data;
            for (std::size_t i = 0; i < w.size(); ++i) {
                if (!quantizer_passes(w[i], *fmt)) g.weight.data[i] = 0.0;
            }
        }
        if (!lt.act_pass.empty()) {
            for (std::size_t i = 0; i < din.size(); ++i) {
                if (!lt.act_pass[i]) din[i] = 0.0;
            }
        }
        dout = std::move(din);
    }
}

bool grads_finite(const std::vector<LayerParams>& grads) {
    return std::all_of(grads.begin(), grads.end(),
                       [](const LayerParams& g) { return g.weight.all_finite() && g.bias.all_finite(); });
}

} // namespace

bool NoiseSpec::active() const noexcept {
    return enabled && std::any_of(per_layer_sigma.begin(), per_layer_sigma.end(), [](double s) { return s > 0.0; });
}

Network build_network(const ArchitectureSpec& arch, FeatureShape input_shape, std::uint64_t seed) {
    Network net;
    net.arch = arch;
    net.input_shape = input_shape;
    net.shapes = infer_shapes(arch, input_shape);

    Rng rng(seed);
    for (std::size_t li = 0; li < arch.size(); ++li) {
        const FeatureShape in = net.shapes[li];
        const FeatureShape out = net.shapes[li + 1];
        LayerParams p;
        std::size_t fan_in = 0;
        if (const auto* conv = std::get_if<ConvLayer>(&arch.layers[li])) {
            fan_in = static_cast<std::size_t>(in.channels) * conv->filter_h * conv->filter_w;
            p.weight = Tensor({static_cast<std::size_t>(conv->filters), static_cast<std::size_t>(in.channels),
                               static_cast<std::size_t>(conv->filter_h), static_cast<std::size_t>(conv->filter_w)});
            p.bias = Tensor({static_cast<std::size_t>(conv->filters)});
        } else {
            fan_in = in.size();
            p.weight = Tensor({fan_in, static_cast<std::size_t>(out.channels)});
            p.bias = Tensor({static_cast<std::size_t>(out.channels)});
        }
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (double& v : p.weight.data) v = (2.0 * uniform01(rng) - 1.0) * limit;
        net.params.push_back(std::move(p));
    }
    return net;
}

WeightPerturbation sample_weight_noise(const Network& net, const NoiseSpec& noise, Rng& rng) {
    WeightPerturbation out(net.layers());
    if (!noise.enabled) return out;
    if (noise.per_layer_sigma.size() != net.layers()) {
        throw ConfigError("noise spec has " + std::to_string(noise.per_layer_sigma.size()) + " sigmas for " +
                          std::to_string(net.layers()) + " layers");
    }
    for (std::size_t li = 0; li < net.layers(); ++li) {
        const double sigma = noise.per_layer_sigma[li];
        if (sigma < 0.0) throw ConfigError("negative noise sigma");
        if (sigma == 0.0) continue;
        std::normal_distribution<double> dist(0.0, sigma);
        Tensor t(net.params[li].weight.shape);
        for (double& v : t.data) v = dist(rng);
        out[li] = std::move(t);
    }
    return out;
}

Tensor forward_perturbed(const Network& net, const Tensor& batch, const QuantizationScheme* quant,
                         const WeightPerturbation& perturbation) {
    return run_forward(net, batch, quant, perturbation, false).logits;
}

Tensor forward(const Network& net, const Tensor& batch, const QuantizationScheme* quant, const NoiseSpec* noise,
               Rng& rng) {
    WeightPerturbation perturbation;
    if (noise && noise->active()) perturbation = sample_weight_noise(net, *noise, rng);
    return forward_perturbed(net, batch, quant, perturbation);
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad) {
    const std::size_t N = logits.shape.at(0);
    const std::size_t C = logits.shape.at(1);
    if (labels.size() != N) throw ConfigError("label count does not match batch size");
    if (grad) *grad = Tensor(logits.shape, 0.0);
    double total = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
        const int y = labels[n];
        if (y < 0 || static_cast<std::size_t>(y) >= C) throw DataError("label " + std::to_string(y) + " out of range");
        const double* z = logits.data.data() + n * C;
        const double zmax = *std::max_element(z, z + C);
        double sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) sum += std::exp(z[c] - zmax);
        const double lse = zmax + std::log(sum);
        total += lse - z[y];
        if (grad) {
            for (std::size_t c = 0; c < C; ++c) {
                grad->data[n * C + c] = (std::exp(z[c] - lse) - (static_cast<int>(c) == y ? 1.0 : 0.0)) / static_cast<double>(N);
            }
        }
    }
    return total / static_cast<double>(N);
}

double loss_and_gradients(const Network& net, const Tensor& batch, std::span<const int> labels,
                          const QuantizationScheme* quant, const WeightPerturbation& perturbation,
                          std::vector<LayerParams>* grads) {
    Trace trace = run_forward(net, batch, quant, perturbation, grads != nullptr);
    Tensor dlogits;
    const double loss = softmax_cross_entropy(trace.logits, labels, grads ? &dlogits : nullptr);
    if (grads) backward(net, trace, dlogits, quant, *grads);
    return loss;
}

double train_step(Network& net, const Tensor& batch, std::span<const int> labels, const TrainConfig& cfg,
                  const QuantizationScheme* quant, const NoiseSpec* noise, Rng& rng) {
    WeightPerturbation perturbation;
    if (noise && noise->active()) perturbation = sample_weight_noise(net, *noise, rng);
    std::vector<LayerParams> grads;
    const double loss = loss_and_gradients(net, batch, labels, quant, perturbation, &grads);
    if (!std::isfinite(loss) || !grads_finite(grads)) {
        throw TrainingDiverged("non-finite loss or gradient during training");
    }
    for (std::size_t li = 0; li < net.layers(); ++li) {
        auto& w = net.params[li].weight.data;
        auto& b = net.params[li].bias.data;
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * grads[li].weight.data[i];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] -= cfg.learning_rate * grads[li].bias.data[i];
    }
    return loss;
}

TrainResult train(Network net, const Dataset& train_set, const Dataset& heldout, const TrainConfig& cfg,
                  const QuantizationScheme* quant, const NoiseSpec* noise) {
    if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
        throw ConfigError("invalid training configuration");
    }
    if (train_set.size() == 0) throw DataError("empty training set");

    Rng rng(derive_seed(cfg.rng_seed, {1}));
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    std::vector<int> labels;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_indices(train_set.size(), derive_seed(cfg.rng_seed, {2, static_cast<std::uint64_t>(epoch)}));
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            Tensor batch = gather_images(train_set, idx);
            labels.clear();
            for (auto i : idx) labels.push_back(train_set.labels[i]);
            train_step(net, batch, labels, cfg, quant, noise, rng);
        }
    }

    TrainResult result{std::move(net), 0.0};
    if (heldout.size() > 0) {
        Rng eval_rng(derive_seed(cfg.rng_seed, {3}));
        result.heldout_accuracy = evaluate_accuracy(result.net, heldout, quant, nullptr, 1, eval_rng);
    }
    return result;
}

double accuracy_of(const Tensor& logits, std::span<const int> labels) {
    const std::size_t N = logits.shape.at(0);
    const std::size_t C = logits.shape.at(1);
    if (N == 0) return 0.0;
    std::size_t correct = 0;
    for (std::size_t n = 0; n < N; ++n) {
        const double* z = logits.data.data() + n * C;
        const auto best = static_cast<int>(std::max_element(z, z + C) - z);
        if (best == labels[n]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(N);
}

double evaluate_accuracy(const Network& net, const Dataset& data, const QuantizationScheme* quant,
                         const NoiseSpec* noise, int n_trials, Rng& rng) {
    if (n_trials < 1) throw ConfigError("evaluate_accuracy needs at least one trial");
    if (data.size() == 0) return 0.0;
    const bool noisy = noise && noise->active();
    const int trials = noisy ? n_trials : 1;
    constexpr std::size_t kChunk = 256;

    double sum = 0.0;
    std::vector<std::size_t> idx;
    for (int t = 0; t < trials; ++t) {
        WeightPerturbation perturbation;
        if (noisy) perturbation = sample_weight_noise(net, *noise, rng);
        std::size_t correct = 0;
        for (std::size_t start = 0; start < data.size(); start += kChunk) {
            const std::size_t end = std::min(data.size(), start + kChunk);
            idx.resize(end - start);
            for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
            Tensor logits = forward_perturbed(net, gather_images(data, idx), quant, perturbation);
            const double acc = accuracy_of(logits, std::span<const int>(data.labels.data() + start, end - start));
            correct += static_cast<std::size_t>(std::llround(acc * static_cast<double>(end - start)));
        }
        sum += static_cast<double>(correct) / static_cast<double>(data.size());
    }
    return sum / static_cast<double>(trials);
}

} // namespace cimnas

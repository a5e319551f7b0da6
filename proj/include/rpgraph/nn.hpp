#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "rpgraph/common.hpp"
#include "rpgraph/digest.hpp"
#include "rpgraph/io.hpp"
#include "rpgraph/rng.hpp"
#include "rpgraph/rproj.hpp"

namespace rpgraph {

/// Training hit a non-finite value; message carries where.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Layers. Activations are row-major matrices; row-shared layers (Dense,
// Conv1d) apply the same weights to every row, so a stack of projection
// dimensions and a plain feature vector (one row) go through the same
// machinery.
// ---------------------------------------------------------------------------

enum class LayerKind : std::uint8_t {
    Dense = 0,     // per row: y = W x + b, shared across rows
    Relu = 1,
    Conv1d = 2,    // per row: sliding window (stride 1) -> channels, flattened
    MeanRows = 3,  // column means; collapses rows to a single row
};

template <typename R>
struct Layer {
    LayerKind kind;
    Matrix<R> w;        // Dense: out x in; Conv1d: channels x width
    std::vector<R> b;   // Dense: out; Conv1d: channels
    std::uint32_t conv_width = 3;

    std::size_t param_count() const { return w.size() + b.size(); }
};

template <typename R>
Layer<R> dense_layer(std::size_t in, std::size_t out) {
    Layer<R> l;
    l.kind = LayerKind::Dense;
    l.w = Matrix<R>(out, in);
    l.b.assign(out, R(0));
    return l;
}

template <typename R>
Layer<R> relu_layer() {
    return Layer<R>{LayerKind::Relu, {}, {}, 0};
}

template <typename R>
Layer<R> conv1d_layer(std::uint32_t channels, std::uint32_t width) {
    Layer<R> l;
    l.kind = LayerKind::Conv1d;
    l.w = Matrix<R>(channels, width);
    l.b.assign(channels, R(0));
    l.conv_width = width;
    return l;
}

template <typename R>
Layer<R> mean_rows_layer() {
    return Layer<R>{LayerKind::MeanRows, {}, {}, 0};
}

namespace detail {

/// Column sums taken in value order: permuting the rows of `in` cannot
/// change the result, not even in the last bit.
template <typename R>
Matrix<R> mean_rows(const Matrix<R>& in) {
    Matrix<R> out(1, in.cols());
    std::vector<double> terms(in.rows());
    for (std::size_t c = 0; c < in.cols(); ++c) {
        for (std::size_t r = 0; r < in.rows(); ++r) terms[r] = static_cast<double>(in(r, c));
        out(0, c) = static_cast<R>(ordered_sum(terms) / static_cast<double>(in.rows()));
    }
    return out;
}

}  // namespace detail

template <typename R>
Matrix<R> layer_forward(const Layer<R>& l, const Matrix<R>& in) {
    switch (l.kind) {
        case LayerKind::Dense: {
            if (in.cols() != l.w.cols())
                throw ValidationError("dense layer: input width " + std::to_string(in.cols()) +
                                      " != " + std::to_string(l.w.cols()));
            Matrix<R> out(in.rows(), l.w.rows());
            for (std::size_t r = 0; r < in.rows(); ++r) {
                const R* x = in.row(r);
                for (std::size_t o = 0; o < l.w.rows(); ++o) {
                    double acc = static_cast<double>(l.b[o]);
                    const R* wr = l.w.row(o);
                    for (std::size_t q = 0; q < l.w.cols(); ++q)
                        acc += static_cast<double>(wr[q]) * static_cast<double>(x[q]);
                    out(r, o) = static_cast<R>(acc);
                }
            }
            return out;
        }
        case LayerKind::Relu: {
            Matrix<R> out = in;
            for (auto& v : out.data()) v = v > R(0) ? v : R(0);
            return out;
        }
        case LayerKind::Conv1d: {
            if (in.cols() < l.conv_width)
                throw ValidationError("conv layer: input narrower than kernel");
            const std::size_t pos = in.cols() - l.conv_width + 1;
            const std::size_t ch = l.w.rows();
            Matrix<R> out(in.rows(), pos * ch);
            for (std::size_t r = 0; r < in.rows(); ++r) {
                const R* x = in.row(r);
                for (std::size_t t = 0; t < pos; ++t) {
                    for (std::size_t c = 0; c < ch; ++c) {
                        double acc = static_cast<double>(l.b[c]);
                        const R* wr = l.w.row(c);
                        for (std::size_t q = 0; q < l.conv_width; ++q)
                            acc += static_cast<double>(wr[q]) * static_cast<double>(x[t + q]);
                        out(r, t * ch + c) = static_cast<R>(acc);
                    }
                }
            }
            return out;
        }
        case LayerKind::MeanRows:
            return detail::mean_rows(in);
    }
    throw ValidationError("unknown layer kind");
}

/// Gradients for one layer. `dout` is dLoss/d(output); returns
/// dLoss/d(input) and accumulates parameter gradients into gw/gb.
template <typename R>
Matrix<R> layer_backward(const Layer<R>& l, const Matrix<R>& in, const Matrix<R>& out,
                         const Matrix<R>& dout, Matrix<R>& gw, std::vector<R>& gb) {
    switch (l.kind) {
        case LayerKind::Dense: {
            Matrix<R> din(in.rows(), in.cols());
            for (std::size_t r = 0; r < in.rows(); ++r) {
                const R* x = in.row(r);
                const R* dy = dout.row(r);
                R* dx = din.row(r);
                for (std::size_t q = 0; q < in.cols(); ++q) dx[q] = R(0);
                for (std::size_t o = 0; o < l.w.rows(); ++o) {
                    const R g = dy[o];
                    gb[o] += g;
                    R* gwr = gw.row(o);
                    const R* wr = l.w.row(o);
                    for (std::size_t q = 0; q < l.w.cols(); ++q) {
                        gwr[q] += g * x[q];
                        dx[q] += g * wr[q];
                    }
                }
            }
            return din;
        }
        case LayerKind::Relu: {
            Matrix<R> din = dout;
            for (std::size_t k = 0; k < din.size(); ++k)
                if (in.data()[k] <= R(0)) din.data()[k] = R(0);
            return din;
        }
        case LayerKind::Conv1d: {
            const std::size_t pos = in.cols() - l.conv_width + 1;
            const std::size_t ch = l.w.rows();
            Matrix<R> din(in.rows(), in.cols());
            for (std::size_t r = 0; r < in.rows(); ++r) {
                const R* x = in.row(r);
                const R* dy = dout.row(r);
                R* dx = din.row(r);
                for (std::size_t t = 0; t < pos; ++t) {
                    for (std::size_t c = 0; c < ch; ++c) {
                        const R g = dy[t * ch + c];
                        gb[c] += g;
                        R* gwr = gw.row(c);
                        const R* wr = l.w.row(c);
                        for (std::size_t q = 0; q < l.conv_width; ++q) {
                            gwr[q] += g * x[t + q];
                            dx[t + q] += g * wr[q];
                        }
                    }
                }
            }
            return din;
        }
        case LayerKind::MeanRows: {
            Matrix<R> din(in.rows(), in.cols());
            const R scale = R(1) / static_cast<R>(in.rows());
            for (std::size_t r = 0; r < in.rows(); ++r)
                for (std::size_t c = 0; c < in.cols(); ++c) din(r, c) = dout(0, c) * scale;
            return din;
        }
    }
    (void)out;
    throw ValidationError("unknown layer kind");
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

template <typename R>
struct Model {
    std::vector<Layer<R>> layers;
    std::string kind = "fcn";

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.param_count();
        return n;
    }

    /// He-style init, deterministic per seed.
    void init_params(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (auto& l : layers) {
            if (l.w.size() == 0) continue;
            const double scale = std::sqrt(2.0 / static_cast<double>(l.w.cols()));
            for (auto& v : l.w.data()) v = static_cast<R>(scale * normal(rng));
            std::fill(l.b.begin(), l.b.end(), R(0));
        }
    }

    Matrix<R> forward(const Matrix<R>& input) const {
        Matrix<R> a = input;
        for (const auto& l : layers) a = layer_forward(l, a);
        return a;
    }

    /// Forward keeping every activation (index 0 = input).
    std::vector<Matrix<R>> forward_trace(const Matrix<R>& input) const {
        std::vector<Matrix<R>> acts;
        acts.reserve(layers.size() + 1);
        acts.push_back(input);
        for (const auto& l : layers) acts.push_back(layer_forward(l, acts.back()));
        return acts;
    }

    bool params_finite() const {
        for (const auto& l : layers) {
            for (const auto& v : l.w.data())
                if (!std::isfinite(static_cast<double>(v))) return false;
            for (const auto& v : l.b)
                if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    /// Digest over the f32 little-endian serialization of all parameters.
    Digest param_digest() const {
        Sha256 h;
        auto put = [&](R v) {
            const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
            std::uint8_t b[4] = {static_cast<std::uint8_t>(bits), static_cast<std::uint8_t>(bits >> 8),
                                 static_cast<std::uint8_t>(bits >> 16),
                                 static_cast<std::uint8_t>(bits >> 24)};
            h.update(b, 4);
        };
        for (const auto& l : layers) {
            for (const auto& v : l.w.data()) put(v);
            for (const auto& v : l.b) put(v);
        }
        return h.finish();
    }
};

/// Feature-vector classifier: Dense/Relu stack ending in `classes` logits
/// (or one score for binary tasks).
template <typename R>
Model<R> make_fcn(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                  std::size_t outputs, std::uint64_t seed) {
    Model<R> m;
    m.kind = "fcn";
    std::size_t cur = input_dim;
    for (std::size_t h : hidden) {
        m.layers.push_back(dense_layer<R>(cur, h));
        m.layers.push_back(relu_layer<R>());
        cur = h;
    }
    m.layers.push_back(dense_layer<R>(cur, outputs));
    m.init_params(seed);
    return m;
}

struct ConvNetSpec {
    std::vector<std::size_t> conv_channels = {64, 64};
    std::vector<std::size_t> head_hidden = {64};
    /// 0 = kernel spans the whole row; else sliding window of this width.
    std::uint32_t window = 0;
};

/// Row-shared transform over the power axis, permutation-invariant mean
/// over projection dimensions, then a dense head.
template <typename R>
Model<R> make_convnet(std::size_t input_width, const ConvNetSpec& spec, std::size_t outputs,
                      std::uint64_t seed) {
    Model<R> m;
    m.kind = "convnet";
    std::size_t cur = input_width;
    for (std::size_t k = 0; k < spec.conv_channels.size(); ++k) {
        const std::size_t ch = spec.conv_channels[k];
        if (spec.window == 0 || k > 0) {
            m.layers.push_back(dense_layer<R>(cur, ch));
            cur = ch;
        } else {
            m.layers.push_back(conv1d_layer<R>(static_cast<std::uint32_t>(ch), spec.window));
            cur = (cur - spec.window + 1) * ch;
        }
        m.layers.push_back(relu_layer<R>());
    }
    m.layers.push_back(mean_rows_layer<R>());
    for (std::size_t h : spec.head_hidden) {
        m.layers.push_back(dense_layer<R>(cur, h));
        m.layers.push_back(relu_layer<R>());
        cur = h;
    }
    m.layers.push_back(dense_layer<R>(cur, outputs));
    m.init_params(seed);
    return m;
}

/// Per-node input: dims x (max_power+1), entry (p,k) = R^(k)[i,p].
template <typename R, typename T>
Matrix<R> build_convnet_input(const ProjectionSet<T>& ps, NodeId i) {
    if (i >= ps.node_count()) throw ValidationError("node id out of range");
    const std::uint32_t w = ps.max_power() + 1;
    Matrix<R> x(ps.dim(), w);
    for (std::uint32_t k = 0; k < w; ++k) {
        const T* src = ps.matrices[k].row(i);
        for (std::uint32_t p = 0; p < ps.dim(); ++p) x(p, k) = static_cast<R>(src[p]);
    }
    return x;
}

/// Pair input: rows of the two per-node inputs concatenated, width 2(N+1).
template <typename R, typename T>
Matrix<R> build_convnet_input(const ProjectionSet<T>& ps, NodeId i, NodeId j) {
    if (i >= ps.node_count() || j >= ps.node_count())
        throw ValidationError("node id out of range");
    const std::uint32_t w = ps.max_power() + 1;
    Matrix<R> z(ps.dim(), 2 * w);
    for (std::uint32_t k = 0; k < w; ++k) {
        const T* si = ps.matrices[k].row(i);
        const T* sj = ps.matrices[k].row(j);
        for (std::uint32_t p = 0; p < ps.dim(); ++p) {
            z(p, k) = static_cast<R>(si[p]);
            z(p, w + k) = static_cast<R>(sj[p]);
        }
    }
    return z;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

enum class LossKind : std::uint8_t {
    SoftmaxCrossEntropy = 0,  // logits 1 x C, integer class label
    BinaryCrossEntropy = 1,   // score at (0,0), label 0/1
};

template <typename R>
std::vector<double> softmax(const Matrix<R>& logits) {
    std::vector<double> p(logits.cols());
    double mx = -1e300;
    for (std::size_t c = 0; c < logits.cols(); ++c)
        mx = std::max(mx, static_cast<double>(logits(0, c)));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
        p[c] = std::exp(static_cast<double>(logits(0, c)) - mx);
        z += p[c];
    }
    for (auto& v : p) v /= z;
    return p;
}

/// Loss value and dLoss/dlogits for one sample.
template <typename R>
double loss_and_grad(LossKind kind, const Matrix<R>& logits, int label, Matrix<R>& dlogits) {
    dlogits = Matrix<R>(logits.rows(), logits.cols());
    switch (kind) {
        case LossKind::SoftmaxCrossEntropy: {
            if (label < 0 || static_cast<std::size_t>(label) >= logits.cols())
                throw ValidationError("class label out of range");
            const auto p = softmax(logits);
            for (std::size_t c = 0; c < logits.cols(); ++c)
                dlogits(0, c) = static_cast<R>(p[c] - (static_cast<int>(c) == label ? 1.0 : 0.0));
            return -std::log(std::max(p[label], 1e-300));
        }
        case LossKind::BinaryCrossEntropy: {
            const double z = static_cast<double>(logits(0, 0));
            const double y = label ? 1.0 : 0.0;
            const double sig = 1.0 / (1.0 + std::exp(-z));
            dlogits(0, 0) = static_cast<R>(sig - y);
            // stable: max(z,0) - z*y + log(1+exp(-|z|))
            return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        }
    }
    throw ValidationError("unknown loss kind");
}

/// Binary score or max-logit class for a forward output.
template <typename R>
int predict_label(LossKind kind, const Matrix<R>& out) {
    if (kind == LossKind::BinaryCrossEntropy) return out(0, 0) > R(0) ? 1 : 0;
    std::size_t best = 0;
    for (std::size_t c = 1; c < out.cols(); ++c)
        if (out(0, c) > out(0, best)) best = c;
    return static_cast<int>(best);
}

// ---------------------------------------------------------------------------
// Gradients over a batch
// ---------------------------------------------------------------------------

template <typename R>
struct Gradients {
    std::vector<Matrix<R>> gw;
    std::vector<std::vector<R>> gb;

    explicit Gradients(const Model<R>& m) {
        for (const auto& l : m.layers) {
            gw.emplace_back(l.w.rows(), l.w.cols());
            gb.emplace_back(l.b.size(), R(0));
        }
    }

    void scale(R s) {
        for (auto& g : gw)
            for (auto& v : g.data()) v *= s;
        for (auto& g : gb)
            for (auto& v : g) v *= s;
    }
};

/// Mean loss over the batch; gradients of the mean loss land in `grads`.
template <typename R>
double batch_backward(const Model<R>& m, LossKind loss, const std::vector<const Matrix<R>*>& xs,
                      const std::vector<int>& labels, Gradients<R>& grads) {
    double total_loss = 0.0;
    Matrix<R> dlogits;
    for (std::size_t s = 0; s < xs.size(); ++s) {
        const auto acts = m.forward_trace(*xs[s]);
        const double sample_loss = loss_and_grad(loss, acts.back(), labels[s], dlogits);
        if (!std::isfinite(sample_loss))
            throw NumericError("non-finite loss on sample " + std::to_string(s));
        total_loss += sample_loss;
        Matrix<R> d = dlogits;
        for (std::size_t li = m.layers.size(); li-- > 0;)
            d = layer_backward(m.layers[li], acts[li], acts[li + 1], d, grads.gw[li],
                               grads.gb[li]);
    }
    grads.scale(R(1) / static_cast<R>(xs.size()));
    return total_loss / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------
// Optimizers and the training loop
// ---------------------------------------------------------------------------

enum class OptimizerKind : std::uint8_t { Sgd = 0, Adam = 1 };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    std::size_t batch_size = 256;
    std::uint32_t epochs = 10;
    LossKind loss = LossKind::SoftmaxCrossEntropy;
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate <= 0) throw ValidationError("learning rate must be positive");
        if (batch_size == 0) throw ValidationError("batch size must be positive");
    }
};

template <typename R>
struct AdamState {
    std::vector<Matrix<R>> mw, vw;
    std::vector<std::vector<R>> mb, vb;
    std::uint64_t step = 0;

    explicit AdamState(const Model<R>& m) {
        for (const auto& l : m.layers) {
            mw.emplace_back(l.w.rows(), l.w.cols());
            vw.emplace_back(l.w.rows(), l.w.cols());
            mb.emplace_back(l.b.size(), R(0));
            vb.emplace_back(l.b.size(), R(0));
        }
    }
};

template <typename R>
void apply_update(Model<R>& m, const Gradients<R>& g, const TrainConfig& cfg,
                  AdamState<R>& adam) {
    if (cfg.optimizer == OptimizerKind::Sgd) {
        const R lr = static_cast<R>(cfg.learning_rate);
        for (std::size_t li = 0; li < m.layers.size(); ++li) {
            auto& l = m.layers[li];
            for (std::size_t k = 0; k < l.w.size(); ++k) l.w.data()[k] -= lr * g.gw[li].data()[k];
            for (std::size_t k = 0; k < l.b.size(); ++k) l.b[k] -= lr * g.gb[li][k];
        }
        return;
    }
    adam.step += 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(adam.step));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(adam.step));
    auto update = [&](R& p, R& mm, R& vv, R grad) {
        const double gd = static_cast<double>(grad);
        const double m1 = cfg.beta1 * static_cast<double>(mm) + (1 - cfg.beta1) * gd;
        const double v1 = cfg.beta2 * static_cast<double>(vv) + (1 - cfg.beta2) * gd * gd;
        mm = static_cast<R>(m1);
        vv = static_cast<R>(v1);
        p -= static_cast<R>(cfg.learning_rate * (m1 / c1) / (std::sqrt(v1 / c2) + cfg.epsilon));
    };
    for (std::size_t li = 0; li < m.layers.size(); ++li) {
        auto& l = m.layers[li];
        for (std::size_t k = 0; k < l.w.size(); ++k)
            update(l.w.data()[k], adam.mw[li].data()[k], adam.vw[li].data()[k],
                   g.gw[li].data()[k]);
        for (std::size_t k = 0; k < l.b.size(); ++k)
            update(l.b[k], adam.mb[li][k], adam.vb[li][k], g.gb[li][k]);
    }
}

template <typename R>
struct Dataset {
    std::vector<Matrix<R>> inputs;
    std::vector<int> labels;

    std::size_t size() const { return inputs.size(); }
};

struct EpochStats {
    std::uint32_t epoch;
    double train_loss;
    double val_loss;
    double val_accuracy;
};

template <typename R>
struct TrainResult {
    Model<R> model;  // best-validation-loss parameters
    std::vector<EpochStats> history;
    double best_val_loss = 0.0;
    std::uint32_t best_epoch = 0;
};

template <typename R>
double mean_loss(const Model<R>& m, LossKind loss, const Dataset<R>& data) {
    double total = 0.0;
    Matrix<R> dl;
    for (std::size_t s = 0; s < data.size(); ++s)
        total += loss_and_grad(loss, m.forward(data.inputs[s]), data.labels[s], dl);
    return data.size() ? total / static_cast<double>(data.size()) : 0.0;
}

template <typename R>
double accuracy_on(const Model<R>& m, LossKind loss, const Dataset<R>& data) {
    std::size_t hit = 0;
    for (std::size_t s = 0; s < data.size(); ++s)
        if (predict_label(loss, m.forward(data.inputs[s])) == data.labels[s]) ++hit;
    return data.size() ? static_cast<double>(hit) / static_cast<double>(data.size()) : 0.0;
}

/// Mini-batch training with per-epoch seeded shuffles and best-validation
/// model selection. Single-threaded; two runs with the same seed produce
/// bit-identical parameters.
template <typename R>
TrainResult<R> train(Model<R> model, const Dataset<R>& train_data, const Dataset<R>& val_data,
                     const TrainConfig& cfg) {
    cfg.validate();
    if (train_data.size() == 0) throw ValidationError("empty training set");
    for (int y : train_data.labels)
        if (y < 0) throw ValidationError("negative label");

    TrainResult<R> result;
    result.model = model;
    result.best_val_loss = std::numeric_limits<double>::infinity();
    AdamState<R> adam(model);

    std::vector<std::size_t> order(train_data.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;

    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 rng(derive_seed(cfg.seed, epoch));
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t hi = std::min(order.size(), at + cfg.batch_size);
            std::vector<const Matrix<R>*> xs;
            std::vector<int> ys;
            xs.reserve(hi - at);
            for (std::size_t k = at; k < hi; ++k) {
                xs.push_back(&train_data.inputs[order[k]]);
                ys.push_back(train_data.labels[order[k]]);
            }
            Gradients<R> grads(model);
            double batch_loss;
            try {
                batch_loss = batch_backward(model, cfg.loss, xs, ys, grads);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + ": " + e.what());
            }
            apply_update(model, grads, cfg, adam);
            if (!model.params_finite())
                throw NumericError("non-finite parameter after update, epoch " +
                                   std::to_string(epoch) + " batch " + std::to_string(batches));
            epoch_loss += batch_loss;
            ++batches;
        }
        EpochStats st;
        st.epoch = epoch;
        st.train_loss = batches ? epoch_loss / static_cast<double>(batches) : 0.0;
        st.val_loss = val_data.size() ? mean_loss(model, cfg.loss, val_data) : st.train_loss;
        st.val_accuracy = val_data.size() ? accuracy_on(model, cfg.loss, val_data) : 0.0;
        result.history.push_back(st);
        if (st.val_loss < result.best_val_loss) {
            result.best_val_loss = st.val_loss;
            result.best_epoch = epoch;
            result.model = model;
        }
    }
    return result;
}

inline void write_history_csv(const std::vector<EpochStats>& history,
                              const std::filesystem::path& path) {
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        std::ofstream out(tmp);
        if (!out) throw IoError("cannot write history: " + tmp.string());
        out << "epoch,train_loss,val_loss,metric\n";
        char buf[128];
        for (const auto& st : history) {
            std::snprintf(buf, sizeof buf, "%u,%.9g,%.9g,%.9g\n", st.epoch, st.train_loss,
                          st.val_loss, st.val_accuracy);
            out << buf;
        }
        if (!out) throw IoError("failed writing history: " + tmp.string());
    });
}

// ---------------------------------------------------------------------------
// Model file: magic "MDL1", version u16, kind string, seed u64, config
// digest (32 bytes), layer table, then f32 parameter blocks.
// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kModelFormatVersion = 1;

template <typename R>
void save_model(const Model<R>& m, std::uint64_t seed, const Digest& config_digest,
                const std::filesystem::path& path) {
    atomic_write(path, [&](const std::filesystem::path& tmp) {
        BinaryWriter w(tmp);
        w.bytes("MDL1", 4);
        w.u16(kModelFormatVersion);
        w.str(m.kind);
        w.u64(seed);
        w.bytes(config_digest.bytes.data(), config_digest.bytes.size());
        w.u32(static_cast<std::uint32_t>(m.layers.size()));
        for (const auto& l : m.layers) {
            w.u8(static_cast<std::uint8_t>(l.kind));
            w.u32(static_cast<std::uint32_t>(l.w.rows()));
            w.u32(static_cast<std::uint32_t>(l.w.cols()));
            w.u32(l.conv_width);
        }
        for (const auto& l : m.layers) {
            for (const auto& v : l.w.data()) w.f32(static_cast<float>(v));
            for (const auto& v : l.b) w.f32(static_cast<float>(v));
        }
        w.close();
    });
}

template <typename R = float>
Model<R> load_model(const std::filesystem::path& path, std::uint64_t* seed_out = nullptr,
                    Digest* config_digest_out = nullptr) {
    BinaryReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "MDL1")
        throw IoError("not a model file (bad magic): " + path.string());
    if (r.u16() != kModelFormatVersion) throw IoError("unsupported model version");
    Model<R> m;
    m.kind = r.str();
    const std::uint64_t seed = r.u64();
    if (seed_out) *seed_out = seed;
    Digest cd;
    r.bytes(cd.bytes.data(), cd.bytes.size());
    if (config_digest_out) *config_digest_out = cd;
    const std::uint32_t nlayers = r.u32();
    for (std::uint32_t k = 0; k < nlayers; ++k) {
        Layer<R> l;
        l.kind = static_cast<LayerKind>(r.u8());
        const std::uint32_t rows = r.u32(), cols = r.u32();
        l.w = Matrix<R>(rows, cols);
        l.conv_width = r.u32();
        const std::size_t nb = l.kind == LayerKind::Dense
                                   ? rows
                                   : (l.kind == LayerKind::Conv1d ? rows : 0);
        l.b.assign(nb, R(0));
        m.layers.push_back(std::move(l));
    }
    for (auto& l : m.layers) {
        for (auto& v : l.w.data()) v = static_cast<R>(r.f32());
        for (auto& v : l.b) v = static_cast<R>(r.f32());
    }
    if (!r.at_eof()) throw IoError("trailing bytes in model file: " + path.string());
    return m;
}

}  // namespace rpgraph

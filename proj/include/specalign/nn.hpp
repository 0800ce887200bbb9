#pragma once

// Small dense feed-forward networks trained with minibatch first-order
// optimizers. Parameters live in one flat vector so optimizers, gradient
// checks and checkpoints all work on the same layout.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "specalign/data_gen.hpp"
#include "specalign/spectral.hpp"

namespace specalign {

enum class Activation { relu, tanh, prelu, leaky_relu, linear, rbf_layer };
enum class LossKind { mse, logistic };
enum class Optimizer { sgd, sgd_momentum, adam, rmsprop };

inline const char* to_string(Activation a) {
    switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::prelu: return "prelu";
    case Activation::leaky_relu: return "leaky_relu";
    case Activation::linear: return "linear";
    case Activation::rbf_layer: return "rbf_layer";
    }
    return "?";
}

inline const char* to_string(LossKind l) { return l == LossKind::mse ? "mse" : "logistic"; }

inline const char* to_string(Optimizer o) {
    switch (o) {
    case Optimizer::sgd: return "sgd";
    case Optimizer::sgd_momentum: return "sgd_momentum";
    case Optimizer::adam: return "adam";
    case Optimizer::rmsprop: return "rmsprop";
    }
    return "?";
}

inline Activation parse_activation(const std::string& s) {
    for (auto a : {Activation::relu, Activation::tanh, Activation::prelu, Activation::leaky_relu,
                   Activation::linear, Activation::rbf_layer}) {
        if (s == to_string(a)) return a;
    }
    throw InvalidInput("unknown activation '" + s + "'");
}

inline LossKind parse_loss(const std::string& s) {
    if (s == "mse") return LossKind::mse;
    if (s == "logistic") return LossKind::logistic;
    throw InvalidInput("unknown loss '" + s + "'");
}

inline Optimizer parse_optimizer(const std::string& s) {
    for (auto o : {Optimizer::sgd, Optimizer::sgd_momentum, Optimizer::adam, Optimizer::rmsprop}) {
        if (s == to_string(o)) return o;
    }
    throw InvalidInput("unknown optimizer '" + s + "'");
}

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kPreluInitSlope = 0.25;

/// Widths run input, hidden..., output (output must be 1). With
/// `rbf_layer` the first hidden layer is made of Gaussian units with
/// trainable centers and fixed bandwidth; any deeper hidden layers use relu.
struct MlpSpec {
    std::vector<int> layer_widths{60, 60, 1};
    Activation activation = Activation::relu;
    LossKind loss = LossKind::mse;
    std::uint64_t init_seed = 0;
    double rbf_bandwidth = 1.0;

    int hidden_layers() const { return static_cast<int>(layer_widths.size()) - 2; }

    void validate() const {
        if (layer_widths.size() < 3) throw InvalidInput("MlpSpec: need input, at least one hidden, and output widths");
        for (int w : layer_widths) if (w < 1) throw InvalidInput("MlpSpec: widths must be >= 1");
        if (layer_widths.back() != 1) throw InvalidInput("MlpSpec: output width must be 1");
        if (activation == Activation::rbf_layer && !(rbf_bandwidth > 0.0)) {
            throw InvalidInput("MlpSpec: rbf bandwidth must be > 0");
        }
    }

    Activation hidden_activation(int layer) const {
        if (activation == Activation::rbf_layer) return layer == 0 ? Activation::rbf_layer : Activation::relu;
        return activation;
    }
};

struct TrainConfig {
    Optimizer optimizer = Optimizer::adam;
    double lr = 0.001;
    int batch_size = 64;
    int epochs = 100;
    std::uint64_t shuffle_seed = 0;
    // Stop early once the epoch loss improved by less than `convergence_tol`
    // (relative) over the last `convergence_window` epochs.
    bool until_convergence = false;
    double convergence_tol = 1e-5;
    int convergence_window = 20;

    void validate() const {
        if (!(lr > 0.0)) throw InvalidConfig("TrainConfig: lr must be > 0");
        if (batch_size < 1) throw InvalidConfig("TrainConfig: batch_size must be >= 1");
        if (epochs < 0) throw InvalidConfig("TrainConfig: epochs must be >= 0");
    }
};

struct LayerLayout {
    int in = 0;
    int out = 0;
    Activation act = Activation::linear;
    Eigen::Index weight = 0;  // out x in, column-major (centers for rbf units)
    Eigen::Index bias = -1;   // absent for rbf units
    Eigen::Index slope = -1;  // prelu only
};

struct MlpModel {
    MlpSpec spec;
    std::vector<LayerLayout> layers; // hidden layers then the output layer
    Vec params;
    bool rbf_centers_attached = false;

    Eigen::Index parameter_count() const { return params.size(); }

    Eigen::Map<Mat> weight(std::size_t k) {
        return {params.data() + layers[k].weight, layers[k].out, layers[k].in};
    }
    Eigen::Map<const Mat> weight(std::size_t k) const {
        return {params.data() + layers[k].weight, layers[k].out, layers[k].in};
    }
    Eigen::Map<const Vec> bias(std::size_t k) const {
        return {params.data() + layers[k].bias, layers[k].out};
    }
    double slope(std::size_t k) const {
        if (layers[k].act == Activation::prelu) return params(layers[k].slope);
        if (layers[k].act == Activation::leaky_relu) return kLeakySlope;
        return 0.0;
    }
};

inline std::vector<LayerLayout> build_layout(const MlpSpec& spec) {
    std::vector<LayerLayout> layers;
    Eigen::Index offset = 0;
    const int hidden = spec.hidden_layers();
    for (int k = 0; k <= hidden; ++k) {
        LayerLayout l;
        l.in = spec.layer_widths[static_cast<std::size_t>(k)];
        l.out = spec.layer_widths[static_cast<std::size_t>(k) + 1];
        l.act = k < hidden ? spec.hidden_activation(k) : Activation::linear;
        l.weight = offset;
        offset += static_cast<Eigen::Index>(l.in) * l.out;
        if (l.act != Activation::rbf_layer) {
            l.bias = offset;
            offset += l.out;
        }
        if (l.act == Activation::prelu) l.slope = offset++;
        layers.push_back(l);
    }
    return layers;
}

/// Glorot-uniform weights and zero biases, deterministic under init_seed.
inline MlpModel init_model(const MlpSpec& spec) {
    spec.validate();
    MlpModel model;
    model.spec = spec;
    model.layers = build_layout(spec);
    const auto& last = model.layers.back();
    const Eigen::Index total = last.bias + last.out;
    model.params = Vec::Zero(total);

    std::mt19937_64 rng(spec.init_seed);
    for (std::size_t k = 0; k < model.layers.size(); ++k) {
        const auto& l = model.layers[k];
        const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        auto w = model.weight(k);
        for (Eigen::Index j = 0; j < w.cols(); ++j)
            for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
        if (l.slope >= 0) model.params(l.slope) = kPreluInitSlope;
    }
    return model;
}

/// Places the rbf centers on a random subset of the rows of x (cycling
/// through the rows when there are more units than samples).
inline void attach_rbf_centers(MlpModel& model, const Mat& x, std::uint64_t seed) {
    if (model.layers.empty() || model.layers.front().act != Activation::rbf_layer) return;
    if (x.cols() != model.layers.front().in) throw InvalidInput("attach_rbf_centers: input width mismatch");
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(x.rows()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    auto centers = model.weight(0);
    for (Eigen::Index j = 0; j < centers.rows(); ++j) {
        centers.row(j) = x.row(rows[static_cast<std::size_t>(j) % rows.size()]);
    }
    model.rbf_centers_attached = true;
}

/// feature(i, j) = exp(-||x_i - c_j||^2 / (2 bandwidth^2)).
inline Mat rbf_feature_map(const Mat& x, const Mat& centers, double bandwidth) {
    if (x.cols() != centers.cols()) throw InvalidInput("rbf_feature_map: dimension mismatch");
    if (!(bandwidth > 0.0)) throw InvalidInput("rbf_feature_map: bandwidth must be > 0");
    Mat out(x.rows(), centers.rows());
    const double scale = 1.0 / (2.0 * bandwidth * bandwidth);
    for (Eigen::Index j = 0; j < centers.rows(); ++j) {
        out.col(j) = (-(x.rowwise() - centers.row(j)).rowwise().squaredNorm().array() * scale).exp().matrix();
    }
    return out;
}

namespace detail {

struct ForwardCache {
    std::vector<Mat> pre;  // pre-activations per hidden layer
    std::vector<Mat> post; // post[0] = input, post[k+1] = output of hidden layer k
    Vec output;
};

inline void activate(Activation act, double slope, const Mat& z, Mat& a) {
    switch (act) {
    case Activation::relu: a = z.cwiseMax(0.0); break;
    case Activation::tanh: a = z.array().tanh().matrix(); break;
    case Activation::prelu:
    case Activation::leaky_relu: a = (z.array() > 0.0).select(z, slope * z); break;
    case Activation::linear:
    case Activation::rbf_layer: a = z; break;
    }
}

inline ForwardCache forward(const MlpModel& model, const Mat& x, std::size_t stop_after = SIZE_MAX) {
    const std::size_t hidden = model.layers.size() - 1;
    ForwardCache c;
    c.post.push_back(x);
    for (std::size_t k = 0; k < hidden && k < stop_after; ++k) {
        const auto& l = model.layers[k];
        if (l.act == Activation::rbf_layer) {
            Mat h = rbf_feature_map(c.post.back(), model.weight(k), model.spec.rbf_bandwidth);
            c.pre.push_back(h);
            c.post.push_back(std::move(h));
            continue;
        }
        Mat z = c.post.back() * model.weight(k).transpose();
        z.rowwise() += model.bias(k).transpose();
        Mat a;
        activate(l.act, model.slope(k), z, a);
        c.pre.push_back(std::move(z));
        c.post.push_back(std::move(a));
    }
    if (stop_after >= hidden) {
        c.output = c.post.back() * model.weight(hidden).transpose();
        c.output.array() += model.bias(hidden)(0);
    }
    return c;
}

// Numerically stable log(1 + exp(v)).
inline double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

inline double sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

} // namespace detail

inline Vec forward(const MlpModel& model, const Mat& x) {
    if (x.cols() != model.layers.front().in) throw InvalidInput("forward: input width mismatch");
    return detail::forward(model, x).output;
}

/// Per-sample loss averaged over the rows. The logistic loss is
/// log(1 + exp(-f y)) / log 2, which equals 1 at f = 0.
inline double mean_loss(LossKind kind, const Vec& f, const Vec& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        if (kind == LossKind::mse) {
            const double r = f(i) - y(i);
            total += r * r;
        } else {
            total += detail::softplus(-f(i) * y(i)) / std::numbers::ln2;
        }
    }
    return f.size() > 0 ? total / static_cast<double>(f.size()) : 0.0;
}

inline double evaluate_loss(const MlpModel& model, const Dataset& data) {
    return mean_loss(model.spec.loss, forward(model, data.x), data.y);
}

/// Mean loss over (x, y) and its gradient with respect to model.params.
inline double loss_and_gradient(const MlpModel& model, const Mat& x, const Vec& y, Vec& grad) {
    const auto cache = detail::forward(model, x);
    const Eigen::Index b = x.rows();
    const double inv_b = 1.0 / static_cast<double>(b);

    Vec delta(b);
    if (model.spec.loss == LossKind::mse) {
        delta = 2.0 * inv_b * (cache.output - y);
    } else {
        for (Eigen::Index i = 0; i < b; ++i) {
            delta(i) = -y(i) * detail::sigmoid(-cache.output(i) * y(i)) * inv_b / std::numbers::ln2;
        }
    }
    const double loss = mean_loss(model.spec.loss, cache.output, y);

    grad.setZero(model.params.size());
    const std::size_t hidden = model.layers.size() - 1;

    const auto& out = model.layers[hidden];
    Eigen::Map<Mat>(grad.data() + out.weight, out.out, out.in) = delta.transpose() * cache.post[hidden];
    grad(out.bias) = delta.sum();

    Mat upstream = delta * model.weight(hidden); // b x width of last hidden layer
    for (std::size_t k = hidden; k-- > 0;) {
        const auto& l = model.layers[k];
        const Mat& z = cache.pre[k];
        const Mat& a_prev = cache.post[k];
        Eigen::Map<Mat> gw(grad.data() + l.weight, l.out, l.in);

        if (l.act == Activation::rbf_layer) {
            // d h_ij / d c_j = h_ij (x_i - c_j) / bandwidth^2
            const double inv_bw2 = 1.0 / (model.spec.rbf_bandwidth * model.spec.rbf_bandwidth);
            const Mat g = upstream.cwiseProduct(z);
            gw = inv_bw2 * (g.transpose() * a_prev - g.colwise().sum().transpose().asDiagonal() * model.weight(k));
            continue; // rbf units only ever form the first layer
        }

        Mat dz;
        switch (l.act) {
        case Activation::relu: dz = (z.array() > 0.0).select(upstream, 0.0); break;
        case Activation::tanh: dz = upstream.cwiseProduct((1.0 - z.array().tanh().square()).matrix()); break;
        case Activation::prelu:
        case Activation::leaky_relu: dz = (z.array() > 0.0).select(upstream, model.slope(k) * upstream); break;
        default: dz = upstream; break;
        }
        if (l.slope >= 0) {
            grad(l.slope) = (z.array() > 0.0).select(Mat::Zero(z.rows(), z.cols()), upstream.cwiseProduct(z)).sum();
        }
        gw = dz.transpose() * a_prev;
        Eigen::Map<Vec>(grad.data() + l.bias, l.out) = dz.colwise().sum().transpose();
        if (k > 0) upstream = dz * model.weight(k);
    }
    return loss;
}

/// Post-activation output of hidden layer `layer` (1-based) with a constant
/// column of ones appended: n x (width + 1).
inline Mat hidden_representation(const MlpModel& model, const Mat& x, int layer) {
    if (layer < 1 || layer > model.spec.hidden_layers()) {
        throw InvalidInput("hidden_representation: layer " + std::to_string(layer) + " out of range [1, " +
                           std::to_string(model.spec.hidden_layers()) + "]");
    }
    if (x.cols() != model.layers.front().in) throw InvalidInput("hidden_representation: input width mismatch");
    const auto cache = detail::forward(model, x, static_cast<std::size_t>(layer));
    return with_bias_column(cache.post[static_cast<std::size_t>(layer)]);
}

// --- optimizers --------------------------------------------------------------

class OptimizerState {
public:
    OptimizerState(Optimizer kind, double lr, Eigen::Index size)
        : kind_(kind), lr_(lr), m_(Vec::Zero(size)), v_(Vec::Zero(size)) {}

    void step(Vec& params, const Vec& grad) {
        switch (kind_) {
        case Optimizer::sgd:
            params -= lr_ * grad;
            break;
        case Optimizer::sgd_momentum:
            m_ = kMomentum * m_ + grad;
            params -= lr_ * m_;
            break;
        case Optimizer::adam: {
            ++t_;
            m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
            v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseAbs2();
            const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
            const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
            params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
            break;
        }
        case Optimizer::rmsprop:
            v_ = kRmsDecay * v_ + (1.0 - kRmsDecay) * grad.cwiseAbs2();
            params.array() -= lr_ * grad.array() / (v_.array().sqrt() + kEps);
            break;
        }
    }

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;
    static constexpr double kMomentum = 0.9;
    static constexpr double kRmsDecay = 0.99;

private:
    Optimizer kind_;
    double lr_;
    Vec m_;
    Vec v_;
    long t_ = 0;
};

struct TrainResult {
    MlpModel model;
    std::vector<double> history; // mean training loss per epoch
};

/// Minibatch training with a fresh shuffle every epoch. Throws Diverged
/// (carrying the 1-based epoch) on a non-finite loss.
inline TrainResult train(MlpModel model, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    data.validate();
    if (data.x.cols() != model.layers.front().in) throw InvalidInput("train: input width mismatch");
    if (model.spec.loss == LossKind::logistic) {
        for (Eigen::Index i = 0; i < data.y.size(); ++i) {
            if (data.y(i) != 1.0 && data.y(i) != -1.0) throw InvalidInput("train: logistic loss needs labels in {-1, +1}");
        }
    }
    if (model.layers.front().act == Activation::rbf_layer && !model.rbf_centers_attached) {
        attach_rbf_centers(model, data.x, model.spec.init_seed);
    }

    const Eigen::Index n = data.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::mt19937_64 rng(cfg.shuffle_seed);
    OptimizerState opt(cfg.optimizer, cfg.lr, model.params.size());

    TrainResult result;
    Vec grad;
    Mat xb;
    Vec yb;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
            const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size, n - start);
            xb.resize(b, data.x.cols());
            yb.resize(b);
            for (Eigen::Index i = 0; i < b; ++i) {
                const auto row = order[static_cast<std::size_t>(start + i)];
                xb.row(i) = data.x.row(row);
                yb(i) = data.y(row);
            }
            const double loss = loss_and_gradient(model, xb, yb, grad);
            if (!std::isfinite(loss) || !grad.allFinite()) throw Diverged("training loss is not finite", epoch);
            epoch_loss += loss * static_cast<double>(b);
            opt.step(model.params, grad);
        }
        result.history.push_back(epoch_loss / static_cast<double>(n));

        const auto w = static_cast<std::size_t>(cfg.convergence_window);
        if (cfg.until_convergence && result.history.size() > w) {
            const double before = result.history[result.history.size() - 1 - w];
            const double now = result.history.back();
            if (before - now < cfg.convergence_tol * before) break;
        }
    }
    result.model = std::move(model);
    return result;
}

// --- gradient check ------------------------------------------------------------

/// Smallest |pre-activation| over all piecewise-linear hidden units; central
/// differences are only trustworthy when this is well above the step.
inline double min_kink_distance(const MlpModel& model, const Mat& x) {
    const auto cache = detail::forward(model, x);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < model.layers.size(); ++k) {
        const auto act = model.layers[k].act;
        if (act == Activation::relu || act == Activation::prelu || act == Activation::leaky_relu) {
            best = std::min(best, cache.pre[k].cwiseAbs().minCoeff());
        }
    }
    return best;
}

/// Largest relative disagreement between backprop and central finite
/// differences (step 1e-5) over every parameter. Differences are scaled by
/// max(|analytic|, |numeric|, 1e-6) so parameters with vanishing gradient
/// are compared absolutely.
inline double gradient_check(const MlpModel& model, const Dataset& data) {
    constexpr double h = 1e-5;
    Vec analytic;
    loss_and_gradient(model, data.x, data.y, analytic);

    MlpModel probe = model;
    double worst = 0.0;
    for (Eigen::Index p = 0; p < probe.params.size(); ++p) {
        const double saved = probe.params(p);
        probe.params(p) = saved + h;
        const double up = evaluate_loss(probe, data);
        probe.params(p) = saved - h;
        const double down = evaluate_loss(probe, data);
        probe.params(p) = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double scale = std::max({std::abs(analytic(p)), std::abs(numeric), 1e-6});
        worst = std::max(worst, std::abs(analytic(p) - numeric) / scale);
    }
    return worst;
}

// --- checkpoints ---------------------------------------------------------------

inline constexpr const char* kCheckpointMagic = "# specalign checkpoint v1";

/// Text checkpoint: a magic line, key=value header lines ending with
/// `params=<count>`, then one parameter per line printed with 17
/// significant digits so values round-trip exactly.
inline void save_checkpoint(const MlpModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint '" + path + "'");
    out << kCheckpointMagic << '\n';
    out << "widths=";
    for (std::size_t i = 0; i < model.spec.layer_widths.size(); ++i) {
        out << (i ? "," : "") << model.spec.layer_widths[i];
    }
    out << "\nactivation=" << to_string(model.spec.activation) << '\n'
        << "loss=" << to_string(model.spec.loss) << '\n'
        << "init_seed=" << model.spec.init_seed << '\n';
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", model.spec.rbf_bandwidth);
    out << "rbf_bandwidth=" << buf << '\n'
        << "rbf_attached=" << (model.rbf_centers_attached ? 1 : 0) << '\n'
        << "params=" << model.params.size() << '\n';
    for (Eigen::Index i = 0; i < model.params.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", model.params(i));
        out << buf << '\n';
    }
    if (!out) throw Error("failed writing checkpoint '" + path + "'");
}

inline MlpModel load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open checkpoint '" + path + "'");
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || line != kCheckpointMagic) throw ParseError("not a specalign checkpoint", lineno);

    MlpSpec spec;
    bool attached = false;
    long count = -1;
    while (count < 0 && std::getline(in, line)) {
        ++lineno;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", lineno);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        try {
            if (key == "widths") {
                spec.layer_widths.clear();
                std::stringstream ss(value);
                std::string tok;
                while (std::getline(ss, tok, ',')) spec.layer_widths.push_back(std::stoi(tok));
            } else if (key == "activation") {
                spec.activation = parse_activation(value);
            } else if (key == "loss") {
                spec.loss = parse_loss(value);
            } else if (key == "init_seed") {
                spec.init_seed = std::stoull(value);
            } else if (key == "rbf_bandwidth") {
                spec.rbf_bandwidth = detail::parse_real(value, lineno);
            } else if (key == "rbf_attached") {
                attached = value == "1";
            } else if (key == "params") {
                count = std::stol(value);
            } else {
                throw ParseError("unknown key '" + key + "'", lineno);
            }
        } catch (const std::logic_error&) {
            throw ParseError("bad value for '" + key + "'", lineno);
        }
    }
    MlpModel model = init_model(spec);
    if (count != model.params.size()) throw ParseError("parameter count does not match the architecture", lineno);
    for (Eigen::Index i = 0; i < model.params.size(); ++i) {
        if (!std::getline(in, line)) throw ParseError("truncated parameter list", lineno + 1);
        ++lineno;
        model.params(i) = detail::parse_real(detail::trim(line), lineno);
    }
    model.rbf_centers_attached = attached;
    return model;
}

} // namespace specalign

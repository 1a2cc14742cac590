#include "tabudrop/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "tabudrop/kernels.hpp"

namespace tabudrop {

void DenseLayer::init(Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_width()));
    for (auto& w : weights.values()) w = rng.uniform(-bound, bound);
    std::fill(bias.begin(), bias.end(), 0.0);
}

Matrix DenseLayer::forward(const Matrix& x) const {
    if (x.cols() != in_width())
        throw ShapeError("batch width does not match layer input width");
    Matrix y(x.rows(), out_width());
    const auto& ops = kernels::active();
    ops.matmul_nt(x.data(), x.rows(), x.cols(), weights.data(), out_width(),
                  y.data());
    ops.add_rowwise(y.data(), bias.data(), y.rows(), y.cols());
    return y;
}

Matrix log_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    const std::size_t n = logits.cols();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* zrow = logits.row(r);
        double* orow = out.row(r);
        double zmax = zrow[0];
        for (std::size_t c = 1; c < n; ++c) zmax = std::max(zmax, zrow[c]);
        double total = 0.0;
        for (std::size_t c = 0; c < n; ++c) total += std::exp(zrow[c] - zmax);
        const double lse = zmax + std::log(total);
        for (std::size_t c = 0; c < n; ++c) orow[c] = zrow[c] - lse;
    }
    return out;
}

double nll_loss(const Matrix& log_probs, const std::vector<int>& labels) {
    if (labels.size() != log_probs.rows())
        throw ShapeError("label count does not match batch rows");
    double total = 0.0;
    for (std::size_t r = 0; r < labels.size(); ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= log_probs.cols())
            throw std::domain_error("label outside [0, classes)");
        total -= log_probs(r, static_cast<std::size_t>(y));
    }
    return total / static_cast<double>(labels.size());
}

Network::Network(const NetworkConfig& cfg, Rng& init_rng) : cfg_(cfg) {
    if (cfg.input_width == 0 || cfg.hidden_width == 0 || cfg.classes == 0)
        throw std::invalid_argument("network widths must be positive");
    validate(cfg.dropout);
    layers_[0] = DenseLayer(cfg.hidden_width, cfg.input_width);
    layers_[1] = DenseLayer(cfg.hidden_width, cfg.hidden_width);
    layers_[2] = DenseLayer(cfg.classes, cfg.hidden_width);
    for (auto& layer : layers_) layer.init(init_rng);

    const std::uint64_t tenure =
        cfg.dropout.mode == DropoutMode::tabu_tenure ? cfg.dropout.tenure : 1;
    sites_.emplace_back(cfg.hidden_width, tenure);
    if (cfg.dropout_after_each_hidden)
        sites_.emplace_back(cfg.hidden_width, tenure);
}

Matrix Network::forward(const Matrix& batch, bool training, Rng& rng) {
    if (batch.cols() != cfg_.input_width)
        throw ShapeError("batch width does not match network input width");

    Matrix pre1 = layers_[0].forward(batch);
    Matrix act1(pre1.rows(), pre1.cols());
    const auto& ops = kernels::active();
    ops.relu(pre1.data(), act1.data(), pre1.size());
    Matrix post1 = sites_[0].forward(act1, cfg_.dropout, training, rng);

    Matrix pre2 = layers_[1].forward(post1);
    Matrix act2(pre2.rows(), pre2.cols());
    ops.relu(pre2.data(), act2.data(), pre2.size());
    Matrix post2 = sites_.size() > 1
                       ? sites_[1].forward(act2, cfg_.dropout, training, rng)
                       : std::move(act2);

    Matrix logits = layers_[2].forward(post2);
    Matrix log_probs = log_softmax(logits);

    if (training) {
        input_ = batch;
        pre1_ = std::move(pre1);
        post1_ = std::move(post1);
        pre2_ = std::move(pre2);
        post2_ = std::move(post2);
        log_probs_ = log_probs;
        cached_ = true;
    } else {
        cached_ = false;
    }
    return log_probs;
}

Gradients Network::backward(const std::vector<int>& labels) {
    if (!cached_)
        throw StateError("backward requires a preceding training-mode forward");
    const std::size_t batch = log_probs_.rows();
    if (labels.size() != batch)
        throw ShapeError("label count does not match cached batch");

    const auto& ops = kernels::active();
    const double inv_batch = 1.0 / static_cast<double>(batch);

    // Gradient of mean NLL through log-softmax: softmax(z) - onehot, / batch.
    Matrix delta3(batch, cfg_.classes);
    for (std::size_t r = 0; r < batch; ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= cfg_.classes)
            throw std::domain_error("label outside [0, classes)");
        for (std::size_t c = 0; c < cfg_.classes; ++c) {
            delta3(r, c) = std::exp(log_probs_(r, c)) * inv_batch;
        }
        delta3(r, static_cast<std::size_t>(y)) -= inv_batch;
    }

    Gradients grads;
    for (std::size_t i = 0; i < layer_count; ++i) {
        grads[i].weights =
            Matrix(layers_[i].out_width(), layers_[i].in_width());
        grads[i].bias.assign(layers_[i].out_width(), 0.0);
    }

    ops.matmul_tn(delta3.data(), batch, cfg_.classes, post2_.data(),
                  cfg_.hidden_width, grads[2].weights.data());
    ops.col_sums(delta3.data(), batch, cfg_.classes, grads[2].bias.data());

    Matrix delta2(batch, cfg_.hidden_width);
    ops.matmul_nn(delta3.data(), batch, cfg_.classes,
                  layers_[2].weights.data(), cfg_.hidden_width, delta2.data());
    if (sites_.size() > 1) sites_[1].backward_inplace(delta2, cfg_.dropout);
    ops.relu_grad(delta2.data(), pre2_.data(), delta2.data(), delta2.size());

    ops.matmul_tn(delta2.data(), batch, cfg_.hidden_width, post1_.data(),
                  cfg_.hidden_width, grads[1].weights.data());
    ops.col_sums(delta2.data(), batch, cfg_.hidden_width, grads[1].bias.data());

    Matrix delta1(batch, cfg_.hidden_width);
    ops.matmul_nn(delta2.data(), batch, cfg_.hidden_width,
                  layers_[1].weights.data(), cfg_.hidden_width, delta1.data());
    sites_[0].backward_inplace(delta1, cfg_.dropout);
    ops.relu_grad(delta1.data(), pre1_.data(), delta1.data(), delta1.size());

    ops.matmul_tn(delta1.data(), batch, cfg_.hidden_width, input_.data(),
                  cfg_.input_width, grads[0].weights.data());
    ops.col_sums(delta1.data(), batch, cfg_.hidden_width, grads[0].bias.data());

    return grads;
}

void Network::start_epoch() {
    for (auto& site : sites_) site.start_epoch();
}

void Network::set_tenure(std::uint64_t tenure) {
    cfg_.dropout.tenure = tenure;
    for (auto& site : sites_) site.set_tenure(tenure);
}

AdamState::AdamState(const Network& net, AdamConfig cfg) : cfg_(cfg) {
    for (std::size_t i = 0; i < Network::layer_count; ++i) {
        const auto& layer = net.layer(i);
        m_[i].weights = Matrix(layer.out_width(), layer.in_width());
        m_[i].bias.assign(layer.out_width(), 0.0);
        v_[i].weights = Matrix(layer.out_width(), layer.in_width());
        v_[i].bias.assign(layer.out_width(), 0.0);
    }
}

void AdamState::step(Network& net, const Gradients& grads) {
    steps_ += 1;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 / (1.0 - std::pow(cfg_.beta1, t));
    const double bc2 = 1.0 / (1.0 - std::pow(cfg_.beta2, t));
    const auto& ops = kernels::active();
    for (std::size_t i = 0; i < Network::layer_count; ++i) {
        auto& layer = net.layer(i);
        if (!grads[i].weights.same_shape(layer.weights) ||
            grads[i].bias.size() != layer.bias.size())
            throw ShapeError("gradient shapes do not match parameters");
        ops.adam_update(layer.weights.data(), grads[i].weights.data(),
                        m_[i].weights.data(), v_[i].weights.data(),
                        layer.weights.size(), cfg_.learning_rate, cfg_.beta1,
                        cfg_.beta2, cfg_.epsilon, bc1, bc2);
        ops.adam_update(layer.bias.data(), grads[i].bias.data(),
                        m_[i].bias.data(), v_[i].bias.data(),
                        layer.bias.size(), cfg_.learning_rate, cfg_.beta1,
                        cfg_.beta2, cfg_.epsilon, bc1, bc2);
    }
}

double evaluate(Network& net, const Dataset& dataset) {
    if (dataset.size() == 0)
        throw std::domain_error("cannot evaluate on an empty dataset");
    Rng unused(0);
    constexpr std::size_t chunk = 512;
    std::size_t wrong = 0;
    const std::size_t n = dataset.size();
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t count = std::min(chunk, n - start);
        Matrix batch(count, dataset.feature_width());
        std::memcpy(batch.data(), dataset.features.row(start),
                    count * dataset.feature_width() * sizeof(double));
        const Matrix log_probs = net.forward(batch, /*training=*/false, unused);
        for (std::size_t r = 0; r < count; ++r) {
            const double* row = log_probs.row(r);
            std::size_t best = 0;
            for (std::size_t c = 1; c < log_probs.cols(); ++c) {
                if (row[c] > row[best]) best = c;
            }
            if (static_cast<int>(best) != dataset.labels[start + r]) ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(n);
}

double eval_mean_nll(Network& net, const Dataset& dataset) {
    if (dataset.size() == 0)
        throw std::domain_error("cannot evaluate on an empty dataset");
    Rng unused(0);
    constexpr std::size_t chunk = 512;
    double total = 0.0;
    const std::size_t n = dataset.size();
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t count = std::min(chunk, n - start);
        Matrix batch(count, dataset.feature_width());
        std::memcpy(batch.data(), dataset.features.row(start),
                    count * dataset.feature_width() * sizeof(double));
        std::vector<int> labels(dataset.labels.begin() +
                                    static_cast<std::ptrdiff_t>(start),
                                dataset.labels.begin() +
                                    static_cast<std::ptrdiff_t>(start + count));
        const Matrix log_probs = net.forward(batch, /*training=*/false, unused);
        total += nll_loss(log_probs, labels) * static_cast<double>(count);
    }
    return total / static_cast<double>(n);
}

double gradcheck_max_rel_error(Network& net, const Matrix& batch,
                               const std::vector<int>& labels, double step) {
    const auto& dropout = net.config().dropout;
    if (dropout.mode != DropoutMode::none &&
        dropout.granularity != TickGranularity::per_epoch)
        throw StateError(
            "gradient check requires per-epoch tick granularity so the "
            "dropout masks stay fixed across probes");

    Rng mask_rng(1);
    net.start_epoch();
    net.forward(batch, /*training=*/true, mask_rng);
    const Gradients analytic = net.backward(labels);

    Rng unused(0);
    const auto loss_at = [&]() {
        return nll_loss(net.forward(batch, /*training=*/true, unused), labels);
    };

    double worst = 0.0;
    const auto probe = [&](double* param, double analytic_g) {
        const double saved = *param;
        *param = saved + step;
        const double up = loss_at();
        *param = saved - step;
        const double down = loss_at();
        *param = saved;
        const double fd = (up - down) / (2.0 * step);
        const double denom =
            std::max({std::abs(fd), std::abs(analytic_g), 1e-3});
        worst = std::max(worst, std::abs(fd - analytic_g) / denom);
    };
    for (std::size_t i = 0; i < Network::layer_count; ++i) {
        auto& layer = net.layer(i);
        for (std::size_t k = 0; k < layer.weights.size(); ++k)
            probe(layer.weights.data() + k, analytic[i].weights.values()[k]);
        for (std::size_t k = 0; k < layer.bias.size(); ++k)
            probe(layer.bias.data() + k, analytic[i].bias[k]);
    }
    return worst;
}

namespace {

void write_u64(std::ofstream& out, std::uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

void write_doubles(std::ofstream& out, const double* p, std::size_t n) {
    out.write(reinterpret_cast<const char*>(p),
              static_cast<std::streamsize>(n * sizeof(double)));
}

std::uint64_t read_u64(std::ifstream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!in) throw IoError("checkpoint truncated");
    return v;
}

void read_doubles(std::ifstream& in, double* p, std::size_t n) {
    in.read(reinterpret_cast<char*>(p),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw IoError("checkpoint truncated");
}

constexpr std::uint64_t kCheckpointMagic = 0x31504b4352444254ull;  // "TBDRCKP1"

}  // namespace

void save_checkpoint(const Network& net, const AdamState& adam,
                     const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open checkpoint for writing: " + path);
        write_u64(out, kCheckpointMagic);
        const auto& cfg = net.config();
        write_u64(out, cfg.input_width);
        write_u64(out, cfg.hidden_width);
        write_u64(out, cfg.classes);
        for (std::size_t i = 0; i < Network::layer_count; ++i) {
            const auto& layer = net.layer(i);
            write_u64(out, layer.out_width());
            write_u64(out, layer.in_width());
            write_doubles(out, layer.weights.data(), layer.weights.size());
            write_doubles(out, layer.bias.data(), layer.bias.size());
        }
        write_u64(out, adam.steps_);
        for (std::size_t i = 0; i < Network::layer_count; ++i) {
            write_doubles(out, adam.m_[i].weights.data(),
                          adam.m_[i].weights.size());
            write_doubles(out, adam.m_[i].bias.data(), adam.m_[i].bias.size());
            write_doubles(out, adam.v_[i].weights.data(),
                          adam.v_[i].weights.size());
            write_doubles(out, adam.v_[i].bias.data(), adam.v_[i].bias.size());
        }
        write_u64(out, net.sites().size());
        for (const auto& site : net.sites()) {
            const auto& ledger = site.ledger();
            write_u64(out, ledger.width());
            write_u64(out, ledger.tenure);
            write_u64(out, ledger.tick);
            out.write(reinterpret_cast<const char*>(ledger.last_drop.data()),
                      static_cast<std::streamsize>(ledger.last_drop.size() *
                                                   sizeof(std::uint64_t)));
        }
        if (!out) throw IoError("checkpoint write failed: " + path);
    }
    std::filesystem::rename(tmp, path);
}

void load_checkpoint(Network& net, AdamState& adam, const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    if (read_u64(in) != kCheckpointMagic)
        throw FormatError("not a checkpoint file: " + path);
    const auto& cfg = net.config();
    if (read_u64(in) != cfg.input_width || read_u64(in) != cfg.hidden_width ||
        read_u64(in) != cfg.classes)
        throw ConsistencyError("checkpoint shape does not match network");
    for (std::size_t i = 0; i < Network::layer_count; ++i) {
        auto& layer = net.layer(i);
        if (read_u64(in) != layer.out_width() ||
            read_u64(in) != layer.in_width())
            throw ConsistencyError("checkpoint layer shape mismatch");
        read_doubles(in, layer.weights.data(), layer.weights.size());
        read_doubles(in, layer.bias.data(), layer.bias.size());
    }
    adam.steps_ = read_u64(in);
    for (std::size_t i = 0; i < Network::layer_count; ++i) {
        read_doubles(in, adam.m_[i].weights.data(), adam.m_[i].weights.size());
        read_doubles(in, adam.m_[i].bias.data(), adam.m_[i].bias.size());
        read_doubles(in, adam.v_[i].weights.data(), adam.v_[i].weights.size());
        read_doubles(in, adam.v_[i].bias.data(), adam.v_[i].bias.size());
    }
    const std::uint64_t site_count = read_u64(in);
    if (site_count != net.sites().size())
        throw ConsistencyError("checkpoint site count mismatch");
    for (auto& site : net.sites()) {
        auto& ledger = site.ledger();
        if (read_u64(in) != ledger.width())
            throw ConsistencyError("checkpoint ledger width mismatch");
        ledger.tenure = read_u64(in);
        ledger.tick = read_u64(in);
        in.read(reinterpret_cast<char*>(ledger.last_drop.data()),
                static_cast<std::streamsize>(ledger.last_drop.size() *
                                             sizeof(std::uint64_t)));
        if (!in) throw IoError("checkpoint truncated");
    }
}

}  // namespace tabudrop

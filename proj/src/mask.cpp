#include "tabudrop/mask.hpp"

#include "tabudrop/kernels.hpp"

namespace tabudrop {

void validate(const DropoutConfig& cfg) {
    if (!(cfg.drop_rate >= 0.0 && cfg.drop_rate < 1.0))
        throw std::invalid_argument("drop_rate must be in [0, 1)");
    if (cfg.mode == DropoutMode::tabu_tenure && cfg.tenure == 0)
        throw std::invalid_argument("tabu tenure must be positive");
}

KeepMask sample_keep_mask(std::size_t width, double drop_rate, Rng& rng) {
    if (!(drop_rate >= 0.0 && drop_rate < 1.0))
        throw std::invalid_argument("drop_rate must be in [0, 1)");
    const double keep_prob = 1.0 - drop_rate;
    KeepMask mask(width, 0);
    for (std::size_t u = 0; u < width; ++u) {
        mask.bits[u] = rng.bernoulli(keep_prob) ? 1 : 0;
    }
    return mask;
}

KeepMask apply_tabu(const KeepMask& mask, const TabuLedger& ledger) {
    if (mask.size() != ledger.width())
        throw ShapeError("mask width does not match ledger width");
    KeepMask out = mask;
    for (std::size_t u = 0; u < out.size(); ++u) {
        const std::uint64_t last = ledger.last_drop[u];
        if (last != 0 && ledger.tick - last <= ledger.tenure) out.bits[u] = 1;
    }
    return out;
}

void commit(const KeepMask& mask, TabuLedger& ledger) {
    if (mask.size() != ledger.width())
        throw ShapeError("mask width does not match ledger width");
    for (std::size_t u = 0; u < mask.size(); ++u) {
        if (!mask.bits[u]) ledger.last_drop[u] = ledger.tick;
    }
    ledger.tick += 1;
}

std::vector<double> scale(const std::vector<double>& x, const KeepMask& mask,
                          double drop_rate) {
    if (!(drop_rate >= 0.0 && drop_rate < 1.0))
        throw std::invalid_argument("drop_rate must be in [0, 1)");
    if (x.size() != mask.size())
        throw ShapeError("vector length does not match mask width");
    std::vector<double> out(x.size());
    kernels::active().mask_scale(x.data(), mask.bits.data(),
                                 1.0 / (1.0 - drop_rate), out.data(), x.size());
    return out;
}

Matrix DropoutSite::forward(const Matrix& x, const DropoutConfig& cfg,
                            bool training, Rng& rng) {
    if (!training || cfg.mode == DropoutMode::none) return x;
    validate(cfg);
    if (x.cols() != ledger_.width())
        throw ShapeError("batch width does not match dropout site width");

    const bool fresh_tick =
        cfg.granularity == TickGranularity::per_batch || !mask_valid_;
    if (fresh_tick) {
        KeepMask mask = sample_keep_mask(ledger_.width(), cfg.drop_rate, rng);
        if (cfg.mode == DropoutMode::tabu_tenure) {
            mask = apply_tabu(mask, ledger_);
        }
        current_ = std::move(mask);
        mask_valid_ = true;
    }

    Matrix out(x.rows(), x.cols());
    const double factor = 1.0 / (1.0 - cfg.drop_rate);
    const auto& ops = kernels::active();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        ops.mask_scale(x.row(r), current_.bits.data(), factor, out.row(r),
                       x.cols());
    }

    if (fresh_tick) commit(current_, ledger_);
    return out;
}

void DropoutSite::backward_inplace(Matrix& grad, const DropoutConfig& cfg) const {
    if (cfg.mode == DropoutMode::none) return;
    if (current_.size() != grad.cols() || current_.size() != ledger_.width())
        throw StateError("dropout backward without a cached forward mask");
    const double factor = 1.0 / (1.0 - cfg.drop_rate);
    const auto& ops = kernels::active();
    for (std::size_t r = 0; r < grad.rows(); ++r) {
        ops.mask_scale(grad.row(r), current_.bits.data(), factor, grad.row(r),
                       grad.cols());
    }
}

void DropoutSite::set_tenure(std::uint64_t tenure) {
    if (tenure == 0) throw std::invalid_argument("tabu tenure must be positive");
    ledger_.tenure = tenure;
}

}  // namespace tabudrop

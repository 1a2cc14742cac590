#pragma once

#include <cstdint>
#include <vector>

#include "tabudrop/errors.hpp"
#include "tabudrop/matrix.hpp"
#include "tabudrop/rng.hpp"

namespace tabudrop {

/// Per-unit keep decision for one dropout site at one tick. 1 = the unit
/// passes its activation through, 0 = the unit is zeroed.
struct KeepMask {
    std::vector<std::uint8_t> bits;

    KeepMask() = default;
    explicit KeepMask(std::size_t width, std::uint8_t fill = 1)
        : bits(width, fill) {}

    std::size_t size() const { return bits.size(); }
    bool keeps(std::size_t u) const { return bits[u] != 0; }
    std::size_t kept_count() const {
        std::size_t k = 0;
        for (auto b : bits) k += b != 0;
        return k;
    }
};

/// Per-unit record of the most recent tick at which the unit was dropped.
/// Tick 0 is reserved as the never-dropped sentinel, so counting starts at 1.
/// While `tick - last_drop[u] <= tenure` the unit may not be dropped again.
struct TabuLedger {
    std::vector<std::uint64_t> last_drop;
    std::uint64_t tick = 1;
    std::uint64_t tenure = 1;

    TabuLedger() = default;
    TabuLedger(std::size_t width, std::uint64_t tenure_value)
        : last_drop(width, 0), tenure(tenure_value) {
        if (tenure_value == 0)
            throw std::invalid_argument("tabu tenure must be positive");
    }

    std::size_t width() const { return last_drop.size(); }
};

enum class DropoutMode { none, standard_inverted, tabu_tenure };

/// Whether a site's ledger advances once per training forward pass or once
/// per epoch (mask reused across the epoch's batches).
enum class TickGranularity { per_batch, per_epoch };

struct DropoutConfig {
    double drop_rate = 0.5;
    DropoutMode mode = DropoutMode::standard_inverted;
    std::uint64_t tenure = 1;
    TickGranularity granularity = TickGranularity::per_batch;
};

/// Throws std::invalid_argument unless 0 <= drop_rate < 1 and tenure >= 1.
/// drop_rate = 1 is rejected here because kept units are rescaled by
/// 1/(1 - drop_rate).
void validate(const DropoutConfig& cfg);

/// Independent Bernoulli keep decisions: each bit is 1 with probability
/// 1 - drop_rate. Consumes exactly `width` draws from rng.
KeepMask sample_keep_mask(std::size_t width, double drop_rate, Rng& rng);

/// Forces bit u to keep whenever the ledger shows a drop within the last
/// `tenure` ticks. Only flips drop -> keep; never the other way.
KeepMask apply_tabu(const KeepMask& mask, const TabuLedger& ledger);

/// Records the drops of the final mask into the ledger and advances the
/// tick. Units the mask keeps retain their previous last_drop entry.
void commit(const KeepMask& mask, TabuLedger& ledger);

/// Inverted-dropout scaling: kept entries divided by 1 - drop_rate, dropped
/// entries zeroed.
std::vector<double> scale(const std::vector<double>& x, const KeepMask& mask,
                          double drop_rate);

/// One dropout location in a network. Owns the tabu ledger and the mask most
/// recently applied (needed for the backward pass and for per-epoch mask
/// reuse). Single-owner mutable state: no concurrent calls on one site.
class DropoutSite {
public:
    explicit DropoutSite(std::size_t width, std::uint64_t tenure = 1)
        : ledger_(width, tenure) {}

    std::size_t width() const { return ledger_.width(); }

    /// Training forward pass over a batch (rows share one mask). Composes
    /// sampling, the tabu constraint (tabu_tenure mode only), scaling and the
    /// ledger commit. Not training or mode none: returns x untouched. With
    /// per-epoch granularity, only the first call after start_epoch() samples
    /// and commits; later calls reuse the cached mask.
    Matrix forward(const Matrix& x, const DropoutConfig& cfg, bool training,
                   Rng& rng);

    /// Backward pass through the most recent forward: gradients of dropped
    /// units zeroed, kept ones scaled by 1/(1 - drop_rate).
    void backward_inplace(Matrix& grad, const DropoutConfig& cfg) const;

    /// Marks an epoch boundary for per-epoch tick granularity.
    void start_epoch() { mask_valid_ = false; }

    /// Changes the active tenure (adaptive selection); history is retained.
    void set_tenure(std::uint64_t tenure);

    const TabuLedger& ledger() const { return ledger_; }
    TabuLedger& ledger() { return ledger_; }
    const KeepMask& last_mask() const { return current_; }
    bool has_mask() const { return current_.size() == ledger_.width(); }

private:
    TabuLedger ledger_;
    KeepMask current_;
    bool mask_valid_ = false;
};

}  // namespace tabudrop

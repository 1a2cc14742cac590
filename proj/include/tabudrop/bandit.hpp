#pragma once

#include <cstdint>
#include <vector>

#include "tabudrop/errors.hpp"
#include "tabudrop/rng.hpp"

namespace tabudrop {

/// Candidate tabu tenures the bandit chooses among.
struct ArmSet {
    std::vector<int> tenures;

    ArmSet() = default;
    explicit ArmSet(std::vector<int> values);

    /// {1, 2, ..., tt_max}
    static ArmSet up_to(int tt_max);

    std::size_t size() const { return tenures.size(); }

    /// Index of a tenure value; throws std::domain_error if absent.
    std::size_t index_of(int arm) const;
};

enum class Policy { random, greedy, epsilon_greedy, probabilistic, softmax };
enum class RewardModel { inverse, neg_exp };

/// 1 / loss, with the loss floored at 1e-12 so a vanishing loss yields a
/// large but finite reward.
double reward_inverse(double loss);

/// e^{-loss}; bounded in (0, 1] for loss >= 0, so small losses cannot
/// produce runaway rewards.
double reward_negexp(double loss);

double apply_reward_model(RewardModel model, double loss);

/// Number of epochs a selected tenure is held before the next selection.
struct AdaptionSchedule {
    std::uint32_t period = 25;

    AdaptionSchedule() = default;
    explicit AdaptionSchedule(std::uint32_t p) : period(p) {
        if (p == 0) throw std::invalid_argument("adaption period must be >= 1");
    }
};

/// True at epochs 0, P, 2P, ...; the arm is held fixed in between.
bool should_reselect(std::uint64_t epoch, const AdaptionSchedule& schedule);

/// Sample-average value estimates per arm plus the selection policy
/// configuration. Single-owner mutable state per training run.
class BanditState {
public:
    BanditState(ArmSet arms, Policy policy, RewardModel model,
                double epsilon = 0.5, std::uint64_t warmup_epochs = 0);

    /// Adds one observed reward for an arm. Rewards must be non-negative.
    void record(int arm, double reward);

    /// Mean recorded reward of the arm; 0 if the arm was never pulled.
    double q_value(int arm) const;

    /// Probability over arms (ordered as the arm set) under the configured
    /// policy. Sums to 1; no negative entries. Greedy ties break toward the
    /// smallest tenure.
    std::vector<double> policy_distribution() const;

    /// Draws the next tenure. Greedy policy explores uniformly while
    /// epoch < warmup_epochs.
    int select_arm(std::uint64_t epoch, Rng& rng) const;

    /// Converts an epoch's mean training loss to a reward under the
    /// configured model and records it for the active arm.
    void epoch_reward(int arm, double epoch_mean_loss);

    const ArmSet& arms() const { return arms_; }
    Policy policy() const { return policy_; }
    RewardModel reward_model() const { return model_; }
    double epsilon() const { return epsilon_; }
    std::uint64_t warmup_epochs() const { return warmup_epochs_; }
    double reward_sum(int arm) const { return reward_sum_[arms_.index_of(arm)]; }
    std::uint64_t pull_count(int arm) const { return pull_count_[arms_.index_of(arm)]; }

private:
    ArmSet arms_;
    std::vector<double> reward_sum_;
    std::vector<std::uint64_t> pull_count_;
    Policy policy_;
    RewardModel model_;
    double epsilon_;
    std::uint64_t warmup_epochs_;
};

}  // namespace tabudrop

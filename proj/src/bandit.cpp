#include "tabudrop/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tabudrop {

ArmSet::ArmSet(std::vector<int> values) : tenures(std::move(values)) {
    if (tenures.empty()) throw std::invalid_argument("arm set must be non-empty");
    for (std::size_t i = 0; i < tenures.size(); ++i) {
        if (tenures[i] <= 0)
            throw std::invalid_argument("tenure arms must be positive");
        if (i > 0 && tenures[i] <= tenures[i - 1])
            throw std::invalid_argument("tenure arms must be strictly increasing");
    }
}

ArmSet ArmSet::up_to(int tt_max) {
    if (tt_max < 1) throw std::invalid_argument("tt_max must be >= 1");
    std::vector<int> values(static_cast<std::size_t>(tt_max));
    std::iota(values.begin(), values.end(), 1);
    return ArmSet(std::move(values));
}

std::size_t ArmSet::index_of(int arm) const {
    const auto it = std::find(tenures.begin(), tenures.end(), arm);
    if (it == tenures.end())
        throw std::domain_error("tenure value is not in the arm set");
    return static_cast<std::size_t>(it - tenures.begin());
}

double reward_inverse(double loss) {
    if (loss < 0.0) throw std::domain_error("loss must be non-negative");
    return 1.0 / std::max(loss, 1e-12);
}

double reward_negexp(double loss) {
    if (loss < 0.0) throw std::domain_error("loss must be non-negative");
    return std::exp(-loss);
}

double apply_reward_model(RewardModel model, double loss) {
    return model == RewardModel::inverse ? reward_inverse(loss)
                                         : reward_negexp(loss);
}

bool should_reselect(std::uint64_t epoch, const AdaptionSchedule& schedule) {
    return epoch % schedule.period == 0;
}

BanditState::BanditState(ArmSet arms, Policy policy, RewardModel model,
                         double epsilon, std::uint64_t warmup_epochs)
    : arms_(std::move(arms)),
      reward_sum_(arms_.size(), 0.0),
      pull_count_(arms_.size(), 0),
      policy_(policy),
      model_(model),
      epsilon_(epsilon),
      warmup_epochs_(warmup_epochs) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw std::invalid_argument("epsilon must be in [0, 1]");
}

void BanditState::record(int arm, double reward) {
    if (reward < 0.0) throw std::domain_error("reward must be non-negative");
    const std::size_t idx = arms_.index_of(arm);
    reward_sum_[idx] += reward;
    pull_count_[idx] += 1;
}

double BanditState::q_value(int arm) const {
    const std::size_t idx = arms_.index_of(arm);
    if (pull_count_[idx] == 0) return 0.0;
    return reward_sum_[idx] / static_cast<double>(pull_count_[idx]);
}

std::vector<double> BanditState::policy_distribution() const {
    const std::size_t n = arms_.size();
    std::vector<double> q(n);
    for (std::size_t i = 0; i < n; ++i) q[i] = q_value(arms_.tenures[i]);

    std::vector<double> pi(n, 0.0);
    switch (policy_) {
        case Policy::random: {
            std::fill(pi.begin(), pi.end(), 1.0 / static_cast<double>(n));
            break;
        }
        case Policy::greedy: {
            // First maximum wins: arms are ascending, so ties break toward
            // the smallest tenure.
            const std::size_t best =
                static_cast<std::size_t>(std::max_element(q.begin(), q.end()) -
                                         q.begin());
            pi[best] = 1.0;
            break;
        }
        case Policy::epsilon_greedy: {
            const std::size_t best =
                static_cast<std::size_t>(std::max_element(q.begin(), q.end()) -
                                         q.begin());
            const double base = epsilon_ / static_cast<double>(n);
            std::fill(pi.begin(), pi.end(), base);
            pi[best] = 1.0 - epsilon_ + base;
            break;
        }
        case Policy::probabilistic: {
            const double total = std::accumulate(q.begin(), q.end(), 0.0);
            if (total == 0.0) {
                std::fill(pi.begin(), pi.end(), 1.0 / static_cast<double>(n));
            } else {
                for (std::size_t i = 0; i < n; ++i) pi[i] = q[i] / total;
            }
            break;
        }
        case Policy::softmax: {
            const double qmax = *std::max_element(q.begin(), q.end());
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                pi[i] = std::exp(q[i] - qmax);
                total += pi[i];
            }
            for (std::size_t i = 0; i < n; ++i) pi[i] /= total;
            break;
        }
    }
    return pi;
}

int BanditState::select_arm(std::uint64_t epoch, Rng& rng) const {
    std::vector<double> pi;
    if (policy_ == Policy::greedy && epoch < warmup_epochs_) {
        pi.assign(arms_.size(), 1.0 / static_cast<double>(arms_.size()));
    } else {
        pi = policy_distribution();
    }
    const double u = rng.uniform();
    double cumulative = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        cumulative += pi[i];
        if (u < cumulative) return arms_.tenures[i];
    }
    return arms_.tenures.back();
}

void BanditState::epoch_reward(int arm, double epoch_mean_loss) {
    record(arm, apply_reward_model(model_, epoch_mean_loss));
}

}  // namespace tabudrop

// Acceptance gate: one verdict line per criterion, nonzero exit on any
// failure. Tolerances are pinned here and nowhere else.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tabudrop/bandit.hpp"
#include "tabudrop/data.hpp"
#include "tabudrop/errors.hpp"
#include "tabudrop/kernels.hpp"
#include "tabudrop/mask.hpp"
#include "tabudrop/nn.hpp"
#include "tabudrop/rng.hpp"
#include "tabudrop/runner.hpp"

using namespace tabudrop;
namespace fs = std::filesystem;

namespace {

bool g_all_pass = true;

void report(const char* id, bool pass, const std::string& detail) {
    std::printf("%s %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
    if (!pass) g_all_pass = false;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// A1: zero same-unit drop pairs within TT ticks, TT in 1..6, width 128,
// p = 0.5, 2000 ticks. Tolerance 0.
void a1_tabu_safety() {
    const std::size_t width = 128;
    Matrix ones(1, width);
    for (auto& v : ones.values()) v = 1.0;

    std::size_t violations = 0;
    for (std::uint64_t tt = 1; tt <= 6; ++tt) {
        DropoutConfig cfg;
        cfg.mode = DropoutMode::tabu_tenure;
        cfg.drop_rate = 0.5;
        cfg.tenure = tt;
        DropoutSite site(width, tt);
        Rng rng(8800 + tt);
        std::vector<std::uint64_t> last(width, 0);
        for (std::uint64_t tick = 1; tick <= 2000; ++tick) {
            site.forward(ones, cfg, true, rng);
            const KeepMask& mask = site.last_mask();
            for (std::size_t u = 0; u < width; ++u) {
                if (mask.keeps(u)) continue;
                if (last[u] != 0 && tick - last[u] <= tt) ++violations;
                last[u] = tick;
            }
        }
    }
    std::ostringstream detail;
    detail << "tabu safety, TT 1..6, width 128, 2000 ticks: " << violations
           << " violations";
    report("A1", violations == 0, detail.str());
}

// A2: TT=1 ledger vs a one-tick boolean-memory oracle, same stream,
// 1e4 ticks, identical masks. Exact.
void a2_tt1_oracle() {
    const std::size_t width = 64;
    DropoutConfig cfg;
    cfg.mode = DropoutMode::tabu_tenure;
    cfg.drop_rate = 0.5;
    cfg.tenure = 1;
    DropoutSite site(width, 1);
    Rng impl_rng(4242);
    Rng oracle_rng(4242);

    Matrix ones(1, width);
    for (auto& v : ones.values()) v = 1.0;

    std::vector<bool> dropped_last(width, false);
    std::uint64_t mismatches = 0;
    for (int tick = 0; tick < 10000; ++tick) {
        site.forward(ones, cfg, true, impl_rng);
        const KeepMask& got = site.last_mask();

        KeepMask want = sample_keep_mask(width, 0.5, oracle_rng);
        for (std::size_t u = 0; u < width; ++u) {
            if (dropped_last[u]) want.bits[u] = 1;  // tabu: forced keep
        }
        for (std::size_t u = 0; u < width; ++u) {
            if (got.keeps(u) != want.keeps(u)) ++mismatches;
            dropped_last[u] = !want.keeps(u);
        }
    }
    std::ostringstream detail;
    detail << "TT=1 vs boolean-memory oracle, 1e4 ticks: " << mismatches
           << " mask mismatches";
    report("A2", mismatches == 0, detail.str());
}

// A3: q_value vs brute-force replay of 1e3 events on 6 arms, within 1e-12.
void a3_q_replay() {
    BanditState state(ArmSet::up_to(6), Policy::softmax, RewardModel::neg_exp,
                      0.5, 0);
    Rng rng(99);
    std::map<int, std::vector<double>> log;
    for (int i = 0; i < 1000; ++i) {
        const int arm = 1 + static_cast<int>(rng.below(6));
        const double reward = rng.uniform(0.0, 2.0);
        state.record(arm, reward);
        log[arm].push_back(reward);
    }
    double worst = 0.0;
    for (int arm = 1; arm <= 6; ++arm) {
        double mean = 0.0;
        for (const double r : log[arm]) mean += r;
        if (!log[arm].empty()) mean /= static_cast<double>(log[arm].size());
        worst = std::max(worst, std::abs(state.q_value(arm) - mean));
    }
    std::ostringstream detail;
    detail << "q_value vs replay of 1e3 events: max abs err " << worst;
    report("A3", worst <= 1e-12, detail.str());
}

// A4: policy sums within 1e-12; epsilon-greedy(0.5, 6 arms) best mass
// exactly 7/12; empirical frequencies over 1e5 draws within 0.01 per arm
// for all five policies.
void a4_policies() {
    const std::vector<Policy> policies = {Policy::random, Policy::greedy,
                                          Policy::epsilon_greedy,
                                          Policy::probabilistic,
                                          Policy::softmax};
    bool pass = true;
    std::ostringstream detail;

    Rng fill(7);
    double worst_sum_err = 0.0;
    double worst_freq_err = 0.0;
    for (const auto policy : policies) {
        BanditState state(ArmSet::up_to(6), policy, RewardModel::neg_exp, 0.5,
                          0);
        for (int i = 0; i < 90; ++i)
            state.record(1 + static_cast<int>(fill.below(6)),
                         fill.uniform(0.0, 1.5));
        const auto pi = state.policy_distribution();
        double sum = 0.0;
        for (const double p : pi) {
            if (p < 0.0) pass = false;
            sum += p;
        }
        worst_sum_err = std::max(worst_sum_err, std::abs(sum - 1.0));

        Rng draw(600 + static_cast<int>(policy));
        std::vector<std::uint64_t> counts(6, 0);
        const int n = 100000;
        for (int i = 0; i < n; ++i)
            counts[state.arms().index_of(state.select_arm(10, draw))]++;
        for (std::size_t a = 0; a < 6; ++a) {
            const double freq = static_cast<double>(counts[a]) / n;
            worst_freq_err = std::max(worst_freq_err, std::abs(freq - pi[a]));
        }
    }
    if (worst_sum_err > 1e-12) pass = false;
    if (worst_freq_err > 0.01) pass = false;

    BanditState eg(ArmSet::up_to(6), Policy::epsilon_greedy,
                   RewardModel::neg_exp, 0.5, 0);
    eg.record(3, 1.0);  // unique best arm
    const auto pi = eg.policy_distribution();
    const bool exact_mass = pi[2] == 7.0 / 12.0;
    if (!exact_mass) pass = false;

    detail << "policy sums max err " << worst_sum_err
           << ", eps-greedy best mass " << (exact_mass ? "== 7/12" : "!= 7/12")
           << ", freq max err " << worst_freq_err;
    report("A4", pass, detail.str());
}

// A5: reward model closed forms and non-negativity.
void a5_rewards() {
    const bool negexp0 = std::abs(reward_negexp(0.0) - 1.0) <= 1e-12;
    const bool negexp_ln2 =
        std::abs(reward_negexp(std::log(2.0)) - 0.5) <= 1e-12;
    const bool inverse2 = reward_inverse(2.0) == 0.5;
    bool nonneg = true;
    for (double loss = 0.0; loss <= 20.0; loss += 0.173) {
        if (reward_inverse(loss) < 0.0 || reward_negexp(loss) < 0.0)
            nonneg = false;
    }
    std::ostringstream detail;
    detail << "negexp(0)=1 " << (negexp0 ? "ok" : "bad") << ", negexp(ln2)=0.5 "
           << (negexp_ln2 ? "ok" : "bad") << ", inverse(2)=0.5 "
           << (inverse2 ? "exact" : "bad") << ", non-negative "
           << (nonneg ? "ok" : "bad");
    report("A5", negexp0 && negexp_ln2 && inverse2 && nonneg, detail.str());
}

// A6: gradient check on a 4-8-8-3 net with fixed dropout masks at each
// site; central differences, step 1e-5, relative error < 1e-6.
void a6_gradcheck() {
    NetworkConfig cfg;
    cfg.input_width = 4;
    cfg.hidden_width = 8;
    cfg.classes = 3;
    cfg.dropout.mode = DropoutMode::tabu_tenure;
    cfg.dropout.drop_rate = 0.5;
    cfg.dropout.tenure = 2;
    cfg.dropout.granularity = TickGranularity::per_epoch;
    cfg.dropout_after_each_hidden = true;

    Rng init(31);
    Network net(cfg, init);

    Rng data_rng(32);
    Matrix batch(8, 4);
    for (auto& v : batch.values()) v = data_rng.normal();
    std::vector<int> labels(8);
    for (std::size_t i = 0; i < 8; ++i) labels[i] = static_cast<int>(i % 3);

    const double err = gradcheck_max_rel_error(net, batch, labels, 1e-5);
    std::ostringstream detail;
    detail << "4-8-8-3 with fixed dropout masks: max rel err " << err;
    report("A6", err < 1e-6, detail.str());
}

// A7: directional desk-scale reproduction of the tenure ordering.
// tenure:6 vs tabu (TT=1); 5000/1000 synthetic task, MLP 256-256,
// 40 epochs, p=0.5, lr=0.01, 5 seeds. tenure:6 final error <= tabu in
// at least 3 of 5 seeds and strictly lower mean. Directional, not an
// equality claim.
void a7_directional() {
    const auto t0 = std::chrono::steady_clock::now();

    ExperimentConfig base;
    base.data.synthetic = true;
    base.data.synth_train = 5000;
    base.data.synth_test = 1000;
    base.data.synth_features = 64;
    base.data.synth_classes = 100;
    base.data.synth_spread = 0.25;
    base.data.synth_seed = 12345;
    base.hidden_width = 256;
    base.epochs = 40;
    base.batch_size = 512;
    base.learning_rate = 0.01;
    base.drop_rate = 0.5;
    base.replicates = 5;
    base.base_seed = 1;
    base.dropout_after_each_hidden = true;
    base.deterministic_timing = true;

    ExperimentConfig tabu = base;
    tabu.variant = Variant::tabu;
    tabu.name = "tabu";
    ExperimentConfig tenure6 = base;
    tenure6.variant = Variant::tenure;
    tenure6.tenure = 6;
    tenure6.name = "tenure6";

    const fs::path dir = fs::temp_directory_path() / "tabudrop_acceptance_a7";
    fs::remove_all(dir);
    RunOverrides overrides;
    overrides.out_dir = dir.string();

    const RunResult r_tabu = run(tabu, overrides);
    const RunResult r_t6 = run(tenure6, overrides);

    int wins = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        const double e_tabu = r_tabu.replicate_records[i].back().test_error;
        const double e_t6 = r_t6.replicate_records[i].back().test_error;
        if (e_t6 <= e_tabu) ++wins;
    }
    const double mean_tabu = r_tabu.summary.mean_error;
    const double mean_t6 = r_t6.summary.mean_error;

    const auto t1 = std::chrono::steady_clock::now();
    const double secs =
        std::chrono::duration_cast<std::chrono::duration<double>>(t1 - t0)
            .count();

    const bool pass =
        wins >= 3 && mean_t6 < mean_tabu && secs < 600.0;
    std::ostringstream detail;
    detail << "tenure:6 vs tabu over 5 seeds: wins " << wins
           << "/5, mean " << mean_t6 << " vs " << mean_tabu << ", "
           << static_cast<int>(secs) << " s (directional)";
    report("A7", pass, detail.str());
    fs::remove_all(dir);
}

// A8: 300-epoch dry run, period 25: exactly 12 selections, tenure constant
// within each window, negexp rewards never exceed 1.
void a8_adaptive_mechanics() {
    BanditState state(ArmSet::up_to(6), Policy::softmax, RewardModel::neg_exp,
                      0.5, 0);
    const AdaptionSchedule schedule(25);
    Rng rng(2024);

    int selections = 0;
    int current = 0;
    bool windows_ok = true;
    bool rewards_ok = true;
    std::vector<int> held(300, 0);
    for (std::uint64_t epoch = 0; epoch < 300; ++epoch) {
        if (should_reselect(epoch, schedule)) {
            current = state.select_arm(epoch, rng);
            ++selections;
        }
        held[epoch] = current;
        // Synthetic decaying loss stream with a deterministic ripple.
        const double loss =
            2.3 * std::exp(-0.01 * static_cast<double>(epoch)) +
            0.05 * (1.0 + std::sin(0.7 * static_cast<double>(epoch)));
        const double reward = apply_reward_model(RewardModel::neg_exp, loss);
        if (reward > 1.0) rewards_ok = false;
        state.record(current, reward);
    }
    for (std::size_t e = 0; e < 300; ++e) {
        if (e % 25 != 0 && held[e] != held[e - 1]) windows_ok = false;
    }
    std::ostringstream detail;
    detail << "dry run 300 epochs, period 25: " << selections
           << " selections, windows " << (windows_ok ? "constant" : "broken")
           << ", negexp rewards <= 1 " << (rewards_ok ? "ok" : "violated");
    report("A8", selections == 12 && windows_ok && rewards_ok, detail.str());
}

// A9: identical (config, seed) gives byte-identical per-epoch CSVs.
void a9_determinism() {
    ExperimentConfig cfg;
    cfg.variant = Variant::adaptive;
    cfg.name = "det";
    cfg.data.synth_train = 300;
    cfg.data.synth_test = 120;
    cfg.data.synth_features = 12;
    cfg.data.synth_classes = 4;
    cfg.data.synth_spread = 0.2;
    cfg.hidden_width = 24;
    cfg.epochs = 6;
    cfg.batch_size = 64;
    cfg.replicates = 2;
    cfg.base_seed = 17;
    cfg.adaption_period = 2;
    cfg.tt_max = 3;
    cfg.warmup = 0;
    cfg.warmup_set = true;
    cfg.deterministic_timing = true;

    const fs::path dir_a = fs::temp_directory_path() / "tabudrop_acc_a9_a";
    const fs::path dir_b = fs::temp_directory_path() / "tabudrop_acc_a9_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    RunOverrides oa, ob;
    oa.out_dir = dir_a.string();
    ob.out_dir = dir_b.string();
    const RunResult ra = run(cfg, oa);
    const RunResult rb = run(cfg, ob);

    bool identical = ra.csv_paths.size() == rb.csv_paths.size();
    for (std::size_t i = 0; identical && i < ra.csv_paths.size(); ++i)
        identical = slurp(ra.csv_paths[i]) == slurp(rb.csv_paths[i]);
    identical = identical && slurp(ra.summary_path) == slurp(rb.summary_path);

    report("A9", identical,
           identical ? "two runs, same config and seed: CSVs byte-identical"
                     : "CSV bytes differ between identical runs");
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

// A10: hand-built 2-image IDX pair loads exactly; bad magic rejected.
void a10_idx_fixture() {
    const fs::path dir = fs::temp_directory_path();
    const fs::path img = dir / "tabudrop_acc_images.idx";
    const fs::path lab = dir / "tabudrop_acc_labels.idx";
    const fs::path bad = dir / "tabudrop_acc_badmagic.idx";

    const unsigned char pixels[12] = {0,   51,  102, 153, 204, 255,
                                      255, 204, 153, 102, 51,  0};
    const auto be32 = [](std::ofstream& out, std::uint32_t v) {
        out.put(static_cast<char>(v >> 24));
        out.put(static_cast<char>(v >> 16));
        out.put(static_cast<char>(v >> 8));
        out.put(static_cast<char>(v));
    };
    {
        std::ofstream out(img, std::ios::binary);
        be32(out, 0x00000803u);
        be32(out, 2);
        be32(out, 2);
        be32(out, 3);
        out.write(reinterpret_cast<const char*>(pixels), 12);
    }
    {
        std::ofstream out(lab, std::ios::binary);
        be32(out, 0x00000801u);
        be32(out, 2);
        out.put(1);
        out.put(0);
    }
    {
        std::ofstream out(bad, std::ios::binary);
        be32(out, 0x00000999u);
        be32(out, 2);
        be32(out, 2);
        be32(out, 3);
        out.write(reinterpret_cast<const char*>(pixels), 12);
    }

    bool exact = true;
    bool loaded = false;
    try {
        const Dataset ds = load_idx(img.string(), lab.string());
        loaded = ds.size() == 2 && ds.feature_width() == 6 &&
                 ds.labels == std::vector<int>({1, 0});
        for (std::size_t i = 0; i < 12; ++i) {
            if (ds.features.values()[i] !=
                static_cast<double>(pixels[i]) / 255.0)
                exact = false;
        }
    } catch (const std::exception&) {
        loaded = false;
    }

    bool rejected = false;
    try {
        load_idx(bad.string(), lab.string());
    } catch (const FormatError&) {
        rejected = true;
    } catch (const std::exception&) {
        rejected = false;
    }

    std::ostringstream detail;
    detail << "2-image fixture " << (loaded && exact ? "loads exactly" : "wrong")
           << ", bad magic "
           << (rejected ? "rejected with format error" : "not rejected");
    report("A10", loaded && exact && rejected, detail.str());

    std::error_code ec;
    fs::remove(img, ec);
    fs::remove(lab, ec);
    fs::remove(bad, ec);
}

}  // namespace

int main() {
    std::printf("acceptance gate (kernels: %s)\n", kernels::active().name);
    a1_tabu_safety();
    a2_tt1_oracle();
    a3_q_replay();
    a4_policies();
    a5_rewards();
    a6_gradcheck();
    a7_directional();
    a8_adaptive_mechanics();
    a9_determinism();
    a10_idx_fixture();
    std::printf(g_all_pass ? "all criteria passed\n"
                           : "one or more criteria failed\n");
    return g_all_pass ? 0 : 1;
}

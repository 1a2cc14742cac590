#include "tabudrop/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "tabudrop/errors.hpp"
#include "tabudrop/nn.hpp"

namespace tabudrop {

namespace {

// Stream tags: every random decision in a replicate draws from its own
// stream derived from (replicate seed, tag), so adding draws to one
// consumer never perturbs the others.
constexpr std::uint64_t kInitStream = 0x496e6974;     // weight init
constexpr std::uint64_t kDropStream = 0x44726f70;     // dropout masks
constexpr std::uint64_t kShuffleStream = 0x53687566;  // batch order
constexpr std::uint64_t kBanditStream = 0x426e6474;   // arm selection
constexpr std::uint64_t kSplitStream = 0x53706c74;    // validation split

std::string trim(const std::string& s) {
    const char* ws = " \t\r\n";
    const auto begin = s.find_first_not_of(ws);
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(ws);
    return s.substr(begin, end - begin + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw UsageError("invalid value for config key '" + key + "': " + value);
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const std::uint64_t v = std::stoull(value, &used);
        if (used != value.size() || value[0] == '-') bad_value(key, value);
        return v;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, value);
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) bad_value(key, value);
        return v;
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception&) {
        bad_value(key, value);
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value);
}

Policy parse_policy(const std::string& key, const std::string& value) {
    if (value == "random") return Policy::random;
    if (value == "greedy") return Policy::greedy;
    if (value == "epsilon_greedy") return Policy::epsilon_greedy;
    if (value == "probabilistic") return Policy::probabilistic;
    if (value == "softmax") return Policy::softmax;
    bad_value(key, value);
}

RewardModel parse_reward_model(const std::string& key,
                               const std::string& value) {
    if (value == "inverse") return RewardModel::inverse;
    if (value == "negexp") return RewardModel::neg_exp;
    bad_value(key, value);
}

void parse_variant(ExperimentConfig& cfg, const std::string& value) {
    if (value == "none") {
        cfg.variant = Variant::none;
    } else if (value == "standard_dropout") {
        cfg.variant = Variant::standard_dropout;
    } else if (value == "tabu") {
        cfg.variant = Variant::tabu;
    } else if (value == "adaptive") {
        cfg.variant = Variant::adaptive;
    } else if (value.rfind("tenure:", 0) == 0) {
        cfg.variant = Variant::tenure;
        cfg.tenure = parse_u64("variant", value.substr(7));
    } else {
        bad_value("variant", value);
    }
}

void apply_key(ExperimentConfig& cfg, const std::string& key,
               const std::string& value) {
    auto& data = cfg.data;
    if (key == "name") {
        cfg.name = value;
    } else if (key == "dataset") {
        if (value == "synth") data.synthetic = true;
        else if (value == "idx") data.synthetic = false;
        else bad_value(key, value);
    } else if (key == "synth_train") {
        data.synth_train = parse_u64(key, value);
    } else if (key == "synth_test") {
        data.synth_test = parse_u64(key, value);
    } else if (key == "synth_features") {
        data.synth_features = parse_u64(key, value);
    } else if (key == "synth_classes") {
        data.synth_classes = static_cast<int>(parse_u64(key, value));
    } else if (key == "synth_spread") {
        data.synth_spread = parse_double(key, value);
    } else if (key == "synth_seed") {
        data.synth_seed = parse_u64(key, value);
    } else if (key == "train_images") {
        data.train_images = value;
    } else if (key == "train_labels") {
        data.train_labels = value;
    } else if (key == "test_images") {
        data.test_images = value;
    } else if (key == "test_labels") {
        data.test_labels = value;
    } else if (key == "hidden_width") {
        cfg.hidden_width = parse_u64(key, value);
    } else if (key == "epochs") {
        cfg.epochs = parse_u64(key, value);
    } else if (key == "batch_size") {
        cfg.batch_size = parse_u64(key, value);
    } else if (key == "learning_rate") {
        cfg.learning_rate = parse_double(key, value);
    } else if (key == "drop_rate") {
        cfg.drop_rate = parse_double(key, value);
    } else if (key == "variant") {
        parse_variant(cfg, value);
    } else if (key == "policy") {
        cfg.policy = parse_policy(key, value);
    } else if (key == "reward_model") {
        cfg.reward_model = parse_reward_model(key, value);
    } else if (key == "adaption_period") {
        cfg.adaption_period = static_cast<std::uint32_t>(parse_u64(key, value));
    } else if (key == "epsilon") {
        cfg.epsilon = parse_double(key, value);
    } else if (key == "warmup") {
        cfg.warmup = parse_u64(key, value);
        cfg.warmup_set = true;
    } else if (key == "tt_max") {
        cfg.tt_max = static_cast<int>(parse_u64(key, value));
    } else if (key == "replicates") {
        cfg.replicates = parse_u64(key, value);
    } else if (key == "base_seed") {
        cfg.base_seed = parse_u64(key, value);
    } else if (key == "tick") {
        if (value == "per_batch") cfg.granularity = TickGranularity::per_batch;
        else if (value == "per_epoch") cfg.granularity = TickGranularity::per_epoch;
        else bad_value(key, value);
    } else if (key == "tick_per_epoch") {
        cfg.granularity = parse_bool(key, value) ? TickGranularity::per_epoch
                                                 : TickGranularity::per_batch;
    } else if (key == "dropout_after_each_hidden") {
        cfg.dropout_after_each_hidden = parse_bool(key, value);
    } else if (key == "validation_fraction") {
        cfg.validation_fraction = parse_double(key, value);
    } else if (key == "reward_on_validation") {
        cfg.reward_on_validation = parse_bool(key, value);
    } else if (key == "deterministic_timing") {
        cfg.deterministic_timing = parse_bool(key, value);
    } else if (key == "parallel_replicates") {
        cfg.parallel_replicates = parse_bool(key, value);
    } else if (key == "out_dir") {
        cfg.out_dir = value;
    } else {
        throw UsageError("unknown config key: " + key);
    }
}

void finalize(ExperimentConfig& cfg) {
    if (cfg.epochs == 0) throw UsageError("config key 'epochs' must be >= 1");
    if (cfg.batch_size == 0)
        throw UsageError("config key 'batch_size' must be >= 1");
    if (cfg.hidden_width == 0)
        throw UsageError("config key 'hidden_width' must be >= 1");
    if (cfg.replicates == 0)
        throw UsageError("config key 'replicates' must be >= 1");
    if (!(cfg.learning_rate > 0.0))
        throw UsageError("config key 'learning_rate' must be positive");
    if (!(cfg.drop_rate >= 0.0 && cfg.drop_rate < 1.0))
        throw UsageError("config key 'drop_rate' must be in [0, 1)");
    if (cfg.tt_max < 1) throw UsageError("config key 'tt_max' must be >= 1");
    if (cfg.adaption_period == 0)
        throw UsageError("config key 'adaption_period' must be >= 1");
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0))
        throw UsageError("config key 'epsilon' must be in [0, 1]");
    if (!(cfg.validation_fraction >= 0.0 && cfg.validation_fraction < 1.0))
        throw UsageError("config key 'validation_fraction' must be in [0, 1)");
    if (cfg.reward_on_validation && cfg.validation_fraction <= 0.0)
        throw UsageError(
            "config key 'reward_on_validation' requires validation_fraction > 0");
    if (cfg.variant == Variant::tenure &&
        (cfg.tenure < 1 ||
         cfg.tenure > static_cast<std::uint64_t>(cfg.tt_max)))
        throw UsageError("config key 'variant': tenure must be in [1, tt_max]");
    if (!cfg.data.synthetic) {
        if (cfg.data.train_images.empty())
            throw UsageError("missing config key for idx dataset: train_images");
        if (cfg.data.train_labels.empty())
            throw UsageError("missing config key for idx dataset: train_labels");
        if (cfg.data.test_images.empty())
            throw UsageError("missing config key for idx dataset: test_images");
        if (cfg.data.test_labels.empty())
            throw UsageError("missing config key for idx dataset: test_labels");
    }
    if (cfg.data.synthetic &&
        (cfg.data.synth_train == 0 || cfg.data.synth_test == 0))
        throw UsageError("synth_train and synth_test must be >= 1");
    if (cfg.name.empty()) cfg.name = cfg.variant_string();
}

std::string sanitize_name(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '_' || c == '-';
        if (!ok) c = '_';
    }
    return out;
}

Dataset slice_dataset(const Dataset& ds, std::size_t begin, std::size_t end) {
    Dataset out;
    out.features = Matrix(end - begin, ds.feature_width());
    out.labels.assign(ds.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                      ds.labels.begin() + static_cast<std::ptrdiff_t>(end));
    out.classes = ds.classes;
    std::memcpy(out.features.data(), ds.features.row(begin),
                (end - begin) * ds.feature_width() * sizeof(double));
    return out;
}

DropoutMode variant_mode(Variant v) {
    switch (v) {
        case Variant::none: return DropoutMode::none;
        case Variant::standard_dropout: return DropoutMode::standard_inverted;
        default: return DropoutMode::tabu_tenure;
    }
}

}  // namespace

std::string DatasetSpec::signature() const {
    std::ostringstream os;
    if (synthetic) {
        char spread[32];
        std::snprintf(spread, sizeof(spread), "%.17g", synth_spread);
        os << "synth|" << synth_train << '|' << synth_test << '|'
           << synth_features << '|' << synth_classes << '|' << spread << '|'
           << synth_seed;
    } else {
        os << "idx|" << train_images << '|' << train_labels << '|'
           << test_images << '|' << test_labels;
    }
    return os.str();
}

std::string ExperimentConfig::variant_string() const {
    switch (variant) {
        case Variant::none: return "none";
        case Variant::standard_dropout: return "standard_dropout";
        case Variant::tabu: return "tabu";
        case Variant::tenure: return "tenure:" + std::to_string(tenure);
        case Variant::adaptive: return "adaptive";
    }
    return "unknown";
}

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError("config line " + std::to_string(line_no) +
                             " is not 'key = value': " + line);
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw UsageError("config line " + std::to_string(line_no) +
                             " has an empty key");
        apply_key(cfg, key, value);
    }
    finalize(cfg);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config_text(buffer.str());
}

std::string resolve_out_dir(const ExperimentConfig& cfg,
                            const RunOverrides& overrides) {
    if (overrides.out_dir) return *overrides.out_dir;
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* env = std::getenv("TABUDROP_OUT_DIR"); env && *env)
        return env;
    return "results";
}

std::pair<Dataset, Dataset> make_dataset(const DatasetSpec& spec) {
    if (spec.synthetic) {
        // Train and test are slices of one draw so they share class means.
        const std::size_t total = spec.synth_train + spec.synth_test;
        const Dataset full =
            synth_blobs(total, spec.synth_features, spec.synth_classes,
                        spec.synth_spread, spec.synth_seed);
        return {slice_dataset(full, 0, spec.synth_train),
                slice_dataset(full, spec.synth_train, total)};
    }
    Dataset train = load_idx(spec.train_images, spec.train_labels);
    Dataset test = load_idx(spec.test_images, spec.test_labels);
    if (train.feature_width() != test.feature_width())
        throw ConsistencyError("train and test images disagree on pixel count");
    const int classes = std::max(train.classes, test.classes);
    train.classes = classes;
    test.classes = classes;
    return {std::move(train), std::move(test)};
}

std::vector<EpochRecord> train_single_replicate(const ExperimentConfig& cfg,
                                                const Dataset& train,
                                                const Dataset& test,
                                                std::uint64_t seed) {
    Rng init_rng(derive_seed(seed, kInitStream));
    Rng dropout_rng(derive_seed(seed, kDropStream));
    Rng bandit_rng(derive_seed(seed, kBanditStream));

    Dataset carved_train, validation;
    const Dataset* train_used = &train;
    if (cfg.validation_fraction > 0.0) {
        auto parts = split_dataset(train, cfg.validation_fraction,
                                   derive_seed(seed, kSplitStream));
        validation = std::move(parts.first);
        carved_train = std::move(parts.second);
        train_used = &carved_train;
    }

    NetworkConfig ncfg;
    ncfg.input_width = train.feature_width();
    ncfg.hidden_width = cfg.hidden_width;
    ncfg.classes = static_cast<std::size_t>(std::max(train.classes, test.classes));
    ncfg.dropout.drop_rate = cfg.drop_rate;
    ncfg.dropout.mode = variant_mode(cfg.variant);
    ncfg.dropout.tenure = cfg.variant == Variant::tenure ? cfg.tenure : 1;
    ncfg.dropout.granularity = cfg.granularity;
    ncfg.dropout_after_each_hidden = cfg.dropout_after_each_hidden;

    Network net(ncfg, init_rng);
    AdamState adam(net, AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});

    const bool adaptive = cfg.variant == Variant::adaptive;
    std::optional<BanditState> bandit;
    AdaptionSchedule schedule(cfg.adaption_period);
    int current_arm = 0;
    if (adaptive) {
        bandit.emplace(ArmSet::up_to(cfg.tt_max), cfg.policy, cfg.reward_model,
                       cfg.epsilon, cfg.effective_warmup());
    }

    BatchPlan plan{cfg.batch_size, derive_seed(seed, kShuffleStream)};
    std::vector<EpochRecord> records;
    records.reserve(cfg.epochs);

    for (std::uint64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        if (adaptive && should_reselect(epoch, schedule)) {
            current_arm = bandit->select_arm(epoch, bandit_rng);
            net.set_tenure(static_cast<std::uint64_t>(current_arm));
        }
        net.start_epoch();

        double loss_sum = 0.0;
        for (const auto& batch_idx : batches(train_used->size(), plan, epoch)) {
            const Matrix bx = gather_rows(train_used->features, batch_idx);
            const std::vector<int> by =
                gather_labels(train_used->labels, batch_idx);
            const Matrix log_probs =
                net.forward(bx, /*training=*/true, dropout_rng);
            loss_sum +=
                nll_loss(log_probs, by) * static_cast<double>(by.size());
            adam.step(net, net.backward(by));
        }
        const double mean_loss =
            loss_sum / static_cast<double>(train_used->size());

        if (adaptive) {
            const double reward_loss =
                cfg.reward_on_validation ? eval_mean_nll(net, validation)
                                         : mean_loss;
            bandit->epoch_reward(current_arm, reward_loss);
        }

        const double test_error = evaluate(net, test);
        double wall_ms = 0.0;
        if (!cfg.deterministic_timing) {
            const auto elapsed = std::chrono::steady_clock::now() - started;
            wall_ms = std::chrono::duration<double, std::milli>(elapsed).count();
        }
        records.push_back(
            {epoch, mean_loss, test_error, adaptive ? current_arm : 0, wall_ms});
    }
    return records;
}

std::string format_csv_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp);
        out.write(content.data(),
                  static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::string epoch_csv(const std::vector<EpochRecord>& records) {
    std::string out = "epoch,mean_train_loss,test_error,selected_tt,wall_ms\n";
    for (const auto& r : records) {
        out += std::to_string(r.epoch);
        out += ',';
        out += format_csv_double(r.mean_train_loss);
        out += ',';
        out += format_csv_double(r.test_error);
        out += ',';
        out += std::to_string(r.selected_tt);
        out += ',';
        out += format_csv_double(r.wall_ms);
        out += '\n';
    }
    return out;
}

std::string summary_csv(const SummaryRow& row) {
    std::string out = "variant,mean_error,std_error,replicates\n";
    out += row.variant;
    out += ',';
    out += format_csv_double(row.mean_error);
    out += ',';
    out += format_csv_double(row.std_error);
    out += ',';
    out += std::to_string(row.replicates);
    out += '\n';
    return out;
}

RunResult run(const ExperimentConfig& cfg, const RunOverrides& overrides) {
    ExperimentConfig eff = cfg;
    if (overrides.seed) eff.base_seed = *overrides.seed;
    if (overrides.replicates) eff.replicates = *overrides.replicates;
    const std::string out_dir = resolve_out_dir(eff, overrides);
    std::filesystem::create_directories(out_dir);

    const auto [train, test] = make_dataset(eff.data);

    std::vector<std::vector<EpochRecord>> all(eff.replicates);
    const auto run_one = [&](std::size_t i) {
        return train_single_replicate(eff, train, test, eff.base_seed + i);
    };
    if (eff.parallel_replicates && eff.replicates > 1) {
        std::vector<std::future<std::vector<EpochRecord>>> futures;
        futures.reserve(eff.replicates);
        for (std::size_t i = 0; i < eff.replicates; ++i)
            futures.push_back(std::async(std::launch::async, run_one, i));
        for (std::size_t i = 0; i < eff.replicates; ++i)
            all[i] = futures[i].get();
    } else {
        for (std::size_t i = 0; i < eff.replicates; ++i) all[i] = run_one(i);
    }

    double mean = 0.0;
    for (const auto& records : all) mean += records.back().test_error;
    mean /= static_cast<double>(eff.replicates);
    double variance = 0.0;
    for (const auto& records : all) {
        const double d = records.back().test_error - mean;
        variance += d * d;
    }
    variance /= static_cast<double>(eff.replicates);

    RunResult result;
    const std::string display =
        eff.name.empty() ? eff.variant_string() : eff.name;
    result.summary = {display, mean, std::sqrt(variance), eff.replicates};

    const std::string base = sanitize_name(display);
    for (std::size_t i = 0; i < eff.replicates; ++i) {
        const std::string path =
            out_dir + "/" + base + "_rep" + std::to_string(i) + ".csv";
        write_file_atomic(path, epoch_csv(all[i]));
        result.csv_paths.push_back(path);
    }
    result.summary_path = out_dir + "/" + base + "_summary.csv";
    write_file_atomic(result.summary_path, summary_csv(result.summary));
    result.replicate_records = std::move(all);
    return result;
}

CompareResult compare(const std::vector<std::string>& config_paths,
                      const RunOverrides& overrides) {
    if (config_paths.size() < 2)
        throw UsageError("compare requires at least two configs");
    std::vector<ExperimentConfig> configs;
    configs.reserve(config_paths.size());
    for (const auto& path : config_paths) configs.push_back(load_config(path));
    for (std::size_t i = 1; i < configs.size(); ++i) {
        if (configs[i].data.signature() != configs[0].data.signature())
            throw UsageError("configs disagree on the dataset: " +
                             config_paths[i]);
    }

    CompareResult result;
    for (const auto& cfg : configs)
        result.rows.push_back(run(cfg, overrides).summary);

    result.best_index = 0;
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
        if (result.rows[i].mean_error < result.rows[result.best_index].mean_error)
            result.best_index = i;
    }

    std::string csv = "variant,mean_error,std_error,replicates,best\n";
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& row = result.rows[i];
        csv += row.variant + ',' + format_csv_double(row.mean_error) + ',' +
               format_csv_double(row.std_error) + ',' +
               std::to_string(row.replicates) + ',' +
               (i == result.best_index ? "1" : "0") + '\n';
    }
    const std::string out_dir = resolve_out_dir(configs[0], overrides);
    std::filesystem::create_directories(out_dir);
    result.csv_path = out_dir + "/compare.csv";
    write_file_atomic(result.csv_path, csv);

    std::size_t name_width = std::strlen("variant");
    for (const auto& row : result.rows)
        name_width = std::max(name_width, row.variant.size());
    std::ostringstream table;
    table << std::left << std::setw(static_cast<int>(name_width) + 2)
          << "variant" << std::right << std::setw(12) << "mean_error"
          << std::setw(12) << "std_error" << std::setw(12) << "replicates"
          << '\n';
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        const auto& row = result.rows[i];
        table << std::left << std::setw(static_cast<int>(name_width) + 2)
              << row.variant << std::right << std::setw(12)
              << format_csv_double(row.mean_error) << std::setw(12)
              << format_csv_double(row.std_error) << std::setw(12)
              << row.replicates;
        if (i == result.best_index) table << "  <- best";
        table << '\n';
    }
    result.table_text = table.str();
    return result;
}

namespace {

bool check_tabu_safety() {
    for (int tt = 1; tt <= 6; ++tt) {
        constexpr std::size_t width = 128;
        TabuLedger ledger(width, static_cast<std::uint64_t>(tt));
        Rng rng(derive_seed(2024, static_cast<std::uint64_t>(tt)));
        std::vector<std::uint64_t> seen(width, 0);
        for (int step = 0; step < 2000; ++step) {
            const KeepMask mask =
                apply_tabu(sample_keep_mask(width, 0.5, rng), ledger);
            for (std::size_t u = 0; u < width; ++u) {
                if (mask.keeps(u)) continue;
                if (seen[u] != 0 &&
                    ledger.tick - seen[u] <= static_cast<std::uint64_t>(tt))
                    return false;
                seen[u] = ledger.tick;
            }
            commit(mask, ledger);
        }
    }
    return true;
}

bool check_policy_sums() {
    const Policy policies[] = {Policy::random, Policy::greedy,
                               Policy::epsilon_greedy, Policy::probabilistic,
                               Policy::softmax};
    for (const Policy policy : policies) {
        BanditState state(ArmSet::up_to(6), policy, RewardModel::neg_exp, 0.5,
                          0);
        Rng rng(7);
        for (int i = 0; i < 60; ++i) {
            state.record(1 + static_cast<int>(rng.below(6)), rng.uniform());
        }
        const auto pi = state.policy_distribution();
        double sum = 0.0;
        for (const double p : pi) {
            if (p < 0.0) return false;
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-12) return false;
    }
    return true;
}

bool check_gradient() {
    NetworkConfig ncfg;
    ncfg.input_width = 4;
    ncfg.hidden_width = 8;
    ncfg.classes = 3;
    ncfg.dropout.drop_rate = 0.5;
    ncfg.dropout.mode = DropoutMode::tabu_tenure;
    ncfg.dropout.tenure = 2;
    ncfg.dropout.granularity = TickGranularity::per_epoch;
    ncfg.dropout_after_each_hidden = true;
    Rng init_rng(11);
    Network net(ncfg, init_rng);

    Rng data_rng(12);
    Matrix batch(8, 4);
    for (auto& v : batch.values()) v = data_rng.normal();
    std::vector<int> labels(8);
    for (auto& y : labels) y = static_cast<int>(data_rng.below(3));

    return gradcheck_max_rel_error(net, batch, labels, 1e-5) < 1e-6;
}

bool check_idx_fixture() {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path();
    const auto tag = std::to_string(
        std::chrono::steady_clock::now().time_since_epoch().count());
    const std::string images = (dir / ("tabudrop_img_" + tag)).string();
    const std::string labels = (dir / ("tabudrop_lbl_" + tag)).string();

    const unsigned char image_bytes[] = {
        0x00, 0x00, 0x08, 0x03, 0x00, 0x00, 0x00, 0x02,
        0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x03,
        0,    51,   102,  153,  204,  255,
        255,  204,  153,  102,  51,   0};
    const unsigned char label_bytes[] = {0x00, 0x00, 0x08, 0x01,
                                         0x00, 0x00, 0x00, 0x02, 1, 0};
    {
        std::ofstream img(images, std::ios::binary);
        img.write(reinterpret_cast<const char*>(image_bytes),
                  sizeof(image_bytes));
        std::ofstream lbl(labels, std::ios::binary);
        lbl.write(reinterpret_cast<const char*>(label_bytes),
                  sizeof(label_bytes));
    }

    bool ok = true;
    try {
        const Dataset ds = load_idx(images, labels);
        ok &= ds.size() == 2 && ds.feature_width() == 6 && ds.classes == 2;
        const double expected[] = {0.0 / 255, 51.0 / 255,  102.0 / 255,
                                   153.0 / 255, 204.0 / 255, 255.0 / 255};
        for (std::size_t c = 0; c < 6 && ok; ++c) {
            ok &= ds.features(0, c) == expected[c];
            ok &= ds.features(1, c) == expected[5 - c];
        }
        ok &= ds.labels == std::vector<int>({1, 0});
    } catch (const std::exception&) {
        ok = false;
    }

    if (ok) {
        // Corrupt the image magic; the loader must refuse the file.
        std::ofstream img(images, std::ios::binary);
        img.put(0x7f);
        img.write(reinterpret_cast<const char*>(image_bytes) + 1,
                  sizeof(image_bytes) - 1);
        img.close();
        try {
            load_idx(images, labels);
            ok = false;
        } catch (const FormatError&) {
        } catch (const std::exception&) {
            ok = false;
        }
    }

    std::error_code ec;
    fs::remove(images, ec);
    fs::remove(labels, ec);
    return ok;
}

}  // namespace

bool selftest(std::ostream& out) {
    bool all = true;
    const auto report = [&](const char* name, bool pass) {
        out << (pass ? "[PASS] " : "[FAIL] ") << name << '\n';
        all = all && pass;
    };
    report("tabu-safety (TT 1..6, width 128, p=0.5, 2000 ticks)",
           check_tabu_safety());
    report("policy-sums (all five policies sum to 1)", check_policy_sums());
    report("gradient-check (4-8-8-3 net, fixed masks)", check_gradient());
    report("idx-fixture (2-image round trip, bad magic rejected)",
           check_idx_fixture());
    return all;
}

}  // namespace tabudrop

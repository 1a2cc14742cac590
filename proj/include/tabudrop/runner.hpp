#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tabudrop/bandit.hpp"
#include "tabudrop/data.hpp"
#include "tabudrop/mask.hpp"

namespace tabudrop {

enum class Variant { none, standard_dropout, tabu, tenure, adaptive };

/// Where the train/test pair comes from: a deterministic synthetic task or
/// an IDX file quartet. Two specs with equal signature() describe the same
/// data, which is what compare() requires of its inputs.
struct DatasetSpec {
    bool synthetic = true;

    std::size_t synth_train = 5000;
    std::size_t synth_test = 1000;
    std::size_t synth_features = 64;
    int synth_classes = 10;
    double synth_spread = 0.15;
    std::uint64_t synth_seed = 12345;

    std::string train_images, train_labels, test_images, test_labels;

    std::string signature() const;
};

struct ExperimentConfig {
    std::string name;  // defaults to the variant string
    DatasetSpec data;

    std::size_t hidden_width = 256;
    std::size_t epochs = 40;
    std::size_t batch_size = 512;
    double learning_rate = 0.01;
    double drop_rate = 0.5;

    Variant variant = Variant::standard_dropout;
    std::uint64_t tenure = 1;  // variant tenure:k only

    Policy policy = Policy::softmax;
    RewardModel reward_model = RewardModel::neg_exp;
    std::uint32_t adaption_period = 25;
    double epsilon = 0.5;
    std::uint64_t warmup = 0;
    bool warmup_set = false;  // unset -> epochs / 2
    int tt_max = 6;

    std::size_t replicates = 5;
    std::uint64_t base_seed = 1;
    TickGranularity granularity = TickGranularity::per_batch;
    bool dropout_after_each_hidden = false;

    double validation_fraction = 0.0;
    bool reward_on_validation = false;
    bool deterministic_timing = false;
    bool parallel_replicates = false;
    std::string out_dir;  // empty -> flag, then env, then "results"

    std::uint64_t effective_warmup() const {
        return warmup_set ? warmup : epochs / 2;
    }
    std::string variant_string() const;
};

/// Parses flat `key = value` lines with `#` comments. Unknown keys and
/// malformed values throw UsageError naming the offending key.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// One per-epoch CSV row. selected_tt is 0 for every non-adaptive variant.
struct EpochRecord {
    std::uint64_t epoch;
    double mean_train_loss;
    double test_error;
    int selected_tt;
    double wall_ms;
};

struct SummaryRow {
    std::string variant;
    double mean_error;
    double std_error;
    std::size_t replicates;
};

struct RunResult {
    SummaryRow summary;
    std::vector<std::vector<EpochRecord>> replicate_records;
    std::vector<std::string> csv_paths;
    std::string summary_path;
};

struct RunOverrides {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> replicates;
};

/// Flag > config key > TABUDROP_OUT_DIR > "results".
std::string resolve_out_dir(const ExperimentConfig& cfg,
                            const RunOverrides& overrides);

/// Materializes the config's dataset as a (train, test) pair drawn from the
/// same distribution.
std::pair<Dataset, Dataset> make_dataset(const DatasetSpec& spec);

/// Trains one replicate to completion and returns its per-epoch records.
/// Everything random is derived from `seed`, so equal (config, seed) pairs
/// produce identical records.
std::vector<EpochRecord> train_single_replicate(const ExperimentConfig& cfg,
                                                const Dataset& train,
                                                const Dataset& test,
                                                std::uint64_t seed);

/// Multi-replicate experiment: replicate i runs with seed base_seed + i,
/// per-epoch CSVs and the summary CSV are written atomically under the
/// resolved output directory.
RunResult run(const ExperimentConfig& cfg, const RunOverrides& overrides = {});

struct CompareResult {
    std::vector<SummaryRow> rows;
    std::size_t best_index;
    std::string csv_path;
    std::string table_text;
};

/// Runs every config (all must share a dataset) and tabulates the summary
/// rows, flagging the lowest mean error.
CompareResult compare(const std::vector<std::string>& config_paths,
                      const RunOverrides& overrides = {});

/// Fast invariant suite; prints one verdict line per check. True = all pass.
bool selftest(std::ostream& out);

/// Shortest representation with 6 significant digits (printf %.6g).
std::string format_csv_double(double v);

/// Whole-file write via a temp file and rename, so readers never observe a
/// partial CSV.
void write_file_atomic(const std::string& path, const std::string& content);

std::string epoch_csv(const std::vector<EpochRecord>& records);
std::string summary_csv(const SummaryRow& row);

}  // namespace tabudrop

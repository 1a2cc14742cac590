#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "tabudrop/errors.hpp"
#include "tabudrop/runner.hpp"

using namespace tabudrop;
namespace fs = std::filesystem;

namespace {

std::string tiny_config_text(const std::string& variant,
                             const std::string& extra = "") {
    std::string text =
        "variant = " + variant + "\n" +
        "dataset = synth\n"
        "synth_train = 120\n"
        "synth_test = 60\n"
        "synth_features = 8\n"
        "synth_classes = 3\n"
        "synth_spread = 0.1\n"
        "synth_seed = 5\n"
        "hidden_width = 16\n"
        "epochs = 4\n"
        "batch_size = 32\n"
        "replicates = 2\n"
        "base_seed = 7\n"
        "deterministic_timing = true\n";
    return text + extra;
}

fs::path write_config(const std::string& stem, const std::string& text) {
    const fs::path path = fs::temp_directory_path() / (stem + ".cfg");
    std::ofstream out(path);
    out << text;
    return path;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& stem)
        : path(fs::temp_directory_path() / stem) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

}  // namespace

TEST_CASE("config parsing fills defaults and reads every key") {
    const ExperimentConfig cfg = parse_config_text(
        "# comment line\n"
        "\n"
        "variant = adaptive\n"
        "policy = epsilon_greedy\n"
        "reward_model = inverse\n"
        "adaption_period = 10\n"
        "epsilon = 0.25\n"
        "warmup = 3\n"
        "tt_max = 4\n"
        "epochs = 30\n"
        "hidden_width = 64\n"
        "batch_size = 128\n"
        "learning_rate = 0.005\n"
        "drop_rate = 0.4\n"
        "replicates = 3\n"
        "base_seed = 11\n"
        "tick = per_epoch\n"
        "dropout_after_each_hidden = true\n"
        "validation_fraction = 0.1\n"
        "reward_on_validation = true\n"
        "deterministic_timing = true\n"
        "parallel_replicates = false\n"
        "name = my_run\n"
        "out_dir = /tmp/somewhere\n");
    CHECK(cfg.variant == Variant::adaptive);
    CHECK(cfg.policy == Policy::epsilon_greedy);
    CHECK(cfg.reward_model == RewardModel::inverse);
    CHECK(cfg.adaption_period == 10);
    CHECK(cfg.epsilon == 0.25);
    CHECK(cfg.warmup == 3);
    CHECK(cfg.warmup_set);
    CHECK(cfg.effective_warmup() == 3);
    CHECK(cfg.tt_max == 4);
    CHECK(cfg.epochs == 30);
    CHECK(cfg.hidden_width == 64);
    CHECK(cfg.batch_size == 128);
    CHECK(cfg.learning_rate == 0.005);
    CHECK(cfg.drop_rate == 0.4);
    CHECK(cfg.replicates == 3);
    CHECK(cfg.base_seed == 11);
    CHECK(cfg.granularity == TickGranularity::per_epoch);
    CHECK(cfg.dropout_after_each_hidden);
    CHECK(cfg.validation_fraction == 0.1);
    CHECK(cfg.reward_on_validation);
    CHECK(cfg.deterministic_timing);
    CHECK_FALSE(cfg.parallel_replicates);
    CHECK(cfg.name == "my_run");
    CHECK(cfg.out_dir == "/tmp/somewhere");

    const ExperimentConfig defaults = parse_config_text("variant = tabu\n");
    CHECK(defaults.hidden_width == 256);
    CHECK(defaults.epochs == 40);
    CHECK(defaults.batch_size == 512);
    CHECK(defaults.learning_rate == 0.01);
    CHECK(defaults.drop_rate == 0.5);
    CHECK(defaults.replicates == 5);
    CHECK(defaults.tt_max == 6);
    CHECK(defaults.adaption_period == 25);
    CHECK(defaults.epsilon == 0.5);
    CHECK_FALSE(defaults.warmup_set);
    CHECK(defaults.effective_warmup() == 20);  // epochs / 2
    CHECK(defaults.data.synthetic);
    CHECK(defaults.data.synth_train == 5000);
    CHECK(defaults.data.synth_test == 1000);
    CHECK(defaults.data.synth_features == 64);
    CHECK(defaults.data.synth_classes == 10);
    CHECK(defaults.name == "tabu");

    // tick_per_epoch is the boolean spelling of the tick key.
    CHECK(parse_config_text("tick_per_epoch = true\n").granularity ==
          TickGranularity::per_epoch);
    CHECK(parse_config_text("tick_per_epoch = false\n").granularity ==
          TickGranularity::per_batch);
    CHECK_THROWS_AS(parse_config_text("tick_per_epoch = maybe\n"), UsageError);
}

TEST_CASE("tenure variant parses its parameter") {
    const ExperimentConfig cfg = parse_config_text("variant = tenure:4\n");
    CHECK(cfg.variant == Variant::tenure);
    CHECK(cfg.tenure == 4);
    CHECK(cfg.variant_string() == "tenure:4");

    CHECK(parse_config_text("variant = none\n").variant_string() == "none");
    CHECK(parse_config_text("variant = standard_dropout\n").variant_string() ==
          "standard_dropout");
    CHECK(parse_config_text("variant = tabu\n").variant_string() == "tabu");
    CHECK(parse_config_text("variant = adaptive\n").variant_string() ==
          "adaptive");
}

TEST_CASE("config error paths raise UsageError") {
    CHECK_THROWS_AS(parse_config_text("no_such_key = 1\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("variant tabu\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("variant = bogus\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("variant = tenure:0\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("variant = tenure:9\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("variant = tenure:x\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("epochs = 0\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("epochs = -3\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("epochs = abc\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("batch_size = 0\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("replicates = 0\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("learning_rate = 0\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("drop_rate = 1\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("drop_rate = -0.1\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("epsilon = 1.5\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("adaption_period = 0\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("tt_max = 0\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("policy = alpha\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("reward_model = squared\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("tick = hourly\n"), UsageError);
    CHECK_THROWS_AS(parse_config_text("deterministic_timing = maybe\n"),
                    UsageError);
    CHECK_THROWS_AS(parse_config_text("validation_fraction = 1\n"),
                    UsageError);
    CHECK_THROWS_AS(parse_config_text("reward_on_validation = true\n"),
                    UsageError);  // requires validation_fraction > 0
    CHECK_THROWS_AS(parse_config_text("dataset = idx\n"),
                    UsageError);  // idx paths missing
    CHECK_THROWS_AS(
        parse_config_text("dataset = idx\ntrain_images = a\n"
                          "train_labels = b\ntest_images = c\n"),
        UsageError);
    CHECK_THROWS_AS(parse_config_text("synth_train = 0\n"), UsageError);

    // The offending key is named in the message.
    try {
        parse_config_text("no_such_key = 1\n");
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("no_such_key") != std::string::npos);
    }
}

TEST_CASE("format_csv_double uses six significant digits") {
    CHECK(format_csv_double(0.0) == "0");
    CHECK(format_csv_double(1.0) == "1");
    CHECK(format_csv_double(0.5) == "0.5");
    CHECK(format_csv_double(1.0 / 3.0) == "0.333333");
    CHECK(format_csv_double(123456789.0) == "1.23457e+08");
    CHECK(format_csv_double(0.000123456789) == "0.000123457");
}

TEST_CASE("resolve_out_dir precedence") {
    ExperimentConfig cfg;
    RunOverrides overrides;

    ::unsetenv("TABUDROP_OUT_DIR");
    CHECK(resolve_out_dir(cfg, overrides) == "results");

    ::setenv("TABUDROP_OUT_DIR", "/tmp/from_env", 1);
    CHECK(resolve_out_dir(cfg, overrides) == "/tmp/from_env");

    cfg.out_dir = "/tmp/from_config";
    CHECK(resolve_out_dir(cfg, overrides) == "/tmp/from_config");

    overrides.out_dir = "/tmp/from_flag";
    CHECK(resolve_out_dir(cfg, overrides) == "/tmp/from_flag");

    ::unsetenv("TABUDROP_OUT_DIR");
}

TEST_CASE("runs are byte-deterministic for equal config and seed") {
    TempDir dir_a("tabudrop_det_a");
    TempDir dir_b("tabudrop_det_b");
    const ExperimentConfig cfg = parse_config_text(tiny_config_text("tabu"));

    RunOverrides a, b;
    a.out_dir = dir_a.path.string();
    b.out_dir = dir_b.path.string();
    const RunResult ra = run(cfg, a);
    const RunResult rb = run(cfg, b);

    REQUIRE(ra.csv_paths.size() == 2);
    REQUIRE(rb.csv_paths.size() == 2);
    for (std::size_t i = 0; i < ra.csv_paths.size(); ++i)
        CHECK(slurp(ra.csv_paths[i]) == slurp(rb.csv_paths[i]));
    CHECK(slurp(ra.summary_path) == slurp(rb.summary_path));

    // A different base seed changes the records.
    TempDir dir_c("tabudrop_det_c");
    RunOverrides c;
    c.out_dir = dir_c.path.string();
    c.seed = 999;
    const RunResult rc = run(cfg, c);
    CHECK(slurp(rc.csv_paths[0]) != slurp(ra.csv_paths[0]));
}

TEST_CASE("csv files carry the documented schema") {
    TempDir dir("tabudrop_schema");
    ExperimentConfig cfg = parse_config_text(tiny_config_text("tenure:2"));
    RunOverrides overrides;
    overrides.out_dir = dir.path.string();
    overrides.replicates = 1;
    const RunResult res = run(cfg, overrides);

    const std::string csv = slurp(res.csv_paths[0]);
    std::istringstream lines(csv);
    std::string header;
    std::getline(lines, header);
    CHECK(header == "epoch,mean_train_loss,test_error,selected_tt,wall_ms");

    std::size_t rows = 0;
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        ++rows;
        // deterministic_timing pins wall_ms to 0; non-adaptive pins tt to 0.
        CHECK(line.substr(line.size() - 4) == ",0,0");
    }
    CHECK(rows == cfg.epochs);

    const std::string summary = slurp(res.summary_path);
    CHECK(summary.rfind("variant,mean_error,std_error,replicates\n", 0) == 0);
    CHECK(summary.find("tenure:2,") != std::string::npos);
}

TEST_CASE("summary statistics recompute from the replicate records") {
    TempDir dir("tabudrop_sumstat");
    const ExperimentConfig cfg = parse_config_text(tiny_config_text("tabu"));
    RunOverrides overrides;
    overrides.out_dir = dir.path.string();
    const RunResult res = run(cfg, overrides);

    REQUIRE(res.replicate_records.size() == 2);
    std::vector<double> finals;
    for (const auto& records : res.replicate_records) {
        REQUIRE(records.size() == cfg.epochs);
        finals.push_back(records.back().test_error);
    }
    double mean = 0.0;
    for (const double f : finals) mean += f;
    mean /= static_cast<double>(finals.size());
    double var = 0.0;
    for (const double f : finals) var += (f - mean) * (f - mean);
    var /= static_cast<double>(finals.size());  // population variance

    CHECK(std::abs(res.summary.mean_error - mean) <= 1e-12);
    CHECK(std::abs(res.summary.std_error - std::sqrt(var)) <= 1e-12);
    CHECK(res.summary.replicates == 2);
    CHECK(res.summary.variant == "tabu");
}

TEST_CASE("adaptive runs reselect only on period boundaries") {
    TempDir dir("tabudrop_adaptsel");
    ExperimentConfig cfg = parse_config_text(tiny_config_text(
        "adaptive",
        "adaption_period = 3\n"
        "tt_max = 3\n"
        "warmup = 0\n"
        "epochs = 10\n"));
    RunOverrides overrides;
    overrides.out_dir = dir.path.string();
    overrides.replicates = 1;
    const RunResult res = run(cfg, overrides);

    const auto& records = res.replicate_records[0];
    REQUIRE(records.size() == 10);
    for (const auto& rec : records) {
        CHECK(rec.selected_tt >= 1);
        CHECK(rec.selected_tt <= 3);
    }
    for (std::size_t e = 0; e < records.size(); ++e) {
        if (e % 3 != 0)
            CHECK(records[e].selected_tt == records[e - 1].selected_tt);
    }
}

TEST_CASE("write_file_atomic leaves no temp files behind") {
    TempDir dir("tabudrop_atomic");
    const std::string path = (dir.path / "out.csv").string();
    write_file_atomic(path, "hello\n");
    CHECK(slurp(path) == "hello\n");
    write_file_atomic(path, "replaced\n");
    CHECK(slurp(path) == "replaced\n");

    std::size_t entries = 0;
    for (const auto& entry : fs::directory_iterator(dir.path)) {
        (void)entry;
        ++entries;
    }
    CHECK(entries == 1);
}

TEST_CASE("compare validates its inputs") {
    const fs::path one =
        write_config("tabudrop_cmp_one", tiny_config_text("tabu"));
    CHECK_THROWS_AS(compare({one.string()}), UsageError);

    const fs::path other = write_config(
        "tabudrop_cmp_other",
        tiny_config_text("tenure:2", "synth_seed = 999\n"));
    CHECK_THROWS_AS(compare({one.string(), other.string()}), UsageError);
    fs::remove(one);
    fs::remove(other);
}

TEST_CASE("compare flags the lowest mean error") {
    TempDir dir("tabudrop_cmp");
    const fs::path a =
        write_config("tabudrop_cmp_a", tiny_config_text("tenure:2"));
    const fs::path b =
        write_config("tabudrop_cmp_b", tiny_config_text("standard_dropout"));

    RunOverrides overrides;
    overrides.out_dir = dir.path.string();
    overrides.replicates = 1;
    const CompareResult res = compare({a.string(), b.string()}, overrides);

    REQUIRE(res.rows.size() == 2);
    CHECK(res.best_index < 2);
    const double best = res.rows[res.best_index].mean_error;
    for (const auto& row : res.rows) CHECK(best <= row.mean_error);

    const std::string csv = slurp(res.csv_path);
    CHECK(csv.rfind("variant,mean_error,std_error,replicates,best\n", 0) == 0);
    CHECK(res.table_text.find("<- best") != std::string::npos);
    CHECK(res.table_text.find("tenure:2") != std::string::npos);
    fs::remove(a);
    fs::remove(b);
}

TEST_CASE("selftest passes and reports each check") {
    std::ostringstream out;
    CHECK(selftest(out));
    const std::string text = out.str();
    CHECK(text.find("[PASS]") != std::string::npos);
    CHECK(text.find("[FAIL]") == std::string::npos);
}

TEST_CASE("variant none never drops and standard ignores tenure keys") {
    TempDir dir("tabudrop_variants");
    RunOverrides overrides;
    overrides.out_dir = dir.path.string();
    overrides.replicates = 1;

    for (const std::string variant : {"none", "standard_dropout"}) {
        const ExperimentConfig cfg =
            parse_config_text(tiny_config_text(variant));
        const RunResult res = run(cfg, overrides);
        REQUIRE(res.replicate_records.size() == 1);
        for (const auto& rec : res.replicate_records[0])
            CHECK(rec.selected_tt == 0);
        CHECK(res.summary.variant == variant);
    }
}

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vflu/config.hpp"
#include "vflu/errors.hpp"
#include "vflu/experiment.hpp"
#include "vflu/manifest.hpp"
#include "vflu/metrics_io.hpp"
#include "vflu/plots.hpp"

using namespace vflu;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
    static int counter = 0;
    auto p = fs::temp_directory_path() /
             ("vflu_harness_" + std::to_string(counter++) + "_" + tag);
    fs::create_directories(p);
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// small synthetic run so harness tests stay quick
const char* kSmokeConfig = R"(
# smoke experiment
[run]
arm = fedavg
dataset = synth
seed = 1
threads = 2

[data]
train_limit = 400
test_limit = 200
synth_height = 12
synth_width = 12

[train]
clients = 5
epochs = 5
batch = 16
lr = 0.3

[backdoor]
target_client = 0
fraction = 0.8
label = 8
)";

ExperimentConfig smoke_config(const fs::path& out, const std::string& arm = "fedavg") {
    ExperimentConfig cfg = parse_config_text(kSmokeConfig, "smoke");
    cfg.arm = arm;
    cfg.out_dir = out.string();
    cfg.unlearn.eta = 0.05;
    cfg.unlearn.epochs = 6;
    cfg.unlearn.batch_size = 16;
    cfg.unlearn.stop_threshold = 3.0;
    cfg.unlearn.post_train_rounds = 2;
    cfg.mia_pool = 160;
    cfg.mia_shadows = 2;
    cfg.shadow.epochs = 8;
    cfg.shadow.batch_size = 16;
    cfg.shadow.lr = 0.3;
    return cfg;
}

} // namespace

TEST_CASE("config parser reads sections, keys and defaults") {
    const ExperimentConfig cfg = parse_config_text(kSmokeConfig, "inline");
    CHECK(cfg.arm == "fedavg");
    CHECK(cfg.dataset == "synth");
    CHECK(cfg.train.num_clients == 5);
    CHECK(cfg.train.epochs == 5);
    CHECK(cfg.train.batch_size == 16);
    CHECK(cfg.train.lr == doctest::Approx(0.3));
    CHECK(cfg.backdoor.poison_fraction == doctest::Approx(0.8));
    CHECK(cfg.backdoor.target_label == 8);
    CHECK(cfg.unlearn.radius_divisor == doctest::Approx(3.0)); // default
    CHECK(cfg.train.seed == cfg.seed);
}

TEST_CASE("config parser reports file, line and field on errors") {
    CHECK_THROWS_WITH_AS(parse_config_text("[run]\nbogus_key = 1\n", "cfg"),
                         doctest::Contains("cfg:2"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[nope]\n", "cfg"), doctest::Contains("unknown section"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("[train]\nepochs = abc\n", "cfg"),
                         doctest::Contains("epochs"), ConfigError);
    CHECK_THROWS_WITH_AS(parse_config_text("key_without_section = 1\n", "cfg"),
                         doctest::Contains("section"), ConfigError);
    CHECK_THROWS_AS(parse_config_text("[run]\narm = warp\n", "cfg"), ConfigError);
    // cifar needs the explicit heavy-arm switch
    CHECK_THROWS_WITH_AS(parse_config_text("[run]\ndataset = cifar10\n", "cfg"),
                         doctest::Contains("allow_cifar"), ConfigError);
    // mnist demands existing files
    CHECK_THROWS_WITH_AS(parse_config_text("[run]\ndataset = mnist\n", "cfg"),
                         doctest::Contains("train_images"), ConfigError);
}

TEST_CASE("metrics csv round-trips through its parser") {
    std::vector<MetricsRecord> records;
    MetricsRecord a;
    a.round = 1;
    a.phase = "train";
    a.clean_acc = 0.9173333333333333;
    a.backdoor_acc = 0.0125;
    records.push_back(a);
    MetricsRecord b;
    b.round = 2;
    b.phase = "unlearn";
    b.drift = 1.2345678901234567e-3;
    b.dist_to_center = 7.0;
    records.push_back(b);

    const std::string text = metrics_to_csv(records);
    const auto parsed = parse_metrics_csv_text(text, "mem");
    REQUIRE(parsed.size() == 2);
    CHECK(parsed[0].round == 1);
    CHECK(parsed[0].phase == "train");
    CHECK(parsed[0].clean_acc == a.clean_acc); // exact: shortest round-trip form
    CHECK(parsed[0].backdoor_acc == a.backdoor_acc);
    CHECK(std::isnan(parsed[0].drift));
    CHECK(parsed[1].drift == b.drift);
    CHECK(parsed[1].dist_to_center == 7.0);
    CHECK(std::isnan(parsed[1].clean_acc));

    CHECK_THROWS_AS(parse_metrics_csv_text("bad header\n", "mem"), FormatError);
    CHECK_THROWS_AS(parse_metrics_csv_text(metrics_to_csv({}) + "1,x\n", "mem"), FormatError);
}

TEST_CASE("format_double writes shortest exact decimal forms") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(NAN) == "");
    const double v = 0.12345678901234567;
    CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("render_accuracy_svg draws one polyline per series and panel") {
    std::vector<MetricsSeries> series(2);
    series[0].label = "fedavg";
    series[1].label = "retrain";
    for (size_t s = 0; s < 2; ++s) {
        for (size_t r = 1; r <= 5; ++r) {
            MetricsRecord rec;
            rec.round = r;
            rec.phase = "train";
            rec.clean_acc = 0.5 + 0.08 * double(r) - 0.1 * double(s);
            rec.backdoor_acc = 1.0 - 0.15 * double(r);
            series[s].rows.push_back(rec);
        }
    }
    const std::string svg = render_accuracy_svg(series);
    size_t polylines = 0;
    for (size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) {
        ++polylines;
    }
    CHECK(polylines == 4); // two panels x two series
    CHECK(svg.find("clean accuracy") != std::string::npos);
    CHECK(svg.find("backdoor accuracy") != std::string::npos);
    CHECK(svg.find(">0.00<") != std::string::npos); // y axis spans [0,1]
    CHECK(svg.find(">1.00<") != std::string::npos);
    CHECK(svg.find(">5<") != std::string::npos); // x axis reaches round E
    CHECK(svg.find("fedavg") != std::string::npos);
    CHECK(svg.find("retrain") != std::string::npos);

    CHECK_THROWS_AS(render_accuracy_svg({}), ArgumentError);
    std::vector<MetricsSeries> empty_rows(1);
    empty_rows[0].label = "empty";
    CHECK_THROWS_AS(render_accuracy_svg(empty_rows), ArgumentError);
}

TEST_CASE("emit_plots writes accuracy.svg only when metrics exist") {
    const auto dir = temp_dir("plots_empty");
    CHECK_THROWS_AS(emit_plots(dir), ArgumentError);
    CHECK_FALSE(fs::exists(dir / "accuracy.svg"));
    fs::remove_all(dir);
}

TEST_CASE("time_report assembles manifests and lists missing ones") {
    const auto d1 = temp_dir("run_a");
    const auto d2 = temp_dir("run_b");
    RunManifest m;
    m.arm = "fedavg";
    m.master_seed = 5;
    m.phase_wall_s = {{"train", 12.5}, {"setup", 0.5}};
    m.artifacts = {"metrics.csv", "manifest.json"};
    write_manifest(d1 / "manifest.json", m);
    m.arm = "unlearn";
    m.phase_wall_s = {{"train", 12.0}, {"unlearn", 0.4}};
    write_manifest(d2 / "manifest.json", m);

    const auto rows = time_report({d1, d2});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].arm == "fedavg");
    CHECK(rows[0].total_s == doctest::Approx(13.0));
    CHECK(rows[1].phase_wall_s.at("unlearn") == doctest::Approx(0.4));
    const std::string table = format_timing_table(rows);
    CHECK(table.find("fedavg") != std::string::npos);

    const auto missing = temp_dir("run_missing");
    CHECK_THROWS_WITH_AS(time_report({d1, missing}), doctest::Contains("run_missing"),
                         ArgumentError);
    fs::remove_all(d1);
    fs::remove_all(d2);
    fs::remove_all(missing);
}

TEST_CASE("the fedavg smoke arm emits E rows with an upward accuracy trend") {
    const auto out = temp_dir("smoke");
    const ExperimentConfig cfg = smoke_config(out);
    std::ostringstream log;
    run_experiment(cfg, log);

    const auto rows = parse_metrics_csv(out / "metrics.csv");
    REQUIRE(rows.size() == 5);
    for (size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].round == i + 1);
        CHECK(rows[i].phase == "train");
        CHECK(std::isnan(rows[i].wall_ms)); // deterministic output by default
    }
    CHECK(rows.back().clean_acc >= rows.front().clean_acc);

    const RunManifest manifest = read_manifest(out / "manifest.json");
    CHECK(manifest.arm == "fedavg");
    for (const auto& artifact : manifest.artifacts) {
        CHECK(fs::exists(out / artifact));
    }
    CHECK(fs::exists(out / "summary.json"));
    fs::remove_all(out);
}

TEST_CASE("rerunning an arm with the same seed is byte-identical") {
    const auto out1 = temp_dir("det1");
    const auto out2 = temp_dir("det2");
    std::ostringstream log;
    run_experiment(smoke_config(out1), log);
    run_experiment(smoke_config(out2), log);
    CHECK(read_file(out1 / "metrics.csv") == read_file(out2 / "metrics.csv"));
    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("the unlearn_pt smoke arm records drift and post-training rows") {
    const auto out = temp_dir("unlearn_pt");
    std::ostringstream log;
    run_experiment(smoke_config(out, "unlearn_pt"), log);
    const auto rows = parse_metrics_csv(out / "metrics.csv");
    size_t train_rows = 0, unlearn_rows = 0, final_rows = 0, pt_rows = 0;
    for (const auto& r : rows) {
        if (r.phase == "train") ++train_rows;
        if (r.phase == "unlearn") {
            ++unlearn_rows;
            CHECK(!std::isnan(r.drift));
            CHECK(!std::isnan(r.dist_to_center));
        }
        if (r.phase == "unlearn_final") ++final_rows;
        if (r.phase == "post_train") ++pt_rows;
    }
    CHECK(train_rows == 5);
    CHECK(unlearn_rows >= 1);
    CHECK(final_rows == 1);
    CHECK(pt_rows == 2);
    CHECK(fs::exists(out / "trajectory.csv"));

    // plots over this run's metrics
    const auto svg = emit_plots(out);
    CHECK(fs::exists(svg));
    fs::remove_all(out);
}

TEST_CASE("constrained and mia smoke arms emit their summaries") {
    const auto out1 = temp_dir("constrained");
    std::ostringstream log;
    run_experiment(smoke_config(out1, "constrained"), log);
    {
        std::ifstream f(out1 / "summary.json");
        std::stringstream ss;
        ss << f.rdbuf();
        CHECK(ss.str().find("final_clean_acc") != std::string::npos);
    }
    const auto rows = parse_metrics_csv(out1 / "metrics.csv");
    CHECK(rows.back().phase == "constrained");
    fs::remove_all(out1);

    const auto out2 = temp_dir("mia");
    ExperimentConfig cfg = smoke_config(out2, "mia");
    cfg.mia_poison_pool = 40;
    run_experiment(cfg, log);
    {
        std::ifstream f(out2 / "summary.json");
        std::stringstream ss;
        ss << f.rdbuf();
        const std::string text = ss.str();
        CHECK(text.find("mia_recall_fedavg") != std::string::npos);
        CHECK(text.find("mia_recall_unlearn") != std::string::npos);
    }
    fs::remove_all(out2);
}

TEST_CASE("a numeric abort dumps the trajectory and maps to exit code 3") {
    const auto out = temp_dir("abort");
    ExperimentConfig cfg = smoke_config(out, "unlearn");
    cfg.unlearn.eta = 1e200; // explodes within the first ascent epoch
    cfg.unlearn.radius = 1e300;
    cfg.unlearn.stop_threshold = 1e301;
    std::ostringstream log;
    CHECK_THROWS_WITH_AS(run_experiment(cfg, log), doctest::Contains("trajectory"), NumericError);
    CHECK(fs::exists(out / "trajectory_dump.csv"));
    CHECK_FALSE(fs::exists(out / "manifest.json")); // incomplete run has no marker
    fs::remove_all(out);
}

TEST_CASE("grid arms emit their tables") {
    const auto out = temp_dir("grid");
    ExperimentConfig cfg = smoke_config(out, "grid_t");
    cfg.t_values = {0.5, 2.0};
    std::ostringstream log;
    run_experiment(cfg, log);
    const std::string grid = read_file(out / "grid_t.csv");
    CHECK(grid.find("threshold,clean_acc,backdoor_acc,stop_epoch,final_drift") == 0);
    CHECK(std::count(grid.begin(), grid.end(), '\n') == 3);
    fs::remove_all(out);
}

TEST_CASE("VFLU_OUTPUT_ROOT redirects relative output directories") {
    const auto root = temp_dir("rootdir");
    setenv("VFLU_OUTPUT_ROOT", root.string().c_str(), 1);
    ExperimentConfig cfg = parse_config_text(kSmokeConfig, "inline");
    cfg.out_dir = "nested/run";
    CHECK(cfg.resolved_out_dir() == root / "nested/run");
    unsetenv("VFLU_OUTPUT_ROOT");
    CHECK(cfg.resolved_out_dir() == fs::path("nested/run"));
    fs::remove_all(root);
}

#if defined(__unix__) || defined(__APPLE__)
namespace {
int run_cli(const std::string& args) {
    const char* cli = std::getenv("VFLU_CLI");
    if (!cli || !*cli) return -1;
    const int status = std::system((std::string(cli) + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
}
} // namespace

TEST_CASE("the CLI maps error classes to its exit-code contract") {
    if (!std::getenv("VFLU_CLI")) return; // binary location comes from ctest
    CHECK(run_cli("") == 2);              // missing subcommand is a usage error
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("run /nonexistent/config.cfg") == 2);

    const auto dir = temp_dir("cli");
    {
        std::ofstream f(dir / "bad.cfg");
        f << "[run]\narm = wat\n";
    }
    CHECK(run_cli("run " + (dir / "bad.cfg").string()) == 2);
    CHECK(run_cli("plots " + dir.string()) == 2);
    CHECK(run_cli("timing " + dir.string()) == 2);

    {
        std::ofstream f(dir / "ok.cfg");
        f << kSmokeConfig << "\n[run]\nout = " << (dir / "out").string() << "\n";
    }
    CHECK(run_cli("run " + (dir / "ok.cfg").string()) == 0);
    CHECK(run_cli("plots " + (dir / "out").string()) == 0);
    CHECK(run_cli("timing " + (dir / "out").string()) == 0);

    {
        std::ofstream f(dir / "explode.cfg");
        f << kSmokeConfig << "\n[run]\narm = unlearn\nout = " << (dir / "boom").string()
          << "\n[unlearn]\neta = 1e200\nradius = 1e300\nthreshold = 1e301\n";
    }
    CHECK(run_cli("run " + (dir / "explode.cfg").string()) == 3);
    CHECK(fs::exists(dir / "boom" / "trajectory_dump.csv"));
    fs::remove_all(dir);
}
#endif

#include "vflu/experiment.hpp"

#include <chrono>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <ostream>

#include <json.hpp>

#include "vflu/errors.hpp"
#include "vflu/manifest.hpp"
#include "vflu/metrics_io.hpp"
#include "vflu/rng.hpp"

namespace vflu {

namespace {

// sub-seed path labels for the harness phases
constexpr uint64_t kSeedTrainData = 0x61;
constexpr uint64_t kSeedTestData = 0x62;
constexpr uint64_t kSeedPartition = 0x63;
constexpr uint64_t kSeedPoison = 0x64;
constexpr uint64_t kSeedCalibrate = 0x65;
constexpr uint64_t kSeedMiaPool = 0x66;
constexpr uint64_t kSeedShadows = 0x67;

class PhaseTimer {
public:
    void run(const std::string& phase, const std::function<void()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        seconds_[phase] += std::chrono::duration<double>(t1 - t0).count();
    }
    const std::map<std::string, double>& seconds() const { return seconds_; }

private:
    std::map<std::string, double> seconds_;
};

RawDataset build_raw(const ExperimentConfig& cfg, bool test) {
    if (cfg.dataset == "synth") {
        const size_t n = test ? cfg.test_limit : cfg.train_limit;
        if (n == 0) throw ConfigError("synth dataset needs non-zero train/test limits");
        return synth_dataset(Rng::derive(cfg.seed, test ? kSeedTestData : kSeedTrainData), n,
                             cfg.synth_classes, cfg.synth_height, cfg.synth_width);
    }
    RawDataset ds;
    if (cfg.dataset == "cifar10") {
        ds = test ? load_cifar10({cfg.cifar_test_batch}) : load_cifar10(cfg.cifar_train_batches);
    } else {
        ds = test ? load_idx(cfg.test_images, cfg.test_labels)
                  : load_idx(cfg.train_images, cfg.train_labels);
        ds.name = cfg.dataset;
    }
    const size_t limit = test ? cfg.test_limit : cfg.train_limit;
    if (limit > 0 && limit < ds.count()) return ds.head(limit);
    return ds;
}

SplitNet build_net(const ExperimentConfig& cfg, const RawDataset& sample) {
    const size_t w = sample.width();
    const size_t wl = (w + 1) / 2, wr = w - wl;
    std::string model = cfg.model;
    if (model.empty()) model = cfg.dataset == "cifar10" ? "alexnet" : "cnn";
    if (model == "alexnet") {
        return make_alexnet_split(sample.channels(), sample.height(), wl, wr, sample.num_classes);
    }
    return make_cnn_split(sample.channels(), sample.height(), wl, wr, sample.num_classes);
}

} // namespace

ExperimentSetup build_setup(const ExperimentConfig& cfg) {
    ExperimentSetup s;
    s.train_raw = build_raw(cfg, false);
    s.test_raw = build_raw(cfg, true);
    s.net = build_net(cfg, s.train_raw);

    auto samples = vertical_split(s.train_raw);
    s.clients = partition_clients(samples, cfg.train.num_clients, Rng::derive(cfg.seed, kSeedPartition));
    s.clients[cfg.target_client] = inject_backdoor(s.clients[cfg.target_client], cfg.backdoor,
                                                   Rng::derive(cfg.seed, kSeedPoison));
    for (const auto& sample : s.clients[cfg.target_client].samples) {
        if (sample.poisoned) s.target_poisoned.push_back(sample);
    }
    s.clean_test = vertical_split(s.test_raw);
    s.backdoor_test = build_backdoor_testset(s.test_raw, cfg.backdoor);

    if (cfg.dataset != "synth" && cfg.train_limit > 0) {
        const RawDataset full = [&] {
            if (cfg.dataset == "cifar10") return load_cifar10(cfg.cifar_train_batches);
            auto ds = load_idx(cfg.train_images, cfg.train_labels);
            ds.name = cfg.dataset;
            return ds;
        }();
        s.mia_pool_available = full.count() > cfg.train_limit ? full.count() - cfg.train_limit : 0;
    }
    return s;
}

namespace {

struct ArmOutputs {
    std::vector<MetricsRecord> metrics;
    nlohmann::json summary;
    // extra artifacts: name -> file contents
    std::vector<std::pair<std::string, std::string>> extra_files;
};

std::string trajectory_csv(const std::vector<UnlearnTrajectoryPoint>& traj) {
    std::string out = "epoch,mean_loss,drift,dist_to_center\n";
    for (const auto& p : traj) {
        out += std::to_string(p.epoch) + "," + format_double(p.mean_loss) + "," +
               format_double(p.drift) + "," + format_double(p.dist_to_center) + "\n";
    }
    return out;
}

std::string threshold_grid_csv(const std::vector<ThresholdGridRow>& rows) {
    std::string out = "threshold,clean_acc,backdoor_acc,stop_epoch,final_drift\n";
    for (const auto& r : rows) {
        out += format_double(r.threshold) + "," + format_double(r.clean_acc) + "," +
               format_double(r.backdoor_acc) + "," + std::to_string(r.stop_epoch) + "," +
               format_double(r.final_drift) + "\n";
    }
    return out;
}

std::string radius_grid_csv(const std::vector<RadiusGridRow>& rows) {
    std::string out = "factor,radius,clean_acc,backdoor_acc,stop_epoch\n";
    for (const auto& r : rows) {
        out += format_double(r.factor) + "," + format_double(r.radius) + "," +
               format_double(r.clean_acc) + "," + format_double(r.backdoor_acc) + "," +
               std::to_string(r.stop_epoch) + "\n";
    }
    return out;
}

/// Shared flow for the arms that start from a FedAvg model.
struct UnlearnPhase {
    SplitParams w_global;
    SplitParams w_target_prev;
    SplitParams w_con;
    RadiusCalibration calib;
    UnlearnConfig ucfg;
};

UnlearnPhase prepare_unlearn(const ExperimentConfig& cfg, const ExperimentSetup& setup,
                             TrainResult&& train_res) {
    UnlearnPhase p;
    p.w_global = std::move(train_res.model);
    p.w_target_prev = std::move(train_res.last_locals[cfg.target_client]);
    if (p.w_target_prev.size() == 0) {
        throw ArgumentError("target client " + std::to_string(cfg.target_client) +
                            " did not participate in training");
    }
    p.w_con = constrained_model(p.w_global, p.w_target_prev, cfg.train.num_clients);
    p.ucfg = cfg.unlearn;
    if (!(p.ucfg.radius > 0.0)) {
        p.calib = calibrate_radius(setup.net, p.w_con, 10, Rng::derive(cfg.seed, kSeedCalibrate),
                                   p.ucfg.radius_divisor);
        p.ucfg.radius = p.calib.radius;
    } else {
        p.calib.radius = p.ucfg.radius;
        p.calib.dist = 0.0;
    }
    return p;
}

/// The auditor's pool: mostly clean samples plus a smaller trigger-stamped
/// slice that plays the attacked client's data inside the shadow worlds.
std::vector<VerticalSample> build_mia_pool(const ExperimentConfig& cfg,
                                           const ExperimentSetup& setup) {
    const size_t n_poison = std::min(cfg.mia_poison_pool, cfg.mia_pool / 3);
    const size_t n_clean = cfg.mia_pool - n_poison;
    RawDataset clean_raw, poison_raw;
    if (cfg.dataset == "synth") {
        clean_raw = synth_dataset(Rng::derive(cfg.seed, kSeedMiaPool), n_clean, cfg.synth_classes,
                                  cfg.synth_height, cfg.synth_width);
        poison_raw = synth_dataset(Rng::derive(cfg.seed, kSeedMiaPool, 1), n_poison,
                                   cfg.synth_classes, cfg.synth_height, cfg.synth_width);
    } else {
        if (setup.mia_pool_available < cfg.mia_pool) {
            throw ArgumentError("mia pool needs " + std::to_string(cfg.mia_pool) +
                                " unused training samples, only " +
                                std::to_string(setup.mia_pool_available) +
                                " remain after train_limit");
        }
        const RawDataset full = cfg.dataset == "cifar10"
                                    ? load_cifar10(cfg.cifar_train_batches)
                                    : load_idx(cfg.train_images, cfg.train_labels);
        clean_raw = full.slice(cfg.train_limit, n_clean);
        poison_raw = full.slice(cfg.train_limit + n_clean, n_poison);
    }
    std::vector<VerticalSample> pool = vertical_split(clean_raw);
    for (auto& s : build_backdoor_testset(poison_raw, cfg.backdoor)) pool.push_back(std::move(s));
    return pool;
}

ArmOutputs run_arm(const ExperimentConfig& cfg, const ExperimentSetup& setup, PhaseTimer& timer,
                   std::ostream& log) {
    ArmOutputs out;
    out.summary["arm"] = cfg.arm;

    // Round probe over the fixed evaluation sets; wall times are captured on
    // the side so metrics rows stay byte-identical unless asked for.
    std::vector<double> round_wall_ms;
    auto round_clock = std::make_shared<std::chrono::steady_clock::time_point>(
        std::chrono::steady_clock::now());
    RoundEval eval = [&, round_clock](const SplitParams& m) {
        const EvalResult clean = evaluate(setup.net, m, setup.clean_test, cfg.threads);
        const EvalResult bd = backdoor_accuracy(setup.net, m, setup.backdoor_test, cfg.threads);
        const auto now = std::chrono::steady_clock::now();
        round_wall_ms.push_back(std::chrono::duration<double, std::milli>(now - *round_clock).count());
        *round_clock = now;
        return std::make_pair(clean.accuracy, bd.accuracy);
    };
    // grid cells already run in parallel; their inner eval stays on one thread
    RoundEval eval_serial = [&](const SplitParams& m) {
        const EvalResult clean = evaluate(setup.net, m, setup.clean_test, 1);
        const EvalResult bd = backdoor_accuracy(setup.net, m, setup.backdoor_test, 1);
        return std::make_pair(clean.accuracy, bd.accuracy);
    };
    RoundEval eval_once = [&](const SplitParams& m) {
        const EvalResult clean = evaluate(setup.net, m, setup.clean_test, cfg.threads);
        const EvalResult bd = backdoor_accuracy(setup.net, m, setup.backdoor_test, cfg.threads);
        return std::make_pair(clean.accuracy, bd.accuracy);
    };
    auto stamp_wall = [&](std::vector<MetricsRecord>& rows, size_t offset) {
        if (!cfg.record_wall_ms) return;
        for (size_t i = 0; i < rows.size() && offset + i < round_wall_ms.size(); ++i) {
            rows[i].wall_ms = round_wall_ms[offset + i];
        }
    };
    auto summarize_final = [&](const std::vector<MetricsRecord>& rows) {
        if (rows.empty()) return;
        out.summary["final_clean_acc"] = rows.back().clean_acc;
        out.summary["final_backdoor_acc"] = rows.back().backdoor_acc;
    };

    if (cfg.arm == "fedavg") {
        TrainResult res;
        *round_clock = std::chrono::steady_clock::now();
        timer.run("train", [&] { res = train_fedavg(setup.net, cfg.train, setup.clients, eval); });
        stamp_wall(res.rounds, 0);
        out.metrics = std::move(res.rounds);
        summarize_final(out.metrics);
        return out;
    }

    if (cfg.arm == "retrain") {
        TrainResult res;
        *round_clock = std::chrono::steady_clock::now();
        timer.run("retrain", [&] {
            res = retrain_without_target(setup.net, cfg.train, setup.clients, cfg.target_client, eval);
        });
        stamp_wall(res.rounds, 0);
        out.metrics = std::move(res.rounds);
        summarize_final(out.metrics);
        return out;
    }

    // every remaining arm starts from a FedAvg training phase
    TrainResult train_res;
    *round_clock = std::chrono::steady_clock::now();
    timer.run("train", [&] { train_res = train_fedavg(setup.net, cfg.train, setup.clients, eval); });
    stamp_wall(train_res.rounds, 0);
    const size_t train_round_count = train_res.rounds.size();
    out.metrics = std::move(train_res.rounds);
    train_res.rounds.clear();

    if (cfg.arm == "constrained") {
        SplitParams w_con;
        const SplitParams& w_target = train_res.last_locals[cfg.target_client];
        timer.run("constrain", [&] {
            w_con = constrained_model(train_res.model, w_target, cfg.train.num_clients);
        });
        const auto [clean, bd] = eval_once(w_con);
        MetricsRecord rec;
        rec.round = cfg.train.epochs;
        rec.phase = "constrained";
        rec.clean_acc = clean;
        rec.backdoor_acc = bd;
        out.metrics.push_back(rec);
        out.summary["final_clean_acc"] = clean;
        out.summary["final_backdoor_acc"] = bd;
        return out;
    }

    UnlearnPhase up;
    timer.run("calibrate", [&] { up = prepare_unlearn(cfg, setup, std::move(train_res)); });
    out.summary["dist"] = up.calib.dist;
    out.summary["radius"] = up.ucfg.radius;

    if (cfg.arm == "grid_t") {
        std::vector<ThresholdGridRow> rows;
        timer.run("grid_t", [&] {
            rows = grid_search_threshold(setup.net, up.ucfg, cfg.t_values, up.w_global,
                                         up.w_target_prev, setup.target_poisoned,
                                         cfg.train.num_clients, eval_serial, cfg.threads);
        });
        out.extra_files.emplace_back("grid_t.csv", threshold_grid_csv(rows));
        out.summary["grid_rows"] = rows.size();
        log << "grid_t: " << rows.size() << " cells\n";
        return out;
    }

    if (cfg.arm == "grid_r") {
        std::vector<RadiusGridRow> rows;
        timer.run("grid_r", [&] {
            rows = grid_search_radius(setup.net, up.ucfg, cfg.r_factors, up.calib.dist, up.w_global,
                                      up.w_target_prev, setup.target_poisoned,
                                      cfg.train.num_clients, eval_serial, cfg.threads);
        });
        out.extra_files.emplace_back("grid_r.csv", radius_grid_csv(rows));
        out.summary["grid_rows"] = rows.size();
        log << "grid_r: " << rows.size() << " cells\n";
        return out;
    }

    // unlearn | unlearn_pt | mia
    UnlearnOutcome unlearned;
    timer.run("unlearn", [&] {
        unlearned = run_unlearning(setup.net, up.ucfg, up.w_global, up.w_target_prev,
                                   setup.target_poisoned, cfg.train.num_clients);
    });
    for (const auto& pt : unlearned.trajectory) {
        MetricsRecord rec;
        rec.round = pt.epoch;
        rec.phase = "unlearn";
        rec.drift = pt.drift;
        rec.dist_to_center = pt.dist_to_center;
        out.metrics.push_back(rec);
    }
    const auto [u_clean, u_bd] = eval_once(unlearned.model);
    MetricsRecord u_rec;
    u_rec.round = unlearned.stop_epoch;
    u_rec.phase = "unlearn_final";
    u_rec.clean_acc = u_clean;
    u_rec.backdoor_acc = u_bd;
    u_rec.drift = unlearned.final_drift;
    out.metrics.push_back(u_rec);
    out.extra_files.emplace_back("trajectory.csv", trajectory_csv(unlearned.trajectory));
    out.summary["unlearn_clean_acc"] = u_clean;
    out.summary["unlearn_backdoor_acc"] = u_bd;
    out.summary["stop_epoch"] = unlearned.stop_epoch;
    out.summary["final_drift"] = unlearned.final_drift;
    out.summary["final_clean_acc"] = u_clean;
    out.summary["final_backdoor_acc"] = u_bd;
    log << "unlearn: stop_epoch=" << unlearned.stop_epoch << " clean=" << u_clean
        << " backdoor=" << u_bd << "\n";

    if (cfg.arm == "unlearn_pt") {
        TrainResult pt_res;
        const size_t wall_offset = train_round_count;
        *round_clock = std::chrono::steady_clock::now();
        timer.run("post_train", [&] {
            pt_res = post_train(setup.net, unlearned.model, cfg.train, setup.clients,
                                cfg.target_client, cfg.unlearn.post_train_rounds, eval);
        });
        stamp_wall(pt_res.rounds, wall_offset);
        for (auto& rec : pt_res.rounds) out.metrics.push_back(std::move(rec));
        summarize_final(out.metrics);
        return out;
    }

    if (cfg.arm == "mia") {
        std::vector<VerticalSample> pool;
        std::vector<ShadowModel> shadows;
        std::map<int, AttackModel> attack;
        timer.run("shadows", [&] {
            pool = build_mia_pool(cfg, setup);
            shadows = train_shadow_models(setup.net, pool, cfg.mia_shadows, cfg.shadow,
                                          Rng::derive(cfg.seed, kSeedShadows), cfg.threads);
            attack = train_attack_models(build_attack_dataset(setup.net, shadows, pool));
        });
        MiaResult r_fed, r_unl;
        timer.run("mia", [&] {
            r_fed = mia_recall(attack, setup.net, up.w_global, setup.target_poisoned,
                               setup.backdoor_test);
            r_unl = mia_recall(attack, setup.net, unlearned.model, setup.target_poisoned,
                               setup.backdoor_test);
        });
        out.summary["mia_recall_fedavg"] = r_fed.recall;
        out.summary["mia_recall_unlearn"] = r_unl.recall;
        out.summary["mia_members"] = r_fed.tp + r_fed.fn;
        log << "mia: recall(fedavg)=" << r_fed.recall << " recall(unlearn)=" << r_unl.recall << "\n";
    }
    return out;
}

} // namespace

void run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
    const auto out_dir = cfg.resolved_out_dir();
    std::filesystem::create_directories(out_dir);

    PhaseTimer timer;
    ExperimentSetup setup;
    timer.run("setup", [&] { setup = build_setup(cfg); });
    log << "setup: " << setup.train_raw.count() << " train / " << setup.test_raw.count()
        << " test samples, " << setup.net.param_count() << " params, "
        << setup.target_poisoned.size() << " poisoned on client " << cfg.target_client << "\n";

    ArmOutputs outputs;
    try {
        outputs = run_arm(cfg, setup, timer, log);
    } catch (const UnlearnAbort& abort) {
        // numeric failure: dump the trajectory next to the metrics, then rethrow
        const auto dump = out_dir / "trajectory_dump.csv";
        std::ofstream f(dump, std::ios::binary);
        f << trajectory_csv(abort.trajectory);
        throw NumericError(std::string(abort.what()) + " (trajectory dumped to " + dump.string() +
                           ")");
    }

    RunManifest manifest;
    manifest.arm = cfg.arm;
    manifest.master_seed = cfg.seed;
    {
        std::string cfg_text;
        cfg_text += "arm=" + cfg.arm + "\ndataset=" + cfg.dataset + "\nseed=" +
                    std::to_string(cfg.seed) + "\nclients=" + std::to_string(cfg.train.num_clients) +
                    "\nepochs=" + std::to_string(cfg.train.epochs) + "\nbatch=" +
                    std::to_string(cfg.train.batch_size) + "\nlr=" + format_double(cfg.train.lr) +
                    "\ntarget_client=" + std::to_string(cfg.target_client) + "\nparty=" +
                    party_name(cfg.backdoor.selected_party) + "\npoison_fraction=" +
                    format_double(cfg.backdoor.poison_fraction) + "\ntarget_label=" +
                    std::to_string(cfg.backdoor.target_label) + "\nunlearn_eta=" +
                    format_double(cfg.unlearn.eta) + "\nunlearn_epochs=" +
                    std::to_string(cfg.unlearn.epochs) + "\nunlearn_batch=" +
                    std::to_string(cfg.unlearn.batch_size) + "\nradius_divisor=" +
                    format_double(cfg.unlearn.radius_divisor) + "\nthreshold=" +
                    format_double(cfg.unlearn.stop_threshold) + "\npost_rounds=" +
                    std::to_string(cfg.unlearn.post_train_rounds) + "\n";
        manifest.config_text = cfg_text;
    }

    // single-writer artifact emission; the manifest goes last as the
    // run-completeness marker
    write_metrics_csv(out_dir / "metrics.csv", outputs.metrics);
    manifest.artifacts.push_back("metrics.csv");
    for (const auto& [name, contents] : outputs.extra_files) {
        std::ofstream f(out_dir / name, std::ios::binary);
        if (!f) throw ArgumentError("cannot write " + (out_dir / name).string());
        f << contents;
        manifest.artifacts.push_back(name);
    }
    outputs.summary["master_seed"] = cfg.seed;
    outputs.summary["phase_wall_s"] = timer.seconds();
    {
        std::ofstream f(out_dir / "summary.json", std::ios::binary);
        if (!f) throw ArgumentError("cannot write summary.json");
        f << outputs.summary.dump(2) << "\n";
        manifest.artifacts.push_back("summary.json");
    }
    manifest.phase_wall_s = timer.seconds();
    manifest.artifacts.push_back("manifest.json");
    write_manifest(out_dir / "manifest.json", manifest);
    log << "wrote " << (out_dir / "manifest.json").string() << "\n";
}

} // namespace vflu

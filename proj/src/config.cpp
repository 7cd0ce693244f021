#include "vflu/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "vflu/errors.hpp"

namespace vflu {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct KeyContext {
    const std::string& origin;
    size_t line;
    const std::string& section;
    const std::string& key;

    [[noreturn]] void fail(const std::string& why) const {
        throw ConfigError(origin + ":" + std::to_string(line) + ": [" + section + "] " + key +
                          ": " + why);
    }
};

double to_double(const std::string& v, const KeyContext& ctx) {
    try {
        size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) ctx.fail("trailing characters in number '" + v + "'");
        return d;
    } catch (const std::exception&) {
        ctx.fail("expected a number, got '" + v + "'");
    }
}

uint64_t to_u64(const std::string& v, const KeyContext& ctx) {
    uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
        ctx.fail("expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& v, const KeyContext& ctx) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    ctx.fail("expected true/false, got '" + v + "'");
}

std::vector<double> to_double_list(const std::string& v, const KeyContext& ctx) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) ctx.fail("empty list element");
        out.push_back(to_double(item, ctx));
    }
    if (out.empty()) ctx.fail("empty list");
    return out;
}

std::vector<std::string> to_string_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

Party to_party(const std::string& v, const KeyContext& ctx) {
    if (v == "A" || v == "a") return Party::A;
    if (v == "B" || v == "b") return Party::B;
    ctx.fail("expected party A or B, got '" + v + "'");
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    size_t line_no = 0;

    const std::set<std::string> known_sections = {"run",     "data", "train", "backdoor",
                                                  "unlearn", "grid", "mia"};

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(line_no) +
                                  ": unterminated section header '" + line + "'");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (!known_sections.count(section)) {
                throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown section [" +
                                  section + "]");
            }
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + line + "'");
        }
        if (section.empty()) {
            throw ConfigError(origin + ":" + std::to_string(line_no) +
                              ": key before any [section] header");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const KeyContext ctx{origin, line_no, section, key};
        if (key.empty()) ctx.fail("empty key");

        if (section == "run") {
            if (key == "arm") cfg.arm = value;
            else if (key == "dataset") cfg.dataset = value;
            else if (key == "model") cfg.model = value;
            else if (key == "seed") cfg.seed = to_u64(value, ctx);
            else if (key == "out") cfg.out_dir = value;
            else if (key == "threads") cfg.threads = size_t(to_u64(value, ctx));
            else if (key == "record_wall_ms") cfg.record_wall_ms = to_bool(value, ctx);
            else if (key == "allow_cifar") cfg.allow_cifar = to_bool(value, ctx);
            else ctx.fail("unknown key");
        } else if (section == "data") {
            if (key == "train_images") cfg.train_images = value;
            else if (key == "train_labels") cfg.train_labels = value;
            else if (key == "test_images") cfg.test_images = value;
            else if (key == "test_labels") cfg.test_labels = value;
            else if (key == "cifar_train_batches") cfg.cifar_train_batches = to_string_list(value);
            else if (key == "cifar_test_batch") cfg.cifar_test_batch = value;
            else if (key == "train_limit") cfg.train_limit = size_t(to_u64(value, ctx));
            else if (key == "test_limit") cfg.test_limit = size_t(to_u64(value, ctx));
            else if (key == "synth_height") cfg.synth_height = size_t(to_u64(value, ctx));
            else if (key == "synth_width") cfg.synth_width = size_t(to_u64(value, ctx));
            else if (key == "synth_classes") cfg.synth_classes = size_t(to_u64(value, ctx));
            else ctx.fail("unknown key");
        } else if (section == "train") {
            if (key == "clients") cfg.train.num_clients = size_t(to_u64(value, ctx));
            else if (key == "epochs") cfg.train.epochs = size_t(to_u64(value, ctx));
            else if (key == "batch") cfg.train.batch_size = size_t(to_u64(value, ctx));
            else if (key == "lr") cfg.train.lr = to_double(value, ctx);
            else ctx.fail("unknown key");
        } else if (section == "backdoor") {
            if (key == "target_client") cfg.target_client = size_t(to_u64(value, ctx));
            else if (key == "party") cfg.backdoor.selected_party = to_party(value, ctx);
            else if (key == "rows") cfg.backdoor.trigger_rows = size_t(to_u64(value, ctx));
            else if (key == "cols") cfg.backdoor.trigger_cols = size_t(to_u64(value, ctx));
            else if (key == "row") cfg.backdoor.trigger_row = long(to_double(value, ctx));
            else if (key == "col") cfg.backdoor.trigger_col = long(to_double(value, ctx));
            else if (key == "value") cfg.backdoor.trigger_value = to_double(value, ctx);
            else if (key == "label") cfg.backdoor.target_label = int(to_u64(value, ctx));
            else if (key == "fraction") cfg.backdoor.poison_fraction = to_double(value, ctx);
            else ctx.fail("unknown key");
        } else if (section == "unlearn") {
            if (key == "eta") cfg.unlearn.eta = to_double(value, ctx);
            else if (key == "epochs") cfg.unlearn.epochs = size_t(to_u64(value, ctx));
            else if (key == "batch") cfg.unlearn.batch_size = size_t(to_u64(value, ctx));
            else if (key == "radius") cfg.unlearn.radius = to_double(value, ctx);
            else if (key == "radius_divisor") cfg.unlearn.radius_divisor = to_double(value, ctx);
            else if (key == "threshold") cfg.unlearn.stop_threshold = to_double(value, ctx);
            else if (key == "stop_when_drift_reaches")
                cfg.unlearn.stop_when_drift_reaches = to_bool(value, ctx);
            else if (key == "zero_unselected_party")
                cfg.unlearn.zero_unselected_party = to_bool(value, ctx);
            else if (key == "post_rounds") cfg.unlearn.post_train_rounds = size_t(to_u64(value, ctx));
            else ctx.fail("unknown key");
        } else if (section == "grid") {
            if (key == "t_values") cfg.t_values = to_double_list(value, ctx);
            else if (key == "r_factors") cfg.r_factors = to_double_list(value, ctx);
            else ctx.fail("unknown key");
        } else if (section == "mia") {
            if (key == "shadows") cfg.mia_shadows = size_t(to_u64(value, ctx));
            else if (key == "pool") cfg.mia_pool = size_t(to_u64(value, ctx));
            else if (key == "poison_pool") cfg.mia_poison_pool = size_t(to_u64(value, ctx));
            else if (key == "shadow_epochs") cfg.shadow.epochs = size_t(to_u64(value, ctx));
            else if (key == "shadow_batch") cfg.shadow.batch_size = size_t(to_u64(value, ctx));
            else if (key == "shadow_lr") cfg.shadow.lr = to_double(value, ctx);
            else ctx.fail("unknown key");
        }
    }

    cfg.train.seed = cfg.seed;
    cfg.unlearn.seed = cfg.seed;
    cfg.unlearn.target_client = cfg.target_client;
    cfg.unlearn.selected_party = cfg.backdoor.selected_party;
    cfg.train.threads = cfg.threads;
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config_text(ss.str(), path.string());
}

void ExperimentConfig::validate() const {
    const std::set<std::string> arms = {"fedavg", "retrain",   "constrained", "unlearn",
                                        "unlearn_pt", "grid_t", "grid_r",     "mia"};
    if (!arms.count(arm)) throw ConfigError("unknown arm '" + arm + "'");
    const std::set<std::string> datasets = {"synth", "mnist", "fashion-mnist", "cifar10"};
    if (!datasets.count(dataset)) throw ConfigError("unknown dataset '" + dataset + "'");
    if (!model.empty() && model != "cnn" && model != "alexnet") {
        throw ConfigError("unknown model '" + model + "'");
    }
    if (dataset == "cifar10" && !allow_cifar) {
        throw ConfigError("the cifar10/AlexNet arm is heavy; set allow_cifar = true to run it");
    }
    if (train.num_clients == 0) throw ConfigError("clients must be at least 1");
    if (train.epochs == 0) throw ConfigError("epochs must be at least 1");
    if (train.batch_size == 0) throw ConfigError("batch must be at least 1");
    if (!(train.lr > 0.0)) throw ConfigError("lr must be positive");
    if (target_client >= train.num_clients) {
        throw ConfigError("target_client " + std::to_string(target_client) +
                          " out of range for " + std::to_string(train.num_clients) + " clients");
    }
    if (!(backdoor.poison_fraction >= 0.0 && backdoor.poison_fraction <= 1.0)) {
        throw ConfigError("backdoor fraction must be in [0,1]");
    }
    if (backdoor.target_label < 0 || size_t(backdoor.target_label) >= synth_classes) {
        if (dataset == "synth") throw ConfigError("backdoor label out of class range");
    }
    if (!(unlearn.eta >= 0.0)) throw ConfigError("unlearn eta must be non-negative");
    if (unlearn.epochs == 0) throw ConfigError("unlearn epochs must be at least 1");
    if (!(unlearn.radius_divisor > 0.0)) throw ConfigError("radius_divisor must be positive");
    if (!(unlearn.stop_threshold > 0.0)) throw ConfigError("threshold must be positive");
    if (out_dir.empty()) throw ConfigError("out directory must not be empty");
    if (mia_shadows == 0) throw ConfigError("shadows must be at least 1");
    auto need_file = [&](const std::string& p, const char* key) {
        if (p.empty()) throw ConfigError(std::string("dataset ") + dataset + " requires [data] " + key);
        if (!std::filesystem::exists(p)) throw ConfigError(std::string(key) + ": no such file " + p);
    };
    if (dataset == "mnist" || dataset == "fashion-mnist") {
        need_file(train_images, "train_images");
        need_file(train_labels, "train_labels");
        need_file(test_images, "test_images");
        need_file(test_labels, "test_labels");
    }
    if (dataset == "cifar10") {
        if (cifar_train_batches.empty()) throw ConfigError("cifar10 requires cifar_train_batches");
        for (const auto& p : cifar_train_batches) need_file(p, "cifar_train_batches");
        need_file(cifar_test_batch, "cifar_test_batch");
    }
}

std::filesystem::path ExperimentConfig::resolved_out_dir() const {
    std::filesystem::path p(out_dir);
    if (const char* root = std::getenv("VFLU_OUTPUT_ROOT"); root && *root && p.is_relative()) {
        return std::filesystem::path(root) / p;
    }
    return p;
}

} // namespace vflu

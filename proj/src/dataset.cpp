#include "vflu/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "vflu/errors.hpp"
#include "vflu/rng.hpp"

namespace vflu {

Tensor RawDataset::image(size_t i) const {
    const size_t c = channels(), h = height(), w = width();
    const size_t stride = c * h * w;
    Tensor t({c, h, w});
    std::copy(images.data.begin() + static_cast<long>(i * stride),
              images.data.begin() + static_cast<long>((i + 1) * stride), t.data.begin());
    return t;
}

RawDataset RawDataset::head(size_t n) const { return slice(0, std::min(n, count())); }

RawDataset RawDataset::slice(size_t from, size_t n) const {
    if (from + n > count()) {
        throw ArgumentError("dataset slice [" + std::to_string(from) + ", " +
                            std::to_string(from + n) + ") exceeds " + std::to_string(count()) +
                            " samples");
    }
    RawDataset out;
    const size_t stride = channels() * height() * width();
    out.images = Tensor({n, channels(), height(), width()});
    std::copy(images.data.begin() + static_cast<long>(from * stride),
              images.data.begin() + static_cast<long>((from + n) * stride), out.images.data.begin());
    out.labels.assign(labels.begin() + static_cast<long>(from),
                      labels.begin() + static_cast<long>(from + n));
    out.name = name;
    out.num_classes = num_classes;
    return out;
}

namespace {

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + path);
    f.seekg(0, std::ios::end);
    const auto len = f.tellg();
    f.seekg(0, std::ios::beg);
    std::vector<uint8_t> bytes(static_cast<size_t>(len));
    f.read(reinterpret_cast<char*>(bytes.data()), len);
    if (!f) throw FormatError("short read on " + path);
    return bytes;
}

uint32_t be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
    if (off + 4 > b.size()) {
        throw FormatError(path + ": truncated at byte offset " + std::to_string(off));
    }
    return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) | (uint32_t(b[off + 2]) << 8) |
           uint32_t(b[off + 3]);
}

} // namespace

RawDataset load_idx(const std::string& images_path, const std::string& labels_path) {
    constexpr uint32_t kImageMagic = 0x00000803;
    constexpr uint32_t kLabelMagic = 0x00000801;

    const auto ib = read_file(images_path);
    const uint32_t imagic = be32(ib, 0, images_path);
    if (imagic != kImageMagic) {
        throw FormatError(images_path + ": bad image magic at byte offset 0 (expected 0x00000803)");
    }
    const uint32_t n = be32(ib, 4, images_path);
    const uint32_t h = be32(ib, 8, images_path);
    const uint32_t w = be32(ib, 12, images_path);
    const size_t need = 16 + size_t(n) * h * w;
    if (ib.size() < need) {
        throw FormatError(images_path + ": truncated at byte offset " + std::to_string(ib.size()) +
                          " (need " + std::to_string(need) + " bytes)");
    }

    const auto lb = read_file(labels_path);
    const uint32_t lmagic = be32(lb, 0, labels_path);
    if (lmagic != kLabelMagic) {
        throw FormatError(labels_path + ": bad label magic at byte offset 0 (expected 0x00000801)");
    }
    const uint32_t ln = be32(lb, 4, labels_path);
    if (ln != n) {
        throw FormatError(labels_path + ": label count " + std::to_string(ln) +
                          " does not match image count " + std::to_string(n) +
                          " (byte offset 4)");
    }
    if (lb.size() < 8 + size_t(n)) {
        throw FormatError(labels_path + ": truncated at byte offset " + std::to_string(lb.size()));
    }

    RawDataset ds;
    ds.images = Tensor({n, 1, h, w});
    for (size_t i = 0; i < size_t(n) * h * w; ++i) {
        ds.images.data[i] = double(ib[16 + i]) / 255.0;
    }
    ds.labels.resize(n);
    int max_label = 0;
    for (size_t i = 0; i < n; ++i) {
        ds.labels[i] = int(lb[8 + i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = size_t(std::max(10, max_label + 1));
    ds.name = "idx";
    return ds;
}

RawDataset load_cifar10(const std::vector<std::string>& batch_paths) {
    constexpr size_t kRecord = 3073; // label byte + 3*1024 pixels
    if (batch_paths.empty()) throw ArgumentError("no CIFAR batch files given");
    RawDataset ds;
    ds.name = "cifar10";
    ds.num_classes = 10;
    std::vector<double> pixels;
    for (const auto& path : batch_paths) {
        const auto bytes = read_file(path);
        if (bytes.size() % kRecord != 0) {
            throw FormatError(path + ": size " + std::to_string(bytes.size()) +
                              " is not a multiple of the 3073-byte record (byte offset " +
                              std::to_string(bytes.size() - bytes.size() % kRecord) + ")");
        }
        const size_t records = bytes.size() / kRecord;
        for (size_t r = 0; r < records; ++r) {
            const size_t off = r * kRecord;
            const uint8_t label = bytes[off];
            if (label > 9) {
                throw FormatError(path + ": label byte " + std::to_string(int(label)) +
                                  " out of range at byte offset " + std::to_string(off));
            }
            ds.labels.push_back(int(label));
            for (size_t i = 0; i < 3072; ++i) {
                pixels.push_back(double(bytes[off + 1 + i]) / 255.0);
            }
        }
    }
    ds.images = Tensor::from({ds.labels.size(), 3, 32, 32}, std::move(pixels));
    return ds;
}

RawDataset synth_dataset(uint64_t seed, size_t n, size_t num_classes, size_t height, size_t width) {
    if (n == 0 || num_classes == 0 || height == 0 || width == 0) {
        throw ArgumentError("synth_dataset dimensions must be positive");
    }
    RawDataset ds;
    ds.name = "synth";
    ds.num_classes = num_classes;
    ds.images = Tensor({n, 1, height, width});

    // Each class owns one grid cell; samples are a Gaussian blob near that
    // cell's center over a flat background. Per-sample position/amplitude
    // jitter plus pixel noise keeps the task learnable but non-saturating.
    const size_t grid_w = static_cast<size_t>(std::ceil(std::sqrt(double(num_classes))));
    const size_t grid_h = (num_classes + grid_w - 1) / grid_w;

    // Balanced labels: class c appears floor(n/C) or that plus one times.
    std::vector<int> labels;
    labels.reserve(n);
    for (size_t i = 0; i < n; ++i) labels.push_back(int(i % num_classes));
    Rng rng(seed);
    rng.shuffle(labels);
    ds.labels = labels;

    const double noise = 0.27;
    const double jitter = 0.8 + std::min(height, width) / 12.0;
    for (size_t i = 0; i < n; ++i) {
        const size_t c = size_t(labels[i]);
        const size_t cell_r = c / grid_w, cell_c = c % grid_w;
        const double cy = (double(cell_r) + 0.5) * double(height) / double(grid_h) +
                          rng.uniform(-jitter, jitter);
        const double cx = (double(cell_c) + 0.5) * double(width) / double(grid_w) +
                          rng.uniform(-jitter, jitter);
        const double sig = std::max(1.0, std::min(double(height) / double(grid_h),
                                                  double(width) / double(grid_w)) / 3.0);
        const double amp = 0.6 + rng.uniform(-0.2, 0.2);
        double* px = &ds.images.data[i * height * width];
        for (size_t r = 0; r < height; ++r) {
            for (size_t w2 = 0; w2 < width; ++w2) {
                const double dy = (double(r) - cy) / sig;
                const double dx = (double(w2) - cx) / sig;
                const double mu = 0.1 + amp * std::exp(-0.5 * (dy * dy + dx * dx));
                px[r * width + w2] = std::clamp(mu + noise * rng.normal(), 0.0, 1.0);
            }
        }
    }
    return ds;
}

std::vector<VerticalSample> vertical_split(const RawDataset& ds) {
    const size_t c = ds.channels(), h = ds.height(), w = ds.width();
    const size_t wl = (w + 1) / 2, wr = w - wl;
    if (wr == 0) throw ArgumentError("image width " + std::to_string(w) + " cannot be split");
    std::vector<VerticalSample> out(ds.count());
    for (size_t i = 0; i < ds.count(); ++i) {
        VerticalSample& s = out[i];
        s.left = Tensor({c, h, wl});
        s.right = Tensor({c, h, wr});
        const double* src = &ds.images.data[i * c * h * w];
        for (size_t ch = 0; ch < c; ++ch) {
            for (size_t r = 0; r < h; ++r) {
                const double* row = src + (ch * h + r) * w;
                std::copy(row, row + wl, &s.left.data[(ch * h + r) * wl]);
                std::copy(row + wl, row + w, &s.right.data[(ch * h + r) * wr]);
            }
        }
        s.label = ds.labels[i];
        s.poisoned = false;
    }
    return out;
}

Tensor concat_halves(const VerticalSample& s) {
    const size_t c = s.left.shape[0], h = s.left.shape[1];
    const size_t wl = s.left.shape[2], wr = s.right.shape[2];
    Tensor t({c, h, wl + wr});
    for (size_t ch = 0; ch < c; ++ch) {
        for (size_t r = 0; r < h; ++r) {
            std::copy(&s.left.data[(ch * h + r) * wl], &s.left.data[(ch * h + r) * wl] + wl,
                      &t.data[(ch * h + r) * (wl + wr)]);
            std::copy(&s.right.data[(ch * h + r) * wr], &s.right.data[(ch * h + r) * wr] + wr,
                      &t.data[(ch * h + r) * (wl + wr) + wl]);
        }
    }
    return t;
}

std::vector<ClientDataset> partition_clients(const std::vector<VerticalSample>& samples,
                                             size_t num_clients, uint64_t seed) {
    if (num_clients == 0) throw ArgumentError("need at least one client");
    if (samples.size() < num_clients) {
        throw ArgumentError("cannot partition " + std::to_string(samples.size()) +
                            " samples across " + std::to_string(num_clients) + " clients");
    }
    std::vector<size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    Rng rng(seed);
    rng.shuffle(idx);

    std::vector<ClientDataset> out(num_clients);
    const size_t base = samples.size() / num_clients;
    const size_t extra = samples.size() % num_clients;
    size_t pos = 0;
    for (size_t cid = 0; cid < num_clients; ++cid) {
        const size_t take = base + (cid < extra ? 1 : 0);
        out[cid].client_id = cid;
        out[cid].samples.reserve(take);
        for (size_t j = 0; j < take; ++j) out[cid].samples.push_back(samples[idx[pos++]]);
        out[cid].poison_count = size_t(std::count_if(out[cid].samples.begin(), out[cid].samples.end(),
                                                     [](const VerticalSample& s) { return s.poisoned; }));
    }
    return out;
}

namespace {

void stamp_trigger(VerticalSample& s, const BackdoorSpec& spec) {
    Tensor& half = spec.selected_party == Party::A ? s.left : s.right;
    const size_t c = half.shape[0], h = half.shape[1], w = half.shape[2];
    const size_t r0 = spec.trigger_row < 0 ? h - spec.trigger_rows : size_t(spec.trigger_row);
    const size_t c0 = spec.trigger_col < 0 ? w - spec.trigger_cols : size_t(spec.trigger_col);
    if (spec.trigger_rows > h || spec.trigger_cols > w || r0 + spec.trigger_rows > h ||
        c0 + spec.trigger_cols > w) {
        throw ArgumentError("trigger " + std::to_string(spec.trigger_rows) + "x" +
                            std::to_string(spec.trigger_cols) + " at (" + std::to_string(r0) + "," +
                            std::to_string(c0) + ") does not fit the " + std::to_string(h) + "x" +
                            std::to_string(w) + " half of party " + party_name(spec.selected_party));
    }
    for (size_t ch = 0; ch < c; ++ch) {
        for (size_t r = 0; r < spec.trigger_rows; ++r) {
            for (size_t cc = 0; cc < spec.trigger_cols; ++cc) {
                half.at3(ch, r0 + r, c0 + cc, h, w) = spec.trigger_value;
            }
        }
    }
    s.label = spec.target_label;
    s.poisoned = true;
}

} // namespace

ClientDataset inject_backdoor(const ClientDataset& client, const BackdoorSpec& spec, uint64_t seed) {
    if (!(spec.poison_fraction >= 0.0 && spec.poison_fraction <= 1.0)) {
        throw ArgumentError("poison fraction must be in [0,1]");
    }
    ClientDataset out = client;
    std::vector<size_t> eligible;
    for (size_t i = 0; i < out.samples.size(); ++i) {
        if (out.samples[i].label != spec.target_label) eligible.push_back(i);
    }
    // round half up
    const size_t k = size_t(std::floor(spec.poison_fraction * double(eligible.size()) + 0.5));
    Rng rng(seed);
    rng.shuffle(eligible);
    for (size_t j = 0; j < k; ++j) stamp_trigger(out.samples[eligible[j]], spec);
    out.poison_count = size_t(std::count_if(out.samples.begin(), out.samples.end(),
                                            [](const VerticalSample& s) { return s.poisoned; }));
    return out;
}

std::vector<VerticalSample> build_backdoor_testset(const RawDataset& test, const BackdoorSpec& spec) {
    std::vector<VerticalSample> out;
    auto split = vertical_split(test);
    out.reserve(split.size());
    for (auto& s : split) {
        if (s.label == spec.target_label) continue;
        stamp_trigger(s, spec);
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace vflu

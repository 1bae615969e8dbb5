#include "kinet/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "kinet/oracle.hpp"
#include "kinet/random.hpp"

namespace kinet {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Grid

AugmentationGrid AugmentationGrid::full() {
    AugmentationGrid g;
    for (int i = 0; i < 9; ++i) g.scales.push_back((100 - 6 * i) / 100.0);
    for (int i = 0; i < 9; ++i) g.rotations_deg.push_back(40 * i);
    g.translations_px = {-10, 0, 10};
    for (int i = 0; i < 9; ++i) {
        g.scale_indices.push_back(i);
        g.rotation_indices.push_back(i);
        g.translation_indices.push_back(i);
    }
    return g;
}

AugmentationGrid AugmentationGrid::desk() {
    AugmentationGrid g = full();
    g.scale_indices = {0, 4, 8};
    g.rotation_indices = {0, 3, 6};
    g.translation_indices = {0, 4, 8};
    return g;
}

int AugmentationGrid::dx_of(int trans_idx) const {
    return translations_px.at(static_cast<std::size_t>(trans_idx % static_cast<int>(translations_px.size())));
}

int AugmentationGrid::dy_of(int trans_idx) const {
    return translations_px.at(static_cast<std::size_t>(trans_idx / static_cast<int>(translations_px.size())));
}

void AugmentationGrid::validate() const {
    if (scales.empty() || rotations_deg.empty() || translations_px.empty())
        throw DatasetError("augmentation grid has an empty axis");
    for (double s : scales) {
        if (!(s > 0.0 && s <= 1.0)) throw DatasetError("grid scale out of (0, 1]");
    }
    const int cells = static_cast<int>(translations_px.size() * translations_px.size());
    auto check = [](const std::vector<int>& idx, int n, const char* axis) {
        if (idx.empty()) throw DatasetError(std::string("no ") + axis + " indices selected");
        for (int i : idx) {
            if (i < 0 || i >= n) throw DatasetError(std::string(axis) + " index " + std::to_string(i) + " out of range");
        }
    };
    check(scale_indices, static_cast<int>(scales.size()), "scale");
    check(rotation_indices, static_cast<int>(rotations_deg.size()), "rotation");
    check(translation_indices, cells, "translation");
}

// ---------------------------------------------------------------------------
// Enums

std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        case Split::Holdout: return "holdout";
    }
    return "?";
}

Split parse_split(const std::string& text) {
    for (Split s : {Split::Train, Split::Val, Split::Test, Split::Holdout}) {
        if (to_string(s) == text) return s;
    }
    throw DatasetError("unknown split '" + text + "' (expected train, val, test or holdout)");
}

std::string to_string(SplitMode m) {
    switch (m) {
        case SplitMode::ByImage: return "by-image";
        case SplitMode::ByStructure: return "by-structure";
        case SplitMode::Holdout: return "holdout";
    }
    return "?";
}

SplitMode parse_split_mode(const std::string& text) {
    for (SplitMode m : {SplitMode::ByImage, SplitMode::ByStructure, SplitMode::Holdout}) {
        if (to_string(m) == text) return m;
    }
    throw DatasetError("unknown split mode '" + text + "'");
}

std::vector<const ImageSample*> Manifest::split(Split s) const {
    std::vector<const ImageSample*> out;
    for (const auto& x : samples) {
        if (x.split == s) out.push_back(&x);
    }
    return out;
}

std::size_t Manifest::count(Split s) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [s](const ImageSample& x) { return x.split == s; }));
}

// ---------------------------------------------------------------------------
// Augmentation

Image augment(const Image& base, int rot_deg, int dx, int dy) {
    if (base.width() != kImageSize || base.height() != kImageSize) throw DatasetError("augment expects a 256x256 image");
    Image rotated = base;
    const int norm = ((rot_deg % 360) + 360) % 360;
    if (norm != 0) {
        const double theta = norm * std::numbers::pi / 180.0;
        const double a = std::cos(theta), b = std::sin(theta);
        const double c = (kImageSize - 1) / 2.0;
        auto sample = [&](int x, int y, int ch) -> int {
            if (x < 0 || y < 0 || x >= kImageSize || y >= kImageSize) return 255;
            return base.bytes()[3 * (static_cast<std::size_t>(y) * kImageSize + x) + ch];
        };
        for (int y = 0; y < kImageSize; ++y) {
            for (int x = 0; x < kImageSize; ++x) {
                const double ux = x - c, uy = y - c;
                const double sx = a * ux - b * uy + c;
                const double sy = b * ux + a * uy + c;
                int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
                int wx = static_cast<int>(std::lround((sx - x0) * 256.0));
                int wy = static_cast<int>(std::lround((sy - y0) * 256.0));
                if (wx == 256) {
                    ++x0;
                    wx = 0;
                }
                if (wy == 256) {
                    ++y0;
                    wy = 0;
                }
                std::uint8_t px[3];
                for (int ch = 0; ch < 3; ++ch) {
                    const int v = sample(x0, y0, ch) * (256 - wx) * (256 - wy) + sample(x0 + 1, y0, ch) * wx * (256 - wy) +
                                  sample(x0, y0 + 1, ch) * (256 - wx) * wy + sample(x0 + 1, y0 + 1, ch) * wx * wy;
                    px[ch] = static_cast<std::uint8_t>((v + 32768) >> 16);
                }
                rotated.set(x, y, {px[0], px[1], px[2]});
            }
        }
    }
    if (dx == 0 && dy == 0) return rotated;
    Image out(kImageSize, kImageSize);
    for (int y = 0; y < kImageSize; ++y) {
        const int sy = y - dy;
        if (sy < 0 || sy >= kImageSize) continue;
        for (int x = 0; x < kImageSize; ++x) {
            const int sx = x - dx;
            if (sx < 0 || sx >= kImageSize) continue;
            out.set(x, y, rotated.at(sx, sy));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splits

std::vector<Split> assign_splits(const std::vector<std::string>& names, SplitMode mode, std::uint64_t seed) {
    std::vector<Split> out(names.size(), Split::Holdout);
    if (mode == SplitMode::Holdout) return out;
    std::mt19937_64 rng(seed);
    auto by_rank = [](std::size_t rank, std::size_t n) {
        if (rank < n / 2) return Split::Train;
        if (rank < n / 2 + n / 4) return Split::Val;
        return Split::Test;
    };
    if (mode == SplitMode::ByImage) {
        std::vector<std::size_t> perm(names.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        shuffle(perm, rng);
        for (std::size_t rank = 0; rank < perm.size(); ++rank) out[perm[rank]] = by_rank(rank, perm.size());
        return out;
    }
    std::vector<std::string> distinct;
    for (const auto& n : names) {
        if (std::find(distinct.begin(), distinct.end(), n) == distinct.end()) distinct.push_back(n);
    }
    shuffle(distinct, rng);
    std::map<std::string, Split> of;
    for (std::size_t rank = 0; rank < distinct.size(); ++rank) of[distinct[rank]] = by_rank(rank, distinct.size());
    for (std::size_t i = 0; i < names.size(); ++i) out[i] = of[names[i]];
    return out;
}

// ---------------------------------------------------------------------------
// Build

namespace {

std::string cell_file(const ImageSample& s, bool ppm) {
    return std::to_string(s.scale_idx) + "_" + std::to_string(s.rot_idx) + "_" + std::to_string(s.trans_idx) +
           (ppm ? ".ppm" : ".png");
}

// Runs task(i) for i in [0, n) on `jobs` threads; rethrows the first failure.
template <typename F>
void parallel_for(std::size_t n, int jobs, F task) {
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i; (i = next.fetch_add(1)) < n;) {
                try {
                    task(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

Manifest build_dataset(const std::vector<CatalogEntry>& entries, const AugmentationGrid& grid, const RenderStyle& style,
                       std::uint64_t seed, const fs::path& out_dir, const BuildOptions& options) {
    grid.validate();
    style.validate();
    if (entries.empty()) throw DatasetError("no structures to build");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        for (std::size_t j = i + 1; j < entries.size(); ++j) {
            if (entries[i].structure.name() == entries[j].structure.name())
                throw DatasetError("duplicate structure name: " + entries[i].structure.name());
        }
    }

    std::vector<int> labels;
    for (const CatalogEntry& e : entries) {
        const int label = binary_label(classify_stability(e.structure));
        if (label != e.intended_label)
            throw DatasetError("label mismatch for " + e.structure.name() + ": oracle says " + std::to_string(label) +
                               ", catalog intends " + std::to_string(e.intended_label));
        labels.push_back(label);
    }

    Manifest m;
    m.seed = seed;
    m.split_mode = options.split_mode;
    m.grid = grid;
    m.style = style;
    std::vector<std::string> names;
    for (std::size_t e = 0; e < entries.size(); ++e) {
        for (int s : grid.scale_indices) {
            for (int r : grid.rotation_indices) {
                for (int t : grid.translation_indices) {
                    ImageSample x;
                    x.label = labels[e];
                    x.structure_name = entries[e].structure.name();
                    x.scale_idx = s;
                    x.rot_idx = r;
                    x.trans_idx = t;
                    m.samples.push_back(std::move(x));
                    names.push_back(entries[e].structure.name());
                }
            }
        }
    }
    const std::vector<Split> splits = assign_splits(names, options.split_mode, seed);
    for (std::size_t i = 0; i < m.samples.size(); ++i) {
        ImageSample& x = m.samples[i];
        x.split = splits[i];
        x.path = out_dir / to_string(x.split) / x.structure_name / cell_file(x, options.ppm);
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw DatasetError("cannot create " + out_dir.string() + ": " + ec.message());
    for (const auto& x : m.samples) {
        fs::create_directories(x.path.parent_path(), ec);
        if (ec) throw DatasetError("cannot create " + x.path.parent_path().string() + ": " + ec.message());
    }

    // One task per (structure, scale): render once, then augment every cell.
    const std::size_t per_scale = grid.rotation_indices.size() * grid.translation_indices.size();
    const std::size_t tasks = entries.size() * grid.scale_indices.size();
    parallel_for(tasks, options.jobs, [&](std::size_t task) {
        const std::size_t e = task / grid.scale_indices.size();
        const Image base = render(entries[e].structure, grid.scales[static_cast<std::size_t>(grid.scale_indices[task % grid.scale_indices.size()])], style);
        for (std::size_t k = 0; k < per_scale; ++k) {
            const ImageSample& x = m.samples[task * per_scale + k];
            const Image img = augment(base, grid.rotations_deg[static_cast<std::size_t>(x.rot_idx)], grid.dx_of(x.trans_idx),
                                      grid.dy_of(x.trans_idx));
            write_image(img, x.path);
        }
    });

    write_manifest(m, out_dir / "manifest.csv");
    return m;
}

// ---------------------------------------------------------------------------
// Manifest I/O

namespace {

template <typename V>
std::string join(const std::vector<V>& v) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ";" : "") << v[i];
    return os.str();
}

template <typename V>
std::vector<V> split_values(const std::string& text, const std::string& key) {
    std::vector<V> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        std::istringstream is(item);
        V v;
        if (!(is >> v) || !is.eof()) throw DatasetError("manifest header " + key + ": bad value '" + item + "'");
        out.push_back(v);
    }
    return out;
}

std::string color_string(Rgb c) {
    return std::to_string(c.r) + "/" + std::to_string(c.g) + "/" + std::to_string(c.b);
}

Rgb parse_color(const std::string& text) {
    int r, g, b;
    char s1, s2;
    std::istringstream is(text);
    if (!(is >> r >> s1 >> g >> s2 >> b) || s1 != '/' || s2 != '/' || r < 0 || r > 255 || g < 0 || g > 255 || b < 0 ||
        b > 255)
        throw DatasetError("manifest header: bad color '" + text + "'");
    return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
}

constexpr const char* kColumns = "path,label,structure_name,scale_idx,rot_idx,trans_idx,split";

}  // namespace

void write_manifest(const Manifest& m, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DatasetError("cannot write manifest " + path.string());
    const fs::path base = path.parent_path();
    out << "#kinet_manifest=1\n";
    out << "#seed=" << m.seed << "\n";
    out << "#split_mode=" << to_string(m.split_mode) << "\n";
    out << "#label_polarity=stable:0;unstable:1\n";
    out << "#grid.scales=" << join(m.grid.scales) << "\n";
    out << "#grid.rotations_deg=" << join(m.grid.rotations_deg) << "\n";
    out << "#grid.translations_px=" << join(m.grid.translations_px) << "\n";
    out << "#grid.scale_indices=" << join(m.grid.scale_indices) << "\n";
    out << "#grid.rotation_indices=" << join(m.grid.rotation_indices) << "\n";
    out << "#grid.translation_indices=" << join(m.grid.translation_indices) << "\n";
    {
        std::ostringstream os;
        os.precision(17);
        os << "#style.bar_color=" << color_string(m.style.bar_color) << "\n";
        os << "#style.bar_width=" << m.style.bar_width << "\n";
        os << "#style.hinge_color=" << color_string(m.style.hinge_color) << "\n";
        os << "#style.hinge_radius=" << m.style.hinge_radius << "\n";
        os << "#style.margin_fraction=" << m.style.margin_fraction << "\n";
        out << os.str();
    }
    out << kColumns << "\n";
    for (const auto& x : m.samples) {
        const fs::path rel = x.path.is_absolute() || !base.empty() ? x.path.lexically_relative(base) : x.path;
        out << rel.generic_string() << "," << x.label << "," << x.structure_name << "," << x.scale_idx << ","
            << x.rot_idx << "," << x.trans_idx << "," << to_string(x.split) << "\n";
    }
    if (!out) throw DatasetError("write failed: " + path.string());
}

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetError("cannot read manifest " + path.string());
    const fs::path base = path.parent_path();
    Manifest m;
    std::map<std::string, std::string> header;
    std::string line;
    std::size_t line_no = 0;
    bool columns_seen = false;
    auto fail = [&](const std::string& why) {
        throw DatasetError(path.string() + ":" + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail("header line without '='");
            header[line.substr(1, eq - 1)] = line.substr(eq + 1);
            continue;
        }
        if (!columns_seen) {
            if (line != kColumns) fail("expected column line '" + std::string(kColumns) + "'");
            columns_seen = true;
            continue;
        }
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 7) fail("expected 7 fields, found " + std::to_string(f.size()));
        ImageSample x;
        fs::path p = f[0];
        x.path = p.is_absolute() ? p : base / p;
        try {
            x.label = std::stoi(f[1]);
            x.scale_idx = std::stoi(f[3]);
            x.rot_idx = std::stoi(f[4]);
            x.trans_idx = std::stoi(f[5]);
        } catch (const std::exception&) {
            fail("non-integer field");
        }
        if (x.label != 0 && x.label != 1) fail("label must be 0 or 1");
        x.structure_name = f[2];
        try {
            x.split = parse_split(f[6]);
        } catch (const DatasetError& e) {
            fail(e.what());
        }
        m.samples.push_back(std::move(x));
    }
    if (!columns_seen) throw DatasetError(path.string() + ": missing column line");
    auto get = [&](const std::string& key) -> const std::string& {
        auto it = header.find(key);
        if (it == header.end()) throw DatasetError(path.string() + ": missing header key " + key);
        return it->second;
    };
    if (get("kinet_manifest") != "1") throw DatasetError(path.string() + ": unsupported manifest version");
    m.seed = std::stoull(get("seed"));
    m.split_mode = parse_split_mode(get("split_mode"));
    m.grid.scales = split_values<double>(get("grid.scales"), "grid.scales");
    m.grid.rotations_deg = split_values<int>(get("grid.rotations_deg"), "grid.rotations_deg");
    m.grid.translations_px = split_values<int>(get("grid.translations_px"), "grid.translations_px");
    m.grid.scale_indices = split_values<int>(get("grid.scale_indices"), "grid.scale_indices");
    m.grid.rotation_indices = split_values<int>(get("grid.rotation_indices"), "grid.rotation_indices");
    m.grid.translation_indices = split_values<int>(get("grid.translation_indices"), "grid.translation_indices");
    m.style.bar_color = parse_color(get("style.bar_color"));
    m.style.hinge_color = parse_color(get("style.hinge_color"));
    m.style.bar_width = split_values<double>(get("style.bar_width"), "style.bar_width").at(0);
    m.style.hinge_radius = split_values<double>(get("style.hinge_radius"), "style.hinge_radius").at(0);
    m.style.margin_fraction = split_values<double>(get("style.margin_fraction"), "style.margin_fraction").at(0);
    return m;
}

// ---------------------------------------------------------------------------
// Streaming

void image_to_tensor(const Image& img, nn::Tensor4<float>& out, int index) {
    if (img.width() != out.w || img.height() != out.h || out.c != 3)
        throw DatasetError("image is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                           ", batch expects " + std::to_string(out.w) + "x" + std::to_string(out.h));
    auto dst = out.sample(index);
    const auto& src = img.bytes();
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<float>(src[k]) / 255.0f;
}

nn::Tensor4<float> load_batch(const std::vector<const ImageSample*>& samples) {
    nn::Tensor4<float> t(static_cast<int>(samples.size()), kImageSize, kImageSize, 3);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Image img;
        try {
            img = read_image(samples[i]->path);
        } catch (const ImageIoError& e) {
            throw DatasetError(e.what());
        }
        image_to_tensor(img, t, static_cast<int>(i));
    }
    return t;
}

BatchStream::BatchStream(const Manifest& manifest, Split split, int batch_size, std::uint64_t epoch_seed, bool do_shuffle)
    : order_(manifest.split(split)), batch_size_(static_cast<std::size_t>(batch_size)) {
    if (batch_size < 1) throw DatasetError("batch size must be at least 1");
    if (order_.empty()) throw DatasetError("empty split: " + to_string(split));
    if (do_shuffle) {
        std::mt19937_64 rng(epoch_seed);
        shuffle(order_, rng);
    }
}

bool BatchStream::next(nn::Tensor4<float>& images, std::vector<int>& labels) {
    if (pos_ >= order_.size()) return false;
    const std::size_t end = std::min(order_.size(), pos_ + batch_size_);
    std::vector<const ImageSample*> chunk(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                          order_.begin() + static_cast<std::ptrdiff_t>(end));
    images = load_batch(chunk);
    labels.clear();
    for (const auto* x : chunk) labels.push_back(x->label);
    pos_ = end;
    ++batch_;
    return true;
}

}  // namespace kinet

#include "kinet/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace kinet::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    template <typename V>
    void put(V v) {
        const auto* p = reinterpret_cast<const char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof v);
    }
    void put_bytes(const char* s, std::size_t n) { buf_.insert(buf_.end(), s, s + n); }
    void put_floats(std::span<const float> v) {
        put_bytes(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
    }

    void save(const std::filesystem::path& path) const {
        // Write to a sibling temporary then rename, so readers never see a
        // half-written file.
        std::filesystem::path tmp = path;
        tmp += ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
            out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
            if (!out) throw CheckpointError("write failed: " + tmp.string());
        }
        std::error_code ec;
        std::filesystem::rename(tmp, path, ec);
        if (ec) throw CheckpointError("cannot rename " + tmp.string() + ": " + ec.message());
    }

private:
    std::vector<char> buf_;
};

class Reader {
public:
    Reader(const std::filesystem::path& path) : path_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw CheckpointError("cannot open " + path_);
        buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    template <typename V>
    V get() {
        need(sizeof(V));
        V v;
        std::memcpy(&v, buf_.data() + pos_, sizeof v);
        pos_ += sizeof v;
        return v;
    }
    void get_floats(std::span<float> out) {
        need(out.size() * sizeof(float));
        std::memcpy(out.data(), buf_.data() + pos_, out.size() * sizeof(float));
        pos_ += out.size() * sizeof(float);
    }
    void expect_magic(const char (&magic)[5]) {
        need(4);
        if (std::memcmp(buf_.data() + pos_, magic, 4) != 0)
            throw CheckpointError(path_ + ": bad magic (expected " + std::string(magic, 4) + ")");
        pos_ += 4;
    }
    void expect_end() const {
        if (pos_ != buf_.size())
            throw CheckpointError(path_ + ": " + std::to_string(buf_.size() - pos_) + " unexpected trailing bytes");
    }
    std::size_t remaining() const { return buf_.size() - pos_; }
    const std::string& path() const { return path_; }

private:
    void need(std::size_t n) const {
        if (buf_.size() - pos_ < n) throw CheckpointError(path_ + ": truncated file");
    }

    std::string path_;
    std::vector<char> buf_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const Model<float>& m = ckpt.model;
    Writer w;
    w.put_bytes("KNCK", 4);
    w.put(kCheckpointVersion);
    w.put(ckpt.epoch);
    w.put(ckpt.init.scheme);
    w.put(ckpt.init.seed);
    w.put(static_cast<std::uint32_t>(m.spec.height));
    w.put(static_cast<std::uint32_t>(m.spec.width));
    w.put(static_cast<std::uint32_t>(m.spec.channels));
    w.put(m.spec.dropout_rate);
    w.put(static_cast<std::uint32_t>(m.conv.size() + 2));
    for (const auto& c : m.conv) {
        w.put(std::uint32_t{1});
        w.put(std::uint32_t{4});
        for (std::uint32_t d : {3u, 3u, static_cast<std::uint32_t>(c.in), static_cast<std::uint32_t>(c.out)}) w.put(d);
    }
    for (const DenseParams<float>* d : {&m.dense, &m.head}) {
        w.put(std::uint32_t{2});
        w.put(std::uint32_t{2});
        w.put(static_cast<std::uint32_t>(d->in));
        w.put(static_cast<std::uint32_t>(d->out));
    }
    w.put(static_cast<std::uint64_t>(m.parameter_count()));
    for (auto a : m.arrays()) w.put_floats(a);
    w.save(path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec* expected) {
    Reader r(path);
    r.expect_magic("KNCK");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError(r.path() + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    ckpt.epoch = r.get<std::uint32_t>();
    ckpt.init.scheme = r.get<std::uint32_t>();
    ckpt.init.seed = r.get<std::uint64_t>();

    NetworkSpec spec;
    spec.height = static_cast<int>(r.get<std::uint32_t>());
    spec.width = static_cast<int>(r.get<std::uint32_t>());
    spec.channels = static_cast<int>(r.get<std::uint32_t>());
    spec.dropout_rate = r.get<double>();
    const auto layers = r.get<std::uint32_t>();
    if (layers < 3 || layers > 64) throw CheckpointError(r.path() + ": implausible layer count " + std::to_string(layers));
    spec.conv_filters.clear();
    int prev = spec.channels;
    int dense_in = 0;
    for (std::uint32_t l = 0; l < layers; ++l) {
        const auto kind = r.get<std::uint32_t>();
        const auto ndims = r.get<std::uint32_t>();
        const bool is_conv = l + 2 < layers;
        if (is_conv ? (kind != 1 || ndims != 4) : (kind != 2 || ndims != 2))
            throw CheckpointError(r.path() + ": layer " + std::to_string(l) + " has an unexpected kind/rank");
        std::vector<std::uint32_t> dims(ndims);
        for (auto& d : dims) d = r.get<std::uint32_t>();
        if (is_conv) {
            if (dims[0] != 3 || dims[1] != 3 || static_cast<int>(dims[2]) != prev)
                throw CheckpointError(r.path() + ": conv layer " + std::to_string(l) + " dims do not chain");
            spec.conv_filters.push_back(static_cast<int>(dims[3]));
            prev = static_cast<int>(dims[3]);
        } else if (l + 2 == layers) {
            dense_in = static_cast<int>(dims[0]);
            spec.hidden = static_cast<int>(dims[1]);
        } else if (static_cast<int>(dims[0]) != spec.hidden || dims[1] != 1) {
            throw CheckpointError(r.path() + ": output layer dims do not chain");
        }
    }
    try {
        spec.validate();
    } catch (const ShapeError& e) {
        throw CheckpointError(r.path() + ": " + e.what());
    }
    if (dense_in != spec.flat_size()) throw CheckpointError(r.path() + ": dense input size does not match conv stack");
    if (expected && !(spec == *expected))
        throw CheckpointError(r.path() + ": network layout does not match the expected architecture");

    ckpt.model = zero_model<float>(spec);
    const auto count = r.get<std::uint64_t>();
    if (count != ckpt.model.parameter_count())
        throw CheckpointError(r.path() + ": payload declares " + std::to_string(count) + " values, layout needs " +
                              std::to_string(ckpt.model.parameter_count()));
    if (r.remaining() != count * sizeof(float))
        throw CheckpointError(r.path() + ": payload length " + std::to_string(r.remaining()) + " bytes, expected " +
                              std::to_string(count * sizeof(float)));
    for (auto a : ckpt.model.arrays()) r.get_floats(a);
    r.expect_end();
    return ckpt;
}

void save_optimizer(const AdamState& s, const std::filesystem::path& path) {
    Writer w;
    w.put_bytes("KNOP", 4);
    w.put(std::uint32_t{1});
    w.put(s.t);
    w.put(s.config.lr);
    w.put(s.config.beta1);
    w.put(s.config.beta2);
    w.put(s.config.eps_hat);
    w.put(static_cast<std::uint32_t>(s.m.size()));
    for (std::size_t a = 0; a < s.m.size(); ++a) {
        w.put(static_cast<std::uint64_t>(s.m[a].size()));
        w.put_floats(s.m[a]);
        w.put_floats(s.v[a]);
    }
    w.save(path);
}

AdamState load_optimizer(const std::filesystem::path& path) {
    Reader r(path);
    r.expect_magic("KNOP");
    const auto version = r.get<std::uint32_t>();
    if (version != 1) throw CheckpointError(r.path() + ": unsupported optimizer state version " + std::to_string(version));
    AdamState s;
    s.t = r.get<std::uint64_t>();
    s.config.lr = r.get<double>();
    s.config.beta1 = r.get<double>();
    s.config.beta2 = r.get<double>();
    s.config.eps_hat = r.get<double>();
    const auto arrays = r.get<std::uint32_t>();
    if (arrays > 256) throw CheckpointError(r.path() + ": implausible array count");
    for (std::uint32_t a = 0; a < arrays; ++a) {
        const auto len = r.get<std::uint64_t>();
        if (len * 2 * sizeof(float) > r.remaining()) throw CheckpointError(r.path() + ": truncated file");
        s.m.emplace_back(len);
        s.v.emplace_back(len);
        r.get_floats(s.m.back());
        r.get_floats(s.v.back());
    }
    r.expect_end();
    return s;
}

void check_optimizer_matches(const AdamState& s, const Model<float>& model) {
    const auto arrays = model.arrays();
    bool ok = arrays.size() == s.m.size();
    for (std::size_t a = 0; ok && a < arrays.size(); ++a) ok = arrays[a].size() == s.m[a].size();
    if (!ok) throw CheckpointError("optimizer state does not match the model's parameter layout");
}

}  // namespace kinet::nn

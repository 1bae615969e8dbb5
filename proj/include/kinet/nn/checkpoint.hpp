#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>

#include "kinet/nn/adam.hpp"
#include "kinet/nn/model.hpp"

namespace kinet::nn {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Weight initialization recorded alongside the weights.
struct InitRecord {
    std::uint32_t scheme = 1;  // 1 = Glorot uniform, zero biases
    std::uint64_t seed = 0;
};

struct Checkpoint {
    Model<float> model;
    std::uint32_t epoch = 0;
    InitRecord init;
};

/// Layout: "KNCK", u32 version, u32 epoch, u32 init scheme, u64 init seed,
/// u32 height/width/channels, f64 dropout rate, u32 layer count, then per
/// layer {u32 kind (1 conv, 2 dense), u32 ndims, u32 dims...}, u64 payload
/// value count, and the little-endian f32 payload (per layer: weights then
/// biases). Every integer is little-endian.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws CheckpointError on bad magic/version, truncation, trailing bytes,
/// or an inconsistent layer table. When `expected` is given the stored
/// network must match it.
Checkpoint load_checkpoint(const std::filesystem::path& path, const NetworkSpec* expected = nullptr);

/// Optimizer sidecar: "KNOP", u32 version, u64 t, f64 lr/beta1/beta2/eps,
/// u32 array count, then per array u64 length, f32 m values, f32 v values.
void save_optimizer(const AdamState& state, const std::filesystem::path& path);
AdamState load_optimizer(const std::filesystem::path& path);

/// Checks that optimizer moment arrays match the model's parameter arrays.
void check_optimizer_matches(const AdamState& state, const Model<float>& model);

}  // namespace kinet::nn

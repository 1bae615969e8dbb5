#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinet/catalog.hpp"
#include "kinet/image.hpp"
#include "kinet/nn/tensor.hpp"
#include "kinet/render.hpp"

namespace kinet {

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Augmentation axes. `*_indices` select which grid cells are materialized;
/// sample records always carry indices into the full value lists.
struct AugmentationGrid {
    std::vector<double> scales;
    std::vector<int> rotations_deg;
    std::vector<int> translations_px;  // per axis; cells are (dy, dx) pairs
    std::vector<int> scale_indices;
    std::vector<int> rotation_indices;
    std::vector<int> translation_indices;  // trans_idx = 3 * dy_idx + dx_idx

    /// 9 scales (1.00 down to 0.52), 9 rotations, 3x3 translations.
    static AugmentationGrid full();
    /// 3 x 3 x 3 subsample of the full grid (27 variants per structure).
    static AugmentationGrid desk();

    std::size_t variants_per_structure() const {
        return scale_indices.size() * rotation_indices.size() * translation_indices.size();
    }
    int dx_of(int trans_idx) const;
    int dy_of(int trans_idx) const;
    void validate() const;
};

enum class Split { Train, Val, Test, Holdout };
std::string to_string(Split s);
Split parse_split(const std::string& text);

enum class SplitMode { ByImage, ByStructure, Holdout };
std::string to_string(SplitMode m);
SplitMode parse_split_mode(const std::string& text);

struct ImageSample {
    std::filesystem::path path;  // absolute once loaded
    int label = 0;
    std::string structure_name;
    int scale_idx = 0;
    int rot_idx = 0;
    int trans_idx = 0;
    Split split = Split::Train;
};

struct Manifest {
    std::uint64_t seed = 0;
    SplitMode split_mode = SplitMode::ByImage;
    AugmentationGrid grid;
    RenderStyle style;
    std::vector<ImageSample> samples;  // ordered by (structure, scale, rotation, translation)

    std::vector<const ImageSample*> split(Split s) const;
    std::size_t count(Split s) const;
};

/// Rotates about the image center (127.5, 127.5) by `rot_deg`
/// counter-clockwise with bilinear interpolation and a white border, then
/// shifts by (dx, dy) pixels (positive dy moves content down), filling
/// vacated pixels white.
Image augment(const Image& base, int rot_deg, int dx, int dy);

struct BuildOptions {
    SplitMode split_mode = SplitMode::ByImage;
    bool ppm = false;   // write P6 files instead of PNG
    int jobs = 1;
};

/// Renders every (structure, grid cell) image under
/// out_dir/<split>/<structure>/<s>_<r>_<t>.png, checks each oracle label
/// against the catalog's intended label, assigns splits and writes
/// out_dir/manifest.csv.
Manifest build_dataset(const std::vector<CatalogEntry>& entries, const AugmentationGrid& grid, const RenderStyle& style,
                       std::uint64_t seed, const std::filesystem::path& out_dir, const BuildOptions& options = {});

/// Split assignment only (no rendering), in canonical sample order.
std::vector<Split> assign_splits(const std::vector<std::string>& sample_structures, SplitMode mode, std::uint64_t seed);

void write_manifest(const Manifest& m, const std::filesystem::path& path);
/// Relative image paths are resolved against the manifest's directory.
Manifest read_manifest(const std::filesystem::path& path);

/// Loads images into an (N, 256, 256, 3) tensor scaled to [0, 1].
nn::Tensor4<float> load_batch(const std::vector<const ImageSample*>& samples);
void image_to_tensor(const Image& img, nn::Tensor4<float>& out, int index);

/// Single-consumer batch sequence over one split. Holds at most one batch of
/// decoded images.
class BatchStream {
public:
    BatchStream(const Manifest& manifest, Split split, int batch_size, std::uint64_t epoch_seed, bool shuffle = true);

    /// False once every sample has been yielded.
    bool next(nn::Tensor4<float>& images, std::vector<int>& labels);
    std::size_t batch_index() const { return batch_; }
    std::size_t size() const { return order_.size(); }
    const std::vector<const ImageSample*>& order() const { return order_; }

private:
    std::vector<const ImageSample*> order_;
    std::size_t batch_size_;
    std::size_t pos_ = 0;
    std::size_t batch_ = 0;
};

}  // namespace kinet

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hansnet/tensor.hpp"

namespace hansnet {

// ---------------------------------------------------------------- HVOL

enum class HvolType : std::uint8_t { f32 = 0, u8 = 1 };

inline constexpr char kHvolMagic[4] = {'H', 'V', 'O', 'L'};
inline constexpr std::uint16_t kHvolVersion = 1;

/// Volume grid, slice-major: index = (z * H + y) * W + x. Exactly one of the
/// payload vectors is used, selected by dtype.
struct Hvol {
    HvolType dtype = HvolType::f32;
    std::array<std::uint32_t, 3> dims{0, 0, 0};  // D, H, W
    std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};  // mm along D, H, W
    std::vector<float> f32;
    std::vector<std::uint8_t> u8;

    std::size_t voxels() const { return std::size_t{dims[0]} * dims[1] * dims[2]; }
    std::size_t slice_size() const { return std::size_t{dims[1]} * dims[2]; }
    /// Throws IoError if the payload length does not match dims and dtype.
    void validate() const;
};

Hvol make_hvol_f32(std::size_t d, std::size_t h, std::size_t w, std::array<float, 3> spacing);
Hvol make_hvol_u8(std::size_t d, std::size_t h, std::size_t w, std::array<float, 3> spacing);

/// "HVOL" | u16 version | u8 dtype | u32 D,H,W | f32 spacing[3] | payload, all little-endian.
std::vector<std::uint8_t> encode_hvol(const Hvol& v);
Hvol decode_hvol(const std::vector<std::uint8_t>& bytes);
void write_hvol(const std::filesystem::path& path, const Hvol& v);
Hvol read_hvol(const std::filesystem::path& path);

// ---------------------------------------------------------- preprocessing

inline constexpr double kWindowLow = -200.0;
inline constexpr double kWindowHigh = 400.0;

/// clamp(hu, -200, 400) mapped linearly to [0, 1].
double window_normalize(double hu);
Tensor window_normalize(const Tensor& raw_hu);

/// Row-major 2D image.
struct Image2D {
    std::size_t h = 0, w = 0;
    std::vector<double> data;
};

struct Mask2D {
    std::size_t h = 0, w = 0;
    std::vector<std::uint8_t> data;
};

/// Separable per axis: area averaging when shrinking, half-pixel-center
/// bilinear when enlarging, a plain copy when the size is unchanged.
Image2D resize_image(const Image2D& img, std::size_t out_h, std::size_t out_w);
/// Nearest neighbour on pixel centers; labels are never blended.
Mask2D resize_mask(const Mask2D& mask, std::size_t out_h, std::size_t out_w);

/// Slices (along D) that contain at least one tumor voxel (label 2).
std::vector<std::size_t> tumor_slice_filter(const Hvol& labels);

// ---------------------------------------------------------------- phantoms

struct Range {
    double lo = 0.0, hi = 0.0;
};

/// Synthetic abdomen: a rotated ellipsoid "liver" holding 0..N spherical
/// "tumors", each region filled with a constant HU drawn from its band, plus
/// Gaussian noise. All lengths in mm.
struct PhantomSpec {
    std::size_t size = 64;   // H = W
    std::size_t depth = 16;  // D
    double spacing_xy = 2.0;
    double spacing_z = 2.5;
    Range liver_a{40.0, 54.0};  // in-plane semi-axes
    Range liver_b{28.0, 38.0};
    Range liver_c{20.0, 30.0};  // along D
    double center_jitter = 8.0;
    std::size_t tumor_min = 0;
    std::size_t tumor_max = 4;
    Range tumor_radius{6.0, 14.0};
    Range hu_background{-150.0, -50.0};
    Range hu_liver{80.0, 140.0};
    Range hu_tumor{10.0, 50.0};
    double noise_sigma = 20.0;

    /// Throws ConfigError on an infeasible or malformed spec.
    void validate() const;
};

struct Phantom {
    Hvol image;   // f32 HU
    Hvol labels;  // u8, 0 background, 1 liver, 2 tumor
};

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

/// The shapes behind a phantom, so label masks can be re-rasterized independently.
struct PhantomGeometry {
    std::array<double, 3> center;  // mm, (z, y, x), origin at voxel (0,0,0)
    std::array<double, 3> axes;    // mm: a (rotated x), b (rotated y), c (z)
    double angle = 0.0;            // in-plane rotation, radians
    struct Ball {
        std::array<double, 3> center;
        double radius;
    };
    std::vector<Ball> tumors;
};
PhantomGeometry phantom_geometry(const PhantomSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------- splitting

struct Split {
    std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle of 0..n-1, then contiguous pieces of floor(f_val*n) and
/// floor(f_test*n); the remainder goes to train.
Split split_dataset(std::size_t n, std::array<double, 3> fractions, std::uint64_t seed);

// ---------------------------------------------------------------- datasets

/// Stacked 2D slices: images [N,1,H,W] in [0,1], targets [N,2,H,W] with
/// channel 0 = liver-or-tumor and channel 1 = tumor.
struct SliceSet {
    Tensor images;
    Tensor targets;
    std::size_t size() const { return images.defined() ? images.dim(0) : 0; }
};

/// Windowed image slice z of a volume, resized to out x out.
Image2D volume_slice(const Hvol& image, std::size_t z, std::size_t out);
Mask2D label_slice(const Hvol& labels, std::size_t z, std::size_t out);

/// Builds the stacked tensors from (image, labels, slice index) triples.
struct SliceRef {
    const Hvol* image;
    const Hvol* labels;
    std::size_t z;
};
SliceSet make_slice_set(const std::vector<SliceRef>& refs, std::size_t out);

/// Splits a labels slice into the two binary target planes.
void labels_to_targets(const Mask2D& labels, double* liver, double* tumor);

}  // namespace hansnet

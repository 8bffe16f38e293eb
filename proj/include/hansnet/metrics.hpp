#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hansnet/data.hpp"

namespace hansnet {

/// Boolean grid of rank 2 (H, W) or 3 (D, H, W) with per-axis spacing in mm.
struct BinaryMask {
    std::vector<std::size_t> dims;
    std::vector<double> spacing;
    std::vector<std::uint8_t> grid;

    BinaryMask() = default;
    BinaryMask(std::vector<std::size_t> dims, std::vector<double> spacing);

    std::size_t rank() const { return dims.size(); }
    std::size_t size() const { return grid.size(); }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    /// Throws ContractError on a malformed mask.
    void validate() const;
};

/// Voxels of `labels` matching the class: liver (class 0) is label >= 1, tumor (class 1) is label == 2.
BinaryMask class_mask(const Hvol& labels, int cls);

double dice(const BinaryMask& pred, const BinaryMask& gt);

struct IouVoe {
    double iou;
    double voe;
};
IouVoe iou_voe(const BinaryMask& pred, const BinaryMask& gt);

/// Flat indices of mask voxels with at least one face neighbour outside the
/// mask (the array border counts as outside).
std::vector<std::size_t> surface_voxels(const BinaryMask& m);

/// Squared Euclidean distance (mm^2) from every voxel to the nearest voxel
/// listed in `features`, by separable lower envelopes of parabolas.
std::vector<double> squared_distance_transform(const std::vector<std::size_t>& dims,
                                               const std::vector<double>& spacing,
                                               const std::vector<std::size_t>& features);

/// Average symmetric surface distance in mm over the mask's full rank.
/// Absent (with `why` filled) when either mask is empty.
std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt, std::string* why = nullptr);

/// 3D masks scored with 2D surfaces slice by slice; distance sums and
/// surface counts are pooled over slices where both masks are nonempty.
std::optional<double> assd_per_slice(const BinaryMask& pred, const BinaryMask& gt, std::string* why = nullptr);

/// Average ranks (1-based), ties share their mean rank.
std::vector<double> average_ranks(const std::vector<double>& values);

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y);
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

struct VolumeStats {
    std::optional<double> pearson;
    std::optional<double> spearman;
    double mae_ml = 0.0;
    std::optional<double> rvd_pct;
    std::vector<std::string> diagnostics;
};

/// Volumes in mm^3. MAE is reported in mL; RVD is the mean of |pred-gt|/gt in percent.
VolumeStats volume_stats(const std::vector<double>& pred_mm3, const std::vector<double>& gt_mm3);

struct ClassMetrics {
    double dice = 0.0, iou = 0.0, voe = 0.0;
    std::optional<double> assd_mm;
};

struct CaseMetrics {
    std::string name;
    ClassMetrics cls[2];
    double gt_ml[2] = {0, 0};
    double pred_ml[2] = {0, 0};
};

struct MeanRow {
    double dice = 0.0, iou = 0.0, voe = 0.0;
    std::optional<double> assd_mm;
    std::size_t assd_absent = 0;
};

struct MetricsReport {
    std::vector<CaseMetrics> cases;
    MeanRow mean[2];
    /// Mean over both classes of the per-class means.
    MeanRow overall;
    VolumeStats volumes[2];
    double gt_ml_total[2] = {0, 0};
    double pred_ml_total[2] = {0, 0};
    std::string assd_mode = "volume";
    std::vector<std::string> diagnostics;

    std::string to_json() const;
    /// Aligned text table: one row per class plus the mean.
    std::string to_table() const;
};

struct CaseInput {
    std::string name;
    const Hvol* pred;
    const Hvol* gt;
};

MetricsReport build_report(const std::vector<CaseInput>& cases, const std::string& assd_mode = "volume");

inline constexpr const char* kClassNames[2] = {"liver", "tumor"};

}  // namespace hansnet

#include "hansnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "hansnet/errors.hpp"
#include "json.hpp"

namespace hansnet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_pair(const BinaryMask& a, const BinaryMask& b) {
    a.validate();
    b.validate();
    if (a.dims != b.dims) throw DimensionError("mask shapes differ");
}

struct Overlap {
    double inter = 0, a = 0, b = 0, uni = 0;
};

Overlap overlap(const BinaryMask& p, const BinaryMask& g) {
    check_pair(p, g);
    Overlap o;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool x = p.grid[i] != 0, y = g.grid[i] != 0;
        o.inter += x && y;
        o.a += x;
        o.b += y;
        o.uni += x || y;
    }
    return o;
}

// Lower envelope of parabolas f[p] + (s (q - p))^2 along one line; infinite
// entries contribute no parabola.
void envelope_1d(const double* f, std::size_t n, double s, double* out, std::vector<std::size_t>& v,
                 std::vector<double>& z) {
    v.resize(n);
    z.resize(n + 1);
    const double s2 = s * s;
    std::ptrdiff_t k = -1;
    for (std::size_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double sp = 0.0;
        while (true) {
            const auto p = v[static_cast<std::size_t>(k)];
            const double qd = static_cast<double>(q), pd = static_cast<double>(p);
            sp = ((f[q] + s2 * qd * qd) - (f[p] + s2 * pd * pd)) / (2.0 * s2 * (qd - pd));
            if (sp > z[static_cast<std::size_t>(k)]) break;
            --k;
        }
        ++k;
        v[static_cast<std::size_t>(k)] = q;
        z[static_cast<std::size_t>(k)] = sp;
        z[static_cast<std::size_t>(k) + 1] = kInf;
    }
    if (k < 0) {
        std::fill(out, out + n, kInf);
        return;
    }
    std::size_t j = 0;
    for (std::size_t q = 0; q < n; ++q) {
        while (z[j + 1] < static_cast<double>(q)) ++j;
        const double d = s * (static_cast<double>(q) - static_cast<double>(v[j]));
        out[q] = d * d + f[v[j]];
    }
}

struct SurfaceSums {
    double sum = 0.0;
    std::size_t count = 0;
};

SurfaceSums directed_sums(const BinaryMask& a, const BinaryMask& b) {
    const auto sa = surface_voxels(a);
    const auto sb = surface_voxels(b);
    const auto da = squared_distance_transform(a.dims, a.spacing, sa);
    const auto db = squared_distance_transform(b.dims, b.spacing, sb);
    double s1 = 0.0, s2 = 0.0;
    for (auto i : sa) s1 += std::sqrt(db[i]);
    for (auto i : sb) s2 += std::sqrt(da[i]);
    return {s1 + s2, sa.size() + sb.size()};
}

}  // namespace

BinaryMask::BinaryMask(std::vector<std::size_t> d, std::vector<double> s) : dims(std::move(d)), spacing(std::move(s)) {
    std::size_t n = 1;
    for (auto x : dims) n *= x;
    grid.assign(n, 0);
    validate();
}

std::size_t BinaryMask::count() const {
    return static_cast<std::size_t>(std::count_if(grid.begin(), grid.end(), [](std::uint8_t v) { return v != 0; }));
}

void BinaryMask::validate() const {
    if (dims.size() != 2 && dims.size() != 3) throw ContractError("masks must be 2D or 3D");
    if (spacing.size() != dims.size()) throw ContractError("one spacing value per axis is required");
    for (double s : spacing)
        if (!(s > 0.0)) throw ContractError("spacing must be positive");
    std::size_t n = 1;
    for (auto x : dims) n *= x;
    if (n != grid.size()) throw ContractError("mask grid size does not match its dimensions");
}

BinaryMask class_mask(const Hvol& labels, int cls) {
    if (labels.dtype != HvolType::u8) throw IoError("label volume must be u8");
    labels.validate();
    BinaryMask m({labels.dims[0], labels.dims[1], labels.dims[2]},
                 {labels.spacing[0], labels.spacing[1], labels.spacing[2]});
    for (std::size_t i = 0; i < m.size(); ++i) m.grid[i] = cls == 0 ? labels.u8[i] >= 1 : labels.u8[i] == 2;
    return m;
}

double dice(const BinaryMask& pred, const BinaryMask& gt) {
    const Overlap o = overlap(pred, gt);
    if (o.a + o.b == 0.0) return 1.0;
    return 2.0 * o.inter / (o.a + o.b);
}

IouVoe iou_voe(const BinaryMask& pred, const BinaryMask& gt) {
    const Overlap o = overlap(pred, gt);
    const double iou = o.uni == 0.0 ? 1.0 : o.inter / o.uni;
    return {iou, 1.0 - iou};
}

std::vector<std::size_t> surface_voxels(const BinaryMask& m) {
    m.validate();
    const std::size_t r = m.rank();
    std::vector<std::size_t> stride(r, 1);
    for (std::size_t a = r - 1; a > 0; --a) stride[a - 1] = stride[a] * m.dims[a];
    std::vector<std::size_t> out;
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (m.grid[i]) {
            bool surface = false;
            for (std::size_t a = 0; a < r && !surface; ++a) {
                if (idx[a] == 0 || !m.grid[i - stride[a]]) surface = true;
                else if (idx[a] + 1 == m.dims[a] || !m.grid[i + stride[a]]) surface = true;
            }
            if (surface) out.push_back(i);
        }
        for (std::size_t a = r; a-- > 0;) {
            if (++idx[a] < m.dims[a]) break;
            idx[a] = 0;
        }
    }
    return out;
}

std::vector<double> squared_distance_transform(const std::vector<std::size_t>& dims,
                                               const std::vector<double>& spacing,
                                               const std::vector<std::size_t>& features) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    std::vector<double> f(n, kInf);
    for (auto i : features) f.at(i) = 0.0;
    const std::size_t r = dims.size();
    std::vector<std::size_t> stride(r, 1);
    for (std::size_t a = r - 1; a > 0; --a) stride[a - 1] = stride[a] * dims[a];
    std::vector<double> line, res;
    std::vector<std::size_t> v;
    std::vector<double> z;
    for (std::size_t a = 0; a < r; ++a) {
        const std::size_t len = dims[a], st = stride[a];
        line.resize(len);
        res.resize(len);
        // every line along axis a starts at an index whose a-coordinate is 0
        for (std::size_t start = 0; start < n; ++start) {
            if ((start / st) % len != 0) continue;
            for (std::size_t q = 0; q < len; ++q) line[q] = f[start + q * st];
            envelope_1d(line.data(), len, spacing[a], res.data(), v, z);
            for (std::size_t q = 0; q < len; ++q) f[start + q * st] = res[q];
        }
    }
    return f;
}

std::optional<double> assd(const BinaryMask& pred, const BinaryMask& gt, std::string* why) {
    check_pair(pred, gt);
    if (pred.empty() || gt.empty()) {
        if (why) *why = pred.empty() ? "predicted mask is empty" : "ground-truth mask is empty";
        return std::nullopt;
    }
    const SurfaceSums s = directed_sums(pred, gt);
    return s.sum / static_cast<double>(s.count);
}

std::optional<double> assd_per_slice(const BinaryMask& pred, const BinaryMask& gt, std::string* why) {
    check_pair(pred, gt);
    if (pred.rank() != 3) throw ContractError("per-slice surface distance needs a 3D mask");
    const std::size_t d = pred.dims[0], area = pred.dims[1] * pred.dims[2];
    double sum = 0.0;
    std::size_t count = 0, skipped = 0;
    for (std::size_t z = 0; z < d; ++z) {
        BinaryMask a({pred.dims[1], pred.dims[2]}, {pred.spacing[1], pred.spacing[2]});
        BinaryMask b({pred.dims[1], pred.dims[2]}, {pred.spacing[1], pred.spacing[2]});
        std::copy_n(pred.grid.begin() + static_cast<std::ptrdiff_t>(z * area), area, a.grid.begin());
        std::copy_n(gt.grid.begin() + static_cast<std::ptrdiff_t>(z * area), area, b.grid.begin());
        const bool ea = a.empty(), eb = b.empty();
        if (ea && eb) continue;
        if (ea || eb) {
            ++skipped;
            continue;
        }
        const SurfaceSums s = directed_sums(a, b);
        sum += s.sum;
        count += s.count;
    }
    if (count == 0) {
        if (why) *why = "no slice has both masks nonempty";
        return std::nullopt;
    }
    if (why && skipped) *why = std::to_string(skipped) + " slice(s) with only one mask present were skipped";
    return sum / static_cast<double>(count);
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("correlation inputs differ in length");
    if (x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw DimensionError("correlation inputs differ in length");
    return pearson(average_ranks(x), average_ranks(y));
}

VolumeStats volume_stats(const std::vector<double>& pred_mm3, const std::vector<double>& gt_mm3) {
    if (pred_mm3.size() != gt_mm3.size()) throw DimensionError("volume lists differ in length");
    VolumeStats s;
    if (pred_mm3.empty()) {
        s.diagnostics.push_back("no cases");
        return s;
    }
    s.pearson = pearson(pred_mm3, gt_mm3);
    s.spearman = spearman(pred_mm3, gt_mm3);
    if (!s.pearson) s.diagnostics.push_back("correlation undefined (fewer than 2 cases or zero variance)");
    double abs_sum = 0.0, rvd_sum = 0.0;
    std::size_t rvd_n = 0;
    for (std::size_t i = 0; i < gt_mm3.size(); ++i) {
        const double diff = std::abs(pred_mm3[i] - gt_mm3[i]);
        abs_sum += diff;
        if (gt_mm3[i] > 0.0) {
            rvd_sum += diff / gt_mm3[i] * 100.0;
            ++rvd_n;
        }
    }
    s.mae_ml = abs_sum / static_cast<double>(gt_mm3.size()) / 1000.0;
    if (rvd_n) s.rvd_pct = rvd_sum / static_cast<double>(rvd_n);
    if (rvd_n < gt_mm3.size())
        s.diagnostics.push_back(std::to_string(gt_mm3.size() - rvd_n) + " case(s) with empty ground truth excluded from RVD");
    return s;
}

MetricsReport build_report(const std::vector<CaseInput>& cases, const std::string& assd_mode) {
    if (assd_mode != "volume" && assd_mode != "slice") throw ConfigError("assd_mode must be volume or slice");
    MetricsReport rep;
    rep.assd_mode = assd_mode;
    std::vector<double> pv[2], gv[2];
    for (const auto& c : cases) {
        CaseMetrics cm;
        cm.name = c.name;
        const double voxel_mm3 = static_cast<double>(c.gt->spacing[0]) * c.gt->spacing[1] * c.gt->spacing[2];
        for (int k = 0; k < 2; ++k) {
            const BinaryMask p = class_mask(*c.pred, k), g = class_mask(*c.gt, k);
            auto& m = cm.cls[k];
            m.dice = dice(p, g);
            const IouVoe iv = iou_voe(p, g);
            m.iou = iv.iou;
            m.voe = iv.voe;
            std::string why;
            m.assd_mm = assd_mode == "volume" ? assd(p, g, &why) : assd_per_slice(p, g, &why);
            if (!why.empty()) rep.diagnostics.push_back(c.name + " " + kClassNames[k] + ": " + why);
            cm.pred_ml[k] = static_cast<double>(p.count()) * voxel_mm3 / 1000.0;
            cm.gt_ml[k] = static_cast<double>(g.count()) * voxel_mm3 / 1000.0;
            pv[k].push_back(cm.pred_ml[k] * 1000.0);
            gv[k].push_back(cm.gt_ml[k] * 1000.0);
            rep.pred_ml_total[k] += cm.pred_ml[k];
            rep.gt_ml_total[k] += cm.gt_ml[k];
        }
        rep.cases.push_back(cm);
    }
    for (int k = 0; k < 2; ++k) {
        MeanRow& row = rep.mean[k];
        double assd_sum = 0.0;
        std::size_t assd_n = 0;
        for (const auto& c : rep.cases) {
            row.dice += c.cls[k].dice;
            row.iou += c.cls[k].iou;
            row.voe += c.cls[k].voe;
            if (c.cls[k].assd_mm) {
                assd_sum += *c.cls[k].assd_mm;
                ++assd_n;
            } else {
                ++row.assd_absent;
            }
        }
        const double n = static_cast<double>(std::max<std::size_t>(rep.cases.size(), 1));
        row.dice /= n;
        row.iou /= n;
        row.voe /= n;
        if (assd_n) row.assd_mm = assd_sum / static_cast<double>(assd_n);
        rep.volumes[k] = volume_stats(pv[k], gv[k]);
    }
    rep.overall.dice = 0.5 * (rep.mean[0].dice + rep.mean[1].dice);
    rep.overall.iou = 0.5 * (rep.mean[0].iou + rep.mean[1].iou);
    rep.overall.voe = 0.5 * (rep.mean[0].voe + rep.mean[1].voe);
    if (rep.mean[0].assd_mm && rep.mean[1].assd_mm)
        rep.overall.assd_mm = 0.5 * (*rep.mean[0].assd_mm + *rep.mean[1].assd_mm);
    rep.overall.assd_absent = rep.mean[0].assd_absent + rep.mean[1].assd_absent;
    return rep;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json row_json(const MeanRow& r) {
    return {{"dice", r.dice}, {"iou", r.iou}, {"voe", r.voe}, {"assd_mm", opt_json(r.assd_mm)},
            {"assd_absent", r.assd_absent}};
}

}  // namespace

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["assd_mode"] = assd_mode;
    nlohmann::ordered_json per_class;
    for (int k = 0; k < 2; ++k) per_class[kClassNames[k]] = row_json(mean[k]);
    j["per_class"] = per_class;
    j["mean"] = row_json(overall);
    nlohmann::ordered_json vols, corr;
    for (int k = 0; k < 2; ++k) {
        vols[kClassNames[k]] = {{"gt_ml", gt_ml_total[k]},
                                {"pred_ml", pred_ml_total[k]},
                                {"mae_ml", volumes[k].mae_ml},
                                {"rvd_pct", opt_json(volumes[k].rvd_pct)}};
        corr[kClassNames[k]] = {{"pearson", opt_json(volumes[k].pearson)},
                                {"spearman", opt_json(volumes[k].spearman)}};
    }
    j["volumes"] = vols;
    j["correlations"] = corr;
    nlohmann::ordered_json cs = nlohmann::ordered_json::array();
    for (const auto& c : cases) {
        nlohmann::ordered_json e;
        e["name"] = c.name;
        for (int k = 0; k < 2; ++k)
            e[kClassNames[k]] = {{"dice", c.cls[k].dice},       {"iou", c.cls[k].iou},
                                 {"voe", c.cls[k].voe},         {"assd_mm", opt_json(c.cls[k].assd_mm)},
                                 {"gt_ml", c.gt_ml[k]},         {"pred_ml", c.pred_ml[k]}};
        cs.push_back(e);
    }
    j["cases"] = cs;
    nlohmann::ordered_json diag = nlohmann::ordered_json::array();
    for (const auto& d : diagnostics) diag.push_back(d);
    for (int k = 0; k < 2; ++k)
        for (const auto& d : volumes[k].diagnostics) diag.push_back(std::string(kClassNames[k]) + " volumes: " + d);
    j["diagnostics"] = diag;
    return j.dump(2) + "\n";
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(2);
    os << std::left << std::setw(8) << "Class" << std::right << std::setw(10) << "Dice (%)" << std::setw(10)
       << "IoU (%)" << std::setw(11) << "ASSD (mm)" << std::setw(10) << "VOE (%)" << "\n";
    auto line = [&](const std::string& name, const MeanRow& r) {
        os << std::left << std::setw(8) << name << std::right << std::setw(10) << 100.0 * r.dice << std::setw(10)
           << 100.0 * r.iou << std::setw(11);
        if (r.assd_mm)
            os << *r.assd_mm;
        else
            os << "n/a";
        os << std::setw(10) << 100.0 * r.voe << "\n";
    };
    line("Liver", mean[0]);
    line("Tumor", mean[1]);
    line("Mean", overall);
    return os.str();
}

}  // namespace hansnet

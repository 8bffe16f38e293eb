#include <algorithm>
#include <cmath>

#include "hansnet/data.hpp"

namespace hansnet {

double window_normalize(double hu) {
    const double c = std::clamp(hu, kWindowLow, kWindowHigh);
    return (c - kWindowLow) / (kWindowHigh - kWindowLow);
}

Tensor window_normalize(const Tensor& raw_hu) {
    Tensor out(raw_hu.shape());
    auto o = out.mutable_data();
    const auto in = raw_hu.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = window_normalize(in[i]);
    return out;
}

namespace {

struct Tap {
    std::size_t src;
    double weight;
};

// Per output index, the source taps along one axis of length n resampled to m.
std::vector<std::vector<Tap>> axis_taps(std::size_t n, std::size_t m) {
    std::vector<std::vector<Tap>> taps(m);
    const double ratio = static_cast<double>(n) / static_cast<double>(m);
    if (m < n) {
        for (std::size_t i = 0; i < m; ++i) {
            const double lo = static_cast<double>(i) * ratio, hi = static_cast<double>(i + 1) * ratio;
            for (auto s = static_cast<std::size_t>(std::floor(lo)); s < n && static_cast<double>(s) < hi; ++s) {
                const double overlap = std::min(hi, static_cast<double>(s + 1)) - std::max(lo, static_cast<double>(s));
                if (overlap > 0.0) taps[i].push_back({s, overlap / ratio});
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            const double src = std::clamp((static_cast<double>(i) + 0.5) * ratio - 0.5, 0.0, static_cast<double>(n - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(src));
            const std::size_t i1 = std::min(i0 + 1, n - 1);
            const double f = src - static_cast<double>(i0);
            taps[i].push_back({i0, 1.0 - f});
            if (f > 0.0) taps[i].push_back({i1, f});
        }
    }
    return taps;
}

}  // namespace

Image2D resize_image(const Image2D& img, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ContractError("resize target must be at least 1x1");
    if (img.h == out_h && img.w == out_w) return img;
    const auto tx = axis_taps(img.w, out_w);
    const auto ty = axis_taps(img.h, out_h);
    std::vector<double> rows(img.h * out_w, 0.0);
    for (std::size_t y = 0; y < img.h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (const auto& t : tx[x]) acc += t.weight * img.data[y * img.w + t.src];
            rows[y * out_w + x] = acc;
        }
    Image2D out{out_h, out_w, std::vector<double>(out_h * out_w, 0.0)};
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x) {
            double acc = 0.0;
            for (const auto& t : ty[y]) acc += t.weight * rows[t.src * out_w + x];
            out.data[y * out_w + x] = acc;
        }
    return out;
}

Mask2D resize_mask(const Mask2D& mask, std::size_t out_h, std::size_t out_w) {
    if (out_h == 0 || out_w == 0) throw ContractError("resize target must be at least 1x1");
    if (mask.h == out_h && mask.w == out_w) return mask;
    auto nearest = [](std::size_t i, std::size_t n, std::size_t m) {
        return std::min(n - 1, (2 * i + 1) * n / (2 * m));
    };
    Mask2D out{out_h, out_w, std::vector<std::uint8_t>(out_h * out_w)};
    for (std::size_t y = 0; y < out_h; ++y)
        for (std::size_t x = 0; x < out_w; ++x)
            out.data[y * out_w + x] = mask.data[nearest(y, mask.h, out_h) * mask.w + nearest(x, mask.w, out_w)];
    return out;
}

std::vector<std::size_t> tumor_slice_filter(const Hvol& labels) {
    if (labels.dtype != HvolType::u8) throw IoError("tumor filter needs a u8 label volume");
    labels.validate();
    std::vector<std::size_t> out;
    const std::size_t area = labels.slice_size();
    for (std::size_t z = 0; z < labels.dims[0]; ++z) {
        const auto first = labels.u8.begin() + static_cast<std::ptrdiff_t>(z * area);
        if (std::find(first, first + static_cast<std::ptrdiff_t>(area), std::uint8_t{2}) != first + static_cast<std::ptrdiff_t>(area))
            out.push_back(z);
    }
    return out;
}

Image2D volume_slice(const Hvol& image, std::size_t z, std::size_t out) {
    if (image.dtype != HvolType::f32) throw IoError("image volume must be f32");
    if (z >= image.dims[0]) throw ContractError("slice index out of range");
    Image2D img{image.dims[1], image.dims[2], std::vector<double>(image.slice_size())};
    for (std::size_t i = 0; i < img.data.size(); ++i)
        img.data[i] = window_normalize(static_cast<double>(image.f32[z * image.slice_size() + i]));
    return resize_image(img, out, out);
}

Mask2D label_slice(const Hvol& labels, std::size_t z, std::size_t out) {
    if (labels.dtype != HvolType::u8) throw IoError("label volume must be u8");
    if (z >= labels.dims[0]) throw ContractError("slice index out of range");
    const std::size_t area = labels.slice_size();
    Mask2D m{labels.dims[1], labels.dims[2],
             std::vector<std::uint8_t>(labels.u8.begin() + static_cast<std::ptrdiff_t>(z * area),
                                       labels.u8.begin() + static_cast<std::ptrdiff_t>((z + 1) * area))};
    return resize_mask(m, out, out);
}

void labels_to_targets(const Mask2D& labels, double* liver, double* tumor) {
    for (std::size_t i = 0; i < labels.data.size(); ++i) {
        const auto l = labels.data[i];
        if (l > 2) throw ContractError("labels must be in {0,1,2}");
        liver[i] = l >= 1 ? 1.0 : 0.0;
        tumor[i] = l == 2 ? 1.0 : 0.0;
    }
}

SliceSet make_slice_set(const std::vector<SliceRef>& refs, std::size_t out) {
    if (refs.empty()) return {};
    const std::size_t n = refs.size(), area = out * out;
    SliceSet set{Tensor({n, 1, out, out}), Tensor({n, 2, out, out})};
    auto img = set.images.mutable_data();
    auto tgt = set.targets.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
        const Image2D s = volume_slice(*refs[i].image, refs[i].z, out);
        std::copy(s.data.begin(), s.data.end(), img.begin() + static_cast<std::ptrdiff_t>(i * area));
        const Mask2D m = label_slice(*refs[i].labels, refs[i].z, out);
        labels_to_targets(m, tgt.data() + 2 * i * area, tgt.data() + (2 * i + 1) * area);
    }
    return set;
}

}  // namespace hansnet

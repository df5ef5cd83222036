#pragma once

#include <cassert>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace pk {

/// Dense 2-D grid, row-major. Used for id maps, class maps and binary masks.
template <typename T>
struct Plane {
    int h = 0;
    int w = 0;
    std::vector<T> v;

    Plane() = default;
    Plane(int height, int width, T fill = T{}) : h(height), w(width), v(std::size_t(height) * width, fill) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("Plane: dimensions must be positive, got " + std::to_string(height) + "x" +
                                        std::to_string(width));
    }

    T& at(int i, int j) {
        assert(i >= 0 && i < h && j >= 0 && j < w);
        return v[std::size_t(i) * w + j];
    }
    const T& at(int i, int j) const {
        assert(i >= 0 && i < h && j >= 0 && j < w);
        return v[std::size_t(i) * w + j];
    }

    bool same_shape(const Plane& o) const { return h == o.h && w == o.w; }
    std::size_t size() const { return v.size(); }
};

/// Binary {0,1} mask stored in the surrounding tensor's scalar type.
template <typename T>
using BinaryMask = Plane<T>;

/// Per-pixel identity map unifying class and instance.
///
/// "Things" carry one id per instance, "stuff" one id per class. Ids are
/// encoded as class_id * 1000 + instance_index (instance_index 0 for stuff),
/// the COCO panoptic convention. kPadId is reserved for out-of-bounds reads
/// and never appears in valid map data.
struct PanopticMap {
    static constexpr std::uint32_t kPadId = 0xFFFFFFFFu;

    Plane<std::uint32_t> ids;

    PanopticMap() = default;
    PanopticMap(int height, int width, std::uint32_t fill = 0) : ids(height, width, fill) {}

    int height() const { return ids.h; }
    int width() const { return ids.w; }

    std::uint32_t at(int i, int j) const { return ids.at(i, j); }
    std::uint32_t& at(int i, int j) { return ids.at(i, j); }

    /// Out-of-bounds positions read as kPadId, which matches no real id.
    std::uint32_t at_padded(int i, int j) const {
        if (i < 0 || i >= ids.h || j < 0 || j >= ids.w) return kPadId;
        return ids.at(i, j);
    }

    static std::uint32_t encode_id(std::uint32_t class_id, std::uint32_t instance_index) {
        return class_id * 1000u + instance_index;
    }
};

/// Per-pixel semantic class indices in [0, K). K is supplied where needed.
struct SemanticMap {
    Plane<std::int32_t> classes;

    SemanticMap() = default;
    SemanticMap(int height, int width, std::int32_t fill = 0) : classes(height, width, fill) {}

    int height() const { return classes.h; }
    int width() const { return classes.w; }

    std::int32_t at(int i, int j) const { return classes.at(i, j); }
    std::int32_t& at(int i, int j) { return classes.at(i, j); }
};

/// Dense rank-4 tensor in batch-channel-height-width layout, row-major
/// within each channel plane.
template <typename T>
class Tensor {
  public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w, T fill = T{})
        : n_(n), c_(c), h_(h), w_(w), data_(checked_elems(n, c, h, w), fill) {}

    int n() const { return n_; }
    int c() const { return c_; }
    int h() const { return h_; }
    int w() const { return w_; }

    T& operator()(int n, int c, int i, int j) {
        assert(n >= 0 && n < n_ && c >= 0 && c < c_ && i >= 0 && i < h_ && j >= 0 && j < w_);
        return data_[((std::size_t(n) * c_ + c) * h_ + i) * w_ + j];
    }
    const T& operator()(int n, int c, int i, int j) const {
        assert(n >= 0 && n < n_ && c >= 0 && c < c_ && i >= 0 && i < h_ && j >= 0 && j < w_);
        return data_[((std::size_t(n) * c_ + c) * h_ + i) * w_ + j];
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::size_t size() const { return data_.size(); }

    bool same_shape(const Tensor& o) const { return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }

    std::string shape_string() const { return shape_string(n_, c_, h_, w_); }

    static std::string shape_string(int n, int c, int h, int w) {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }

  private:
    static std::size_t checked_elems(int n, int c, int h, int w) {
        if (n <= 0 || c <= 0 || h <= 0 || w <= 0)
            throw std::invalid_argument("Tensor: dimensions must be positive, got " + shape_string(n, c, h, w));
        return std::size_t(n) * c * h * w;
    }

    int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
    std::vector<T> data_;
};

namespace detail {

inline void check_divisible(int h, int w, int factor, const char* what) {
    if (factor <= 0) throw std::invalid_argument(std::string(what) + ": factor must be positive");
    if (h % factor != 0 || w % factor != 0)
        throw std::invalid_argument(std::string(what) + ": " + std::to_string(h) + "x" + std::to_string(w) +
                                    " not divisible by factor " + std::to_string(factor));
}

template <typename T>
Plane<T> downsample_plane(const Plane<T>& in, int factor, const char* what) {
    check_divisible(in.h, in.w, factor, what);
    Plane<T> out(in.h / factor, in.w / factor);
    for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j) out.at(i, j) = in.at(i * factor, j * factor);
    return out;
}

}  // namespace detail

/// Nearest-neighbor downsample taking the top-left sample of each
/// factor x factor block. Dimensions must divide evenly.
inline PanopticMap nearest_downsample(const PanopticMap& p, int factor) {
    PanopticMap out;
    out.ids = detail::downsample_plane(p.ids, factor, "nearest_downsample(panoptic)");
    return out;
}

inline SemanticMap nearest_downsample(const SemanticMap& s, int factor) {
    SemanticMap out;
    out.classes = detail::downsample_plane(s.classes, factor, "nearest_downsample(semantic)");
    return out;
}

/// Nearest-neighbor upsample by integer factor: out[i,j] = in[i/factor, j/factor].
template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& x, int factor) {
    if (factor <= 0) throw std::invalid_argument("nearest_upsample: factor must be positive");
    Tensor<T> out(x.n(), x.c(), x.h() * factor, x.w() * factor);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c)
            for (int i = 0; i < out.h(); ++i)
                for (int j = 0; j < out.w(); ++j) out(n, c, i, j) = x(n, c, i / factor, j / factor);
    return out;
}

/// Expand a class-index map to a (1, K, h, w) one-hot tensor.
template <typename T = double>
Tensor<T> one_hot(const SemanticMap& s, int num_classes) {
    if (num_classes <= 0) throw std::invalid_argument("one_hot: class count must be positive");
    Tensor<T> out(1, num_classes, s.height(), s.width(), T(0));
    for (int i = 0; i < s.height(); ++i)
        for (int j = 0; j < s.width(); ++j) {
            const std::int32_t cls = s.at(i, j);
            if (cls < 0 || cls >= num_classes)
                throw std::domain_error("one_hot: class index " + std::to_string(cls) + " at (" + std::to_string(i) +
                                        "," + std::to_string(j) + ") outside [0," + std::to_string(num_classes) + ")");
            out(0, cls, i, j) = T(1);
        }
    return out;
}

}  // namespace pk

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace splatlift {

// What the pixel values mean. Stored in the float-image container.
enum class ImageSemantics : uint8_t {
    Color = 0,
    Depth = 1, // value <= 0 means "no valid depth at this pixel"
    Mask  = 2,
    Alpha = 3,
};

std::string semantics_name(ImageSemantics s);

// Row-major H x W x C raster. FloatImage (float storage) is the container
// exchanged between modules and written to disk; Image<double> is used on
// the differentiable paths where float32 rounding would poison gradient
// checks.
template <typename T>
class Image {
  public:
    Image() = default;
    Image(int height, int width, int channels,
          ImageSemantics semantics = ImageSemantics::Color, T fill = T(0))
        : height_(height), width_(width), channels_(channels), semantics_(semantics) {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw std::invalid_argument("image dimensions must be positive");
        data_.assign(static_cast<size_t>(height) * width * channels, fill);
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    ImageSemantics semantics() const { return semantics_; }
    void set_semantics(ImageSemantics s) { semantics_ = s; }

    bool empty() const { return data_.empty(); }
    size_t size() const { return data_.size(); }

    T& at(int y, int x, int c = 0) {
        return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
    }
    T at(int y, int x, int c = 0) const {
        return data_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
    }
    bool in_bounds(int y, int x) const { return y >= 0 && y < height_ && x >= 0 && x < width_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    bool same_shape(const Image& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    template <typename U>
    Image<U> cast() const {
        Image<U> out(height_, width_, channels_, semantics_);
        for (size_t i = 0; i < data_.size(); ++i) out.raw()[i] = static_cast<U>(data_[i]);
        return out;
    }

    Image clamped01() const {
        Image out = *this;
        for (auto& v : out.data_) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
        return out;
    }

  private:
    int height_ = 0, width_ = 0, channels_ = 0;
    ImageSemantics semantics_ = ImageSemantics::Color;
    std::vector<T> data_;
};

using FloatImage = Image<float>;
using ImageD = Image<double>;

} // namespace splatlift

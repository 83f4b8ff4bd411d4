#pragma once

#include <vector>

namespace g4d {

// Row-major H x W x C raster, channel-interleaved, double precision.
struct Image {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c) : width(w), height(h), channels(c) {
        data.assign(size_t(w) * size_t(h) * size_t(c), 0.0);
    }

    double& at(int x, int y, int c) {
        return data[(size_t(y) * size_t(width) + size_t(x)) * size_t(channels) + size_t(c)];
    }
    double at(int x, int y, int c) const {
        return data[(size_t(y) * size_t(width) + size_t(x)) * size_t(channels) + size_t(c)];
    }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    size_t pixel_count() const { return size_t(width) * size_t(height); }
};

} // namespace g4d

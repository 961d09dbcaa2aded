#pragma once

#include <filesystem>
#include <vector>

#include "coad/tensor.hpp"

namespace cv {
class Mat;
}

namespace coad {

/// Planar image with intensities in [0, 1]. Object crops are 3-plane RGB.
struct Image {
    std::vector<Mat> planes;

    Image() = default;
    Image(int channels, int height, int width, double fill = 0.0)
        : planes(static_cast<std::size_t>(channels), Mat(height, width, fill))
    {
    }

    [[nodiscard]] int channels() const noexcept { return static_cast<int>(planes.size()); }
    [[nodiscard]] int height() const noexcept { return planes.empty() ? 0 : planes[0].rows; }
    [[nodiscard]] int width() const noexcept { return planes.empty() ? 0 : planes[0].cols; }

    friend bool operator==(const Image&, const Image&) = default;
};

using ObjectImage = Image;

/// Axis-aligned box in pixels, top-left corner plus size.
struct BoundingBox {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    [[nodiscard]] double center_x() const noexcept { return x + 0.5 * w; }
    friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// BT.601 luma of an RGB image, one plane.
Mat grayscale(const Image& rgb);

/// Loads any format OpenCV decodes as 3-channel RGB in [0, 1].
Image load_image(const std::filesystem::path& path);
/// Writes an 8-bit image; format from the extension.
void save_image(const Image& img, const std::filesystem::path& path);

/// Area-averaging resize (bilinear when enlarging).
Image resize(const Image& img, int height, int width);
/// Copies the box out of the image. Throws ShapeError if it is empty or leaves the image.
Image crop(const Image& img, const BoundingBox& box);

Image from_cv(const cv::Mat& bgr);
cv::Mat to_cv(const Image& img);

}  // namespace coad

#include "coad/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace coad {

Mat grayscale(const Image& rgb)
{
    if (rgb.channels() != 3) {
        throw ShapeError("grayscale: expected 3 channels, got " + std::to_string(rgb.channels()));
    }
    Mat g(rgb.height(), rgb.width());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.data[i] = 0.299 * rgb.planes[0].data[i] + 0.587 * rgb.planes[1].data[i] + 0.114 * rgb.planes[2].data[i];
    }
    return g;
}

Image from_cv(const cv::Mat& src)
{
    cv::Mat bgr;
    if (src.channels() == 1) {
        cv::cvtColor(src, bgr, cv::COLOR_GRAY2BGR);
    } else if (src.channels() == 4) {
        cv::cvtColor(src, bgr, cv::COLOR_BGRA2BGR);
    } else {
        bgr = src;
    }
    cv::Mat f;
    const double scale = bgr.depth() == CV_8U ? 1.0 / 255.0 : (bgr.depth() == CV_16U ? 1.0 / 65535.0 : 1.0);
    bgr.convertTo(f, CV_64FC3, scale);
    Image img(3, f.rows, f.cols);
    for (int r = 0; r < f.rows; ++r) {
        const auto* p = f.ptr<cv::Vec3d>(r);
        for (int c = 0; c < f.cols; ++c) {
            img.planes[0](r, c) = p[c][2];
            img.planes[1](r, c) = p[c][1];
            img.planes[2](r, c) = p[c][0];
        }
    }
    return img;
}

cv::Mat to_cv(const Image& img)
{
    if (img.channels() != 3 && img.channels() != 1) {
        throw ShapeError("to_cv: unsupported channel count " + std::to_string(img.channels()));
    }
    if (img.channels() == 1) {
        cv::Mat out(img.height(), img.width(), CV_64FC1);
        for (int r = 0; r < img.height(); ++r) {
            for (int c = 0; c < img.width(); ++c) {
                out.at<double>(r, c) = img.planes[0](r, c);
            }
        }
        return out;
    }
    cv::Mat out(img.height(), img.width(), CV_64FC3);
    for (int r = 0; r < img.height(); ++r) {
        auto* p = out.ptr<cv::Vec3d>(r);
        for (int c = 0; c < img.width(); ++c) {
            p[c] = cv::Vec3d(img.planes[2](r, c), img.planes[1](r, c), img.planes[0](r, c));
        }
    }
    return out;
}

Image load_image(const std::filesystem::path& path)
{
    const cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) {
        throw IoError("cannot read image '" + path.string() + "'");
    }
    return from_cv(m);
}

void save_image(const Image& img, const std::filesystem::path& path)
{
    cv::Mat u8;
    to_cv(img).convertTo(u8, img.channels() == 3 ? CV_8UC3 : CV_8UC1, 255.0);
    if (!cv::imwrite(path.string(), u8)) {
        throw IoError("cannot write image '" + path.string() + "'");
    }
}

Image resize(const Image& img, int height, int width)
{
    if (height <= 0 || width <= 0) {
        throw ShapeError("resize: target size must be positive");
    }
    if (img.height() == height && img.width() == width) {
        return img;
    }
    Image out(img.channels(), height, width);
    const bool shrinking = height <= img.height() && width <= img.width();
    for (int ch = 0; ch < img.channels(); ++ch) {
        const Mat& p = img.planes[ch];
        cv::Mat src(p.rows, p.cols, CV_64FC1, const_cast<double*>(p.data.data()));
        cv::Mat dst(height, width, CV_64FC1, out.planes[ch].data.data());
        cv::resize(src, dst, cv::Size(width, height), 0, 0, shrinking ? cv::INTER_AREA : cv::INTER_LINEAR);
    }
    return out;
}

Image crop(const Image& img, const BoundingBox& box)
{
    if (box.w <= 0 || box.h <= 0) {
        throw ShapeError("crop: degenerate box (zero area)");
    }
    if (box.x < 0 || box.y < 0 || box.x + box.w > img.width() || box.y + box.h > img.height()) {
        throw ShapeError("crop: box [" + std::to_string(box.x) + "," + std::to_string(box.y) + "," +
                         std::to_string(box.w) + "," + std::to_string(box.h) + "] outside " +
                         std::to_string(img.width()) + "x" + std::to_string(img.height()) + " image");
    }
    Image out(img.channels(), box.h, box.w);
    for (int ch = 0; ch < img.channels(); ++ch) {
        for (int r = 0; r < box.h; ++r) {
            for (int c = 0; c < box.w; ++c) {
                out.planes[ch](r, c) = img.planes[ch](box.y + r, box.x + c);
            }
        }
    }
    return out;
}

}  // namespace coad

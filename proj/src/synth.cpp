#include "coad/synth.hpp"

#include <algorithm>
#include <cmath>

namespace coad::synth {

namespace {

double luma(const std::array<double, 3>& c)
{
    return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
}

std::array<double, 3> hsv(double h_deg, double s, double v)
{
    const double h = std::fmod(h_deg, 360.0) / 60.0;
    const double c = v * s;
    const double x = c * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    const double m = v - c;
    std::array<double, 3> rgb{};
    switch (static_cast<int>(h)) {
    case 0:
        rgb = {c, x, 0};
        break;
    case 1:
        rgb = {x, c, 0};
        break;
    case 2:
        rgb = {0, c, x};
        break;
    case 3:
        rgb = {0, x, c};
        break;
    case 4:
        rgb = {x, 0, c};
        break;
    default:
        rgb = {c, 0, x};
        break;
    }
    for (double& t : rgb) {
        t += m;
    }
    return rgb;
}

/// Scales toward black or mixes toward white until the luma equals `target`.
std::array<double, 3> with_luma(std::array<double, 3> c, double target)
{
    const double l = luma(c);
    if (l > target) {
        for (double& t : c) {
            t *= target / l;
        }
    } else if (l < target) {
        const double a = (target - l) / (1.0 - l);
        for (double& t : c) {
            t += a * (1.0 - t);
        }
    }
    return c;
}

bool inside(Shape shape, double u, double v)
{
    // u, v in [-1, 1] relative to the product's bounding square.
    switch (shape) {
    case Shape::disk:
        return u * u + v * v <= 1.0;
    case Shape::square:
        return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;
    case Shape::triangle:
        return v <= 0.9 && v >= -0.9 && std::abs(u) <= (v + 0.9) / 1.8;
    case Shape::stripes:
        return std::abs(u) <= 0.6 && std::abs(v) <= 0.95;
    }
    return false;
}

void paint_product(Image& img, const ProductClass& cls, double cx, double cy, double radius, double brightness)
{
    const int h = img.height();
    const int w = img.width();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double u = (x + 0.5 - cx) / radius;
            const double v = (y + 0.5 - cy) / radius;
            if (!inside(cls.shape, u, v)) {
                continue;
            }
            double shade = brightness;
            if (cls.shape == Shape::stripes && static_cast<int>(std::floor((v + 1.0) * 4.0)) % 2 == 1) {
                shade *= 0.55;
            }
            for (int c = 0; c < 3; ++c) {
                img.planes[c](y, x) = std::clamp(cls.rgb[c] * shade, 0.0, 1.0);
            }
        }
    }
}

void paint_background(Image& img, double base, double edge_frac)
{
    const int h = img.height();
    const int w = img.width();
    const int edge = static_cast<int>(h * (1.0 - edge_frac));
    for (int y = 0; y < h; ++y) {
        const double g = base + 0.08 * (static_cast<double>(y) / h - 0.5);
        for (int x = 0; x < w; ++x) {
            if (y >= edge) {
                // shelf lip
                img.planes[0](y, x) = 0.42;
                img.planes[1](y, x) = 0.30;
                img.planes[2](y, x) = 0.20;
            } else {
                img.planes[0](y, x) = g;
                img.planes[1](y, x) = g;
                img.planes[2](y, x) = g * 1.02;
            }
        }
    }
}

// Linear light falloff across the frame in a random direction.
void apply_lighting(Image& img, double strength, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::acos(-1.0));
    const double a = angle(rng);
    const double gx = strength * std::cos(a);
    const double gy = strength * std::sin(a);
    const int h = img.height();
    const int w = img.width();
    for (auto& p : img.planes) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double gain = 1.0 + gx * ((x + 0.5) / w - 0.5) + gy * ((y + 0.5) / h - 0.5);
                p(y, x) = std::clamp(p(y, x) * gain, 0.0, 1.0);
            }
        }
    }
}

void add_noise(Image& img, double sigma, std::mt19937_64& rng)
{
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& p : img.planes) {
        for (double& v : p.data) {
            v = std::clamp(v + n(rng), 0.0, 1.0);
        }
    }
}

}  // namespace

std::string to_string(Shape s)
{
    switch (s) {
    case Shape::disk:
        return "disk";
    case Shape::square:
        return "square";
    case Shape::triangle:
        return "triangle";
    case Shape::stripes:
        return "stripes";
    }
    return "?";
}

std::vector<ProductClass> product_classes(int count)
{
    std::vector<ProductClass> out;
    for (int i = 0; i < count; ++i) {
        const double hue = 360.0 * i / count;
        ProductClass c;
        c.shape = static_cast<Shape>(i % 4);
        c.rgb = with_luma(hsv(hue, 0.85, 1.0), kClassLuma);
        char buf[32];
        std::snprintf(buf, sizeof buf, "-h%03d", static_cast<int>(std::lround(hue)));
        c.label = to_string(c.shape) + buf;
        out.push_back(std::move(c));
    }
    return out;
}

Image render_product(const ProductClass& cls, int size, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Image img(3, size, size);
    paint_background(img, 0.78 + 0.08 * (u01(rng) - 0.5), 0.08);
    const double radius = size * (0.30 + 0.06 * u01(rng));
    const double cx = size * (0.5 + 0.08 * (u01(rng) - 0.5));
    const double cy = size * (0.46 + 0.06 * (u01(rng) - 0.5));
    const double brightness = 0.94 + 0.12 * u01(rng);
    paint_product(img, cls, cx, cy, radius, brightness);
    apply_lighting(img, 0.8 * u01(rng), rng);
    add_noise(img, 0.02, rng);
    return img;
}

std::vector<Sample> generate(const std::vector<ProductClass>& classes, int per_class, int size,
                             unsigned long long seed)
{
    std::mt19937_64 rng(seed);
    std::vector<Sample> out;
    out.reserve(classes.size() * static_cast<std::size_t>(per_class));
    for (const auto& cls : classes) {
        for (int k = 0; k < per_class; ++k) {
            out.push_back({cls.label + "-" + std::to_string(k), cls.label, render_product(cls, size, rng)});
        }
    }
    return out;
}

std::filesystem::path write_dataset(const std::filesystem::path& dir, int classes, int per_class, int size,
                                    unsigned long long seed)
{
    std::filesystem::create_directories(dir / "images");
    std::vector<DatasetRecord> records;
    for (const auto& s : generate(product_classes(classes), per_class, size, seed)) {
        const auto rel = std::filesystem::path("images") / (s.id + ".png");
        save_image(s.image, dir / rel);
        records.push_back({s.id, rel, s.label, std::nullopt, std::nullopt, std::nullopt});
    }
    const auto manifest = dir / "manifest.jsonl";
    write_manifest_jsonl(records, manifest);
    return manifest;
}

ShelfRow render_shelf_row(const std::vector<ProductClass>& row, int slot, std::mt19937_64& rng)
{
    ShelfRow out;
    const int w = slot * static_cast<int>(row.size());
    out.image = Image(3, slot, w);
    for (std::size_t i = 0; i < row.size(); ++i) {
        const Image p = render_product(row[i], slot, rng);
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < slot; ++y) {
                for (int x = 0; x < slot; ++x) {
                    out.image.planes[c](y, static_cast<int>(i) * slot + x) = p.planes[c](y, x);
                }
            }
        }
        out.boxes.push_back({static_cast<int>(i) * slot, 0, slot, slot});
    }
    return out;
}

}  // namespace coad::synth

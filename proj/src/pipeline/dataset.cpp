#include "tracediff/pipeline/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tracediff/grid_io.hpp"
#include "tracediff/rng.hpp"

namespace tracediff {

namespace {

std::string fmt(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

GridData stack(const std::vector<SyntheticCase>& cases, bool masks, int size) {
    GridData g;
    g.channels = static_cast<std::uint32_t>(cases.size());
    g.height = static_cast<std::uint32_t>(size);
    g.width = static_cast<std::uint32_t>(size);
    for (const SyntheticCase& c : cases) {
        const Image2D& img = masks ? c.mask : c.image;
        g.payload.insert(g.payload.end(), img.data().begin(), img.data().end());
    }
    return g;
}

void write_domain(const std::filesystem::path& dir, const std::vector<SyntheticCase>& cases) {
    std::filesystem::create_directories(dir);
    const int size = cases.empty() ? 0 : cases.front().image.height();
    write_grid(dir / "images.plsg", stack(cases, false, size));
    write_grid(dir / "masks.plsg", stack(cases, true, size));
    std::ofstream out(dir / "cases.txt");
    if (!out) throw std::runtime_error("cannot write " + (dir / "cases.txt").string());
    out << "# id seed cx cy ra rb angle fg_mean fg_sd bg_mean bg_sd\n";
    for (const SyntheticCase& c : cases) {
        const EllipseParams& e = c.params;
        out << c.id << ' ' << c.seed << ' ' << fmt(e.cx) << ' ' << fmt(e.cy) << ' ' << fmt(e.ra) << ' '
            << fmt(e.rb) << ' ' << fmt(e.angle) << ' ' << fmt(e.fg_mean) << ' ' << fmt(e.fg_sd) << ' '
            << fmt(e.bg_mean) << ' ' << fmt(e.bg_sd) << '\n';
    }
}

std::vector<SyntheticCase> read_domain(const std::filesystem::path& dir, Domain domain) {
    const GridData images = read_grid(dir / "images.plsg");
    const GridData masks = read_grid(dir / "masks.plsg");
    if (images.channels != masks.channels || images.height != masks.height || images.width != masks.width) {
        throw std::runtime_error("dataset " + dir.string() + ": images and masks disagree");
    }
    std::ifstream in(dir / "cases.txt");
    if (!in) throw std::runtime_error("cannot read " + (dir / "cases.txt").string());
    std::vector<SyntheticCase> cases;
    const std::size_t plane = static_cast<std::size_t>(images.height) * images.width;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        SyntheticCase c;
        c.domain = domain;
        EllipseParams& e = c.params;
        ls >> c.id >> c.seed >> e.cx >> e.cy >> e.ra >> e.rb >> e.angle >> e.fg_mean >> e.fg_sd >> e.bg_mean >> e.bg_sd;
        if (!ls) throw std::runtime_error("dataset " + dir.string() + ": bad case line: " + line);
        const std::size_t k = cases.size();
        if (k >= images.channels) throw std::runtime_error("dataset " + dir.string() + ": more cases than images");
        const auto first = images.payload.begin() + static_cast<std::ptrdiff_t>(k * plane);
        const auto mfirst = masks.payload.begin() + static_cast<std::ptrdiff_t>(k * plane);
        c.image = Image2D(images.height, images.width, std::vector<float>(first, first + plane));
        c.mask = Image2D(images.height, images.width, std::vector<float>(mfirst, mfirst + plane));
        cases.push_back(std::move(c));
    }
    if (cases.size() != images.channels) throw std::runtime_error("dataset " + dir.string() + ": case count mismatch");
    return cases;
}

}  // namespace

void DatasetSpec::validate() const {
    if (size < 8) throw std::invalid_argument("dataset image size must be >= 8");
    if (!(radius_min > 0.0 && radius_min <= radius_max)) throw std::invalid_argument("bad radius range");
    const double extent = radius_max * b_radius_scale + centre_jitter;
    if (extent >= size / 2.0) {
        throw std::invalid_argument("ellipses would leave the " + std::to_string(size) + " px image");
    }
}

DatasetSpec DatasetSpec::for_size(int size) {
    DatasetSpec s;
    const double f = size / 64.0;
    s.size = size;
    s.radius_min *= f;
    s.radius_max *= f;
    s.centre_jitter *= f;
    return s;
}

Image2D rasterize_ellipse(int size, const EllipseParams& e) {
    Image2D mask(size, size);
    const double c = std::cos(e.angle);
    const double s = std::sin(e.angle);
    for (int row = 0; row < size; ++row) {
        for (int col = 0; col < size; ++col) {
            const double dx = col - e.cx;
            const double dy = row - e.cy;
            const double u = (dx * c + dy * s) / e.ra;
            const double v = (-dx * s + dy * c) / e.rb;
            if (u * u + v * v <= 1.0) mask(row, col) = 1.0f;
        }
    }
    return mask;
}

SyntheticCase generate_case(Domain domain, int index, std::uint64_t seed, const DatasetSpec& spec) {
    spec.validate();
    SyntheticCase out;
    out.domain = domain;
    char id[32];
    std::snprintf(id, sizeof id, "%c%03d", domain == Domain::A ? 'A' : 'B', index);
    out.id = id;
    out.seed = derive_seed(seed, (domain == Domain::B ? (std::uint64_t{1} << 32) : 0) + static_cast<std::uint64_t>(index));
    Rng rng(out.seed);

    EllipseParams& e = out.params;
    const double centre = (spec.size - 1) / 2.0;
    const double scale = domain == Domain::B ? spec.b_radius_scale : 1.0;
    e.cx = centre + rng.uniform(-spec.centre_jitter, spec.centre_jitter);
    e.cy = centre + rng.uniform(-spec.centre_jitter, spec.centre_jitter);
    e.ra = scale * rng.uniform(spec.radius_min, spec.radius_max);
    e.rb = scale * rng.uniform(spec.radius_min, spec.radius_max);
    e.angle = rng.uniform(0.0, std::numbers::pi);
    if (domain == Domain::A) {
        e.fg_mean = 0.3;
        e.fg_sd = 0.05;
        e.bg_mean = 0.7;
        e.bg_sd = 0.02;
    } else {
        e.fg_mean = 0.8;
        e.fg_sd = 0.05;
        e.bg_mean = 0.2;
        e.bg_sd = 0.02;
    }
    out.mask = rasterize_ellipse(spec.size, e);

    // Low-frequency texture for domain B: two random plane waves.
    double fx[2] = {0, 0}, fy[2] = {0, 0}, phase[2] = {0, 0};
    if (domain == Domain::B) {
        for (int k = 0; k < 2; ++k) {
            fx[k] = rng.uniform(0.5, 2.0);
            fy[k] = rng.uniform(0.5, 2.0);
            phase[k] = rng.uniform(0.0, 2.0 * std::numbers::pi);
        }
    }
    out.image = Image2D(spec.size, spec.size);
    for (int row = 0; row < spec.size; ++row) {
        for (int col = 0; col < spec.size; ++col) {
            const bool fg = out.mask(row, col) > 0.5f;
            double v = fg ? rng.normal(e.fg_mean, e.fg_sd) : rng.normal(e.bg_mean, e.bg_sd);
            if (domain == Domain::B) {
                for (int k = 0; k < 2; ++k) {
                    v += 0.5 * spec.texture_amplitude *
                         std::sin(2.0 * std::numbers::pi * (fx[k] * col + fy[k] * row) / spec.size + phase[k]);
                }
            }
            out.image(row, col) = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return out;
}

Dataset generate_dataset(int n_per_domain, std::uint64_t seed, const DatasetSpec& spec) {
    if (n_per_domain < 1) throw std::invalid_argument("n_per_domain must be >= 1");
    Dataset d;
    for (int i = 0; i < n_per_domain; ++i) d.a.push_back(generate_case(Domain::A, i, seed, spec));
    for (int i = 0; i < n_per_domain; ++i) d.b.push_back(generate_case(Domain::B, i, seed, spec));
    return d;
}

int train_count(int n, double holdout_fraction) {
    const int train = static_cast<int>(std::floor(n * (1.0 - holdout_fraction) + 1e-9));
    return std::clamp(train, 1, n);
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
    write_domain(dir / "A", data.a);
    write_domain(dir / "B", data.b);
}

Dataset read_dataset(const std::filesystem::path& dir) {
    return {read_domain(dir / "A", Domain::A), read_domain(dir / "B", Domain::B)};
}

std::vector<Image2D> images_of(const std::vector<SyntheticCase>& cases) {
    std::vector<Image2D> out;
    out.reserve(cases.size());
    for (const SyntheticCase& c : cases) out.push_back(c.image);
    return out;
}

}  // namespace tracediff

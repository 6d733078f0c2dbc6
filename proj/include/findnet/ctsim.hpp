#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "findnet/config.hpp"
#include "findnet/fft.hpp"
#include "findnet/io.hpp"
#include "findnet/rng.hpp"
#include "findnet/sample.hpp"

namespace findnet {
namespace ctsim {

using config::GenerateConfig;

constexpr double kMetalThreshold = 2.0;
constexpr double kPi = 3.14159265358979323846264338327950288;

// ---------------------------------------------------------------------------
// Phantoms
// ---------------------------------------------------------------------------

struct Ellipse {
    double cx = 0, cy = 0;   // center, pixel coordinates
    double ax = 1, ay = 1;   // semi-axes
    double angle = 0;        // radians
    double value = 0;        // attenuation set inside

    bool contains(double x, double y) const {
        const double dx = x - cx, dy = y - cy;
        const double c = std::cos(angle), s = std::sin(angle);
        const double u = (dx * c + dy * s) / ax;
        const double v = (-dx * s + dy * c) / ay;
        return u * u + v * v <= 1.0;
    }
};

// Attenuation image (water ~0.2, bone ~0.5, metal >= 2.0, air 0) plus the
// ellipse list it was built from. Metal pixels are exactly the pixels with
// value >= kMetalThreshold.
struct Phantom {
    Tensor image;  // [H,W]
    std::vector<Ellipse> ellipses;
};

// Soft-tissue ellipses are blended with 4x4 supersampled coverage (smooth
// boundaries keep line integrals accurate); metal is set hard so the metal
// mask is exact.
inline void rasterize_blend(Tensor& img, const Ellipse& e) {
    const int64_t h = img.extent(0), w = img.extent(1);
    const double r = std::max(e.ax, e.ay) + 1.0;
    const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(e.cy - r)));
    const int64_t y1 = std::min(h - 1, static_cast<int64_t>(std::ceil(e.cy + r)));
    const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(std::floor(e.cx - r)));
    const int64_t x1 = std::min(w - 1, static_cast<int64_t>(std::ceil(e.cx + r)));
    for (int64_t y = y0; y <= y1; ++y)
        for (int64_t x = x0; x <= x1; ++x) {
            int inside = 0;
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx)
                    if (e.contains(static_cast<double>(x) + (sx + 0.5) / 4.0 - 0.5,
                                   static_cast<double>(y) + (sy + 0.5) / 4.0 - 0.5))
                        ++inside;
            if (inside == 0) continue;
            const double cov = inside / 16.0;
            img.at(y, x) = img.at(y, x) * (1.0 - cov) + e.value * cov;
        }
}

inline void rasterize_hard(Tensor& img, const Ellipse& e) {
    const int64_t h = img.extent(0), w = img.extent(1);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            if (e.contains(static_cast<double>(x), static_cast<double>(y))) img.at(y, x) = e.value;
}

// Area thresholds follow the 128x128 reference values (small < 80 px,
// medium < 300 px) and scale with pixel count.
inline SizeClass classify_metal_area(int64_t area_px, int64_t h, int64_t w) {
    const double scale = static_cast<double>(h * w) / (128.0 * 128.0);
    if (static_cast<double>(area_px) < 80.0 * scale) return SizeClass::small;
    if (static_cast<double>(area_px) < 300.0 * scale) return SizeClass::medium;
    return SizeClass::large;
}

struct PhantomSample {
    Phantom phantom;
    Tensor metal_mask;  // [H,W], binary
    SizeClass size_class = SizeClass::small;
    bool no_metal = false;
};

// Deterministic in the seed: a soft-tissue body ellipse, random internal
// ellipses, then high-density metal disks placed fully inside the body.
inline PhantomSample generate_phantom(uint64_t seed, const GenerateConfig& cfg) {
    const int64_t h = cfg.geometry.h, w = cfg.geometry.w;
    if (h != w || !is_pow2(h)) throw GenError("generate_phantom: image must be square with power-of-two extent");
    Rng rng(seed);

    PhantomSample out;
    out.phantom.image = Tensor({h, w});
    Tensor& img = out.phantom.image;

    Ellipse body;
    body.cx = (w - 1) / 2.0 + rng.uniform(-0.02, 0.02) * w;
    body.cy = (h - 1) / 2.0 + rng.uniform(-0.02, 0.02) * h;
    body.ax = rng.uniform(0.36, 0.42) * w;
    body.ay = rng.uniform(0.30, 0.40) * h;
    body.angle = rng.uniform(-0.2, 0.2);
    body.value = 0.2;
    rasterize_blend(img, body);
    out.phantom.ellipses.push_back(body);

    for (int64_t i = 0; i < cfg.n_ellipses; ++i) {
        Ellipse e;
        const double t = rng.uniform(0.0, 2.0 * kPi);
        const double rr = std::sqrt(rng.uniform());
        e.cx = body.cx + 0.6 * rr * body.ax * std::cos(t);
        e.cy = body.cy + 0.6 * rr * body.ay * std::sin(t);
        e.ax = rng.uniform(0.04, 0.16) * w;
        e.ay = rng.uniform(0.04, 0.16) * h;
        e.angle = rng.uniform(0.0, kPi);
        e.value = rng.uniform(0.1, 0.55);
        rasterize_blend(img, e);
        out.phantom.ellipses.push_back(e);
    }

    out.no_metal = (cfg.metal.count == 0);
    for (int64_t i = 0; i < cfg.metal.count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            Ellipse d;
            const double rad = rng.uniform(cfg.metal.radius_min, cfg.metal.radius_max);
            const double t = rng.uniform(0.0, 2.0 * kPi);
            const double rr = std::sqrt(rng.uniform());
            d.cx = body.cx + 0.7 * rr * body.ax * std::cos(t);
            d.cy = body.cy + 0.7 * rr * body.ay * std::sin(t);
            d.ax = d.ay = rad;
            d.value = rng.uniform(2.5, 4.0);
            // the disk must sit strictly inside the body and off the border
            bool ok = d.cx - rad >= 3.0 && d.cx + rad <= w - 4.0 && d.cy - rad >= 3.0 &&
                      d.cy + rad <= h - 4.0;
            for (int b = 0; b < 16 && ok; ++b) {
                const double phi = 2.0 * kPi * b / 16.0;
                ok = body.contains(d.cx + (rad + 1.0) * std::cos(phi), d.cy + (rad + 1.0) * std::sin(phi));
            }
            if (!ok) continue;
            rasterize_hard(img, d);
            out.phantom.ellipses.push_back(d);
            placed = true;
        }
        if (!placed) throw GenError("generate_phantom: could not place metal disk (seed " + std::to_string(seed) + ")");
    }

    out.metal_mask = Tensor({h, w});
    int64_t area = 0;
    for (int64_t i = 0; i < img.numel(); ++i) {
        if (img[i] < 0.0) img[i] = 0.0;
        if (img[i] >= kMetalThreshold) {
            out.metal_mask[i] = 1.0;
            ++area;
        }
    }
    if (!out.no_metal && area == 0) throw GenError("generate_phantom: empty metal mask");
    out.size_class = classify_metal_area(area, h, w);
    return out;
}

// ---------------------------------------------------------------------------
// Parallel-beam projection and reconstruction
// ---------------------------------------------------------------------------

struct SinogramGeometry {
    int64_t n_angles = 0;  // uniform over [0, pi)
    int64_t n_dets = 0;
    double det_spacing = 1.0;  // pixel units
};

struct Sinogram {
    Tensor data;  // [n_angles, n_dets]
    SinogramGeometry geom;
};

// Binary mask of sinogram bins whose rays intersect metal.
struct MetalTrace {
    Tensor mask;  // [n_angles, n_dets]
};

namespace detail {
inline double bilinear_or_zero(const Tensor& img, double x, double y) {
    const int64_t h = img.extent(0), w = img.extent(1);
    const int64_t x0 = static_cast<int64_t>(std::floor(x)), y0 = static_cast<int64_t>(std::floor(y));
    const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
    double acc = 0.0;
    if (y0 >= 0 && y0 < h) {
        if (x0 >= 0 && x0 < w) acc += (1.0 - fx) * (1.0 - fy) * img.at(y0, x0);
        if (x0 + 1 >= 0 && x0 + 1 < w) acc += fx * (1.0 - fy) * img.at(y0, x0 + 1);
    }
    if (y0 + 1 >= 0 && y0 + 1 < h) {
        if (x0 >= 0 && x0 < w) acc += (1.0 - fx) * fy * img.at(y0 + 1, x0);
        if (x0 + 1 >= 0 && x0 + 1 < w) acc += fx * fy * img.at(y0 + 1, x0 + 1);
    }
    return acc;
}
}  // namespace detail

// Line integrals along parallel rays, bilinear sampling at 0.5 px steps.
// Linear in the image.
inline Sinogram radon(const Tensor& image, int64_t n_angles, int64_t n_dets, double det_spacing = 1.0) {
    if (image.rank() != 2) throw DimError("radon: expected [H,W] image, got " + shape_str(image.shape()));
    const int64_t h = image.extent(0), w = image.extent(1);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    const double step = 0.5;
    const double tmax = 0.5 * std::hypot(static_cast<double>(h), static_cast<double>(w)) + 1.0;
    const int64_t nsteps = static_cast<int64_t>(std::ceil(2.0 * tmax / step));

    Sinogram sino;
    sino.geom = {n_angles, n_dets, det_spacing};
    sino.data = Tensor({n_angles, n_dets});
    for (int64_t a = 0; a < n_angles; ++a) {
        const double theta = kPi * static_cast<double>(a) / static_cast<double>(n_angles);
        const double ct = std::cos(theta), st = std::sin(theta);
        for (int64_t d = 0; d < n_dets; ++d) {
            const double s = (static_cast<double>(d) - (n_dets - 1) / 2.0) * det_spacing;
            const double bx = cx + s * ct, by = cy + s * st;
            double acc = 0.0;
            for (int64_t i = 0; i < nsteps; ++i) {
                const double t = -tmax + (static_cast<double>(i) + 0.5) * step;
                acc += detail::bilinear_or_zero(image, bx - st * t, by + ct * t);
            }
            sino.data.at(a, d) = acc * step;
        }
    }
    return sino;
}

inline MetalTrace metal_trace(const Tensor& metal_mask, const SinogramGeometry& g) {
    Sinogram proj = radon(metal_mask, g.n_angles, g.n_dets, g.det_spacing);
    MetalTrace tr;
    tr.mask = Tensor(proj.data.shape());
    for (int64_t i = 0; i < proj.data.numel(); ++i) tr.mask[i] = proj.data[i] > 1e-9 ? 1.0 : 0.0;
    return tr;
}

// On-trace beam-hardening surrogate p -> p + beta*p^2, plus additive noise
// with variance noise_scale * 1e-4 * exp(min(p, exp_cap)) everywhere (the
// cap is an overflow guard for very long metal paths). Deterministic in the
// seed.
inline Sinogram corrupt_sinogram(const Sinogram& sino, const MetalTrace& trace, double beta,
                                 double noise_scale = 0.0, uint64_t seed = 0, double exp_cap = 25.0) {
    if (beta < 0.0) throw ContractError("corrupt_sinogram: beta must be >= 0");
    require_same_shape(sino.data, trace.mask, "corrupt_sinogram");
    Sinogram out = sino;
    Rng rng(seed ^ 0xc0ffee1234abcdULL);
    for (int64_t i = 0; i < out.data.numel(); ++i) {
        const double p = sino.data[i];
        double v = p;
        if (trace.mask[i] != 0.0) v += beta * p * p;
        if (noise_scale > 0.0) {
            const double var = noise_scale * 1e-4 * std::exp(std::min(p, exp_cap));
            v += std::sqrt(var) * rng.normal();
        }
        out.data[i] = v;
    }
    return out;
}

// Replaces every maximal on-trace run of each angle row by linear
// interpolation between its off-trace neighbors. Idempotent; a run touching
// the detector edge has no anchor and rejects the sample.
inline Sinogram li_complete(const Sinogram& sino, const MetalTrace& trace) {
    require_same_shape(sino.data, trace.mask, "li_complete");
    Sinogram out = sino;
    const int64_t na = sino.data.extent(0), nd = sino.data.extent(1);
    for (int64_t a = 0; a < na; ++a) {
        int64_t d = 0;
        while (d < nd) {
            if (trace.mask.at(a, d) == 0.0) {
                ++d;
                continue;
            }
            int64_t b = d;
            while (b + 1 < nd && trace.mask.at(a, b + 1) != 0.0) ++b;
            if (d == 0 || b == nd - 1)
                throw GenError("li_complete: metal trace touches the detector edge (angle " +
                               std::to_string(a) + ")");
            const double left = out.data.at(a, d - 1), right = out.data.at(a, b + 1);
            const double run = static_cast<double>(b - d + 2);
            for (int64_t j = d; j <= b; ++j)
                out.data.at(a, j) = left + (right - left) * static_cast<double>(j - d + 1) / run;
            d = b + 1;
        }
    }
    return out;
}

// Filtered backprojection: Ram-Lak filtering of each angle row in the
// frequency domain (rows zero-padded to the next power of two >= 2*n_dets to
// avoid circular wrap), then linear-interpolated backprojection scaled by
// pi/n_angles.
inline Tensor fbp(const Sinogram& sino, int64_t h, int64_t w) {
    const int64_t na = sino.geom.n_angles, nd = sino.geom.n_dets;
    const double ds = sino.geom.det_spacing;
    int64_t L = 1;
    while (L < 2 * nd) L <<= 1;

    // band-limited ramp built in the spatial domain, then transformed
    std::vector<std::complex<double>> ramp(static_cast<size_t>(L), {0.0, 0.0});
    ramp[0] = {1.0 / (4.0 * ds * ds), 0.0};
    for (int64_t n = 1; n < L / 2; n += 2) {
        const double v = -1.0 / (kPi * kPi * static_cast<double>(n * n) * ds * ds);
        ramp[static_cast<size_t>(n)] = {v, 0.0};
        ramp[static_cast<size_t>(L - n)] = {v, 0.0};
    }
    findnet::detail::fft_radix2(ramp.data(), L, false);

    Tensor filtered({na, nd});
    std::vector<std::complex<double>> row(static_cast<size_t>(L));
    for (int64_t a = 0; a < na; ++a) {
        std::fill(row.begin(), row.end(), std::complex<double>(0.0, 0.0));
        for (int64_t d = 0; d < nd; ++d) row[static_cast<size_t>(d)] = {sino.data.at(a, d), 0.0};
        findnet::detail::fft_radix2(row.data(), L, false);
        for (int64_t i = 0; i < L; ++i) row[static_cast<size_t>(i)] *= ramp[static_cast<size_t>(i)].real();
        findnet::detail::fft_radix2(row.data(), L, true);
        const double inv = ds / static_cast<double>(L);  // ifft scale and detector step
        for (int64_t d = 0; d < nd; ++d) filtered.at(a, d) = row[static_cast<size_t>(d)].real() * inv;
    }

    Tensor out({h, w});
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    std::vector<double> cths(static_cast<size_t>(na)), sths(static_cast<size_t>(na));
    for (int64_t a = 0; a < na; ++a) {
        const double theta = kPi * static_cast<double>(a) / static_cast<double>(na);
        cths[static_cast<size_t>(a)] = std::cos(theta);
        sths[static_cast<size_t>(a)] = std::sin(theta);
    }
    for (int64_t r = 0; r < h; ++r)
        for (int64_t c = 0; c < w; ++c) {
            const double x = static_cast<double>(c) - cx, y = static_cast<double>(r) - cy;
            double acc = 0.0;
            for (int64_t a = 0; a < na; ++a) {
                const double s = x * cths[static_cast<size_t>(a)] + y * sths[static_cast<size_t>(a)];
                const double pos = s / ds + (nd - 1) / 2.0;
                const int64_t p0 = static_cast<int64_t>(std::floor(pos));
                const double f = pos - static_cast<double>(p0);
                if (p0 >= 0 && p0 < nd) acc += (1.0 - f) * filtered.at(a, p0);
                if (p0 + 1 >= 0 && p0 + 1 < nd) acc += f * filtered.at(a, p0 + 1);
            }
            out.at(r, c) = acc * kPi / static_cast<double>(na);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Sample assembly and dataset layout
// ---------------------------------------------------------------------------

// phantom -> clean sinogram -> X_gt; corrupted sinogram -> Y; LI -> X0.
// Pure function of (seed, config).
inline CTSample make_sample(uint64_t seed, const GenerateConfig& cfg, std::string id = "") {
    PhantomSample ph = generate_phantom(seed, cfg);
    const auto& g = cfg.geometry;
    SinogramGeometry geom{g.n_angles, g.n_dets, g.det_spacing};

    Sinogram clean = radon(ph.phantom.image, geom.n_angles, geom.n_dets, geom.det_spacing);
    MetalTrace trace;
    if (ph.no_metal)
        trace.mask = Tensor(clean.data.shape());
    else
        trace = metal_trace(ph.metal_mask, geom);

    Sinogram corrupt = corrupt_sinogram(clean, trace, cfg.beta, cfg.noise_scale, seed, cfg.noise_exp_cap);
    Tensor x_gt = fbp(clean, g.h, g.w);
    Tensor y = fbp(corrupt, g.h, g.w);
    Tensor x0 = fbp(li_complete(corrupt, trace), g.h, g.w);

    CTSample s;
    s.id = id.empty() ? "s" + std::to_string(seed) : std::move(id);
    s.X_gt = x_gt.reshaped({1, g.h, g.w});
    s.Y = y.reshaped({1, g.h, g.w});
    s.X0 = x0.reshaped({1, g.h, g.w});
    Tensor mask({g.h, g.w});
    for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = 1.0 - ph.metal_mask[i];
    s.I = mask.reshaped({1, g.h, g.w});
    s.size_class = ph.size_class;
    s.no_metal = ph.no_metal;
    return s;
}

struct GenerationReport {
    std::map<std::string, int64_t> class_counts;  // small/medium/large
    std::vector<std::string> failures;            // "seed: reason"
    int64_t written = 0;
    bool short_split = false;
};

// Directory layout: samples/<id>/{Y,Xgt,X0,I}.fnt + meta.json, plus a
// top-level manifest.json listing the splits. Failed seeds are skipped and
// reported; the split is short if fewer samples than requested succeed.
inline GenerationReport write_dataset(const std::filesystem::path& dir, const GenerateConfig& cfg) {
    namespace fs = std::filesystem;
    GenerationReport report;
    const int64_t want = cfg.train + cfg.val + cfg.test;
    std::vector<std::pair<std::string, CTSample>> produced;  // id -> sample
    config::Json samples_meta = config::Json::object();

    int64_t attempts = 0;
    const int64_t max_attempts = want + std::max<int64_t>(16, want / 2);
    while (static_cast<int64_t>(produced.size()) < want && attempts < max_attempts) {
        const uint64_t sample_seed = cfg.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(attempts + 1));
        char idbuf[24];
        std::snprintf(idbuf, sizeof idbuf, "s%06lld", static_cast<long long>(attempts));
        ++attempts;
        try {
            CTSample s = make_sample(sample_seed, cfg, idbuf);
            produced.emplace_back(idbuf, std::move(s));
        } catch (const GenError& e) {
            report.failures.push_back(std::string(idbuf) + ": " + e.what());
        }
    }
    report.short_split = static_cast<int64_t>(produced.size()) < want;

    config::Json manifest;
    manifest["format"] = "findnet-dataset/1";
    manifest["geometry"] = {{"h", cfg.geometry.h},
                            {"w", cfg.geometry.w},
                            {"n_angles", cfg.geometry.n_angles},
                            {"n_dets", cfg.geometry.n_dets},
                            {"det_spacing", cfg.geometry.det_spacing}};
    manifest["corruption"] = {{"beta", cfg.beta}, {"noise_scale", cfg.noise_scale}};
    manifest["seed"] = cfg.seed;

    std::vector<std::string> split_names{"train", "val", "test"};
    std::vector<int64_t> split_sizes{cfg.train, cfg.val, cfg.test};
    config::Json splits = config::Json::object();
    size_t cursor = 0;
    for (size_t si = 0; si < split_names.size(); ++si) {
        std::vector<std::string> ids;
        for (int64_t k = 0; k < split_sizes[si] && cursor < produced.size(); ++k, ++cursor)
            ids.push_back(produced[cursor].first);
        splits[split_names[si]] = ids;
    }
    manifest["splits"] = splits;

    for (auto& [id, s] : produced) {
        const fs::path sdir = dir / "samples" / id;
        fs::create_directories(sdir);
        io::write_fnt_file(sdir / "Y.fnt", s.Y);
        io::write_fnt_file(sdir / "Xgt.fnt", s.X_gt);
        io::write_fnt_file(sdir / "X0.fnt", s.X0);
        io::write_fnt_file(sdir / "I.fnt", s.I);
        config::Json meta;
        meta["id"] = id;
        meta["size_class"] = to_string(s.size_class);
        meta["no_metal"] = s.no_metal;
        io::write_text_file(sdir / "meta.json", meta.dump(2) + "\n");
        report.class_counts[to_string(s.size_class)]++;
        report.written++;
    }
    io::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    return report;
}

inline config::Json read_manifest(const std::filesystem::path& dir) {
    return config::parse_json_text(io::read_text_file(dir / "manifest.json"), "manifest.json");
}

inline std::vector<CTSample> load_split(const std::filesystem::path& dir, const std::string& split) {
    config::Json manifest = read_manifest(dir);
    if (!manifest.contains("splits") || !manifest["splits"].contains(split))
        throw DataError("dataset " + dir.string() + " has no split '" + split + "'");
    std::vector<CTSample> out;
    for (const auto& idj : manifest["splits"][split]) {
        const std::string id = idj.get<std::string>();
        const std::filesystem::path sdir = dir / "samples" / id;
        CTSample s;
        s.id = id;
        try {
            s.Y = io::read_fnt_file(sdir / "Y.fnt");
            s.X_gt = io::read_fnt_file(sdir / "Xgt.fnt");
            s.X0 = io::read_fnt_file(sdir / "X0.fnt");
            s.I = io::read_fnt_file(sdir / "I.fnt");
        } catch (const DataError& e) {
            throw DataError("sample " + id + ": " + e.what());
        }
        config::Json meta = config::parse_json_text(io::read_text_file(sdir / "meta.json"), id + "/meta.json");
        s.size_class = size_class_from_string(meta.value("size_class", "small"));
        s.no_metal = meta.value("no_metal", false);
        // float32 storage can leave near-0/1 mask values; snap to binary
        for (int64_t i = 0; i < s.I.numel(); ++i) s.I[i] = s.I[i] >= 0.5 ? 1.0 : 0.0;
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace ctsim
}  // namespace findnet

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "findnet/ctsim.hpp"
#include "findnet/metrics.hpp"

using namespace findnet;
using namespace findnet::ctsim;

namespace {

GenerateConfig small_config(uint64_t seed = 11) {
    GenerateConfig cfg;
    cfg.seed = seed;
    cfg.geometry = {64, 64, 96, 96, 1.0};
    cfg.n_ellipses = 4;
    cfg.metal = {1, 2.0, 6.0};
    cfg.train = 1;
    cfg.val = 0;
    cfg.test = 0;
    cfg.validate();
    return cfg;
}

Tensor disk_image(int64_t n, double cx, double cy, double r, double value) {
    Tensor img({n, n});
    Ellipse e;
    e.cx = cx;
    e.cy = cy;
    e.ax = e.ay = r;
    e.value = value;
    rasterize_blend(img, e);
    return img;
}

}  // namespace

TEST_CASE("generate_phantom is deterministic in the seed", "[ctsim]") {
    GenerateConfig cfg = small_config();
    PhantomSample a = generate_phantom(42, cfg);
    PhantomSample b = generate_phantom(42, cfg);
    CHECK(bit_equal(a.phantom.image, b.phantom.image));
    CHECK(bit_equal(a.metal_mask, b.metal_mask));
    CHECK(a.size_class == b.size_class);

    PhantomSample c = generate_phantom(43, cfg);
    CHECK(!bit_equal(a.phantom.image, c.phantom.image));
}

TEST_CASE("generate_phantom respects the metal threshold convention", "[ctsim]") {
    GenerateConfig cfg = small_config();
    PhantomSample p = generate_phantom(7, cfg);
    for (int64_t i = 0; i < p.phantom.image.numel(); ++i) {
        CHECK(p.phantom.image[i] >= 0.0);
        CHECK(p.metal_mask[i] == (p.phantom.image[i] >= kMetalThreshold ? 1.0 : 0.0));
    }

    GenerateConfig no_metal = cfg;
    no_metal.metal.count = 0;
    PhantomSample q = generate_phantom(7, no_metal);
    CHECK(q.no_metal);
    CHECK(max_abs(q.metal_mask) == 0.0);
}

TEST_CASE("metal size classes follow the area thresholds", "[ctsim]") {
    CHECK(classify_metal_area(79, 128, 128) == SizeClass::small);
    CHECK(classify_metal_area(80, 128, 128) == SizeClass::medium);
    CHECK(classify_metal_area(299, 128, 128) == SizeClass::medium);
    CHECK(classify_metal_area(300, 128, 128) == SizeClass::large);
    // thresholds scale with pixel count: at 64x64 they are 20 and 75
    CHECK(classify_metal_area(19, 64, 64) == SizeClass::small);
    CHECK(classify_metal_area(20, 64, 64) == SizeClass::medium);
    CHECK(classify_metal_area(75, 64, 64) == SizeClass::large);
}

TEST_CASE("radon of a centered disk matches the analytic chord length", "[ctsim]") {
    const double r = 20.0, mu = 1.0;
    Tensor disk = disk_image(128, 63.5, 63.5, r, mu);
    Sinogram sino = radon(disk, 8, 192);
    for (int64_t a = 0; a < 8; ++a)
        for (double frac : {0.0, 0.3, 0.6, 0.85}) {
            const int64_t d = static_cast<int64_t>(std::llround(frac * r + (192 - 1) / 2.0));
            const double s = static_cast<double>(d) - (192 - 1) / 2.0;
            const double want = 2.0 * mu * std::sqrt(r * r - s * s);
            INFO("angle " << a << " offset " << s);
            CHECK(std::fabs(sino.data.at(a, d) - want) / want < 0.02);
        }
}

TEST_CASE("radon is linear and maps zero to zero", "[ctsim]") {
    Rng rng(601);
    Tensor x = rng.uniform_tensor({32, 32}, 0.0, 1.0);
    Tensor y = rng.uniform_tensor({32, 32}, 0.0, 1.0);
    CHECK(max_abs(radon(Tensor({32, 32}), 16, 48).data) == 0.0);

    const double a = 1.3, b = -0.7;
    Sinogram sz = radon(a * x + b * y, 16, 48);
    Sinogram sx = radon(x, 16, 48);
    Sinogram sy = radon(y, 16, 48);
    CHECK(max_abs_diff(sz.data, a * sx.data + b * sy.data) < 1e-9);
}

TEST_CASE("metal trace covers exactly the rays that intersect metal", "[ctsim]") {
    GenerateConfig cfg = small_config();
    PhantomSample p = generate_phantom(13, cfg);
    SinogramGeometry g{96, 96, 1.0};
    MetalTrace tr = metal_trace(p.metal_mask, g);
    Sinogram proj = radon(p.metal_mask, g.n_angles, g.n_dets, g.det_spacing);
    for (int64_t i = 0; i < proj.data.numel(); ++i)
        CHECK(tr.mask[i] == (proj.data[i] > 1e-9 ? 1.0 : 0.0));
    // nontrivial trace
    CHECK(sum(tr.mask) > 0.0);
    CHECK(sum(tr.mask) < static_cast<double>(tr.mask.numel()));
}

TEST_CASE("corrupt_sinogram no-op and monotonicity", "[ctsim]") {
    Sinogram s;
    s.geom = {2, 6, 1.0};
    s.data = Tensor({2, 6}, {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 0.5, 1.5, 2.5, 3.5, 4.5, 5.5});
    MetalTrace tr;
    tr.mask = Tensor({2, 6});
    for (int64_t d = 2; d < 5; ++d) tr.mask.at(0, d) = 1.0;

    SECTION("beta 0 and zero noise scale is the identity") {
        Sinogram out = corrupt_sinogram(s, tr, 0.0, 0.0, 99);
        CHECK(bit_equal(out.data, s.data));
    }
    SECTION("hardening is strictly monotone on the trace") {
        Sinogram out = corrupt_sinogram(s, tr, 0.4, 0.0, 99);
        CHECK(out.data.at(0, 2) < out.data.at(0, 3));
        CHECK(out.data.at(0, 3) < out.data.at(0, 4));
        // off-trace values untouched with noise off
        CHECK(out.data.at(0, 0) == s.data.at(0, 0));
        CHECK(out.data.at(1, 3) == s.data.at(1, 3));
        // on-trace values strictly increased
        for (int64_t d = 2; d < 5; ++d) CHECK(out.data.at(0, d) > s.data.at(0, d));
    }
    SECTION("deterministic in the seed") {
        Sinogram a = corrupt_sinogram(s, tr, 0.3, 1e-4, 7);
        Sinogram b = corrupt_sinogram(s, tr, 0.3, 1e-4, 7);
        Sinogram c = corrupt_sinogram(s, tr, 0.3, 1e-4, 8);
        CHECK(bit_equal(a.data, b.data));
        CHECK(!bit_equal(a.data, c.data));
    }
}

TEST_CASE("corruption produces streaks well above the noise floor", "[ctsim]") {
    GenerateConfig cfg = small_config();
    PhantomSample p = generate_phantom(21, cfg);
    SinogramGeometry g{96, 96, 1.0};
    Sinogram clean = radon(p.phantom.image, g.n_angles, g.n_dets, g.det_spacing);
    MetalTrace tr = metal_trace(p.metal_mask, g);

    Tensor ref = fbp(clean, 64, 64);
    Tensor with_bh = fbp(corrupt_sinogram(clean, tr, 0.3, cfg.noise_scale, 5), 64, 64);
    Tensor noise_only = fbp(corrupt_sinogram(clean, tr, 0.0, cfg.noise_scale, 5), 64, 64);

    double streak = 0.0, floor = 0.0;
    for (int64_t i = 0; i < ref.numel(); ++i)
        if (p.metal_mask[i] == 0.0) {
            streak = std::max(streak, std::fabs(with_bh[i] - ref[i]));
            floor = std::max(floor, std::fabs(noise_only[i] - ref[i]));
        }
    CHECK(streak > 5.0 * floor);
}

TEST_CASE("li_complete bridges runs linearly", "[ctsim]") {
    Sinogram s;
    s.geom = {1, 5, 1.0};
    s.data = Tensor({1, 5}, {1.0, 2.0, 9.0, 9.0, 5.0});
    MetalTrace tr;
    tr.mask = Tensor({1, 5}, {0.0, 0.0, 1.0, 1.0, 0.0});
    Sinogram out = li_complete(s, tr);
    const double want[] = {1.0, 2.0, 3.0, 4.0, 5.0};
    for (int64_t i = 0; i < 5; ++i) CHECK(out.data[i] == Catch::Approx(want[i]).margin(1e-12));

    SECTION("empty trace is a no-op") {
        MetalTrace none;
        none.mask = Tensor({1, 5});
        CHECK(bit_equal(li_complete(s, none).data, s.data));
    }
    SECTION("constant rows are unchanged") {
        Sinogram flat;
        flat.geom = s.geom;
        flat.data = Tensor::full({1, 5}, 3.25);
        CHECK(max_abs_diff(li_complete(flat, tr).data, flat.data) < 1e-15);
    }
    SECTION("idempotent") {
        Sinogram once = li_complete(s, tr);
        Sinogram twice = li_complete(once, tr);
        CHECK(bit_equal(once.data, twice.data));
    }
    SECTION("edge-touching trace rejects the sample") {
        MetalTrace edge;
        edge.mask = Tensor({1, 5}, {1.0, 0.0, 0.0, 0.0, 0.0});
        CHECK_THROWS_AS(li_complete(s, edge), GenError);
        MetalTrace right;
        right.mask = Tensor({1, 5}, {0.0, 0.0, 0.0, 1.0, 1.0});
        CHECK_THROWS_AS(li_complete(s, right), GenError);
    }
}

TEST_CASE("fbp is linear and recovers a disk", "[ctsim]") {
    const double r = 20.0;
    Tensor disk = disk_image(128, 63.5, 63.5, r, 0.7);

    SECTION("zero sinogram maps to zero image") {
        Sinogram z;
        z.geom = {32, 192, 1.0};
        z.data = Tensor({32, 192});
        CHECK(max_abs(fbp(z, 64, 64)) == 0.0);
    }
    SECTION("linearity") {
        Rng rng(602);
        Sinogram p, q;
        p.geom = q.geom = {16, 96, 1.0};
        p.data = rng.uniform_tensor({16, 96}, 0.0, 2.0);
        q.data = rng.uniform_tensor({16, 96}, 0.0, 2.0);
        Sinogram mix;
        mix.geom = p.geom;
        mix.data = 2.0 * p.data + (-0.5) * q.data;
        Tensor fmix = fbp(mix, 64, 64);
        Tensor fref = 2.0 * fbp(p, 64, 64) + (-0.5) * fbp(q, 64, 64);
        CHECK(max_abs_diff(fmix, fref) < 1e-9);
    }
    SECTION("round trip at 256 angles") {
        Sinogram sino = radon(disk, 256, 192);
        Tensor rec = fbp(sino, 128, 128);
        double num = 0.0, den = 0.0;
        for (int64_t y = 0; y < 128; ++y)
            for (int64_t x = 0; x < 128; ++x) {
                const double d2 = (x - 63.5) * (x - 63.5) + (y - 63.5) * (y - 63.5);
                if (d2 < (r - 4.0) * (r - 4.0)) {  // interior, away from the edge
                    num += (rec.at(y, x) - disk.at(y, x)) * (rec.at(y, x) - disk.at(y, x));
                    den += disk.at(y, x) * disk.at(y, x);
                }
            }
        CHECK(std::sqrt(num / den) < 0.05);
    }
}

TEST_CASE("make_sample bundles a consistent CTSample", "[ctsim]") {
    GenerateConfig cfg = small_config();
    CTSample s = make_sample(31, cfg);
    s.validate();
    // complementarity: I == 1 exactly off metal
    PhantomSample p = generate_phantom(31, cfg);
    for (int64_t i = 0; i < s.I.numel(); ++i) {
        CHECK(s.I[i] == 1.0 - p.metal_mask[i]);
        CHECK(s.I[i] * p.metal_mask[i] == 0.0);
    }
    // determinism
    CTSample s2 = make_sample(31, cfg);
    CHECK(bit_equal(s.Y, s2.Y));
    CHECK(bit_equal(s.X0, s2.X0));
}

TEST_CASE("make_sample without metal degenerates cleanly", "[ctsim]") {
    GenerateConfig cfg = small_config();
    cfg.metal.count = 0;
    CTSample s = make_sample(17, cfg);
    CHECK(s.no_metal);
    CHECK(max_abs(s.I) == 1.0);
    CHECK(sum(s.I) == static_cast<double>(s.I.numel()));
    CHECK(bit_equal(s.X0, s.Y));  // empty trace: LI is a no-op
    CHECK(metrics::mae(s.Y, s.X_gt, s.I) < 0.02);  // noise-only corruption
}

TEST_CASE("LI initialization beats the corrupted image on most seeds", "[ctsim]") {
    GenerateConfig cfg = small_config();
    int better = 0, total = 0;
    for (uint64_t seed = 100; seed < 115; ++seed) {
        CTSample s;
        try {
            s = make_sample(seed, cfg);
        } catch (const GenError&) {
            continue;
        }
        ++total;
        if (metrics::mae(s.Y, s.X_gt, s.I) > metrics::mae(s.X0, s.X_gt, s.I)) ++better;
    }
    REQUIRE(total >= 10);
    CHECK(static_cast<double>(better) >= 0.8 * static_cast<double>(total));
}

TEST_CASE("dataset write / load round trip", "[ctsim]") {
    namespace fs = std::filesystem;
    GenerateConfig cfg = small_config(77);
    cfg.train = 3;
    cfg.val = 1;
    cfg.test = 1;
    const fs::path dir = fs::temp_directory_path() / "findnet_test_dataset";
    fs::remove_all(dir);
    GenerationReport rep = write_dataset(dir, cfg);
    CHECK(rep.written == 5);
    CHECK(!rep.short_split);

    std::vector<CTSample> train = load_split(dir, "train");
    REQUIRE(train.size() == 3);
    train[0].validate();
    CHECK(train[0].Y.shape() == Shape{1, 64, 64});

    // regenerating with the same seed produces byte-identical files
    const fs::path dir2 = fs::temp_directory_path() / "findnet_test_dataset2";
    fs::remove_all(dir2);
    write_dataset(dir2, cfg);
    for (const char* f : {"samples/s000000/Y.fnt", "samples/s000000/X0.fnt", "manifest.json"})
        CHECK(io::read_text_file(dir / f) == io::read_text_file(dir2 / f));

    CHECK_THROWS_AS(load_split(dir, "nope"), DataError);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <sstream>

#include "findnet/checkpoint.hpp"
#include "findnet/config.hpp"
#include "findnet/io.hpp"

using namespace findnet;
namespace fs = std::filesystem;

TEST_CASE("FNT1 record round trip", "[io]") {
    Rng rng(901);
    Tensor t = rng.normal_tensor({2, 3, 4});
    std::ostringstream os(std::ios::binary);
    io::write_fnt(os, t);
    const std::string bytes = os.str();
    CHECK(bytes.substr(0, 4) == "FNT1");
    CHECK(bytes.size() == 4 + 1 + 3 * 4 + 24 * 4);

    std::istringstream is(bytes, std::ios::binary);
    int64_t offset = 0;
    Tensor back = io::read_fnt(is, offset);
    CHECK(offset == static_cast<int64_t>(bytes.size()));
    REQUIRE(back.shape() == t.shape());
    for (int64_t i = 0; i < t.numel(); ++i)
        CHECK(back[i] == static_cast<double>(static_cast<float>(t[i])));  // float32 payload
}

TEST_CASE("FNT1 errors carry the byte offset", "[io]") {
    SECTION("bad magic at offset 0") {
        std::istringstream is("NOPE....", std::ios::binary);
        int64_t offset = 0;
        try {
            io::read_fnt(is, offset);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
        }
    }
    SECTION("truncated payload") {
        std::ostringstream os(std::ios::binary);
        io::write_fnt(os, Tensor::ones({4}));
        std::string bytes = os.str();
        bytes.resize(bytes.size() - 6);  // cut into the payload
        std::istringstream is(bytes, std::ios::binary);
        int64_t offset = 0;
        try {
            io::read_fnt(is, offset);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("offset") != std::string::npos);
        }
    }
}

TEST_CASE("PGM previews honor the window/level mapping", "[io]") {
    const fs::path p = fs::temp_directory_path() / "findnet_test.pgm";
    Tensor img({1, 2, 3});
    const double window = 0.5, level = 0.25;
    img[0] = level;                 // mid-gray
    img[1] = level - window / 2.0;  // floor
    img[2] = level + window / 2.0;  // ceiling
    img[3] = -10.0;                 // clamped low
    img[4] = 10.0;                  // clamped high
    img[5] = level + window / 4.0;  // 3/4 point
    io::write_pgm16(p, img, window, level);

    const std::string bytes = io::read_text_file(p);
    CHECK(bytes.substr(0, 3) == "P5\n");
    const size_t header_end = bytes.find("65535\n") + 6;
    auto pix = [&](int i) {
        const auto hi = static_cast<unsigned char>(bytes[header_end + 2 * i]);
        const auto lo = static_cast<unsigned char>(bytes[header_end + 2 * i + 1]);
        return (static_cast<int>(hi) << 8) | lo;  // big-endian
    };
    CHECK(pix(0) == 32768);  // llround(0.5*65535)
    CHECK(pix(1) == 0);
    CHECK(pix(2) == 65535);
    CHECK(pix(3) == 0);
    CHECK(pix(4) == 65535);
    CHECK(pix(5) == 49151);  // llround(0.75*65535)
    fs::remove(p);
}

TEST_CASE("config parsing rejects unknown keys and names bad values", "[io]") {
    const std::string good = R"({"seed": 3, "splits": {"train": 2, "val": 1, "test": 1}})";
    config::GenerateConfig cfg = config::generate_config_from_json(config::parse_json_text(good, "t"));
    CHECK(cfg.seed == 3);
    CHECK(cfg.train == 2);

    try {
        config::generate_config_from_json(
            config::parse_json_text(R"({"seed": 3, "metal": {"count": 1, "radius": 4}})", "t"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("metal.radius") != std::string::npos);
    }

    try {
        config::generate_config_from_json(
            config::parse_json_text(R"({"seed": 3, "metal": {"count": -2}})", "t"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("metal.count") != std::string::npos);
    }

    CHECK_THROWS_AS(config::parse_json_text("{nope", "t"), ConfigError);
}

TEST_CASE("configs round trip through serialization", "[io]") {
    const std::string raw = R"({
        "seed": 99,
        "geometry": {"h": 64, "w": 64, "n_angles": 96, "n_dets": 96},
        "phantom": {"n_ellipses": 5},
        "metal": {"count": 2, "radius_range": [2.0, 5.0]},
        "corruption": {"beta": 0.25},
        "splits": {"train": 4, "val": 2, "test": 2}
    })");
    config::GenerateConfig c1 = config::generate_config_from_json(config::parse_json_text(raw, "t"));
    config::Json j1 = config::to_json(c1);
    config::GenerateConfig c2 = config::generate_config_from_json(j1);
    CHECK(config::to_json(c2) == j1);

    const std::string traw = R"({
        "seed": 1,
        "data_dir": "data",
        "out_dir": "out",
        "model": {"stages": 3, "width": 8},
        "optimizer": {"lr": 2e-4},
        "train": {"epochs": 5}
    })");
    config::TrainConfig t1 = config::train_config_from_json(config::parse_json_text(traw, "t"));
    CHECK(t1.loss.omega.size() == 4);  // defaults resolved for S=3
    config::Json tj = config::to_json(t1);
    config::TrainConfig t2 = config::train_config_from_json(tj);
    CHECK(config::to_json(t2) == tj);

    try {
        config::train_config_from_json(config::parse_json_text(
            R"({"seed": 1, "data_dir": "d", "model": {"stages": 2}, "loss": {"omega": [1.0]}})", "t"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("omega") != std::string::npos);
    }
}

TEST_CASE("checkpoint save / load round trip", "[io]") {
    const fs::path dir = fs::temp_directory_path() / "findnet_ckpt_test";
    fs::remove_all(dir);
    Rng rng(902);
    model::ModelConfig mc;
    mc.stages = 2;
    mc.n_kernels = 2;
    mc.ksize = 3;
    mc.depth = 1;
    mc.width = 4;
    mc.use_gaussian = false;
    model::FindNetParams params(mc, rng);

    checkpoint::CheckpointMeta meta;
    meta.model = mc;
    meta.trained_steps = 123;
    meta.h = 32;
    meta.w = 32;
    checkpoint::save_checkpoint(dir, params, meta);

    checkpoint::LoadedCheckpoint loaded = checkpoint::load_checkpoint(dir);
    CHECK(loaded.meta.trained_steps == 123);
    CHECK(loaded.meta.h == 32);
    CHECK(loaded.meta.model.use_gaussian == false);
    CHECK(loaded.meta.model.stages == 2);

    // values match to float32 precision, names and order preserved
    std::vector<std::pair<std::string, Tensor*>> a, b;
    params.visit([&](const std::string& n, Tensor& t) { a.emplace_back(n, &t); });
    loaded.params.visit([&](const std::string& n, Tensor& t) { b.emplace_back(n, &t); });
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        for (int64_t j = 0; j < a[i].second->numel(); ++j)
            CHECK((*b[i].second)[j] == static_cast<double>(static_cast<float>((*a[i].second)[j])));
    }
    fs::remove_all(dir);
}

TEST_CASE("parameter names use dotted paths", "[io]") {
    Rng rng(903);
    model::ModelConfig mc;
    mc.stages = 3;
    mc.n_kernels = 2;
    mc.ksize = 3;
    mc.depth = 1;
    mc.width = 4;
    model::FindNetParams params(mc, rng);
    bool found_sigma = false, found_kernels = false;
    params.visit([&](const std::string& n, Tensor&) {
        if (n == "stage3.mnet.block1.op1.g2g.fu.sigma") found_sigma = true;
        if (n == "dictionary.kernels") found_kernels = true;
    });
    CHECK(found_sigma);
    CHECK(found_kernels);
}

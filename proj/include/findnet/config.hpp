#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "findnet/model.hpp"
#include "findnet/tensor.hpp"
#include "findnet/training.hpp"

namespace findnet {
namespace config {

using Json = nlohmann::ordered_json;

// Strict object view: every key must be consumed by a getter, and `done()`
// rejects anything left over, naming the full key path.
class StrictObj {
public:
    StrictObj(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("config error at " + path_ + ": expected an object");
    }

    bool has(const char* key) const { return j_.contains(key); }

    template <typename T>
    T get(const char* key, std::optional<T> def = std::nullopt) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            if (def) return *def;
            throw ConfigError("config error at " + at(key) + ": missing required key");
        }
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError("config error at " + at(key) + ": wrong type");
        }
    }

    Json raw(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? j_.at(key) : Json();
    }

    StrictObj child(const char* key) {
        seen_.insert(key);
        if (!j_.contains(key)) return StrictObj(empty_obj(), at(key));
        return StrictObj(j_.at(key), at(key));
    }

    void done() const {
        for (const auto& item : j_.items())
            if (!seen_.count(item.key()))
                throw ConfigError("config error at " + at(item.key().c_str()) + ": unknown key");
    }

    std::string at(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

private:
    static const Json& empty_obj() {
        static const Json e = Json::object();
        return e;
    }
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& key, const std::string& msg) {
    if (!ok) throw ConfigError("config error at " + key + ": " + msg);
}

// ---------------------------------------------------------------------------
// Generation config
// ---------------------------------------------------------------------------

struct GeometryConfig {
    int64_t h = 128, w = 128;
    int64_t n_angles = 192, n_dets = 192;
    double det_spacing = 1.0;
};

struct MetalSpec {
    int64_t count = 1;
    double radius_min = 3.0, radius_max = 12.0;
};

struct GenerateConfig {
    uint64_t seed = 0;
    std::string out_dir;  // optional; CLI --out overrides
    GeometryConfig geometry;
    int64_t n_ellipses = 6;
    MetalSpec metal;
    double beta = 0.3;          // beam-hardening strength
    double noise_scale = 1e-4;  // noise variance = noise_scale * 1e-4 * exp(p)
    double noise_exp_cap = 25.0;
    int64_t train = 16, val = 4, test = 4;

    void validate() const {
        require(geometry.h == geometry.w, "geometry.h", "image must be square");
        require(is_pow2(geometry.h), "geometry.h", "extent must be a power of two");
        require(geometry.n_angles >= 1, "geometry.n_angles", "must be >= 1");
        const double diag = std::hypot(static_cast<double>(geometry.h), static_cast<double>(geometry.w));
        require(static_cast<double>(geometry.n_dets) >= diag, "geometry.n_dets",
                "must cover the image diagonal (" + std::to_string(static_cast<int64_t>(diag) + 1) + ")");
        require(geometry.det_spacing > 0.0, "geometry.det_spacing", "must be positive");
        require(n_ellipses >= 0, "phantom.n_ellipses", "must be >= 0");
        require(metal.count >= 0, "metal.count", "must be >= 0");
        require(metal.radius_min > 0.0 && metal.radius_max >= metal.radius_min, "metal.radius_range",
                "need 0 < min <= max");
        require(beta >= 0.0, "corruption.beta", "must be >= 0");
        require(noise_scale >= 0.0, "corruption.noise_scale", "must be >= 0");
        require(train >= 1, "splits.train", "must be >= 1");
        require(val >= 0, "splits.val", "must be >= 0");
        require(test >= 0, "splits.test", "must be >= 0");
    }
};

inline GenerateConfig generate_config_from_json(const Json& j) {
    GenerateConfig c;
    StrictObj o(j, "");
    c.seed = o.get<uint64_t>("seed");
    c.out_dir = o.get<std::string>("out_dir", std::string());
    {
        StrictObj g = o.child("geometry");
        c.geometry.h = g.get<int64_t>("h", c.geometry.h);
        c.geometry.w = g.get<int64_t>("w", c.geometry.w);
        c.geometry.n_angles = g.get<int64_t>("n_angles", c.geometry.n_angles);
        c.geometry.n_dets = g.get<int64_t>("n_dets", c.geometry.n_dets);
        c.geometry.det_spacing = g.get<double>("det_spacing", c.geometry.det_spacing);
        g.done();
    }
    {
        StrictObj p = o.child("phantom");
        c.n_ellipses = p.get<int64_t>("n_ellipses", c.n_ellipses);
        p.done();
    }
    {
        StrictObj m = o.child("metal");
        c.metal.count = m.get<int64_t>("count", c.metal.count);
        std::vector<double> rr = m.get<std::vector<double>>(
            "radius_range", std::vector<double>{c.metal.radius_min, c.metal.radius_max});
        require(rr.size() == 2, m.at("radius_range"), "expected [min, max]");
        c.metal.radius_min = rr[0];
        c.metal.radius_max = rr[1];
        m.done();
    }
    {
        StrictObj cr = o.child("corruption");
        c.beta = cr.get<double>("beta", c.beta);
        c.noise_scale = cr.get<double>("noise_scale", c.noise_scale);
        c.noise_exp_cap = cr.get<double>("noise_exp_cap", c.noise_exp_cap);
        cr.done();
    }
    {
        StrictObj s = o.child("splits");
        c.train = s.get<int64_t>("train", c.train);
        c.val = s.get<int64_t>("val", c.val);
        c.test = s.get<int64_t>("test", c.test);
        s.done();
    }
    o.done();
    c.validate();
    return c;
}

inline Json to_json(const GenerateConfig& c) {
    Json j;
    j["seed"] = c.seed;
    j["out_dir"] = c.out_dir;
    j["geometry"] = {{"h", c.geometry.h},
                     {"w", c.geometry.w},
                     {"n_angles", c.geometry.n_angles},
                     {"n_dets", c.geometry.n_dets},
                     {"det_spacing", c.geometry.det_spacing}};
    j["phantom"] = {{"n_ellipses", c.n_ellipses}};
    j["metal"] = {{"count", c.metal.count}, {"radius_range", {c.metal.radius_min, c.metal.radius_max}}};
    j["corruption"] = {{"beta", c.beta}, {"noise_scale", c.noise_scale}, {"noise_exp_cap", c.noise_exp_cap}};
    j["splits"] = {{"train", c.train}, {"val", c.val}, {"test", c.test}};
    return j;
}

// ---------------------------------------------------------------------------
// Training config
// ---------------------------------------------------------------------------

struct TrainConfig {
    uint64_t seed = 0;
    std::string data_dir;
    std::string out_dir;
    model::ModelConfig model;
    training::LossWeights loss;  // omega empty = defaults for S
    training::OptimizerConfig optimizer;
    training::ScheduleConfig schedule;  // total_steps 0 = derived
    int64_t epochs = 50;
    int64_t patience = 10;
    double min_delta = 1e-6;

    void validate() const {
        require(!data_dir.empty(), "data_dir", "missing dataset directory");
        require(model.stages >= 1, "model.stages", "must be >= 1");
        require(model.n_kernels >= 1, "model.n_kernels", "must be >= 1");
        require(model.ksize >= 1 && model.ksize % 2 == 1, "model.ksize", "must be odd and >= 1");
        require(model.depth >= 1, "model.depth", "must be >= 1");
        require(model.width >= 2, "model.width", "must be >= 2");
        require(model.m0_mode == "resnet" || model.m0_mode == "zero", "model.m0_mode",
                "must be 'resnet' or 'zero'");
        require(optimizer.lr > 0.0, "optimizer.lr", "must be positive");
        require(epochs >= 1, "train.epochs", "must be >= 1");
        require(patience >= 1, "train.patience", "must be >= 1");
    }
};

inline TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    StrictObj o(j, "");
    c.seed = o.get<uint64_t>("seed");
    c.data_dir = o.get<std::string>("data_dir", std::string());
    c.out_dir = o.get<std::string>("out_dir", std::string());
    {
        StrictObj m = o.child("model");
        c.model.stages = m.get<int64_t>("stages", c.model.stages);
        c.model.n_kernels = m.get<int64_t>("n_kernels", c.model.n_kernels);
        c.model.ksize = m.get<int64_t>("ksize", c.model.ksize);
        c.model.depth = m.get<int64_t>("depth", c.model.depth);
        c.model.width = m.get<int64_t>("width", c.model.width);
        c.model.use_gaussian = m.get<bool>("use_gaussian", c.model.use_gaussian);
        c.model.alpha_zero = m.get<bool>("alpha_zero", c.model.alpha_zero);
        c.model.m0_mode = m.get<std::string>("m0_mode", c.model.m0_mode);
        m.done();
    }
    {
        StrictObj l = o.child("loss");
        c.loss.omega = l.get<std::vector<double>>("omega", std::vector<double>{});
        c.loss.gamma1 = l.get<double>("gamma1", c.loss.gamma1);
        c.loss.gamma2 = l.get<double>("gamma2", c.loss.gamma2);
        l.done();
    }
    if (c.loss.omega.empty()) c.loss.omega = training::LossWeights::defaults(c.model.stages).omega;
    {
        StrictObj op = o.child("optimizer");
        c.optimizer.lr = op.get<double>("lr", c.optimizer.lr);
        c.optimizer.weight_decay = op.get<double>("weight_decay", c.optimizer.weight_decay);
        c.optimizer.beta1 = op.get<double>("beta1", c.optimizer.beta1);
        c.optimizer.beta2 = op.get<double>("beta2", c.optimizer.beta2);
        c.optimizer.eps = op.get<double>("eps", c.optimizer.eps);
        c.optimizer.clip_norm = op.get<double>("clip_norm", c.optimizer.clip_norm);
        op.done();
    }
    {
        StrictObj s = o.child("schedule");
        c.schedule.warmup_steps = s.get<int64_t>("warmup_steps", c.schedule.warmup_steps);
        c.schedule.total_steps = s.get<int64_t>("total_steps", c.schedule.total_steps);
        c.schedule.min_lr_fraction = s.get<double>("min_lr_fraction", c.schedule.min_lr_fraction);
        s.done();
    }
    {
        StrictObj t = o.child("train");
        c.epochs = t.get<int64_t>("epochs", c.epochs);
        c.patience = t.get<int64_t>("patience", c.patience);
        c.min_delta = t.get<double>("min_delta", c.min_delta);
        t.done();
    }
    o.done();
    c.validate();
    c.loss.validate(c.model.stages);
    return c;
}

inline Json to_json(const TrainConfig& c) {
    Json j;
    j["seed"] = c.seed;
    j["data_dir"] = c.data_dir;
    j["out_dir"] = c.out_dir;
    j["model"] = {{"stages", c.model.stages},       {"n_kernels", c.model.n_kernels},
                  {"ksize", c.model.ksize},         {"depth", c.model.depth},
                  {"width", c.model.width},         {"use_gaussian", c.model.use_gaussian},
                  {"alpha_zero", c.model.alpha_zero}, {"m0_mode", c.model.m0_mode}};
    j["loss"] = {{"omega", c.loss.omega}, {"gamma1", c.loss.gamma1}, {"gamma2", c.loss.gamma2}};
    j["optimizer"] = {{"lr", c.optimizer.lr},
                      {"weight_decay", c.optimizer.weight_decay},
                      {"beta1", c.optimizer.beta1},
                      {"beta2", c.optimizer.beta2},
                      {"eps", c.optimizer.eps},
                      {"clip_norm", c.optimizer.clip_norm}};
    j["schedule"] = {{"warmup_steps", c.schedule.warmup_steps},
                     {"total_steps", c.schedule.total_steps},
                     {"min_lr_fraction", c.schedule.min_lr_fraction}};
    j["train"] = {{"epochs", c.epochs}, {"patience", c.patience}, {"min_delta", c.min_delta}};
    return j;
}

inline Json parse_json_text(const std::string& text, const std::string& what) {
    Json j = Json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError(what + ": invalid JSON");
    return j;
}

}  // namespace config
}  // namespace findnet

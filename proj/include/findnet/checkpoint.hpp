#pragma once

#include <filesystem>
#include <fstream>

#include "findnet/config.hpp"
#include "findnet/io.hpp"
#include "findnet/model.hpp"
#include "findnet/training.hpp"

namespace findnet {
namespace checkpoint {

namespace fs = std::filesystem;
using config::Json;

// ---------------------------------------------------------------------------
// Model checkpoints: params.fnt (a manifest-ordered sequence of FNT1
// records) plus manifest.json with the hyperparameters and tensor index.
// ---------------------------------------------------------------------------

struct CheckpointMeta {
    model::ModelConfig model;
    int64_t trained_steps = 0;
    int64_t h = 0, w = 0;  // training geometry
};

inline Json model_config_json(const model::ModelConfig& m) {
    return Json{{"stages", m.stages},       {"n_kernels", m.n_kernels}, {"ksize", m.ksize},
                {"depth", m.depth},         {"width", m.width},         {"use_gaussian", m.use_gaussian},
                {"alpha_zero", m.alpha_zero}, {"m0_mode", m.m0_mode}};
}

inline model::ModelConfig model_config_from_json(const Json& j) {
    config::StrictObj o(j, "model");
    model::ModelConfig m;
    m.stages = o.get<int64_t>("stages");
    m.n_kernels = o.get<int64_t>("n_kernels");
    m.ksize = o.get<int64_t>("ksize");
    m.depth = o.get<int64_t>("depth");
    m.width = o.get<int64_t>("width");
    m.use_gaussian = o.get<bool>("use_gaussian");
    m.alpha_zero = o.get<bool>("alpha_zero", false);
    m.m0_mode = o.get<std::string>("m0_mode", "resnet");
    o.done();
    return m;
}

inline void save_checkpoint(const fs::path& dir, model::FindNetParams& params, const CheckpointMeta& meta) {
    fs::create_directories(dir);
    Json manifest;
    manifest["format"] = "findnet-checkpoint/1";
    manifest["model"] = model_config_json(params.cfg);
    Json alphas = Json::array();
    for (const auto& s : params.stages) alphas.push_back(s.alpha_in);
    manifest["alpha"] = alphas;
    manifest["geometry"] = {{"h", meta.h}, {"w", meta.w}};
    manifest["trained_steps"] = meta.trained_steps;

    Json tensors = Json::array();
    params.visit([&](const std::string& name, Tensor& t) {
        tensors.push_back(Json{{"name", name}, {"shape", t.shape()}});
    });
    manifest["tensors"] = tensors;

    io::atomic_write(dir / "params.fnt", [&](std::ostream& os) {
        params.visit([&](const std::string&, Tensor& t) { io::write_fnt(os, t); });
    });
    io::write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

struct LoadedCheckpoint {
    model::FindNetParams params;
    CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const fs::path& dir) {
    Json manifest = config::parse_json_text(io::read_text_file(dir / "manifest.json"), "checkpoint manifest");
    if (manifest.value("format", "") != "findnet-checkpoint/1")
        throw DataError("checkpoint " + dir.string() + ": unknown format");
    LoadedCheckpoint out;
    out.meta.model = model_config_from_json(manifest.at("model"));
    out.meta.trained_steps = manifest.value("trained_steps", 0);
    if (manifest.contains("geometry")) {
        out.meta.h = manifest["geometry"].value("h", 0);
        out.meta.w = manifest["geometry"].value("w", 0);
    }

    Rng rng(0);
    out.params = model::FindNetParams(out.meta.model, rng);

    std::ifstream is(dir / "params.fnt", std::ios::binary);
    if (!is) throw DataError("cannot open " + (dir / "params.fnt").string());
    int64_t offset = 0;
    size_t idx = 0;
    const Json& tensors = manifest.at("tensors");
    out.params.visit([&](const std::string& name, Tensor& t) {
        if (idx >= tensors.size()) throw DataError("checkpoint manifest lists too few tensors");
        const std::string want = tensors[idx].at("name").get<std::string>();
        if (want != name)
            throw DataError("checkpoint tensor order mismatch: expected " + name + ", manifest has " + want);
        Tensor loaded = io::read_fnt(is, offset);
        if (loaded.shape() != t.shape())
            throw DataError("checkpoint tensor " + name + " has shape " + shape_str(loaded.shape()) +
                            ", model expects " + shape_str(t.shape()));
        t = std::move(loaded);
        ++idx;
    });
    if (idx != tensors.size()) throw DataError("checkpoint manifest lists extra tensors");
    return out;
}

// ---------------------------------------------------------------------------
// Training resume state. Values are kept in full double precision (the
// published FNT1 format is float32, which would perturb a resumed run), and
// the optimizer moments and early-stopping bookkeeping ride along so a
// resumed fit reproduces the uninterrupted history tail exactly.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_f64_block(std::ostream& os, const Tensor& t) {
    const uint64_t n = static_cast<uint64_t>(t.numel());
    os.write(reinterpret_cast<const char*>(&n), 8);
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(n * 8));
}

inline void read_f64_block(std::istream& is, Tensor& t) {
    uint64_t n = 0;
    is.read(reinterpret_cast<char*>(&n), 8);
    if (!is || n != static_cast<uint64_t>(t.numel()))
        throw DataError("train state: tensor size mismatch (" + std::to_string(n) + " vs " +
                        std::to_string(t.numel()) + ")");
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(n * 8));
    if (!is) throw DataError("train state: truncated tensor payload");
}

inline void visit_state_tensors(model::FindNetParams& params, training::FitCarry& carry,
                                const std::function<void(Tensor&)>& fn) {
    params.visit([&](const std::string&, Tensor& t) { fn(t); });
    carry.best.visit([&](const std::string&, Tensor& t) { fn(t); });
    for (Tensor& t : carry.opt.m) fn(t);
    for (Tensor& t : carry.opt.v) fn(t);
}

}  // namespace detail

inline void save_train_state(const fs::path& dir, model::FindNetParams& params, training::FitCarry& carry) {
    fs::create_directories(dir);
    Json j;
    j["format"] = "findnet-trainstate/1";
    j["model"] = model_config_json(params.cfg);
    j["next_epoch"] = carry.next_epoch;
    j["steps_done"] = carry.steps_done;
    j["best_val"] = carry.best_val;
    j["best_epoch"] = carry.best_epoch;
    j["bad_epochs"] = carry.bad_epochs;
    j["opt_step_count"] = carry.opt.step_count;
    j["opt_rejected"] = carry.opt.rejected_steps;
    Json rows = Json::array();
    for (const auto& r : carry.history.rows)
        rows.push_back(Json{{"epoch", r.epoch},
                            {"step", r.step},
                            {"train_loss", r.train_loss},
                            {"val_loss", r.val_loss},
                            {"lr", r.lr}});
    j["history"] = rows;
    j["step_losses"] = carry.history.step_losses;
    io::write_text_file(dir / "state.json", j.dump(2) + "\n");
    io::atomic_write(dir / "state.f64", [&](std::ostream& os) {
        os.write("FNS8", 4);
        detail::visit_state_tensors(params, carry, [&](Tensor& t) { detail::write_f64_block(os, t); });
    });
}

// Rebuilds params and carry from a saved state; optimizer config comes from
// the caller (it is part of the training config, not the state).
inline void load_train_state(const fs::path& dir, model::FindNetParams& params, training::FitCarry& carry,
                             const training::OptimizerConfig& opt_cfg) {
    Json j = config::parse_json_text(io::read_text_file(dir / "state.json"), "train state");
    if (j.value("format", "") != "findnet-trainstate/1") throw DataError("train state: unknown format");
    model::ModelConfig mc = model_config_from_json(j.at("model"));
    Rng rng(0);
    params = model::FindNetParams(mc, rng);
    carry.best = model::FindNetParams(mc, rng);
    carry.opt = training::OptimizerState(opt_cfg, params.parameters());
    carry.next_epoch = j.at("next_epoch").get<int64_t>();
    carry.steps_done = j.at("steps_done").get<int64_t>();
    carry.best_val = j.at("best_val").get<double>();
    carry.best_epoch = j.at("best_epoch").get<int64_t>();
    carry.bad_epochs = j.at("bad_epochs").get<int64_t>();
    carry.opt.step_count = j.at("opt_step_count").get<int64_t>();
    carry.opt.rejected_steps = j.at("opt_rejected").get<int64_t>();
    carry.history.rows.clear();
    for (const auto& r : j.at("history")) {
        training::HistoryRow row;
        row.epoch = r.at("epoch").get<int64_t>();
        row.step = r.at("step").get<int64_t>();
        row.train_loss = r.at("train_loss").get<double>();
        row.val_loss = r.at("val_loss").get<double>();
        row.lr = r.at("lr").get<double>();
        carry.history.rows.push_back(row);
    }
    carry.history.step_losses = j.at("step_losses").get<std::vector<double>>();

    std::ifstream is(dir / "state.f64", std::ios::binary);
    if (!is) throw DataError("cannot open " + (dir / "state.f64").string());
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, "FNS8", 4) != 0) throw DataError("train state: bad magic");
    detail::visit_state_tensors(params, carry, [&](Tensor& t) { detail::read_f64_block(is, t); });
}

// History CSV: columns epoch,step,train_loss,val_loss,lr. %.17g keeps the
// file byte-stable across identical runs.
inline std::string history_csv(const training::History& h) {
    std::ostringstream os;
    os << "epoch,step,train_loss,val_loss,lr\n";
    char buf[160];
    for (const auto& r : h.rows) {
        std::snprintf(buf, sizeof buf, "%lld,%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(r.epoch),
                      static_cast<long long>(r.step), r.train_loss, r.val_loss, r.lr);
        os << buf;
    }
    return os.str();
}

}  // namespace checkpoint
}  // namespace findnet

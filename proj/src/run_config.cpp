// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tcdnet/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "tcdnet/errors.hpp"

namespace tcdnet {

namespace {

using Json = nlohmann::ordered_json;

// Reads known keys from one object and rejects the rest on finish().
class Section {
public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + " must be an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const Json& child(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    template <class T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        try {
            if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
                if (!it->is_number_unsigned()) throw ConfigError("");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!it->is_number()) throw ConfigError("");
            }
            out = it->template get<T>();
        } catch (const std::exception&) {
            throw ConfigError(where() + "." + key + ": unexpected value " + it->dump());
        }
    }

    std::string path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.contains(it.key())) throw ConfigError("unknown config key '" + path(it.key()) + "'");
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_model(Section s, std::string& preset, ModelConfig& c) {
    s.get("preset", preset);
    c = ModelConfig::preset(preset);
    s.get("patch_size", c.patch_size);
    s.get("embed_dim", c.embed_dim);
    s.get("depth", c.depth);
    s.get("heads", c.heads);
    s.get("mlp_ratio", c.mlp_ratio);
    s.get("eba_bottleneck_ratio", c.eba_bottleneck_ratio);
    s.get("ape_grid", c.ape_grid);
    std::string eba(to_string(c.eba_topology)), pos(to_string(c.pos_encoding));
    s.get("eba_topology", eba);
    s.get("pos_encoding", pos);
    c.eba_topology = parse_eba_topology(eba);
    c.pos_encoding = parse_pos_encoding(pos);
    s.finish();
}

Json write_model(const std::string& preset, const ModelConfig& c) {
    return Json{{"preset", preset},
                {"patch_size", c.patch_size},
                {"embed_dim", c.embed_dim},
                {"depth", c.depth},
                {"heads", c.heads},
                {"mlp_ratio", c.mlp_ratio},
                {"eba_bottleneck_ratio", c.eba_bottleneck_ratio},
                {"ape_grid", c.ape_grid},
                {"eba_topology", to_string(c.eba_topology)},
                {"pos_encoding", to_string(c.pos_encoding)}};
}

void read_data(Section s, DataConfig& d) {
    std::string mode(to_string(d.mode));
    s.get("mode", mode);
    d.mode = parse_noise_mode(mode);
    s.get("count", d.count);
    s.get("height", d.height);
    s.get("width", d.width);
    s.get("crop", d.crop);
    s.get("sigma_min", d.sigma_min);
    s.get("sigma_max", d.sigma_max);
    s.get("val_sigma", d.val_sigma);
    s.get("val_fraction", d.val_fraction);
    s.get("repetition", d.repetition);
    s.finish();
}

Json write_data(const DataConfig& d) {
    return Json{{"mode", to_string(d.mode)}, {"count", d.count},         {"height", d.height},
                {"width", d.width},          {"crop", d.crop},           {"sigma_min", d.sigma_min},
                {"sigma_max", d.sigma_max},  {"val_sigma", d.val_sigma}, {"val_fraction", d.val_fraction},
                {"repetition", d.repetition}};
}

void read_stage(Section s, StagePlan& p) {
    s.get("epochs", p.epochs);
    s.get("steps", p.steps);
    s.get("lr", p.lr);
    s.get("lr_min", p.lr_min);
    s.get("batch", p.batch);
    s.get("lambda_noise", p.weights.noise);
    s.get("lambda_ortho", p.weights.ortho);
    s.get("lambda_teacher", p.weights.teacher);
    s.get("teacher", p.teacher_enabled);
    s.get("clip_norm", p.clip_norm);
    s.get("weight_decay", p.adamw.weight_decay);
    s.get("beta1", p.adamw.beta1);
    s.get("beta2", p.adamw.beta2);
    s.get("adam_eps", p.adamw.eps);
    s.finish();
}

Json write_stage(const StagePlan& p) {
    return Json{{"epochs", p.epochs},
                {"steps", p.steps},
                {"lr", p.lr},
                {"lr_min", p.lr_min},
                {"batch", p.batch},
                {"lambda_noise", p.weights.noise},
                {"lambda_ortho", p.weights.ortho},
                {"lambda_teacher", p.weights.teacher},
                {"teacher", p.teacher_enabled},
                {"clip_norm", p.clip_norm},
                {"weight_decay", p.adamw.weight_decay},
                {"beta1", p.adamw.beta1},
                {"beta2", p.adamw.beta2},
                {"adam_eps", p.adamw.eps}};
}

}  // namespace

RunConfig RunConfig::parse(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig rc;
    Section root(j, "");
    root.get("seed", rc.seed);
    if (root.has("model")) read_model(Section(root.child("model"), "model"), rc.preset, rc.model);
    if (root.has("data")) read_data(Section(root.child("data"), "data"), rc.data);
    if (root.has("train")) {
        Section t(root.child("train"), "train");
        t.get("scale", rc.scale);
        t.get("faithful", rc.faithful);
        if (t.has("stage1")) read_stage(Section(t.child("stage1"), "train.stage1"), rc.stage1);
        if (t.has("stage2")) read_stage(Section(t.child("stage2"), "train.stage2"), rc.stage2);
        t.finish();
    }
    if (root.has("tiler")) {
        Section t(root.child("tiler"), "tiler");
        t.get("tile", rc.tiler.tile);
        t.get("stride", rc.tiler.stride);
        t.get("eps", rc.tiler.eps);
        t.finish();
    }
    root.finish();
    rc.validate();
    return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str());
}

std::string RunConfig::dump() const {
    Json j{{"seed", seed},
           {"model", write_model(preset, model)},
           {"data", write_data(data)},
           {"train",
            Json{{"scale", scale},
                 {"faithful", faithful},
                 {"stage1", write_stage(stage1)},
                 {"stage2", write_stage(stage2)}}},
           {"tiler", Json{{"tile", tiler.tile}, {"stride", tiler.stride}, {"eps", tiler.eps}}}};
    return j.dump(2) + "\n";
}

void RunConfig::validate() const {
    model.validate();
    data.validate();
    if (!(scale > 0.0)) throw ConfigError("train.scale must be positive");
    stage1.validate();
    stage2.validate();
    tiler.validate(model.patch_size);
    if (data.crop % model.patch_size != 0) {
        throw ConfigError("data.crop " + std::to_string(data.crop) + " is not divisible by patch size " +
                          std::to_string(model.patch_size));
    }
    if (data.height % model.patch_size != 0 || data.width % model.patch_size != 0) {
        throw ConfigError("data.height and data.width must be divisible by the patch size");
    }
}

StagePlan RunConfig::plan(int stage) const {
    if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
    StagePlan p = (stage == 1 ? stage1 : stage2).scaled(scale);
    p.stage = stage;
    if (faithful) p.clip_norm = 0.0;
    return p;
}

}  // namespace tcdnet

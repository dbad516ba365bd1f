#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddrm/audio.hpp"
#include "ddrm/common.hpp"
#include "ddrm/degradation.hpp"
#include "ddrm/protocol.hpp"
#include "ddrm/schedule.hpp"
#include "ddrm/stft.hpp"
#include "ddrm/variance.hpp"

namespace ddrm {

using nlohmann::json;

// Strict JSON walker: every key must be known, every value well typed, and
// errors carry the path into the document.
class JsonCursor {
public:
    JsonCursor(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

    const json& raw() const { return *j_; }
    const std::string& path() const { return path_; }

    void require_object(const std::set<std::string>& allowed) const {
        if (!j_->is_object()) throw ConfigError(path_ + ": expected an object");
        for (auto it = j_->begin(); it != j_->end(); ++it)
            if (!allowed.count(it.key()))
                throw ConfigError("unknown config key: " + path_ + "/" + it.key());
    }
    bool has(const std::string& key) const { return j_->contains(key); }
    JsonCursor child(const std::string& key) const {
        return JsonCursor(j_->at(key), path_ + "/" + key);
    }

    double number(const std::string& key, std::optional<double> fallback = {}) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError(path_ + "/" + key + ": required number missing");
        }
        const auto& v = j_->at(key);
        if (!v.is_number()) throw ConfigError(path_ + "/" + key + ": expected a number");
        return v.get<double>();
    }
    std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = {}) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError(path_ + "/" + key + ": required integer missing");
        }
        const auto& v = j_->at(key);
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError(path_ + "/" + key + ": expected an integer");
        return v.get<std::int64_t>();
    }
    bool boolean(const std::string& key, std::optional<bool> fallback = {}) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError(path_ + "/" + key + ": required boolean missing");
        }
        const auto& v = j_->at(key);
        if (!v.is_boolean()) throw ConfigError(path_ + "/" + key + ": expected a boolean");
        return v.get<bool>();
    }
    std::string text(const std::string& key, std::optional<std::string> fallback = {}) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError(path_ + "/" + key + ": required string missing");
        }
        const auto& v = j_->at(key);
        if (!v.is_string()) throw ConfigError(path_ + "/" + key + ": expected a string");
        return v.get<std::string>();
    }
    std::vector<std::string> text_list(const std::string& key, bool required = false) const {
        if (!has(key)) {
            if (required) throw ConfigError(path_ + "/" + key + ": required list missing");
            return {};
        }
        const auto& v = j_->at(key);
        if (!v.is_array()) throw ConfigError(path_ + "/" + key + ": expected an array of strings");
        std::vector<std::string> out;
        for (const auto& e : v) {
            if (!e.is_string())
                throw ConfigError(path_ + "/" + key + ": expected an array of strings");
            out.push_back(e.get<std::string>());
        }
        return out;
    }
    std::vector<double> number_list(const std::string& key) const {
        if (!has(key)) return {};
        const auto& v = j_->at(key);
        if (!v.is_array()) throw ConfigError(path_ + "/" + key + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& e : v) {
            if (!e.is_number())
                throw ConfigError(path_ + "/" + key + ": expected an array of numbers");
            out.push_back(e.get<double>());
        }
        return out;
    }

private:
    const json* j_;
    std::string path_;
};

enum class DenoiserKind { Identity, Oracle, GaussianAnalytic, External };

inline const char* to_string(DenoiserKind k) {
    switch (k) {
        case DenoiserKind::Identity: return "identity";
        case DenoiserKind::Oracle: return "oracle";
        case DenoiserKind::GaussianAnalytic: return "gaussian-analytic";
        case DenoiserKind::External: return "external";
    }
    return "?";
}

struct RunConfig {
    ObservationDesign design = ObservationDesign::Shared;
    std::string mixture_path;
    std::vector<std::string> estimate_paths;
    std::vector<std::string> reference_paths;

    StftConfig stft;
    VarianceDesign variance;

    double eta = 0.85;
    double eta_b = 1.0;
    int steps = 200;
    ScheduleKind schedule_kind = ScheduleKind::Geometric;
    double sigma_min = 0.002;
    std::optional<double> sigma_max;  // auto when unset
    std::uint64_t seed = 0;
    bool record_trajectory = false;

    DenoiserKind denoiser_kind = DenoiserKind::Identity;
    double prior_mean = 0.0;
    double prior_std = 1.0;
    std::vector<std::string> oracle_reference_paths;
    std::vector<std::string> denoiser_command;
    std::string denoiser_address;
    double denoiser_timeout_s = 30.0;

    std::vector<double> blend_xi;

    std::string output_dir;
    WavFormat output_format = WavFormat::Float32;

    int sources() const { return static_cast<int>(estimate_paths.size()); }
};

inline RunConfig parse_run_config(const json& root_json, const std::string& origin) {
    // A manifest embeds the resolved config it was produced from; accept it
    // directly so runs can be reproduced from their manifests.
    const json* doc = &root_json;
    if (root_json.is_object() && root_json.contains("kind") && root_json["kind"] == "manifest") {
        if (!root_json.contains("config"))
            throw ConfigError(origin + ": manifest without a config section");
        doc = &root_json["config"];
    }

    JsonCursor root(*doc, origin);
    root.require_object({"version", "design", "inputs", "stft", "variance", "sampler",
                         "denoiser", "blend", "output"});
    if (root.integer("version") != 1)
        throw ConfigError(origin + "/version: unsupported config version");

    RunConfig cfg;
    const std::string design = root.text("design");
    if (design == "shared")
        cfg.design = ObservationDesign::Shared;
    else if (design == "isolated")
        cfg.design = ObservationDesign::Isolated;
    else
        throw ConfigError(origin + "/design: expected \"shared\" or \"isolated\"");

    {
        auto in = root.child("inputs");
        in.require_object({"mixture", "estimates", "references"});
        cfg.mixture_path = in.has("mixture") ? in.text("mixture") : "";
        cfg.estimate_paths = in.text_list("estimates", /*required=*/true);
        cfg.reference_paths = in.text_list("references");
        if (cfg.estimate_paths.empty())
            throw ConfigError(origin + "/inputs/estimates: need at least one estimate");
        if (cfg.design == ObservationDesign::Shared && cfg.mixture_path.empty())
            throw ConfigError(origin + "/inputs: shared design requires mixture");
        if (!cfg.reference_paths.empty() &&
            cfg.reference_paths.size() != cfg.estimate_paths.size())
            throw ConfigError(origin + "/inputs/references: count must match estimates");
    }

    if (root.has("stft")) {
        auto st = root.child("stft");
        st.require_object({"window", "window_size", "hop_size", "num_frames", "scale"});
        if (st.text("window", std::string("hann")) != "hann")
            throw ConfigError(origin + "/stft/window: only \"hann\" is supported");
        cfg.stft.window_size = static_cast<int>(st.integer("window_size", 512));
        cfg.stft.hop_size = static_cast<int>(st.integer("hop_size", 256));
        cfg.stft.num_frames = static_cast<int>(st.integer("num_frames", 256));
        cfg.stft.scale = st.number("scale", 0.15);
    }
    cfg.stft.validate();

    if (root.has("variance")) {
        auto va = root.child("variance");
        va.require_object({"kind", "fixed", "alpha", "beta", "gamma", "mixture"});
        const std::string kind = va.text("kind", std::string("fixed"));
        if (kind == "fixed")
            cfg.variance.kind = VarianceDesign::Kind::Fixed;
        else if (kind == "sigmoid")
            cfg.variance.kind = VarianceDesign::Kind::Sigmoid;
        else
            throw ConfigError(origin + "/variance/kind: expected \"fixed\" or \"sigmoid\"");
        cfg.variance.fixed_value = va.number("fixed", 0.5);
        cfg.variance.alpha = va.number("alpha", 2.0);
        cfg.variance.beta = va.number("beta", 2.0);
        cfg.variance.gamma = va.number("gamma", 0.8);
        cfg.variance.mixture_value = va.number("mixture", 0.5);
    }
    cfg.variance.validate();
    if (cfg.variance.kind == VarianceDesign::Kind::Sigmoid && cfg.mixture_path.empty())
        throw ConfigError(origin + "/variance: sigmoid design requires a mixture input");

    if (root.has("sampler")) {
        auto sa = root.child("sampler");
        sa.require_object({"eta", "eta_b", "steps", "schedule", "sigma_min", "sigma_max", "seed",
                           "record_trajectory"});
        cfg.eta = sa.number("eta", 0.85);
        cfg.eta_b = sa.number("eta_b", 1.0);
        cfg.steps = static_cast<int>(sa.integer("steps", 200));
        const std::string kind = sa.text("schedule", std::string("geometric"));
        if (kind == "geometric")
            cfg.schedule_kind = ScheduleKind::Geometric;
        else if (kind == "linear-beta")
            cfg.schedule_kind = ScheduleKind::LinearBeta;
        else
            throw ConfigError(origin +
                              "/sampler/schedule: expected \"geometric\" or \"linear-beta\"");
        cfg.sigma_min = sa.number("sigma_min", 0.002);
        if (sa.has("sigma_max")) cfg.sigma_max = sa.number("sigma_max");
        cfg.seed = static_cast<std::uint64_t>(sa.integer("seed", 0));
        cfg.record_trajectory = sa.boolean("record_trajectory", false);
    }
    if (!(cfg.eta >= 0.0 && cfg.eta <= 1.0))
        throw ConfigError(origin + "/sampler/eta: must be in [0, 1]");
    if (!(cfg.eta_b >= 0.0 && cfg.eta_b <= 2.0))
        throw ConfigError(origin + "/sampler/eta_b: must be in [0, 2]");
    if (cfg.steps < 1) throw ConfigError(origin + "/sampler/steps: must be >= 1");

    if (root.has("denoiser")) {
        auto de = root.child("denoiser");
        de.require_object(
            {"kind", "prior_mean", "prior_std", "references", "command", "address", "timeout_s"});
        const std::string kind = de.text("kind", std::string("identity"));
        if (kind == "identity")
            cfg.denoiser_kind = DenoiserKind::Identity;
        else if (kind == "oracle")
            cfg.denoiser_kind = DenoiserKind::Oracle;
        else if (kind == "gaussian-analytic")
            cfg.denoiser_kind = DenoiserKind::GaussianAnalytic;
        else if (kind == "external")
            cfg.denoiser_kind = DenoiserKind::External;
        else
            throw ConfigError(origin + "/denoiser/kind: unknown denoiser kind \"" + kind + "\"");
        cfg.prior_mean = de.number("prior_mean", 0.0);
        cfg.prior_std = de.number("prior_std", 1.0);
        cfg.oracle_reference_paths = de.text_list("references");
        cfg.denoiser_command = de.text_list("command");
        cfg.denoiser_address = de.has("address") ? de.text("address") : "";
        cfg.denoiser_timeout_s = de.number("timeout_s", protocol::kDefaultTimeoutSeconds);
    }
    if (cfg.denoiser_kind == DenoiserKind::Oracle &&
        cfg.oracle_reference_paths.size() != cfg.estimate_paths.size())
        throw ConfigError(origin +
                          "/denoiser/references: oracle denoiser needs one reference per source");
    if (cfg.denoiser_kind == DenoiserKind::GaussianAnalytic && !(cfg.prior_std > 0.0))
        throw ConfigError(origin + "/denoiser/prior_std: must be > 0");
    if (cfg.denoiser_kind == DenoiserKind::External && cfg.denoiser_command.empty() &&
        cfg.denoiser_address.empty())
        throw ConfigError(origin + "/denoiser: external denoiser needs a command or an address");

    if (root.has("blend")) {
        auto bl = root.child("blend");
        bl.require_object({"xi"});
        cfg.blend_xi = bl.number_list("xi");
        for (double xi : cfg.blend_xi)
            if (!(xi >= 0.0 && xi <= 1.0))
                throw ConfigError(origin + "/blend/xi: values must be in [0, 1]");
    }

    {
        auto out = root.child("output");
        out.require_object({"dir", "format"});
        cfg.output_dir = out.text("dir");
        const std::string fmt = out.text("format", std::string("float32"));
        if (fmt == "float32")
            cfg.output_format = WavFormat::Float32;
        else if (fmt == "pcm16")
            cfg.output_format = WavFormat::Pcm16;
        else
            throw ConfigError(origin + "/output/format: expected \"float32\" or \"pcm16\"");
        if (cfg.output_dir.empty()) throw ConfigError(origin + "/output/dir: must not be empty");
    }
    return cfg;
}

// Fully resolved config with every default materialized; rerunning from it
// reproduces the run bit for bit.
inline json resolved_config_json(const RunConfig& cfg, double resolved_sigma_max) {
    json inputs;
    if (!cfg.mixture_path.empty()) inputs["mixture"] = cfg.mixture_path;
    inputs["estimates"] = cfg.estimate_paths;
    if (!cfg.reference_paths.empty()) inputs["references"] = cfg.reference_paths;

    json denoiser = {{"kind", to_string(cfg.denoiser_kind)},
                     {"timeout_s", cfg.denoiser_timeout_s}};
    if (cfg.denoiser_kind == DenoiserKind::GaussianAnalytic) {
        denoiser["prior_mean"] = cfg.prior_mean;
        denoiser["prior_std"] = cfg.prior_std;
    }
    if (!cfg.oracle_reference_paths.empty()) denoiser["references"] = cfg.oracle_reference_paths;
    if (!cfg.denoiser_command.empty()) denoiser["command"] = cfg.denoiser_command;
    if (!cfg.denoiser_address.empty()) denoiser["address"] = cfg.denoiser_address;

    return json{
        {"version", 1},
        {"design", cfg.design == ObservationDesign::Shared ? "shared" : "isolated"},
        {"inputs", inputs},
        {"stft",
         {{"window", "hann"},
          {"window_size", cfg.stft.window_size},
          {"hop_size", cfg.stft.hop_size},
          {"num_frames", cfg.stft.num_frames},
          {"scale", cfg.stft.scale}}},
        {"variance",
         {{"kind", cfg.variance.kind == VarianceDesign::Kind::Fixed ? "fixed" : "sigmoid"},
          {"fixed", cfg.variance.fixed_value},
          {"alpha", cfg.variance.alpha},
          {"beta", cfg.variance.beta},
          {"gamma", cfg.variance.gamma},
          {"mixture", cfg.variance.mixture_value}}},
        {"sampler",
         {{"eta", cfg.eta},
          {"eta_b", cfg.eta_b},
          {"steps", cfg.steps},
          {"schedule", to_string(cfg.schedule_kind)},
          {"sigma_min", cfg.sigma_min},
          {"sigma_max", resolved_sigma_max},
          {"seed", cfg.seed},
          {"record_trajectory", cfg.record_trajectory}}},
        {"denoiser", denoiser},
        {"blend", {{"xi", cfg.blend_xi}}},
        {"output",
         {{"dir", cfg.output_dir},
          {"format", cfg.output_format == WavFormat::Float32 ? "float32" : "pcm16"}}}};
}

inline json load_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
}

}  // namespace ddrm

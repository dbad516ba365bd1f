#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "ddrm/config.hpp"
#include "ddrm/evalblend.hpp"
#include "ddrm/sampler.hpp"

namespace ddrm {

namespace detail {

inline std::string format_xi(double xi) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", xi);
    return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << content;
    if (!f) throw IoError("write failed: " + path);
}

inline AudioBuffer read_input_wav(const std::string& path, int expected_rate = 8000) {
    AudioBuffer buf = read_wav(path);
    if (buf.sample_rate != expected_rate)
        throw IoError(path + ": expected " + std::to_string(expected_rate) + " Hz input, got " +
                      std::to_string(buf.sample_rate) + " Hz (resampling is out of scope)");
    return buf;
}

inline json eval_report_json(const EvalReport& rep) {
    return json{{"per_source_db", rep.per_source_db},
                {"permutation", rep.permutation},
                {"mean_db", rep.mean_db}};
}

// Stacks the measurement channels (mixture first for the shared design) and
// attaches the configured noise-std field.
inline MeasurementSet assemble_measurements(const RunConfig& cfg,
                                            const ComplexSpectrogram& mix_spec,
                                            const std::vector<ComplexSpectrogram>& est_specs,
                                            SigmoidStats* stats = nullptr) {
    const int n = static_cast<int>(est_specs.size());
    std::vector<ComplexSpectrogram> channels;
    if (cfg.design == ObservationDesign::Shared) channels.push_back(mix_spec);
    for (const auto& s : est_specs) channels.push_back(s);

    MeasurementSet ms;
    ms.design = cfg.design;
    ms.y = stack_channels(channels).tensor();
    if (cfg.variance.kind == VarianceDesign::Kind::Fixed) {
        ms.sigma_y = fixed_field(ms.y.shape, cfg.variance.fixed_value);
        return ms;
    }
    ms.sigma_y = RealTensor(ms.y.shape);
    const ComplexTensor mixture_tensor = mix_spec.tensor();
    const int first_source = cfg.design == ObservationDesign::Shared ? 1 : 0;
    for (int i = 0; i < n; ++i) {
        const RealTensor field =
            sigmoid_field(mixture_tensor, est_specs[i].tensor(), cfg.variance, stats);
        for (int k = 0; k < ms.y.shape.bins; ++k)
            for (int l = 0; l < ms.y.shape.frames; ++l)
                ms.sigma_y.at(first_source + i, k, l) = field.at(0, k, l);
    }
    if (cfg.design == ObservationDesign::Shared)
        for (int k = 0; k < ms.y.shape.bins; ++k)
            for (int l = 0; l < ms.y.shape.frames; ++l)
                ms.sigma_y.at(0, k, l) = cfg.variance.mixture_value;
    return ms;
}

}  // namespace detail

struct RefineOutputs {
    std::vector<std::string> refined_paths;
    std::string manifest_path;
    std::string report_path;  // empty when no references were given
};

// The full refinement pipeline for one scene: read the preceding separator's
// outputs, refine them by posterior sampling under the configured observation
// model, write refined (and blended) audio plus manifest/report.
inline RefineOutputs refine_scene(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    const int n = cfg.sources();

    std::vector<AudioBuffer> estimates;
    estimates.reserve(n);
    for (const auto& p : cfg.estimate_paths) estimates.push_back(detail::read_input_wav(p));
    for (int i = 1; i < n; ++i)
        if (estimates[i].samples.size() != estimates[0].samples.size())
            throw ConfigError("estimate lengths differ: " + cfg.estimate_paths[i]);
    if (estimates[0].samples.empty()) throw ConfigError("estimates are empty");

    const bool need_mixture = cfg.design == ObservationDesign::Shared ||
                              cfg.variance.kind == VarianceDesign::Kind::Sigmoid;
    AudioBuffer mixture;
    if (!cfg.mixture_path.empty()) {
        mixture = detail::read_input_wav(cfg.mixture_path);
        if (mixture.samples.size() != estimates[0].samples.size())
            throw ConfigError("mixture length differs from estimates");
    } else if (need_mixture) {
        throw ConfigError("shared design requires mixture");
    }

    std::vector<ComplexSpectrogram> est_specs;
    est_specs.reserve(n);
    for (const auto& e : estimates) est_specs.push_back(stft(e, cfg.stft));
    ComplexSpectrogram mix_spec;
    if (!mixture.samples.empty()) mix_spec = stft(mixture, cfg.stft);

    SigmoidStats sigmoid_stats;
    const MeasurementSet ms = detail::assemble_measurements(cfg, mix_spec, est_specs,
                                                            &sigmoid_stats);

    const DegradationModel model = cfg.design == ObservationDesign::Shared ? build_shared(n)
                                                                           : build_isolated(n);
    const SpectralMeasurement spectral = to_spectral(ms, model);
    const double sigma_max = cfg.sigma_max ? *cfg.sigma_max : auto_sigma_max(spectral);

    SamplerConfig sampler_cfg;
    sampler_cfg.eta = cfg.eta;
    sampler_cfg.eta_b = cfg.eta_b;
    sampler_cfg.seed = cfg.seed;
    sampler_cfg.record_trajectory = cfg.record_trajectory;
    sampler_cfg.schedule = build_schedule(cfg.schedule_kind, cfg.steps, cfg.sigma_min, sigma_max);

    std::unique_ptr<Denoiser> denoiser;
    switch (cfg.denoiser_kind) {
        case DenoiserKind::Identity:
            denoiser = std::make_unique<IdentityDenoiser>();
            break;
        case DenoiserKind::Oracle: {
            std::vector<ComplexSpectrogram> refs;
            for (const auto& p : cfg.oracle_reference_paths) {
                AudioBuffer r = detail::read_input_wav(p);
                if (r.samples.size() != estimates[0].samples.size())
                    throw ConfigError("oracle reference length differs from estimates: " + p);
                refs.push_back(stft(r, cfg.stft));
            }
            denoiser = std::make_unique<OracleDenoiser>(stack_channels(refs).tensor());
            break;
        }
        case DenoiserKind::GaussianAnalytic:
            denoiser = std::make_unique<GaussianAnalyticDenoiser>(cfg.prior_mean, cfg.prior_std);
            break;
        case DenoiserKind::External: {
            ExternalEndpoint ep;
            ep.command = cfg.denoiser_command;
            ep.address = cfg.denoiser_address;
            ep.timeout_s = cfg.denoiser_timeout_s;
            denoiser = std::make_unique<ExternalDenoiser>(ep);
            break;
        }
    }

    const RefinementResult result = run(ms, model, *denoiser, sampler_cfg);

    fs::create_directories(cfg.output_dir);
    const auto out_path = [&](const std::string& name) {
        return (fs::path(cfg.output_dir) / name).string();
    };

    RefineOutputs outputs;
    std::size_t clipped = 0;
    std::vector<AudioBuffer> refined;
    refined.reserve(n);
    const std::size_t per_channel = static_cast<std::size_t>(result.x0.shape.bins) *
                                    result.x0.shape.frames;
    for (int i = 0; i < n; ++i) {
        ComplexSpectrogram out_spec = est_specs[i];
        out_spec.data.assign(result.x0.v.begin() + i * per_channel,
                             result.x0.v.begin() + (i + 1) * per_channel);
        refined.push_back(istft(out_spec));
        const std::string path = out_path("refined_" + std::to_string(i + 1) + ".wav");
        clipped += write_wav(refined.back(), path, cfg.output_format).clipped;
        outputs.refined_paths.push_back(path);
    }

    json blended_paths = json::object();
    for (double xi : cfg.blend_xi) {
        std::vector<std::string> paths;
        for (int i = 0; i < n; ++i) {
            const AudioBuffer b = blend(estimates[i], refined[i], xi);
            const std::string path = out_path("blended_" + detail::format_xi(xi) + "_" +
                                              std::to_string(i + 1) + ".wav");
            clipped += write_wav(b, path, cfg.output_format).clipped;
            paths.push_back(path);
        }
        blended_paths[detail::format_xi(xi)] = paths;
    }

    if (!cfg.reference_paths.empty()) {
        std::vector<AudioBuffer> refs;
        for (const auto& p : cfg.reference_paths) refs.push_back(detail::read_input_wav(p));
        json report;
        report["version"] = 1;
        report["estimates"] = detail::eval_report_json(eval_permuted(estimates, refs));
        report["refined"] = detail::eval_report_json(eval_permuted(refined, refs));
        json blends = json::array();
        for (double xi : cfg.blend_xi) {
            std::vector<AudioBuffer> blended;
            for (int i = 0; i < n; ++i) blended.push_back(blend(estimates[i], refined[i], xi));
            blends.push_back(
                {{"xi", xi}, {"report", detail::eval_report_json(eval_permuted(blended, refs))}});
        }
        report["blends"] = blends;
        outputs.report_path = out_path("report.json");
        detail::write_text_file(outputs.report_path, report.dump(2) + "\n");
    }

    json diag;
    std::uint64_t low = 0, high = 0, unobserved = 0;
    for (const auto& s : result.steps) {
        low += s.low;
        high += s.high;
        unobserved += s.unobserved;
    }
    diag["branch_counts"] = {{"low", low}, {"high", high}, {"unobserved", unobserved}};
    diag["denoiser_calls"] = result.denoiser_calls;
    diag["max_sigma_bar"] = spectral.max_sigma_bar();
    diag["blocks"] = est_specs[0].blocks();
    diag["clipped_samples"] = clipped;
    diag["sigmoid_clamped_bins"] = sigmoid_stats.clamped;

    json manifest;
    manifest["kind"] = "manifest";
    manifest["version"] = 1;
    manifest["software"] = {{"name", kProjectName}, {"version", kProjectVersion}};
    manifest["config"] = resolved_config_json(cfg, sigma_max);
    manifest["schedule"] = {{"kind", to_string(cfg.schedule_kind)},
                            {"steps", cfg.steps},
                            {"sigma_min", cfg.sigma_min},
                            {"sigma_max", sigma_max},
                            {"sigmas", sampler_cfg.schedule.sigmas}};
    manifest["diagnostics"] = diag;
    manifest["outputs"] = {{"refined", outputs.refined_paths},
                           {"blended", blended_paths},
                           {"report", outputs.report_path}};
    outputs.manifest_path = out_path("manifest.json");
    detail::write_text_file(outputs.manifest_path, manifest.dump(2) + "\n");
    return outputs;
}

// refine: one scene per config file, optionally fanned out over worker
// threads.  Each scene owns its sampler state and denoiser attachment.
inline int refine_command(const std::vector<std::string>& config_paths,
                          std::optional<std::uint64_t> seed_override, int jobs) {
    if (config_paths.empty()) throw ConfigError("refine: no config given");
    if (jobs < 1) throw ConfigError("refine: --jobs must be >= 1");

    std::vector<RunConfig> configs;
    for (const auto& path : config_paths) {
        RunConfig cfg = parse_run_config(load_json_file(path), path);
        if (seed_override) cfg.seed = *seed_override;
        configs.push_back(std::move(cfg));
    }

    std::vector<int> codes(configs.size(), 0);
    std::vector<std::string> errors(configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= configs.size()) return;
            try {
                refine_scene(configs[i]);
            } catch (const std::exception& e) {
                codes[i] = exit_code_for(e);
                errors[i] = e.what();
            }
        }
    };
    const int pool = std::min<int>(jobs, static_cast<int>(configs.size()));
    if (pool <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < pool; ++i) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    for (std::size_t i = 0; i < configs.size(); ++i) {
        if (codes[i] != 0) {
            std::fprintf(stderr, "error [%s]: %s\n", config_paths[i].c_str(), errors[i].c_str());
            return codes[i];
        }
    }
    return 0;
}

// ---------------------------------------------------------------------------
// synth: desk-scale stand-in for a pretrained separator.  Writes ground-truth
// sources, noisy "preceding estimates" at a requested SNR, and their mixture.

struct SynthSource {
    enum class Type { Sine, Noise, Wav } type = Type::Sine;
    double freq = 440.0;
    double amplitude = 0.3;
    double phase = 0.0;
    std::string path;
};

struct SynthSpec {
    int sample_rate = 8000;
    long num_samples = 16000;
    std::uint64_t seed = 0;
    std::vector<SynthSource> sources;
    std::optional<double> corruption_snr_db;  // unset: estimates equal truth
    std::string output_dir;
    WavFormat output_format = WavFormat::Float32;
};

inline SynthSpec parse_synth_spec(const json& doc, const std::string& origin) {
    JsonCursor root(doc, origin);
    root.require_object(
        {"version", "sample_rate", "num_samples", "duration_s", "seed", "sources",
         "corruption_snr_db", "output"});
    if (root.integer("version") != 1)
        throw ConfigError(origin + "/version: unsupported spec version");

    SynthSpec spec;
    spec.sample_rate = static_cast<int>(root.integer("sample_rate", 8000));
    if (spec.sample_rate < 1) throw ConfigError(origin + "/sample_rate: must be positive");
    if (root.has("num_samples"))
        spec.num_samples = root.integer("num_samples");
    else
        spec.num_samples = static_cast<long>(root.number("duration_s", 2.0) * spec.sample_rate);
    if (spec.num_samples < 1) throw ConfigError(origin + ": need a positive length");
    spec.seed = static_cast<std::uint64_t>(root.integer("seed", 0));
    if (root.has("corruption_snr_db") && !doc["corruption_snr_db"].is_null())
        spec.corruption_snr_db = root.number("corruption_snr_db");

    if (!root.has("sources")) throw ConfigError(origin + "/sources: required");
    const auto& arr = doc["sources"];
    if (!arr.is_array() || arr.empty())
        throw ConfigError(origin + "/sources: expected a non-empty array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        JsonCursor sc(arr[i], origin + "/sources/" + std::to_string(i));
        sc.require_object({"type", "freq", "amplitude", "phase", "path"});
        SynthSource src;
        const std::string type = sc.text("type");
        if (type == "sine")
            src.type = SynthSource::Type::Sine;
        else if (type == "noise")
            src.type = SynthSource::Type::Noise;
        else if (type == "wav")
            src.type = SynthSource::Type::Wav;
        else
            throw ConfigError(sc.path() + "/type: expected sine, noise, or wav");
        src.freq = sc.number("freq", 440.0);
        src.amplitude = sc.number("amplitude", 0.3);
        src.phase = sc.number("phase", 0.0);
        if (src.type == SynthSource::Type::Wav) src.path = sc.text("path");
        spec.sources.push_back(std::move(src));
    }

    auto out = root.child("output");
    out.require_object({"dir", "format"});
    spec.output_dir = out.text("dir");
    const std::string fmt = out.text("format", std::string("float32"));
    spec.output_format = fmt == "pcm16" ? WavFormat::Pcm16 : WavFormat::Float32;
    if (fmt != "pcm16" && fmt != "float32")
        throw ConfigError(origin + "/output/format: expected \"float32\" or \"pcm16\"");
    return spec;
}

namespace detail {

inline std::vector<double> gaussian_sequence(const CounterRng& rng, std::uint64_t stream, long n) {
    std::vector<double> out(n);
    for (long i = 0; i < n; i += 2) {
        const auto [a, b] = rng.normal_pair(stream, static_cast<std::uint64_t>(i / 2));
        out[i] = a;
        if (i + 1 < n) out[i + 1] = b;
    }
    return out;
}

}  // namespace detail

inline json synth_scene(const SynthSpec& spec) {
    namespace fs = std::filesystem;
    const CounterRng rng(spec.seed);
    const long n = spec.num_samples;

    std::vector<AudioBuffer> sources;
    for (std::size_t i = 0; i < spec.sources.size(); ++i) {
        const auto& def = spec.sources[i];
        AudioBuffer s;
        s.sample_rate = spec.sample_rate;
        s.samples.resize(n);
        switch (def.type) {
            case SynthSource::Type::Sine:
                for (long t = 0; t < n; ++t)
                    s.samples[t] = def.amplitude *
                                   std::sin(2.0 * std::numbers::pi * def.freq * t /
                                                spec.sample_rate +
                                            def.phase);
                break;
            case SynthSource::Type::Noise: {
                const auto z = detail::gaussian_sequence(rng, i, n);
                for (long t = 0; t < n; ++t) s.samples[t] = def.amplitude * z[t];
                break;
            }
            case SynthSource::Type::Wav: {
                AudioBuffer w = detail::read_input_wav(def.path, spec.sample_rate);
                if (static_cast<long>(w.samples.size()) < n)
                    throw ConfigError("synth: " + def.path + " shorter than requested length");
                w.samples.resize(n);
                s.samples = std::move(w.samples);
                break;
            }
        }
        sources.push_back(std::move(s));
    }

    // Corruption noise is orthogonalized against the source before scaling,
    // so the realized SI-SDR equals the requested SNR exactly.
    std::vector<AudioBuffer> estimates = sources;
    if (spec.corruption_snr_db) {
        for (std::size_t i = 0; i < sources.size(); ++i) {
            const auto& s = sources[i].samples;
            double ss = 0.0;
            for (double x : s) ss += x * x;
            if (ss == 0.0) continue;
            auto z = detail::gaussian_sequence(rng, 0x100000000ull + i, n);
            double zs = 0.0;
            for (long t = 0; t < n; ++t) zs += z[t] * s[t];
            for (long t = 0; t < n; ++t) z[t] -= zs / ss * s[t];
            double zz = 0.0;
            for (double x : z) zz += x * x;
            if (zz == 0.0) continue;
            const double g =
                std::sqrt(ss / zz) * std::pow(10.0, -*spec.corruption_snr_db / 20.0);
            for (long t = 0; t < n; ++t) estimates[i].samples[t] = s[t] + g * z[t];
        }
    }

    const AudioBuffer mixture = mix(sources);

    fs::create_directories(spec.output_dir);
    const auto out_path = [&](const std::string& name) {
        return (fs::path(spec.output_dir) / name).string();
    };
    json scene;
    scene["kind"] = "scene";
    scene["version"] = 1;
    scene["sample_rate"] = spec.sample_rate;
    scene["num_samples"] = spec.num_samples;
    scene["seed"] = spec.seed;
    std::vector<std::string> source_paths, estimate_paths;
    std::vector<double> measured;
    for (std::size_t i = 0; i < sources.size(); ++i) {
        source_paths.push_back(out_path("source_" + std::to_string(i + 1) + ".wav"));
        estimate_paths.push_back(out_path("estimate_" + std::to_string(i + 1) + ".wav"));
        write_wav(sources[i], source_paths.back(), spec.output_format);
        write_wav(estimates[i], estimate_paths.back(), spec.output_format);
        double db = kSiSdrCapDb;
        bool silent = true;
        for (double x : sources[i].samples)
            if (x != 0.0) silent = false;
        if (!silent) db = si_sdr(estimates[i], sources[i]);
        measured.push_back(db);
    }
    const std::string mixture_path = out_path("mixture.wav");
    write_wav(mixture, mixture_path, spec.output_format);

    scene["sources"] = source_paths;
    scene["estimates"] = estimate_paths;
    scene["mixture"] = mixture_path;
    if (spec.corruption_snr_db) scene["corruption_snr_db"] = *spec.corruption_snr_db;
    scene["measured_estimate_si_sdr_db"] = measured;
    detail::write_text_file(out_path("scene.json"), scene.dump(2) + "\n");
    return scene;
}

inline int synth_command(const std::string& spec_path) {
    const SynthSpec spec = parse_synth_spec(load_json_file(spec_path), spec_path);
    synth_scene(spec);
    return 0;
}

// ---------------------------------------------------------------------------

inline int eval_command(const std::vector<std::string>& estimate_paths,
                        const std::vector<std::string>& reference_paths,
                        const std::string& out_path) {
    if (estimate_paths.size() != reference_paths.size() || estimate_paths.empty())
        throw ConfigError("eval: estimate/reference count mismatch");
    std::vector<AudioBuffer> est, ref;
    for (const auto& p : estimate_paths) est.push_back(read_wav(p));
    for (const auto& p : reference_paths) ref.push_back(read_wav(p));
    const EvalReport rep = eval_permuted(est, ref);

    json doc;
    doc["version"] = 1;
    doc["report"] = detail::eval_report_json(rep);
    const std::string text = doc.dump(2) + "\n";
    if (out_path.empty())
        std::fputs(text.c_str(), stdout);
    else
        detail::write_text_file(out_path, text);
    for (std::size_t i = 0; i < rep.per_source_db.size(); ++i)
        std::fprintf(stderr, "source %zu: %.2f dB (estimate %d)\n", i + 1, rep.per_source_db[i],
                     rep.permutation[i] + 1);
    std::fprintf(stderr, "mean SI-SDR: %.2f dB\n", rep.mean_db);
    return 0;
}

// Prints the sigma_t table and checks initialization feasibility for the
// measurement set implied by a refine config.
inline int schedule_check_command(const std::string& config_path) {
    const RunConfig cfg = parse_run_config(load_json_file(config_path), config_path);
    const int n = cfg.sources();

    std::vector<AudioBuffer> estimates;
    for (const auto& p : cfg.estimate_paths) estimates.push_back(detail::read_input_wav(p));
    AudioBuffer mixture;
    if (!cfg.mixture_path.empty()) mixture = detail::read_input_wav(cfg.mixture_path);

    std::vector<ComplexSpectrogram> est_specs;
    for (const auto& e : estimates) est_specs.push_back(stft(e, cfg.stft));
    ComplexSpectrogram mix_spec;
    if (!mixture.samples.empty()) mix_spec = stft(mixture, cfg.stft);
    if (cfg.design == ObservationDesign::Shared && mixture.samples.empty())
        throw ConfigError("shared design requires mixture");

    const MeasurementSet ms = detail::assemble_measurements(cfg, mix_spec, est_specs);
    const DegradationModel model = cfg.design == ObservationDesign::Shared ? build_shared(n)
                                                                           : build_isolated(n);
    const SpectralMeasurement spectral = to_spectral(ms, model);
    const double sigma_max = cfg.sigma_max ? *cfg.sigma_max : auto_sigma_max(spectral);
    const NoiseSchedule schedule =
        build_schedule(cfg.schedule_kind, cfg.steps, cfg.sigma_min, sigma_max);

    std::printf("schedule: %s, T=%d, sigma in [%g, %g]\n", to_string(cfg.schedule_kind),
                cfg.steps, cfg.sigma_min, sigma_max);
    std::printf("%6s  %12s\n", "t", "sigma_t");
    const int stride = std::max(1, cfg.steps / 16);
    for (int t = 0; t < cfg.steps; t += stride) std::printf("%6d  %12.6f\n", t, schedule.sigma(t));
    std::printf("%6d  %12.6f\n", cfg.steps, schedule.sigma(cfg.steps));
    for (int c = 0; c < n; ++c) {
        double mx = 0.0;
        for (int k = 0; k < spectral.ybar.shape.bins; ++k)
            for (int l = 0; l < spectral.ybar.shape.frames; ++l)
                mx = std::max(mx, spectral.sigma_bar.at(c, k, l));
        std::printf("component %d: %s, max sigma_bar = %g\n", c,
                    spectral.observed[c] ? "observed" : "unobserved", mx);
    }
    require_feasible(schedule, spectral);  // throws InfeasibleError -> exit 5
    std::printf("feasible: sigma_T=%g dominates all spectral measurement noise\n", sigma_max);
    return 0;
}

}  // namespace ddrm

// ddrm-refine: refines source-separation outputs by diffusion posterior
// sampling under a per-bin linear observation model.
//
//   refine          run the refiner on one or more scene configs
//   synth           generate a synthetic test scene (truth + noisy estimates)
//   eval            SI-SDR with permutation alignment
//   schedule-check  print the sigma_t table and check feasibility
//   protocol-echo   loopback server for the denoiser wire protocol

#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <unistd.h>

#include "ddrm/commands.hpp"
#include "ddrm/common.hpp"
#include "ddrm/protocol.hpp"

int main(int argc, char** argv) {
    CLI::App app{"DDRM-based refiner for source separation outputs"};
    app.require_subcommand(1);
    app.fallthrough();

    bool verbose = false;
    app.add_flag("--verbose", verbose, "verbose logging");

    std::vector<std::string> refine_configs;
    std::optional<std::uint64_t> seed_override;
    int jobs = 1;
    auto* refine = app.add_subcommand("refine", "refine separated sources");
    refine->add_option("--config", refine_configs, "scene config JSON (repeatable)")
        ->required()
        ->expected(-1);
    std::uint64_t seed_value = 0;
    auto* seed_opt = refine->add_option("--seed", seed_value, "override the sampler seed");
    refine->add_option("--jobs", jobs, "worker threads across scenes")->default_val(1);

    std::string synth_spec;
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene");
    synth->add_option("--spec", synth_spec, "scene spec JSON")->required();

    std::vector<std::string> eval_estimates, eval_references;
    std::string eval_out;
    auto* eval = app.add_subcommand("eval", "evaluate estimates against references");
    eval->add_option("--estimates", eval_estimates, "estimate wav files")->required()->expected(-1);
    eval->add_option("--references", eval_references, "reference wav files")
        ->required()
        ->expected(-1);
    eval->add_option("--out", eval_out, "write report JSON here (default: stdout)");

    std::string check_config;
    auto* check = app.add_subcommand("schedule-check", "print sigma_t table and feasibility");
    check->add_option("--config", check_config, "scene config JSON")->required();

    std::string listen_address;
    auto* echo = app.add_subcommand("protocol-echo", "denoiser wire protocol echo server");
    echo->add_option("--listen", listen_address,
                     "serve one connection on host:port instead of stdio");

    CLI11_PARSE(app, argc, argv);

    const char* log_env = std::getenv("DDRM_REFINE_LOG");
    if (log_env && std::string(log_env) == "debug") verbose = true;

    try {
        if (refine->parsed()) {
            if (seed_opt->count() > 0) seed_override = seed_value;
            return ddrm::refine_command(refine_configs, seed_override, jobs);
        }
        if (synth->parsed()) return ddrm::synth_command(synth_spec);
        if (eval->parsed()) return ddrm::eval_command(eval_estimates, eval_references, eval_out);
        if (check->parsed()) return ddrm::schedule_check_command(check_config);
        if (echo->parsed()) {
            const std::size_t served =
                listen_address.empty()
                    ? ddrm::protocol::serve_echo(STDIN_FILENO, STDOUT_FILENO)
                    : ddrm::protocol::serve_echo_socket(listen_address);
            if (verbose) std::fprintf(stderr, "echoed %zu frames\n", served);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return ddrm::exit_code_for(e);
    }
    return 0;
}

// SPDX-License-Identifier: Apache-2.0
// folxray: command-line front end. Every run writes into a fresh
// run-<timestamp>-<hash> directory under --out (or output.dir).

#include "folxray/harness.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace folxray;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    int workers = 0;
    std::string variant;
    double h = 0.0;
    std::string sinogram;
};

ExperimentConfig resolve(const Common& c) {
    ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
    for (const auto& s : c.sets) apply_override(cfg, s);
    if (!c.variant.empty()) apply_override(cfg, "normal_op.variant=" + c.variant);
    if (c.h != 0.0) apply_override(cfg, "normal_op.h=" + io::fmt(c.h));
    if (!c.sinogram.empty()) cfg.sinogram = c.sinogram;
    if (!c.out.empty()) cfg.output_dir = c.out;
    validate_config(cfg);
    return cfg;
}

using Runner = std::function<harness::Outcome(const ExperimentConfig&, const std::filesystem::path&)>;

int run(const std::string& name, const Common& common, const Runner& fn) {
    try {
        if (common.workers < 0) throw ArgumentError("--workers must be non-negative");
        if (common.workers > 0) set_workers(common.workers);
        const ExperimentConfig cfg = resolve(common);
        const auto dir = harness::make_run_dir(cfg.output_dir, name, cfg);
        io::write_text(dir / "config.ini", emit_config(cfg));
        auto outcome = fn(cfg, dir);
        io::json manifest{{"command", name},
                          {"config_hash", hex64(config_hash(cfg))},
                          {"files", outcome.files},
                          {"exit_code", outcome.code},
                          {"summary", outcome.summary}};
        io::write_json(dir / "manifest.json", manifest);
        std::cerr << "run " << dir.string() << '\n';
        std::cout << outcome.summary.dump() << '\n';
        return outcome.code;
    } catch (const Error& e) {
        std::cerr << "folxray " << name << ": " << e.what() << '\n';
        return harness::exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "folxray " << name << ": " << e.what() << '\n';
        return harness::kExitNumeric;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Foliated local X-ray transform: geometry, normal operator, symbols, inversion"};
    app.require_subcommand(1);
    Common common;

    auto add_common = [&](CLI::App* sub) {
        sub->set_help_flag("--help", "print this help");
        sub->add_option("--config", common.config_path, "configuration file")->check(CLI::ExistingFile);
        sub->add_option("--set", common.sets, "override, section.key=value (repeatable)");
        sub->add_option("--out", common.out, "output root directory");
        sub->add_option("--workers", common.workers, "worker threads (default FOLXRAY_WORKERS or all cores)");
        sub->add_option("--variant", common.variant, "weight variant")->check(CLI::IsMember({"global", "scattering"}));
        sub->add_option("--h", common.h, "semiclassical parameter");
    };

    struct Entry {
        const char* name;
        const char* help;
        Runner fn;
    };
    const std::vector<Entry> entries{
        {"trace", "trace one geodesic (geometry.trace_*)", harness::run_trace},
        {"certify", "convexity certificate of the foliation", harness::run_certify},
        {"forward", "sinogram of the configured phantom", harness::run_forward},
        {"apply", "A_h applied to the phantom (optionally the assembled matrix)", harness::run_apply},
        {"symbol", "principal symbol, closed form and h-quadrature at the centre of M", harness::run_symbol},
        {"certify-ellipticity", "lower bound of the scaled principal symbol", harness::run_ellipticity},
        {"reconstruct", "solve A_h g = e^{-phi/h} L_h d", harness::run_reconstruct},
        {"sweep-h", "reconstruction errors across sweep.h_values", harness::run_sweep},
        {"selftest", "quick checks against closed forms",
         [](const ExperimentConfig&, const std::filesystem::path& dir) { return harness::run_selftest(dir, std::cout); }},
    };

    std::vector<std::pair<CLI::App*, const Entry*>> subs;
    for (const auto& e : entries) {
        auto* sub = app.add_subcommand(e.name, e.help);
        add_common(sub);
        if (std::string(e.name) == "reconstruct")
            sub->add_option("--sinogram", common.sinogram, "input sinogram (FXSG); default synthesises from the phantom");
        subs.emplace_back(sub, &e);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : harness::kExitValidation;
    }

    for (const auto& [sub, e] : subs)
        if (sub->parsed()) return run(e->name, common, e->fn);
    return harness::kExitValidation;
}

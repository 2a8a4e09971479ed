#include "cli.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
    using namespace vmstab::cli;
    CLI::App app{"Linear instability of periodic 1.5D relativistic Vlasov-Maxwell equilibria"};
    app.set_version_flag("--version", kToolVersion);
    app.require_subcommand(1);

    RunConfig rc;
    app.add_option("--config", rc.config_path, "JSON config (missing keys take their defaults)");
    app.add_option("--out", rc.out_dir, "output directory")->capture_default_str();
    app.add_option("--threads", rc.threads, "worker threads")->capture_default_str();
    app.add_option("--set", rc.overrides, "override key=value (dotted path, repeatable)");
    app.add_flag("--emit-plots", rc.emit_plots, "also write plotting scripts next to the CSV files");
    for (auto* opt : app.get_options()) opt->configurable(false);

    app.fallthrough();  // global options may follow the subcommand
    app.add_subcommand("equilibrium", "potentials, fields and moments of the configured equilibrium");
    app.add_subcommand("criterion", "negative-eigenvalue criterion from the limit operators");
    app.add_subcommand("sweep", "negative counts of the truncated operator over a T grid");
    app.add_subcommand("mode", "sweep, locate the crossings and reconstruct the modes");
    auto* erg = app.add_subcommand("ergodic", "ergodic-rate lab");
    std::string ergodic_case;
    double beta = -1.0, sigma = -1.0;
    erg->add_option("--case", ergodic_case, "weighted, l2sigma or projector");
    erg->add_option("--beta", beta, "twist angle of the weighted case, in [0, 2 pi)");
    erg->add_option("--sigma", sigma, "weight exponent of the L2 sigma case");
    app.add_subcommand("demo", "tail-projector example and weighted spectra");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    rc.command = app.get_subcommands().front()->get_name();
    if (!ergodic_case.empty()) rc.overrides.push_back("ergodic.case=\"" + ergodic_case + "\"");
    auto exact = [](const char* key, double v) {
        std::ostringstream os;
        os.precision(17);
        os << key << '=' << v;
        return os.str();
    };
    if (beta >= 0) rc.overrides.push_back(exact("ergodic.beta", beta));
    if (sigma >= 0) rc.overrides.push_back(exact("ergodic.sigma", sigma));
    return run(rc, std::cerr);
}

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "basisrisk/run.hpp"

namespace br = basisrisk;

int main(int argc, char** argv) {
    CLI::App app{"Indifference prices, hedges and marginal utility prices under basis risk"};
    app.require_subcommand(1);
    app.set_version_flag("--version", br::kVersion);

    std::string config_path;
    std::uint64_t seed = 0;
    int paths = 0, steps = 0;
    std::string out_dir, oracle;

    struct Entry {
        const char* name;
        const char* help;
        br::Command command;
    };
    const Entry entries[] = {
        {"price", "indifference price p = u - u_hat at the start state", br::Command::Price},
        {"hedge", "optimal strategies, derivative hedge and hedge report", br::Command::Hedge},
        {"mup", "marginal utility price by three estimators", br::Command::Mup},
        {"verify", "gradient BSDE, flow and Lipschitz checks", br::Command::Verify},
        {"compare", "regression against the finite-difference oracle (m <= 2)", br::Command::Compare},
    };
    br::Command chosen = br::Command::Price;
    for (const auto& e : entries) {
        CLI::App* sub = app.add_subcommand(e.name, e.help);
        sub->add_option("config", config_path, "JSON scenario config")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", seed, "RNG seed");
        sub->add_option("--paths", paths, "number of simulated paths")->check(CLI::PositiveNumber);
        sub->add_option("--steps", steps, "number of time steps")->check(CLI::PositiveNumber);
        sub->add_option("--out-dir", out_dir, "output directory");
        sub->add_option("--oracle", oracle, "oracles and cross-checks")->check(CLI::IsMember({"on", "off"}));
        sub->callback([&chosen, command = e.command] { chosen = command; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    br::ConfigOverrides overrides;
    for (const auto* sub : app.get_subcommands()) {
        if (sub->count("--seed")) overrides.seed = seed;
        if (sub->count("--paths")) overrides.n_paths = paths;
        if (sub->count("--steps")) overrides.n_steps = steps;
        if (sub->count("--out-dir")) overrides.out_dir = out_dir;
        if (sub->count("--oracle")) overrides.oracles = oracle == "on";
    }

    try {
        const br::ScenarioConfig config = br::load_config(config_path, overrides);
        const br::RunReport report = br::run(config, chosen);
        report.write_text(std::cout);
        return report.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "basisrisk: " << e.what() << '\n';
        return 1;
    }
}

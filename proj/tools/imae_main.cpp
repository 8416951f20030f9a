#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "imae/cli.hpp"

namespace {

struct CommandArgs {
    std::string config_path;
    std::vector<std::string> overrides;
};

int dispatch(const std::string& name, const CommandArgs& args) {
    imae::cli::Config cfg;
    if (!args.config_path.empty()) cfg.load_file(args.config_path);
    for (const auto& kv : args.overrides) cfg.apply_override(kv);
    imae::cli::run_command(name, cfg);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"i-MAE: masked autoencoding on mixed image pairs with linear disentanglement"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"pretrain-teacher", "Pre-train the vanilla MAE teacher"},
        {"pretrain-imae", "Pre-train i-MAE on mixed inputs (optionally distilled)"},
        {"finetune", "Supervised finetuning with Mixup from a checkpoint"},
        {"probe", "Linear probing on the frozen encoder"},
        {"sep-report", "Fore/Aft linear-separability report (lasso regression)"},
        {"reconstruct", "Subordinate reconstruction grid over a list of mix ratios"},
        {"plots", "Weight histograms and attention maps for two checkpoints"},
    };

    std::map<std::string, CommandArgs> args;
    for (const auto& [name, desc] : commands) {
        CLI::App* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", args[name].config_path, "key=value config file");
        sub->add_option("--set", args[name].overrides, "override: key=value (repeatable)");
    }

    CLI11_PARSE(app, argc, argv);

    const std::string name = app.get_subcommands().front()->get_name();
    try {
        return dispatch(name, args[name]);
    } catch (const imae::ConfigError& e) {
        std::fprintf(stderr, "error: config: %s\n", e.what());
        return 2;
    } catch (const imae::DataError& e) {
        std::fprintf(stderr, "error: data: %s\n", e.what());
        return 3;
    } catch (const imae::NumericError& e) {
        std::fprintf(stderr, "error: numeric: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: internal: %s\n", e.what());
        return 1;
    }
}

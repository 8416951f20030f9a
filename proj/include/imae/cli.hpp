#pragma once

#include <string>

#include "imae/config.hpp"

namespace imae::cli {

/// Dispatch one subcommand with a fully-resolved configuration. Throws
/// ConfigError/DataError/NumericError; the binary maps those to exit codes.
void run_command(const std::string& name, Config& cfg);

// individual commands (exposed for tests)
void cmd_pretrain_teacher(Config& cfg);
void cmd_pretrain_imae(Config& cfg);
void cmd_finetune(Config& cfg);
void cmd_probe(Config& cfg);
void cmd_sep_report(Config& cfg);
void cmd_reconstruct(Config& cfg);
void cmd_plots(Config& cfg);

}  // namespace imae::cli

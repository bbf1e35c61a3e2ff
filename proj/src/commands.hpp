#pragma once

#include "config.hpp"

#include <string>
#include <vector>

namespace yieldcast {

// One function per CLI subcommand. Each reads its inputs from the config,
// writes its artifacts under `output`, and throws ValidationError or
// NumericalError on failure.
void cmd_ingest(const Config& config);
void cmd_eof(const Config& config);
void cmd_block(const Config& config);
void cmd_cluster(const Config& config);
void cmd_trend(const Config& config);
void cmd_fit(const Config& config);
void cmd_forecast(const Config& config);
void cmd_evaluate(const Config& config);
void cmd_synth(const Config& config);
void cmd_run(const Config& config);
void cmd_sweep(const Config& config);

/// Names accepted by run_command, in CLI order.
const std::vector<std::string>& command_names();
void run_command(const std::string& name, const Config& config);

}  // namespace yieldcast

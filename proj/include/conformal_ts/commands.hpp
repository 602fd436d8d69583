#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include "conformal_ts/calibrator.hpp"
#include "conformal_ts/run_config.hpp"

namespace cts {

// Worker-thread cap: CONFORMAL_TS_THREADS when set (positive integer),
// otherwise hardware concurrency.
std::size_t thread_budget();

// Trace CSV: header t,i,j,lo,hi,width,empty,covered,a; one row per cell,
// ordered by (t, i, j), all indices 1-based, covered = -1 while unresolved.
void write_trace_csv(const std::filesystem::path& path, const Trace& trace,
                     std::size_t p, std::size_t d1);
struct LoadedTrace {
    Trace trace;
    std::size_t p = 0;
    std::size_t d1 = 0;
};
LoadedTrace read_trace_csv(const std::filesystem::path& path);

// Subcommands. Each writes its outputs plus resolved_config.txt under the
// `out` directory and throws cts::Error subclasses on failure.
void cmd_synth(const RunConfig& cfg);
void cmd_fit(const RunConfig& cfg);
void cmd_calibrate(const RunConfig& cfg);
void cmd_report(const RunConfig& cfg);
void cmd_ablate(const RunConfig& cfg);

// Full CLI entry point: parses `prog <subcommand> [--config file]
// [--key value ...]`, dispatches, and maps errors to exit codes
// (usage/config 1, data/format 2, internal 3).
int run_cli(int argc, const char* const* argv);

} // namespace cts

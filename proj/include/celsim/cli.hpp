#ifndef CELSIM_CLI_HPP
#define CELSIM_CLI_HPP

#include <string>
#include <vector>

namespace celsim {

/// Run configuration: input paths plus output/parallelism/seed knobs.
/// --out/--jobs/--seed on the command line override the file's values;
/// CELSIM_JOBS is the fallback for --jobs.
struct RunConfig {
    std::string network;
    std::string tariffs;
    std::string buildings;
    std::string profiles_dir;
    std::string scenarios;
    std::string sweep;
    std::string params;
    std::string out = "out";
    int year = 2025;
    int jobs = 0;  // 0: library default
    uint64_t seed = 1;
};

RunConfig load_run_config(const std::string& path);

/// Tariff audit, network topology check and profile coverage report.
/// Returns 0 iff every check passes; the first failure is named on stderr.
int cmd_validate(const RunConfig& config);

/// Runs every scenario in the batch; one output directory per scenario plus
/// a combined summary.csv. Per-scenario failures are recorded and the run
/// continues; nonzero exit if any failed.
int cmd_run(const RunConfig& config);

/// PV-to-load ratio sweep; writes <out>/sweep.csv.
int cmd_sweep(const RunConfig& config);

/// `celsim validate|run|sweep --config <file> [--out DIR] [--jobs N] [--seed S]`
int run_cli(int argc, const char* const* argv);

}  // namespace celsim

#endif

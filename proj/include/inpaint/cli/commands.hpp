#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "inpaint/cli/config.hpp"

namespace inpaint::cli {

/// Entry point shared by the executable and in-process tests. Returns the
/// process exit code (0 ok, 2 config, 3 data, 4 numeric).
int run(int argc, const char *const *argv);

struct DatasetRecord {
  std::string id;
  std::uint64_t seed = 0;
  std::string split;
  std::filesystem::path healthy, mask, diseased;
};

/// Reads <dir>/manifest.json written by cmd_phantom. Throws IoFailure.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path &dir);
/// Records whose split matches ("all" keeps everything).
std::vector<DatasetRecord> select_split(const std::vector<DatasetRecord> &records,
                                        const std::string &split);

void cmd_phantom(const RunConfig &config);
void cmd_preprocess(const RunConfig &config);
void cmd_train(const RunConfig &config, bool resume);
void cmd_infer(const RunConfig &config);
void cmd_evaluate(const RunConfig &config);
void cmd_montage(const RunConfig &config);

/// "ckpt_000120.zip" for step 120.
std::string checkpoint_name(std::int64_t step);
/// Highest-step checkpoint in a run directory, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path &run_dir);
/// Prediction file written by cmd_infer for a sample.
std::filesystem::path prediction_path(const RunConfig &config, const std::string &id);

} // namespace inpaint::cli

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

namespace vce::app {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kDataError = 3,
  kTrainingAborted = 4,
  kCheckpointError = 5,
};

int cmd_train(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);

/// `out_dir` defaults to the checkpoint's directory.
int cmd_evaluate(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                 const std::string& split, const std::optional<std::filesystem::path>& out_dir,
                 std::ostream& out, std::ostream& err);

int cmd_predict(const std::filesystem::path& checkpoint, const std::filesystem::path& input,
                const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);

int cmd_visualize(const std::filesystem::path& checkpoint, const std::filesystem::path& data_root,
                  const std::string& split, const std::optional<std::filesystem::path>& out_dir,
                  std::ostream& out, std::ostream& err);

int cmd_synth(const std::filesystem::path& out_root, int per_class, std::uint64_t seed, int image_size,
              std::ostream& out, std::ostream& err);

int cmd_dump_config(const std::optional<std::filesystem::path>& config_path, std::ostream& out,
                    std::ostream& err);

/// Parses argv and dispatches. Returns the exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vce::app

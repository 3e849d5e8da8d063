#pragma once

// Command-line front end. `dispatch` is the whole program minus main(), so
// tests can drive it in-process.
//
// Exit codes: 0 success, 1 usage error (synopsis on the error stream),
// 2 data, model or I/O error.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vmr/frontend.hpp"

namespace vmr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitError = 2;

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Every *.py file under `dir`, in sorted relative-path order, split into
/// functions. Files the frontend rejects are skipped and counted.
struct LoadedCorpus {
  std::vector<FunctionSource> functions;
  std::size_t files = 0;
  std::vector<std::string> skipped;  // "path: reason"
};
LoadedCorpus load_corpus_dir(const std::filesystem::path& dir);
/// A pre-tokenized file, or every *.jsonl file under a directory.
LoadedCorpus load_pretokenized(const std::filesystem::path& path);

/// File names written by gen-data.
namespace files {
inline constexpr const char* kVocab = "vocab.json";
inline constexpr const char* kDataConfig = "data_config.json";
inline constexpr const char* kManifest = "manifest.json";
inline constexpr const char* kCheckpoint = "model.ckpt";
inline constexpr const char* kLastCheckpoint = "last.ckpt";
inline constexpr const char* kModelCard = "model_card.txt";
inline constexpr const char* kTrainLog = "train_log.csv";
inline constexpr const char* kStepLosses = "step_losses.csv";
}  // namespace files

}  // namespace vmr::cli

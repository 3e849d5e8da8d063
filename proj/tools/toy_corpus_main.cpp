// Writes the synthetic toy corpus as one .py file per generated file.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>

#include "vmr/error.hpp"
#include "vmr/io.hpp"
#include "vmr/toy_corpus.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate the synthetic toy corpus", "vmr-toy-corpus"};
  vmr::ToyCorpusConfig cfg;
  std::string out;
  app.add_option("--out", out, "Output directory")->required();
  app.add_option("--files", cfg.files, "Number of files")->capture_default_str();
  app.add_option("--functions-per-file", cfg.functions_per_file, "Functions per file")->capture_default_str();
  app.add_option("--min-statements", cfg.min_statements, "Minimum statements per function")->capture_default_str();
  app.add_option("--max-statements", cfg.max_statements, "Maximum statements per function")->capture_default_str();
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    const auto files = vmr::generate_toy_corpus(cfg);
    for (std::size_t i = 0; i < files.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "file_%05zu.py", i);
      vmr::io::write_file_atomic(std::filesystem::path(out) / name, files[i]);
    }
    std::cout << "wrote " << files.size() << " files to " << out << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

#include <CLI11.hpp>

// Placeholder until the pipeline commands land.

namespace gsrig::cli {

void register_commands(CLI::App& app) {
  auto* version = app.add_subcommand("version", "print version");
  version->callback([] { std::printf("gsrig 0.1.0\n"); });
}

}  // namespace gsrig::cli

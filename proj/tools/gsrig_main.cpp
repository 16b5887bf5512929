#include "gsrig/types.hpp"

#include <CLI11.hpp>

#include <iostream>

// Subcommands are registered here as the pipeline stages land; see
// tools/commands.cpp for the implementations.

namespace gsrig::cli {
void register_commands(CLI::App& app);
}

int main(int argc, char** argv) {
  CLI::App app{"gsrig — rig point-based Gaussian characters"};
  app.require_subcommand(1);
  gsrig::cli::register_commands(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const gsrig::Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <csignal>
#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  // a closed stdout (e.g. `cogload stream | head`) should end the command with an error, not a signal
  std::signal(SIGPIPE, SIG_IGN);
  return cogload::cli::run_cli(argc, argv, std::cout, std::cerr);
}

#pragma once

#include <ostream>

namespace cogload::cli {

// Exit status: 0 ok, 2 configuration, 3 data / io, 4 numeric, 5 stream protocol.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cogload::cli

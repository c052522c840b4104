#pragma once

namespace sarc {

// Full command-line entry point (subcommands: train, evaluate, predict,
// ablate, gradcheck). Returns the process exit code: 0 success, 1 usage or
// configuration error, 2 data error, 3 numeric failure.
int cli_main(int argc, const char* const* argv);

}  // namespace sarc

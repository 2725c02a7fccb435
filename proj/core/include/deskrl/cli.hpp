#pragma once

namespace deskrl {

// The whole command-line surface, callable in-process so tests can drive it
// without spawning binaries. argv follows main() conventions (argv[0] is the
// program name). Exit codes: 0 success, 1 failed check or unexpected error,
// 2 usage/config problems, 3 numeric or budget aborts.
int run_cli(int argc, const char* const* argv);

}  // namespace deskrl
